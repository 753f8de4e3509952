"""Preconfigured numerical studies and the sweep engine behind them.

Four entry points: a qubit-qubit entanglement-response sweep over bath
temperature (``run_fig2``), a qubit-qutrit total-correlation and discord
sweep (``run_fig3``), a qubit-qubit distance-measure counter-example with its
response bound (``run_distance_example``), and a randomized property suite
(``run_property_suite``).  Each returns a :class:`SweepResult` whose rows are
deterministic functions of the configuration; claims about the numbers are
recorded as deviations instead of raised, so a full table always comes back.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import measures, thermal
from .linalg import DensityMatrix, dagger, kron, partial_transpose, trace_norm
from .optimize import OptimizerConfig, constrained_phase_manifold
from .thermal import Hamiltonian, PerturbationSpec

MAX_TOTAL_DIMENSION = 36

THREADS_ENV_VAR = "ATHERMAL_MARKOV_THREADS"


def _named_operators() -> dict[str, np.ndarray]:
    s3 = np.sqrt(3.0)
    ops = {
        "pauli_x": np.array([[0, 1], [1, 0]], dtype=complex),
        "pauli_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "pauli_z": np.array([[1, 0], [0, -1]], dtype=complex),
        "identity_2": np.eye(2, dtype=complex),
        "identity_3": np.eye(3, dtype=complex),
        "gell_mann_1": np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
        "gell_mann_2": np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex),
        "gell_mann_3": np.diag([1.0, -1.0, 0.0]).astype(complex),
        "gell_mann_4": np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=complex),
        "gell_mann_5": np.array([[0, 0, -1j], [0, 0, 0], [1j, 0, 0]], dtype=complex),
        "gell_mann_6": np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex),
        "gell_mann_7": np.array([[0, 0, 0], [0, 0, -1j], [0, 1j, 0]], dtype=complex),
        "gell_mann_8": (np.diag([1.0, 1.0, -2.0]) / s3).astype(complex),
    }
    return ops


NAMED_OPERATORS = _named_operators()


def _matrix_to_json(m: np.ndarray) -> dict:
    return {"real": np.real(m).tolist(), "imag": np.imag(m).tolist()}


def _matrix_from_json(data: dict, where: str) -> np.ndarray:
    try:
        real = np.array(data["real"], dtype=float)
    except Exception as exc:
        raise ValueError(f"{where}: bad 'real' entries ({exc})") from exc
    imag = np.zeros_like(real)
    if data.get("imag") is not None:
        imag = np.array(data["imag"], dtype=float)
        if imag.shape != real.shape:
            raise ValueError(f"{where}: 'imag' shape {imag.shape} != 'real' shape {real.shape}")
    return real + 1j * imag


@dataclass(frozen=True)
class HamiltonianSpec:
    """A Hamiltonian given by operator name plus scale, or an explicit matrix."""

    name: str | None = None
    scale: float = 1.0
    matrix: np.ndarray | None = None

    def build(self) -> Hamiltonian:
        if (self.name is None) == (self.matrix is None):
            raise ValueError("hamiltonian spec needs exactly one of 'name' or 'matrix'")
        if self.name is not None:
            if self.name not in NAMED_OPERATORS:
                raise ValueError(f"unknown operator name '{self.name}'")
            m = NAMED_OPERATORS[self.name]
        else:
            m = np.asarray(self.matrix, dtype=complex)
        return Hamiltonian.from_matrix(self.scale * m)

    def to_dict(self) -> dict:
        if self.name is not None:
            return {"name": self.name, "scale": self.scale}
        return {"scale": self.scale, "matrix": _matrix_to_json(np.asarray(self.matrix))}

    @classmethod
    def from_dict(cls, data: dict, where: str) -> "HamiltonianSpec":
        if not isinstance(data, dict):
            raise ValueError(f"{where}: expected an object")
        matrix = None
        if data.get("matrix") is not None:
            matrix = _matrix_from_json(data["matrix"], f"{where}.matrix")
        return cls(name=data.get("name"), scale=float(data.get("scale", 1.0)), matrix=matrix)


@dataclass(frozen=True)
class BlockSpec:
    """Unitary for one total-energy eigenspace: eigenphases, optional basis."""

    phases: tuple[float, ...]
    basis: np.ndarray | None = None

    def build(self):
        if self.basis is None:
            if len(self.phases) != 1:
                raise ValueError("multi-phase block needs an explicit intra-block basis")
            return self.phases[0]
        return (np.array(self.phases, dtype=float), np.asarray(self.basis, dtype=complex))

    def to_dict(self) -> dict:
        out: dict = {"phases": list(self.phases)}
        if self.basis is not None:
            out["basis"] = _matrix_to_json(self.basis)
        return out

    @classmethod
    def from_dict(cls, data: dict, where: str) -> "BlockSpec":
        if not isinstance(data, dict) or "phases" not in data:
            raise ValueError(f"{where}: expected an object with a 'phases' list")
        phases = tuple(float(p) for p in data["phases"])
        basis = None
        if data.get("basis") is not None:
            basis = _matrix_from_json(data["basis"], f"{where}.basis")
        return cls(phases, basis)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    ``sweep_values`` is the control grid; ``sweep_variable`` says whether a
    value is a temperature (beta = 1/value) or directly an inverse
    temperature.  The initial system state is diagonal in the energy
    eigenbasis with weight ``initial_population_a`` on the top level, unless
    explicit level-basis coefficients are given.
    """

    name: str
    system: HamiltonianSpec
    bath: HamiltonianSpec
    perturbation: HamiltonianSpec
    epsilons: tuple[float, ...]
    sweep_values: tuple[float, ...]
    unitary_blocks: tuple[BlockSpec, ...]
    measures: tuple[str, ...]
    sweep_variable: str = "temperature"
    initial_population_a: float | None = None
    initial_coeffs: np.ndarray | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    mto_relation: tuple[tuple[float, ...], float] | None = None

    KNOWN_MEASURES = ("log_negativity", "mutual_information", "discord", "choi_distance")

    def validate(self) -> "ExperimentConfig":
        if self.sweep_variable not in ("temperature", "inverse_temperature"):
            raise ValueError("sweep_variable must be 'temperature' or 'inverse_temperature'")
        if not self.sweep_values or any(v <= 0 for v in self.sweep_values):
            raise ValueError("sweep_values must be positive")
        if any(e < 0 for e in self.epsilons):
            raise ValueError("epsilons must be nonnegative")
        for m in self.measures:
            if m not in self.KNOWN_MEASURES:
                raise ValueError(f"unknown measure '{m}'")
        h_sys = self.system.build()
        h_bath = self.bath.build()
        if h_sys.dim * h_bath.dim > MAX_TOTAL_DIMENSION:
            raise ValueError(f"total dimension {h_sys.dim * h_bath.dim} exceeds {MAX_TOTAL_DIMENSION}")
        if self.perturbation.build().dim != h_sys.dim:
            raise ValueError("perturbation dimension must match the system")
        if (self.initial_population_a is None) == (self.initial_coeffs is None):
            raise ValueError("need exactly one of initial_population_a or initial_coeffs")
        if self.initial_population_a is not None and not 0.0 <= self.initial_population_a <= 1.0:
            raise ValueError("initial_population_a must lie in [0, 1]")
        if self.initial_coeffs is not None:
            DensityMatrix(self.initial_coeffs, (h_sys.dim,))
        h_tot = thermal.total_hamiltonian(h_sys, h_bath)
        blocks = h_tot.energy_blocks()
        if len(self.unitary_blocks) != len(blocks):
            raise ValueError(
                f"unitary_blocks has {len(self.unitary_blocks)} entries, "
                f"total Hamiltonian has {len(blocks)} energy blocks")
        for spec, (_, idx) in zip(self.unitary_blocks, blocks):
            if len(spec.phases) != len(idx):
                raise ValueError(f"block with {len(idx)} levels got {len(spec.phases)} phases")
        if "choi_distance" in self.measures and self.mto_relation is None:
            raise ValueError("choi_distance requires mto_relation")
        return self

    # -- construction helpers -------------------------------------------------

    def build_system(self) -> Hamiltonian:
        return self.system.build()

    def build_bath(self) -> Hamiltonian:
        return self.bath.build()

    def build_total(self) -> Hamiltonian:
        return thermal.total_hamiltonian(self.build_system(), self.build_bath())

    def level_coeffs(self) -> np.ndarray:
        if self.initial_coeffs is not None:
            return np.asarray(self.initial_coeffs, dtype=complex)
        d = self.build_system().dim
        p = np.zeros((d, d), dtype=complex)
        p[0, 0] = 1.0 - self.initial_population_a
        p[-1, -1] = self.initial_population_a
        return p

    def beta_for(self, value: float) -> float:
        return float(value) if self.sweep_variable == "inverse_temperature" else 1.0 / float(value)

    def build_unitary(self, h_tot: Hamiltonian | None = None) -> thermal.EnergyBlockUnitary:
        h_tot = h_tot or self.build_total()
        return thermal.build_block_unitary(h_tot, [b.build() for b in self.unitary_blocks])

    def markovian_family(self, bath_state: thermal.GibbsState,
                         h_tot: Hamiltonian | None = None) -> measures.MarkovianFamily:
        if self.mto_relation is None:
            raise ValueError("config has no mto_relation")
        coeffs, offset = self.mto_relation
        h_tot = h_tot or self.build_total()
        manifold = constrained_phase_manifold(len(coeffs), coeffs, offset)
        return measures.MarkovianFamily(h_tot, bath_state, manifold)

    # -- serialisation ---------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "system": self.system.to_dict(),
            "bath": self.bath.to_dict(),
            "perturbation": self.perturbation.to_dict(),
            "epsilons": list(self.epsilons),
            "sweep": {"values": list(self.sweep_values), "variable": self.sweep_variable},
            "unitary_blocks": [b.to_dict() for b in self.unitary_blocks],
            "measures": list(self.measures),
            "optimizer": {
                "seeds": self.optimizer.seeds,
                "grid_resolution": self.optimizer.grid_resolution,
                "max_iterations": self.optimizer.max_iterations,
                "f_tol": self.optimizer.f_tol,
                "seed_sequence": self.optimizer.seed_sequence,
            },
        }
        if self.initial_population_a is not None:
            out["initial_population_a"] = self.initial_population_a
        if self.initial_coeffs is not None:
            out["initial_coeffs"] = _matrix_to_json(np.asarray(self.initial_coeffs))
        if self.mto_relation is not None:
            out["mto_relation"] = {"coefficients": list(self.mto_relation[0]),
                                   "offset": self.mto_relation[1]}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ValueError("config: expected a JSON object")
        for key in ("name", "system", "bath", "perturbation", "epsilons", "sweep",
                    "unitary_blocks", "measures"):
            if key not in data:
                raise ValueError(f"config.{key}: missing required field")
        sweep = data["sweep"]
        if not isinstance(sweep, dict) or "values" not in sweep:
            raise ValueError("config.sweep: expected an object with 'values'")
        opt = data.get("optimizer", {})
        if not isinstance(opt, dict):
            raise ValueError("config.optimizer: expected an object")
        allowed_opt = {"seeds", "grid_resolution", "max_iterations", "f_tol", "seed_sequence"}
        bad = set(opt) - allowed_opt
        if bad:
            raise ValueError(f"config.optimizer.{sorted(bad)[0]}: unknown field")
        optimizer = OptimizerConfig(
            seeds=int(opt.get("seeds", 40)),
            grid_resolution=int(opt.get("grid_resolution", 12)),
            max_iterations=int(opt.get("max_iterations", 400)),
            f_tol=float(opt.get("f_tol", 1e-8)),
            seed_sequence=str(opt.get("seed_sequence", "default")),
        )
        relation = None
        if data.get("mto_relation") is not None:
            rel = data["mto_relation"]
            if not isinstance(rel, dict) or "coefficients" not in rel:
                raise ValueError("config.mto_relation: expected an object with 'coefficients'")
            relation = (tuple(float(c) for c in rel["coefficients"]),
                        float(rel.get("offset", 0.0)))
        coeffs = None
        if data.get("initial_coeffs") is not None:
            coeffs = _matrix_from_json(data["initial_coeffs"], "config.initial_coeffs")
        pop = data.get("initial_population_a")
        cfg = cls(
            name=str(data["name"]),
            system=HamiltonianSpec.from_dict(data["system"], "config.system"),
            bath=HamiltonianSpec.from_dict(data["bath"], "config.bath"),
            perturbation=HamiltonianSpec.from_dict(data["perturbation"], "config.perturbation"),
            epsilons=tuple(float(e) for e in data["epsilons"]),
            sweep_values=tuple(float(v) for v in sweep["values"]),
            sweep_variable=str(sweep.get("variable", "temperature")),
            unitary_blocks=tuple(
                BlockSpec.from_dict(b, f"config.unitary_blocks[{k}]")
                for k, b in enumerate(data["unitary_blocks"])),
            measures=tuple(str(m) for m in data["measures"]),
            initial_population_a=None if pop is None else float(pop),
            initial_coeffs=coeffs,
            optimizer=optimizer,
            mto_relation=relation,
        )
        return cfg.validate()

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Sweep results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    control: float
    epsilon: float
    measure: str
    unperturbed: float
    perturbed: float
    delta: float
    status: str = "ok"


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    metadata: dict
    deviations: tuple[str, ...] = ()

    def rows_for(self, measure: str) -> list[SweepRow]:
        return [r for r in self.rows if r.measure == measure]

    @property
    def measure_names(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.measure not in seen:
                seen.append(r.measure)
        return seen


def _sort_rows(rows) -> tuple[SweepRow, ...]:
    return tuple(sorted(rows, key=lambda r: (r.measure, r.epsilon, r.control)))


def worker_count() -> int:
    env = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _parallel_map(fn, items):
    workers = worker_count()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _base_metadata(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "workers": worker_count(),
    }


def run_config(cfg: ExperimentConfig) -> SweepResult:
    """Evaluate every configured measure on the (epsilon, control) grid."""
    cfg.validate()
    h_sys = cfg.build_system()
    h_bath = cfg.build_bath()
    h_tot = thermal.total_hamiltonian(h_sys, h_bath)
    unitary = cfg.build_unitary(h_tot)
    coeffs = cfg.level_coeffs()
    metadata = _base_metadata(cfg)

    points = [(m, e, v) for m in cfg.measures for e in cfg.epsilons for v in cfg.sweep_values]

    def evaluate(point) -> tuple[SweepRow, dict]:
        measure, eps, value = point
        bath = thermal.gibbs_state(h_bath, cfg.beta_for(value))
        op = thermal.thermal_operation(unitary, bath)
        pert = PerturbationSpec(cfg.perturbation.build(), eps)
        family = None
        if measure == "choi_distance":
            family = cfg.markovian_family(bath, h_tot)
        report = measures.delta(measure, op, coeffs, pert, cfg.optimizer, family)
        row = SweepRow(value, eps, measure, report.unperturbed.value,
                       report.perturbed.value, report.delta)
        diags = {}
        for tag, mv in (("unperturbed", report.unperturbed), ("perturbed", report.perturbed)):
            if mv.diagnostics:
                diags[tag] = mv.diagnostics
        return row, diags

    evaluated = _parallel_map(evaluate, points)
    rows = [row for row, _ in evaluated]
    metadata["optimizer_diagnostics"] = {
        f"{p[0]}/eps={p[1]}/x={p[2]}": d for p, (_, d) in zip(points, evaluated) if d
    }
    metadata["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    return SweepResult(_sort_rows(rows), metadata)


def _flag_rows(result: SweepResult, offenders: set[tuple[str, float, float]]) -> SweepResult:
    if not offenders:
        return result
    rows = tuple(
        replace(r, status="deviation") if (r.measure, r.epsilon, r.control) in offenders else r
        for r in result.rows)
    return SweepResult(rows, result.metadata, result.deviations)


def _with_deviations(result: SweepResult, deviations: list[str]) -> SweepResult:
    return SweepResult(result.rows, result.metadata, tuple(deviations))


# ---------------------------------------------------------------------------
# Built-in configurations
# ---------------------------------------------------------------------------

def _block_specs_for_phase_grid(h_tot: Hamiltonian, phase_grid: np.ndarray) -> tuple[BlockSpec, ...]:
    """Per-block phases for a non-degenerate total spectrum.

    ``phase_grid[i][r]`` is the phase on the product level (system level i,
    bath level r), both indexed ascending in energy.
    """
    blocks = h_tot.energy_blocks()
    if any(len(idx) != 1 for _, idx in blocks):
        raise ValueError("phase grid form needs a non-degenerate total spectrum")
    labels = h_tot.product_labels
    specs = []
    for _, idx in blocks:
        i, r = labels[idx[0]]
        specs.append(BlockSpec((float(phase_grid[i][r]),)))
    return tuple(specs)


def _product_phase_relation(h_tot: Hamiltonian) -> tuple[tuple[float, ...], float]:
    """Markovianity constraint on level phases for a qubit system, qubit bath.

    Product form of the evolved joint state requires the system phase
    difference to be bath-level independent; for 2x2 that is a single signed
    sum over the four product levels.
    """
    labels = h_tot.product_labels
    if labels is None or len(labels) != 4:
        raise ValueError("relation helper expects a 2x2 product structure")
    coeffs = tuple(1.0 if (i + r) % 2 == 0 else -1.0 for i, r in labels)
    return coeffs, 0.0


def builtin_fig2() -> ExperimentConfig:
    """Qubit system and bath with matched splittings, a two-dimensional
    zero-energy block hosting a rotated pair of eigenvectors, and huge
    eigenphases.  Sweeps bath temperature 3..5 for three perturbation
    strengths and tracks the entanglement response."""
    h_sys = HamiltonianSpec("pauli_z")
    h_bath = HamiltonianSpec("pauli_z")
    h_tot = thermal.total_hamiltonian(h_sys.build(), h_bath.build())
    blocks = h_tot.energy_blocks()
    # Zero-energy eigenspace: phases 3e5/4e5 on sqrt(2/3)|01> + sqrt(1/3)|10>
    # and its orthogonal partner, written in the computational basis and
    # projected onto the cached block basis.
    psi_1 = np.zeros(4, dtype=complex)
    psi_2 = np.zeros(4, dtype=complex)
    psi_1[0 * 2 + 1], psi_1[1 * 2 + 0] = np.sqrt(2 / 3), np.sqrt(1 / 3)
    psi_2[0 * 2 + 1], psi_2[1 * 2 + 0] = np.sqrt(1 / 3), -np.sqrt(2 / 3)
    specs: list[BlockSpec] = []
    for energy, idx in blocks:
        if len(idx) == 2:
            basis = h_tot.eigvecs[:, list(idx)]
            intra = dagger(basis) @ np.column_stack([psi_1, psi_2])
            specs.append(BlockSpec((3e5, 4e5), intra))
        elif energy > 0:
            specs.append(BlockSpec((1e5,)))  # top level |00>
        else:
            specs.append(BlockSpec((2e5,)))  # bottom level |11>
    return ExperimentConfig(
        name="fig2",
        system=h_sys,
        bath=h_bath,
        perturbation=HamiltonianSpec("pauli_x"),
        epsilons=(0.1, 0.15, 0.2),
        sweep_values=tuple(float(v) for v in np.linspace(3.0, 5.0, 21)),
        sweep_variable="temperature",
        unitary_blocks=tuple(specs),
        measures=("log_negativity",),
        initial_population_a=0.9,
    ).validate()


def builtin_fig3() -> ExperimentConfig:
    """Qubit system against a qutrit bath with a non-degenerate total
    spectrum.  Sweeps the bath's inverse temperature over (0, 1] and tracks
    the mutual-information and discord responses at one perturbation
    strength."""
    h_sys = HamiltonianSpec("pauli_z", scale=2.0)
    h_bath = HamiltonianSpec("gell_mann_1")
    h_tot = thermal.total_hamiltonian(h_sys.build(), h_bath.build())
    # Phases by (system level, bath level), both ascending in energy.  The
    # nominal label order runs highest energy first on both sides (as for the
    # qubit, whose first basis vector is the positive eigenvector), so the
    # 18/30/60 row sits on the system's top level with bath levels descending.
    grid = np.array([[90e7, 70e7, 80e7],
                     [60e7, 30e7, 18e7]])
    return ExperimentConfig(
        name="fig3",
        system=h_sys,
        bath=h_bath,
        perturbation=HamiltonianSpec("pauli_x"),
        epsilons=(0.2,),
        sweep_values=tuple(float(v) for v in np.linspace(0.02, 1.0, 20)),
        sweep_variable="inverse_temperature",
        unitary_blocks=_block_specs_for_phase_grid(h_tot, grid),
        measures=("mutual_information", "discord"),
        initial_population_a=0.9,
        optimizer=OptimizerConfig(grid_resolution=24),
    ).validate()


def builtin_distance() -> ExperimentConfig:
    """Qubit system with a ten-times-stiffer qubit bath at temperature 100.
    Compares the channel against the constrained Markovian phase family,
    through the Choi-state distance, for three perturbation strengths."""
    h_sys = HamiltonianSpec("pauli_z")
    h_bath = HamiltonianSpec("pauli_z", scale=10.0)
    h_tot = thermal.total_hamiltonian(h_sys.build(), h_bath.build())
    # Phases 1e4..4e4 on |00>, |11>, |01>, |10> in the computational basis.
    grid = np.empty((2, 2))
    labels = {(i, r): None for i in range(2) for r in range(2)}
    assert set(h_tot.product_labels) == set(labels)
    # system level 1 = |0>, bath level 1 = |0> (positive-energy eigenvectors).
    grid[1][1] = 1e4   # |00>
    grid[0][0] = 2e4   # |11>
    grid[1][0] = 3e4   # |01>
    grid[0][1] = 4e4   # |10>
    return ExperimentConfig(
        name="distance",
        system=h_sys,
        bath=h_bath,
        perturbation=HamiltonianSpec("pauli_x"),
        epsilons=(0.01, 0.05, 0.1),
        sweep_values=(100.0,),
        sweep_variable="temperature",
        unitary_blocks=_block_specs_for_phase_grid(h_tot, grid),
        measures=("choi_distance",),
        initial_population_a=0.9,
        optimizer=OptimizerConfig(grid_resolution=8),
        mto_relation=_product_phase_relation(h_tot),
    ).validate()


BUILTIN_CONFIGS = {
    "fig2": builtin_fig2,
    "fig3": builtin_fig3,
    "distance": builtin_distance,
}


# ---------------------------------------------------------------------------
# Named experiments with their claims
# ---------------------------------------------------------------------------

def run_fig2(cfg: ExperimentConfig | None = None) -> SweepResult:
    """Entanglement-response sweep; checks positivity, growth along the
    temperature grid, and pointwise ordering in the perturbation strength."""
    cfg = cfg or builtin_fig2()
    result = run_config(cfg)
    deviations: list[str] = []
    offenders: set[tuple[str, float, float]] = set()
    rows = result.rows_for("log_negativity")
    for eps in cfg.epsilons:
        series = sorted((r for r in rows if r.epsilon == eps), key=lambda r: r.control)
        for r in series:
            if not r.delta > 0:
                offenders.add((r.measure, r.epsilon, r.control))
                deviations.append(f"delta not positive at eps={eps}, T={r.control}: {r.delta}")
        for a, b in zip(series, series[1:]):
            if b.delta < a.delta - 1e-12:
                deviations.append(
                    f"delta decreases along T at eps={eps}: T={a.control}->{b.control}")
    ordered = sorted(cfg.epsilons)
    for lo, hi in zip(ordered, ordered[1:]):
        lo_rows = {r.control: r.delta for r in rows if r.epsilon == lo}
        hi_rows = {r.control: r.delta for r in rows if r.epsilon == hi}
        for control, d_lo in lo_rows.items():
            if hi_rows.get(control, np.inf) <= d_lo:
                deviations.append(
                    f"delta not ordered in eps at T={control}: eps={lo} vs {hi}")
    return _with_deviations(_flag_rows(result, offenders), deviations)


def run_fig3(cfg: ExperimentConfig | None = None) -> SweepResult:
    """Total-correlation and discord response sweep; checks positivity of
    both responses and growth of the correlation response toward the low end
    of the control grid."""
    cfg = cfg or builtin_fig3()
    result = run_config(cfg)
    deviations: list[str] = []
    offenders: set[tuple[str, float, float]] = set()
    for measure in ("mutual_information", "discord"):
        for r in result.rows_for(measure):
            if not r.delta > 0:
                offenders.add((r.measure, r.epsilon, r.control))
                deviations.append(
                    f"{measure} delta not positive at x={r.control}: {r.delta}")
    for eps in cfg.epsilons:
        series = sorted((r for r in result.rows_for("mutual_information") if r.epsilon == eps),
                        key=lambda r: r.control)
        for a, b in zip(series, series[1:]):
            if not a.delta > b.delta - 1e-12:
                deviations.append(
                    f"mutual_information delta does not grow toward small x: "
                    f"x={a.control}->{b.control}")
    return _with_deviations(_flag_rows(result, offenders), deviations)


def run_distance_example(cfg: ExperimentConfig | None = None,
                         delta_tolerance: float = 5e-4) -> SweepResult:
    """Distance-measure counter-example: the response stays within
    ``delta_tolerance`` and below the first-order bound at every strength."""
    cfg = cfg or builtin_distance()
    result = run_config(cfg)
    deviations: list[str] = []
    offenders: set[tuple[str, float, float]] = set()

    h_sys = cfg.build_system()
    h_bath = cfg.build_bath()
    h_tot = thermal.total_hamiltonian(h_sys, h_bath)
    unitary = cfg.build_unitary(h_tot)
    bound_rows = []
    converged_all = True
    for r in result.rows_for("choi_distance"):
        if abs(r.delta) > delta_tolerance:
            offenders.add((r.measure, r.epsilon, r.control))
            deviations.append(f"|delta D| above {delta_tolerance} at eps={r.epsilon}: {r.delta}")
        bath = thermal.gibbs_state(h_bath, cfg.beta_for(r.control))
        op = thermal.thermal_operation(unitary, bath)
        family = cfg.markovian_family(bath, h_tot)
        pert = PerturbationSpec(cfg.perturbation.build(), r.epsilon)
        bound, diags = measures.chi_lambda_bound(op, family, pert, cfg.optimizer,
                                                 with_diagnostics=True)
        converged_all = converged_all and diags["converged"]
        status = "ok" if r.delta <= bound + 1e-6 else "deviation"
        if status == "deviation":
            deviations.append(f"response bound violated at eps={r.epsilon}: "
                              f"delta={r.delta}, bound={bound}")
        bound_rows.append(SweepRow(r.control, r.epsilon, "choi_distance_bound",
                                   r.delta, bound, bound - r.delta, status))
    diag_map = result.metadata.get("optimizer_diagnostics", {})
    for key, diags in diag_map.items():
        for tag in ("unperturbed", "perturbed"):
            if tag in diags and not diags[tag].get("converged", True):
                converged_all = False
                deviations.append(f"optimizer did not converge for {key}/{tag}")
    metadata = dict(result.metadata)
    metadata["optimizer_converged"] = converged_all
    flagged = _flag_rows(result, offenders)
    return SweepResult(_sort_rows(flagged.rows + tuple(bound_rows)), metadata, tuple(deviations))


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------

def _random_density(rng: np.random.Generator, d: int) -> DensityMatrix:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ dagger(a)
    return DensityMatrix(m / np.trace(m).real, (d,))


def _ppt_spectra_sweep(rng: np.random.Generator, d2: int, cases: int) -> tuple[float, float]:
    """Diagonal product-basis unitaries never break PPT in 2x2 / 2x3."""
    worst_spec, worst_en = 0.0, 0.0
    for _ in range(cases):
        rho = _random_density(rng, 2)
        tau = np.diag(rng.dirichlet(np.ones(d2))).astype(complex)
        u = np.diag(np.exp(-1j * rng.uniform(0, 2 * np.pi, size=2 * d2)))
        joint = u @ kron(rho.matrix, tau) @ dagger(u)
        joint_dm = DensityMatrix(0.5 * (joint + dagger(joint)), (2, d2))
        sp = np.sort(np.linalg.eigvalsh(joint_dm.matrix))
        pt = partial_transpose(joint_dm, 0)
        sp_pt = np.sort(np.linalg.eigvalsh(0.5 * (pt + dagger(pt))))
        worst_spec = max(worst_spec, float(np.max(np.abs(sp - sp_pt))))
        worst_en = max(worst_en, measures.log_negativity(joint_dm).value)
    return worst_spec, worst_en


def _random_bohr_system(rng: np.random.Generator) -> tuple[Hamiltonian, Hamiltonian, Hamiltonian]:
    """Qubit system + qutrit bath with non-degenerate totals and Bohr spectrum."""
    while True:
        es = np.sort(rng.uniform(-3, 3, size=2))
        eb = np.sort(rng.uniform(-3, 3, size=3))
        h_sys = Hamiltonian.from_matrix(np.diag(es).astype(complex))
        h_bath = Hamiltonian.from_matrix(np.diag(eb).astype(complex))
        h_tot = thermal.total_hamiltonian(h_sys, h_bath)
        gaps = np.diff(h_tot.energies)
        if es[1] - es[0] > 0.1 and np.min(np.diff(eb)) > 0.1 and np.min(gaps) > 1e-3:
            return h_sys, h_bath, h_tot


def _mto_equivalence_sweep(rng: np.random.Generator, cases: int) -> tuple[int, int]:
    """Direct tensor-product verdicts vs residual verdicts, also on
    first-order perturbed inputs."""
    agreements = 0
    perturbed_agreements = 0
    for case in range(cases):
        h_sys, h_bath, h_tot = _random_bohr_system(rng)
        bath = thermal.gibbs_state(h_bath, rng.uniform(0.2, 2.0))
        make_markovian = case % 2 == 0
        if make_markovian:
            base = rng.uniform(0, 2 * np.pi, size=2)
            offsets = rng.uniform(0, 2 * np.pi, size=3)
            grid = np.array([[base[0] + offsets[r] for r in range(3)],
                             [base[1] + offsets[r] for r in range(3)]])
        else:
            while True:
                grid = rng.uniform(0, 2 * np.pi, size=(2, 3))
                diffs = grid[0] - grid[1]
                spread = np.ptp((diffs - diffs[0] + np.pi) % (2 * np.pi))
                if spread > 0.3:
                    break
        specs = _block_specs_for_phase_grid(h_tot, grid)
        u = thermal.build_block_unitary(h_tot, [s.build() for s in specs])
        op = thermal.thermal_operation(u, bath)

        coeffs = _random_density(rng, 2).matrix
        rho = thermal.state_from_level_coeffs(h_sys, coeffs)
        report = thermal.mto_check(op, rho)
        if report.is_markovian == report.residuals_markovian() == make_markovian:
            agreements += 1

        pert = PerturbationSpec(Hamiltonian.from_matrix(NAMED_OPERATORS["pauli_x"]), 1e-3)
        rho_fo = DensityMatrix(thermal.perturbed_state_first_order(coeffs, h_sys, pert), (2,))
        report_fo = thermal.mto_check(op, rho_fo)
        if (report_fo.is_markovian == report.is_markovian
                and report_fo.residuals_markovian() == report.residuals_markovian()):
            perturbed_agreements += 1
    return agreements, perturbed_agreements


def _fixed_point_sweep(rng: np.random.Generator, cases: int) -> float:
    """Energy-preserving unitaries fix the matched-temperature Gibbs state."""
    worst = 0.0
    for case in range(cases):
        if case % 2 == 0:
            h_sys = Hamiltonian.from_matrix(NAMED_OPERATORS["pauli_z"])
            h_bath = Hamiltonian.from_matrix(NAMED_OPERATORS["pauli_z"])
        else:
            h_sys, h_bath, _ = _random_bohr_system(rng)
        h_tot = thermal.total_hamiltonian(h_sys, h_bath)
        params = []
        for _, idx in h_tot.energy_blocks():
            k = len(idx)
            if k == 1:
                params.append(float(rng.uniform(0, 2 * np.pi)))
            else:
                a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
                q, r = np.linalg.qr(a)
                params.append(q * (np.diagonal(r) / np.abs(np.diagonal(r))))
        u = thermal.build_block_unitary(h_tot, params)
        beta = float(rng.uniform(0.1, 3.0))
        bath = thermal.gibbs_state(h_bath, beta)
        op = thermal.thermal_operation(u, bath)
        tau_sys = thermal.gibbs_state(h_sys, beta).state
        out = thermal.apply(op, tau_sys)
        worst = max(worst, 0.5 * trace_norm(out.system.matrix - tau_sys.matrix))
    return worst


def _slope_ratio(cfg: ExperimentConfig, control: float) -> float:
    """Residual shrink factor of the first-order correlation-response law
    when epsilon halves, using first-order perturbed inputs."""
    h_sys = cfg.build_system()
    h_bath = cfg.build_bath()
    h_tot = thermal.total_hamiltonian(h_sys, h_bath)
    bath = thermal.gibbs_state(h_bath, cfg.beta_for(control))
    op = thermal.thermal_operation(cfg.build_unitary(h_tot), bath)
    coeffs = cfg.level_coeffs()
    h_prime = cfg.perturbation.build()

    base = measures.mutual_information(thermal.apply(
        op, thermal.state_from_level_coeffs(h_sys, coeffs)).joint).value
    theta = measures.theta_lambda(op, coeffs, PerturbationSpec(h_prime, 1.0))

    def residual(eps: float) -> float:
        state = DensityMatrix(
            thermal.perturbed_state_first_order(coeffs, h_sys, PerturbationSpec(h_prime, eps)),
            (h_sys.dim,))
        val = measures.mutual_information(thermal.apply(op, state).joint).value
        return abs(val - base - eps * theta)

    return residual(1e-2) / residual(5e-3)


def run_property_suite() -> SweepResult:
    """Randomized checks of the structural claims behind the experiments."""
    rng = np.random.default_rng(20260809)
    rows = []
    deviations: list[str] = []

    for d2, label in ((2, "ppt_spectra_2x2"), (3, "ppt_spectra_2x3")):
        worst_spec, worst_en = _ppt_spectra_sweep(rng, d2, 50)
        ok = worst_spec <= 1e-10 and worst_en <= 1e-9
        rows.append(SweepRow(50, 0.0, label, worst_spec, 1e-10, 1e-10 - worst_spec,
                             "ok" if ok else "deviation"))
        if not ok:
            deviations.append(f"{label}: spectra deviation {worst_spec}, log-neg {worst_en}")

    agreements, perturbed_agreements = _mto_equivalence_sweep(rng, 50)
    ok = agreements == 50 and perturbed_agreements == 50
    rows.append(SweepRow(50, 0.0, "mto_equivalence", agreements, 50, agreements - 50,
                         "ok" if ok else "deviation"))
    rows.append(SweepRow(50, 0.0, "mto_equivalence_perturbed", perturbed_agreements, 50,
                         perturbed_agreements - 50, "ok" if ok else "deviation"))
    if not ok:
        deviations.append(
            f"mto_equivalence: {agreements}/50 direct, {perturbed_agreements}/50 perturbed")

    worst_fp = _fixed_point_sweep(rng, 50)
    ok = worst_fp <= 1e-9
    rows.append(SweepRow(50, 0.0, "fixed_point", worst_fp, 1e-9, 1e-9 - worst_fp,
                         "ok" if ok else "deviation"))
    if not ok:
        deviations.append(f"fixed_point: worst deviation {worst_fp}")

    for cfg, control, label in ((builtin_fig2(), 4.0, "first_order_slope_fig2"),
                                (builtin_fig3(), 0.5, "first_order_slope_fig3")):
        ratio = _slope_ratio(cfg, control)
        ok = 3.2 <= ratio <= 4.8
        rows.append(SweepRow(control, 1e-2, label, ratio, 4.0, ratio - 4.0,
                             "ok" if ok else "deviation"))
        if not ok:
            deviations.append(f"{label}: shrink ratio {ratio} outside [3.2, 4.8]")

    metadata = {
        "config": {"name": "properties", "seed": 20260809},
        "config_hash": "properties-20260809",
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "workers": 1,
    }
    return SweepResult(_sort_rows(rows), metadata, tuple(deviations))


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _atomic_write(path: str, payload: str):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def rows_to_csv(rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["T", "epsilon", "measure", "unperturbed", "perturbed", "delta", "status"])
    for r in rows:
        writer.writerow([repr(float(r.control)), repr(float(r.epsilon)), r.measure,
                         repr(float(r.unperturbed)), repr(float(r.perturbed)),
                         repr(float(r.delta)), r.status])
    return buf.getvalue()


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def rows_to_svg(rows, title: str) -> str | None:
    """Minimal line chart: delta vs control, one polyline per epsilon."""
    series: dict[float, list[tuple[float, float]]] = {}
    for r in rows:
        series.setdefault(r.epsilon, []).append((r.control, r.delta))
    series = {e: sorted(pts) for e, pts in series.items() if len(pts) >= 2}
    if not series:
        return None
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    width, height, margin = 640, 400, 60

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for k in range(5):
        x = x0 + k * (x1 - x0) / 4
        y = y0 + k * (y1 - y0) / 4
        parts.append(f'<text x="{sx(x):.1f}" y="{height - margin + 18}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif">{x:.4g}</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(y) + 4:.1f}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{y:.4g}</text>')
    for k, (eps, pts) in enumerate(sorted(series.items())):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin + 6}" y="{margin + 16 * k + 4}" font-size="11" '
                     f'font-family="sans-serif" fill="{color}">eps={eps:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_outputs(result: SweepResult, out_dir: str, name: str, svg: bool = True) -> list[str]:
    """One CSV (and optionally SVG) per measure, written atomically."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for measure in result.measure_names:
        rows = result.rows_for(measure)
        csv_path = os.path.join(out_dir, f"{name}-{measure}.csv")
        _atomic_write(csv_path, rows_to_csv(rows))
        written.append(csv_path)
        if svg:
            chart = rows_to_svg(rows, f"{name}: {measure} response")
            if chart is not None:
                svg_path = os.path.join(out_dir, f"{name}-{measure}.svg")
                _atomic_write(svg_path, chart)
                written.append(svg_path)
    return written
