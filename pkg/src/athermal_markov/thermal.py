"""Thermal channels on small system+bath pairs.

Builds Hamiltonians with cached eigensystems, Gibbs states, global unitaries
that are block diagonal over total-energy eigenspaces, and the channel
``rho -> Tr_bath[U (rho (x) tau) U^dag]``.  Also hosts the Markovianity
constraint report (tensor-product deviation plus the amplitude/phase residual
system) and non-degenerate first-order perturbation of the system state.

Conventions: k_B = hbar = 1, energies in the problem's energy unit, inverse
temperature beta = 1/T in the same unit.  System levels are indexed ascending
in energy (index 0 is the ground level) everywhere a level index appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    STATE_TOL,
    SUPPORT_CUTOFF,
    DensityMatrix,
    dagger,
    eigh,
    is_hermitian,
    kron,
    reduce_mod_2pi,
    trace_norm,
    trace_out_first,
    trace_out_second,
)

# Total-energy values closer than this are grouped into one degenerate block.
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Hermitian operator with a cached ascending eigendecomposition.

    ``eigvecs`` columns follow the deterministic phase convention of
    :func:`linalg.eigh`.  For operators built by :func:`total_hamiltonian`
    the exact product eigenbasis is cached instead, ``parts`` holds the two
    local Hamiltonians and ``product_labels[k]`` gives the (system level,
    bath level) pair behind cached level ``k``.
    """

    matrix: np.ndarray
    energies: np.ndarray
    eigvecs: np.ndarray
    parts: tuple["Hamiltonian", "Hamiltonian"] | None = None
    product_labels: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        for name in ("matrix", "energies", "eigvecs"):
            arr = np.asarray(getattr(self, name))
            arr = arr.astype(complex) if name != "energies" else arr.astype(float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_matrix(cls, matrix, tol: float = STATE_TOL) -> "Hamiltonian":
        m = np.asarray(matrix, dtype=complex)
        if not is_hermitian(m, tol):
            raise ValueError("Hamiltonian must be Hermitian within tolerance")
        w, v = eigh(m, tol)
        return cls(m, w, v)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def bohr_nondegenerate(self, tol: float = DEGENERACY_TOL) -> bool:
        """True iff all pairwise level differences E_i - E_j (i != j) are distinct."""
        n = self.dim
        diffs = []
        for i in range(n):
            for j in range(n):
                if i != j:
                    diffs.append((self.energies[i] - self.energies[j], (i, j)))
        diffs.sort(key=lambda t: t[0])
        for (a, pa), (b, pb) in zip(diffs, diffs[1:]):
            if abs(a - b) <= tol and pa != pb:
                return False
        return True

    def energy_blocks(self, tol: float = DEGENERACY_TOL) -> list[tuple[float, tuple[int, ...]]]:
        """Group cached levels into (energy, level indices) eigenspace blocks."""
        blocks: list[tuple[float, list[int]]] = []
        for k, e in enumerate(self.energies):
            if blocks and abs(e - blocks[-1][0]) <= tol:
                blocks[-1][1].append(k)
            else:
                blocks.append((float(e), [k]))
        return [(e, tuple(idx)) for e, idx in blocks]


@dataclass(frozen=True, eq=False)
class GibbsState:
    """Thermal state e^{-beta H}/Z together with its source Hamiltonian."""

    state: DensityMatrix
    beta: float
    hamiltonian: Hamiltonian

    @property
    def level_probabilities(self) -> np.ndarray:
        """Boltzmann weight of each cached energy level (ascending order)."""
        return _boltzmann_weights(self.hamiltonian.energies, self.beta)


def _boltzmann_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    if math.isinf(beta):
        w = np.zeros(len(energies))
        w[0] = 1.0
        return w
    shifted = -beta * (energies - energies.min())
    w = np.exp(shifted)
    return w / w.sum()


def gibbs_state(h: Hamiltonian, beta: float, tol: float = STATE_TOL) -> GibbsState:
    """Gibbs state of ``h`` at inverse temperature ``beta``.

    ``beta = math.inf`` returns the ground projector and requires a unique
    ground level.
    """
    if beta < 0 or math.isnan(beta):
        raise ValueError("beta must be nonnegative (math.inf allowed)")
    if math.isinf(beta) and len(h.energies) > 1 and h.energies[1] - h.energies[0] <= DEGENERACY_TOL:
        raise ValueError("ambiguous zero-temperature limit: degenerate ground space")
    w = _boltzmann_weights(h.energies, beta)
    v = h.eigvecs
    state = (v * w) @ dagger(v)
    return GibbsState(DensityMatrix(state, (h.dim,), tol=tol), float(beta), h)


def total_hamiltonian(h_sys: Hamiltonian, h_bath: Hamiltonian) -> Hamiltonian:
    """Kronecker sum H (x) I + I (x) H with the exact product eigenbasis cached.

    Levels are sorted by total energy ascending, ties broken by (system
    level, bath level), and the label bookkeeping is kept so degenerate
    eigenspaces stay expressed in product kets.
    """
    d1, d2 = h_sys.dim, h_bath.dim
    m = kron(h_sys.matrix, np.eye(d2)) + kron(np.eye(d1), h_bath.matrix)
    labels = [(i, r) for i in range(d1) for r in range(d2)]
    energies = np.array([h_sys.energies[i] + h_bath.energies[r] for i, r in labels])
    order = sorted(range(len(labels)), key=lambda k: (energies[k], labels[k]))
    vecs = np.column_stack(
        [kron(h_sys.eigvecs[:, labels[k][0]].reshape(-1, 1),
              h_bath.eigvecs[:, labels[k][1]].reshape(-1, 1)).reshape(-1)
         for k in order]
    )
    return Hamiltonian(
        m,
        energies[order],
        vecs,
        parts=(h_sys, h_bath),
        product_labels=tuple(labels[k] for k in order),
    )


@dataclass(frozen=True, eq=False)
class EnergyBlockUnitary:
    """Unitary block diagonal over the total-energy eigenspaces of a Hamiltonian.

    ``blocks`` records, per eigenspace, the energy, the cached level indices
    spanning it, and the intra-block unitary in that basis.
    """

    matrix: np.ndarray
    hamiltonian: Hamiltonian
    blocks: tuple[tuple[float, tuple[int, ...], np.ndarray], ...]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _coerce_block_unitary(param, size: int, tol: float) -> np.ndarray:
    """Accept a phase (1-D block), a (phases, basis) pair, or an explicit matrix."""
    if np.isscalar(param):
        if size != 1:
            raise ValueError(f"scalar phase given for a {size}-dimensional block")
        return np.array([[np.exp(-1j * reduce_mod_2pi(float(param)))]])
    if isinstance(param, tuple) and len(param) == 2:
        phases, basis = param
        basis = np.asarray(basis, dtype=complex)
        phases = np.asarray(phases, dtype=float)
        if basis.shape != (size, size) or len(phases) != size:
            raise ValueError("block basis/phase sizes do not match the eigenspace")
        phase_diag = np.exp(-1j * np.array([reduce_mod_2pi(p) for p in phases]))
        u = (basis * phase_diag) @ dagger(basis)
    else:
        u = np.asarray(param, dtype=complex)
        if u.shape != (size, size):
            raise ValueError(f"block unitary has shape {u.shape}, expected {(size, size)}")
    if not np.allclose(u @ dagger(u), np.eye(size), atol=tol):
        raise ValueError("block parameter is not unitary within tolerance")
    return u


def build_block_unitary(h_total: Hamiltonian, block_params, tol: float = 1e-10) -> EnergyBlockUnitary:
    """Assemble a global unitary from one unitary per total-energy eigenspace.

    ``block_params`` is a sequence aligned with ``h_total.energy_blocks()``:
    a bare phase alpha for a one-dimensional block (the block unitary is
    e^{-i alpha}), a ``(phases, basis)`` pair giving eigenphases in an
    explicit intra-block basis, or a full intra-block unitary matrix.  The
    result commutes with ``h_total`` by construction.
    """
    blocks = h_total.energy_blocks()
    if len(block_params) != len(blocks):
        raise ValueError(f"expected {len(blocks)} block parameters, got {len(block_params)}")
    d = h_total.dim
    u = np.zeros((d, d), dtype=complex)
    recorded = []
    for (energy, idx), param in zip(blocks, block_params):
        sub = _coerce_block_unitary(param, len(idx), tol)
        basis = h_total.eigvecs[:, list(idx)]
        u += basis @ sub @ dagger(basis)
        recorded.append((energy, idx, sub))
    if not np.allclose(u @ dagger(u), np.eye(d), atol=tol):
        raise ValueError("assembled operator is not unitary")
    return EnergyBlockUnitary(u, h_total, tuple(recorded))


def commutator_norm(u, h) -> float:
    """Trace norm of U H - H U; zero certifies an energy-preserving unitary."""
    um = u.matrix if isinstance(u, EnergyBlockUnitary) else np.asarray(u, dtype=complex)
    hm = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h, dtype=complex)
    return trace_norm(um @ hm - hm @ um)


@dataclass(frozen=True, eq=False)
class ThermalOperation:
    """Global unitary plus bath Gibbs state, applied by conjugate-and-trace."""

    unitary: EnergyBlockUnitary
    bath: GibbsState
    d_sys: int
    d_bath: int

    def __post_init__(self):
        if self.unitary.dim != self.d_sys * self.d_bath:
            raise ValueError("unitary dimension does not match d_sys * d_bath")
        if self.bath.hamiltonian.dim != self.d_bath:
            raise ValueError("bath dimension mismatch")

    @property
    def system_hamiltonian(self) -> Hamiltonian:
        parts = self.unitary.hamiltonian.parts
        if parts is None:
            raise ValueError("unitary was not built from a system+bath total Hamiltonian")
        return parts[0]


def thermal_operation(unitary: EnergyBlockUnitary, bath: GibbsState) -> ThermalOperation:
    d_bath = bath.hamiltonian.dim
    if unitary.dim % d_bath:
        raise ValueError("bath dimension does not divide the unitary dimension")
    return ThermalOperation(unitary, bath, unitary.dim // d_bath, d_bath)


@dataclass(frozen=True)
class ChannelOutput:
    system: DensityMatrix
    bath: DensityMatrix
    joint: DensityMatrix


def apply(op: ThermalOperation, rho_sys: DensityMatrix, tol: float = STATE_TOL) -> ChannelOutput:
    """Evolve rho (x) tau by the global unitary and return joint plus marginals."""
    if rho_sys.dim != op.d_sys:
        raise ValueError(f"system state dimension {rho_sys.dim} != {op.d_sys}")
    u = op.unitary.matrix
    joint = u @ kron(rho_sys.matrix, op.bath.state.matrix) @ dagger(u)
    joint = 0.5 * (joint + dagger(joint))
    joint_dm = DensityMatrix(joint, (op.d_sys, op.d_bath), tol=tol)
    sys_out = DensityMatrix(trace_out_second(joint, op.d_sys, op.d_bath), (op.d_sys,), tol=tol)
    bath_out = DensityMatrix(trace_out_first(joint, op.d_sys, op.d_bath), (op.d_bath,), tol=tol)
    return ChannelOutput(sys_out, bath_out, joint_dm)


def apply_to_operator(op: ThermalOperation, x: np.ndarray) -> np.ndarray:
    """Linear extension of the channel to arbitrary system operators."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (op.d_sys, op.d_sys):
        raise ValueError("operator dimension mismatch")
    u = op.unitary.matrix
    joint = u @ kron(x, op.bath.state.matrix) @ dagger(u)
    return trace_out_second(joint, op.d_sys, op.d_bath)


# ---------------------------------------------------------------------------
# Markovianity constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MtoConstraintReport:
    """Outcome of the Markovianity check for one unitary and input state.

    ``joint_product_deviation`` is the trace distance between the evolved
    joint state and (evolved system) (x) tau.  ``amplitude_residuals`` maps
    (i, j, bath level) to the violation of the transition-amplitude
    constraint, ``phase_residuals`` maps system pairs (i, j) to the spread of
    the diagonal phase products across bath levels; ``None`` marks a
    combination the constraint system does not constrain (missing bath level,
    or degenerate Bohr spectrum for the off-diagonal law).
    """

    is_markovian: bool
    joint_product_deviation: float
    amplitude_residuals: dict[tuple[int, int, int], float | None]
    phase_residuals: dict[tuple[int, int], float | None]
    tol: float

    def max_amplitude_residual(self) -> float:
        vals = [v for v in self.amplitude_residuals.values() if v is not None]
        return max(vals, default=0.0)

    def max_phase_residual(self) -> float:
        vals = [v for v in self.phase_residuals.values() if v is not None]
        return max(vals, default=0.0)

    def residuals_markovian(self, tol: float | None = None) -> bool:
        t = self.tol if tol is None else tol
        return self.max_amplitude_residual() <= t and self.max_phase_residual() <= t


def _find_level(energies: np.ndarray, value: float, tol: float) -> int | None:
    hits = np.nonzero(np.abs(energies - value) <= tol)[0]
    if len(hits) != 1:
        return None
    return int(hits[0])


def transition_amplitudes(op: ThermalOperation) -> dict[tuple[int, int, int], complex | None]:
    """Matrix elements <j, r'| U |i, r> with r' the bath level at E_r + E_i - E_j.

    Keys are (i, j, r) over system levels i, j and bath levels r; the value is
    ``None`` when no unique bath level sits at the required energy.
    """
    h_sys = op.system_hamiltonian
    h_bath = op.bath.hamiltonian
    u = op.unitary.matrix
    vs, vb = h_sys.eigvecs, h_bath.eigvecs
    out: dict[tuple[int, int, int], complex | None] = {}
    for i in range(h_sys.dim):
        for j in range(h_sys.dim):
            omega = float(h_sys.energies[i] - h_sys.energies[j])
            for r in range(h_bath.dim):
                target = float(h_bath.energies[r]) + omega
                rp = _find_level(h_bath.energies, target, DEGENERACY_TOL)
                if rp is None:
                    out[(i, j, r)] = None
                    continue
                bra = kron(vs[:, j].reshape(-1, 1), vb[:, rp].reshape(-1, 1)).reshape(-1)
                kt = kron(vs[:, i].reshape(-1, 1), vb[:, r].reshape(-1, 1)).reshape(-1)
                out[(i, j, r)] = complex(bra.conj() @ u @ kt)
    return out


def mto_check(op: ThermalOperation, rho_sys: DensityMatrix, tol: float = STATE_TOL) -> MtoConstraintReport:
    """Check Markovianity of one application of the channel.

    The direct verdict compares the evolved joint state against the tensor
    product of its marginal with the untouched bath.  The residual system
    re-derives the same verdict from the unitary parameters alone: the
    squared transition amplitudes must match the Boltzmann-weighted
    transition probabilities, and for a system with a non-degenerate Bohr
    spectrum the diagonal phase products must be independent of the bath
    level.
    """
    out = apply(op, rho_sys)
    product = kron(out.system.matrix, op.bath.state.matrix)
    deviation = 0.5 * trace_norm(out.joint.matrix - product)

    h_sys = op.system_hamiltonian
    h_bath = op.bath.hamiltonian
    p_bath = op.bath.level_probabilities
    amps = transition_amplitudes(op)

    amplitude_residuals: dict[tuple[int, int, int], float | None] = {}
    for i in range(h_sys.dim):
        for j in range(h_sys.dim):
            omega = float(h_sys.energies[i] - h_sys.energies[j])
            # P(i -> j) from the available amplitudes.
            pij = 0.0
            for r in range(h_bath.dim):
                a = amps[(i, j, r)]
                if a is not None:
                    pij += p_bath[r] * abs(a) ** 2
            for r in range(h_bath.dim):
                a = amps[(i, j, r)]
                rp = _find_level(h_bath.energies, float(h_bath.energies[r]) + omega, DEGENERACY_TOL)
                if a is None or rp is None or p_bath[r] <= 0:
                    amplitude_residuals[(i, j, r)] = None
                    continue
                expected = p_bath[rp] * pij / p_bath[r]
                amplitude_residuals[(i, j, r)] = abs(abs(a) ** 2 - expected)

    phase_residuals: dict[tuple[int, int], float | None] = {}
    bohr_ok = h_sys.bohr_nondegenerate()
    for i in range(h_sys.dim):
        for j in range(i + 1, h_sys.dim):
            if not bohr_ok:
                phase_residuals[(i, j)] = None
                continue
            products = []
            for r in range(h_bath.dim):
                ai = amps[(i, i, r)]
                aj = amps[(j, j, r)]
                if ai is None or aj is None:
                    continue
                products.append((r, ai * aj.conjugate()))
            if not products:
                phase_residuals[(i, j)] = None
                continue
            lam = sum(p_bath[r] * z for r, z in products)
            phase_residuals[(i, j)] = max(abs(z - lam) for _, z in products)

    return MtoConstraintReport(
        is_markovian=bool(deviation <= tol),
        joint_product_deviation=float(deviation),
        amplitude_residuals=amplitude_residuals,
        phase_residuals=phase_residuals,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Perturbation of the system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbing Hamiltonian and dimensionless strength epsilon."""

    h_prime: Hamiltonian
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


def perturbed_hamiltonian(h_sys: Hamiltonian, pert: PerturbationSpec) -> Hamiltonian:
    """H + epsilon H' with a fresh eigendecomposition."""
    if pert.h_prime.dim != h_sys.dim:
        raise ValueError("perturbation dimension mismatch")
    return Hamiltonian.from_matrix(h_sys.matrix + pert.epsilon * pert.h_prime.matrix)


def _require_nondegenerate(h: Hamiltonian):
    gaps = np.diff(h.energies)
    if len(gaps) and gaps.min() <= DEGENERACY_TOL:
        raise ValueError("degenerate spectrum: non-degenerate perturbation theory does not apply")


def first_order_generator(h_sys: Hamiltonian, h_prime: Hamiltonian) -> np.ndarray:
    """Anti-Hermitian G with |i'> = (I + eps G)|i> to first order.

    In the eigenbasis of ``h_sys``: G[k, i] = <k|H'|i> / (E_i - E_k) off the
    diagonal, zero on it.  Returned in the computational representation.
    """
    _require_nondegenerate(h_sys)
    v = h_sys.eigvecs
    hp = dagger(v) @ h_prime.matrix @ v
    e = h_sys.energies
    g = np.zeros_like(hp)
    for k in range(h_sys.dim):
        for i in range(h_sys.dim):
            if k != i:
                g[k, i] = hp[k, i] / (e[i] - e[k])
    return v @ g @ dagger(v)


def perturbed_eigvectors(h_sys: Hamiltonian, pert: PerturbationSpec) -> np.ndarray:
    """Exact eigenvectors of H + eps H', matched to the unperturbed levels.

    Column ``i`` continues unperturbed level ``i``: it is the perturbed
    eigenvector of maximal overlap, with its phase aligned so the overlap is
    real positive.  Matching with squared overlap at or below 1/2, or two
    levels claiming the same perturbed vector, is an error.
    """
    hp = perturbed_hamiltonian(h_sys, pert)
    overlaps = dagger(h_sys.eigvecs) @ hp.eigvecs
    d = h_sys.dim
    cols = np.zeros((d, d), dtype=complex)
    taken: set[int] = set()
    for i in range(d):
        j = int(np.argmax(np.abs(overlaps[i, :])))
        ov = overlaps[i, j]
        if abs(ov) ** 2 <= 0.5 or j in taken:
            raise ValueError("perturbation too strong: eigenvector matching ambiguous")
        taken.add(j)
        cols[:, i] = hp.eigvecs[:, j] * (ov.conjugate() / abs(ov))
    return cols


def state_from_level_coeffs(h_sys: Hamiltonian, coeffs: np.ndarray, tol: float = STATE_TOL) -> DensityMatrix:
    """Density matrix sum_ij P_ij |i><j| over the eigenlevels of ``h_sys``."""
    p = np.asarray(coeffs, dtype=complex)
    v = h_sys.eigvecs
    return DensityMatrix(v @ p @ dagger(v), (h_sys.dim,), tol=tol)


def perturbed_state_exact(coeffs: np.ndarray, h_sys: Hamiltonian, pert: PerturbationSpec,
                          tol: float = STATE_TOL) -> DensityMatrix:
    """sum_ij P_ij |i'><j'| using exact matched eigenvectors of H + eps H'."""
    _require_nondegenerate(h_sys)
    p = np.asarray(coeffs, dtype=complex)
    v = perturbed_eigvectors(h_sys, pert)
    return DensityMatrix(v @ p @ dagger(v), (h_sys.dim,), tol=tol)


def first_order_correction(coeffs: np.ndarray, h_sys: Hamiltonian, h_prime: Hamiltonian) -> np.ndarray:
    """The operator rho-tilde = [G, rho]; Hermitian and traceless."""
    rho = h_sys.eigvecs @ np.asarray(coeffs, dtype=complex) @ dagger(h_sys.eigvecs)
    g = first_order_generator(h_sys, h_prime)
    return g @ rho - rho @ g


def perturbed_state_first_order(coeffs: np.ndarray, h_sys: Hamiltonian,
                                pert: PerturbationSpec) -> np.ndarray:
    """rho + eps [G, rho]: Hermitian, unit trace, possibly O(eps^2) indefinite.

    Returned as a raw matrix because the first-order truncation can dip a
    hair below positivity.
    """
    rho = h_sys.eigvecs @ np.asarray(coeffs, dtype=complex) @ dagger(h_sys.eigvecs)
    return rho + pert.epsilon * first_order_correction(coeffs, h_sys, pert.h_prime)
