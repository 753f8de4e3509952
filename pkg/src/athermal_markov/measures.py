"""Non-Markovianity measures for thermal channels and their perturbation response.

Three measures are provided: logarithmic negativity of the evolved joint
state, quantum mutual information across the system/bath split, and the
trace-norm distance from the channel to the nearest member of a constrained
Markovian family, evaluated through Choi states.  Alongside them live the
first-order response quantities: the exact mutual-information response
coefficient, the relative-entropy response evaluator with its trace-log
expansion check, and the distance-response upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import thermal
from .linalg import (
    STATE_TOL,
    SUPPORT_CUTOFF,
    DensityMatrix,
    dagger,
    entropy_of_spectrum,
    kron,
    matrix_log2_on_support,
    partial_trace,
    partial_transpose,
    support_projectors,
    trace_norm,
    trace_out_first,
    von_neumann_entropy,
)
from .optimize import OptimizerConfig, PhaseManifold, minimize
from .thermal import PerturbationSpec, ThermalOperation


@dataclass(frozen=True)
class MeasureValue:
    """A named measure evaluation; optimiser-backed kinds carry diagnostics."""

    kind: str
    value: float
    diagnostics: dict | None = None


@dataclass(frozen=True)
class DeltaReport:
    """Perturbed-minus-unperturbed response of one measure at one epsilon."""

    unperturbed: MeasureValue
    perturbed: MeasureValue
    delta: float
    epsilon: float


@dataclass(frozen=True)
class ProjectiveMeasurementQubit:
    """Rank-one projective measurement of a qubit parametrised on the sphere."""

    theta: float
    phi: float

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        c, s = np.cos(self.theta / 2), np.sin(self.theta / 2)
        psi = np.array([c, np.exp(1j * self.phi) * s])
        p1 = np.outer(psi, psi.conj())
        return p1, np.eye(2) - p1


# ---------------------------------------------------------------------------
# State-based measures
# ---------------------------------------------------------------------------

def log_negativity(rho_joint: DensityMatrix) -> MeasureValue:
    """log2 of the trace norm of the partial transpose on the first factor.

    Zero on every PPT state, in particular on all separable states of 2x2
    and 2x3 systems.
    """
    value = float(np.log2(trace_norm(partial_transpose(rho_joint, 0))))
    return MeasureValue("log_negativity", value)


def mutual_information(rho_joint: DensityMatrix) -> MeasureValue:
    """S(first) + S(second) - S(joint), in bits."""
    s1 = von_neumann_entropy(partial_trace(rho_joint, 0))
    s2 = von_neumann_entropy(partial_trace(rho_joint, 1))
    s12 = von_neumann_entropy(rho_joint)
    return MeasureValue("mutual_information", float(s1 + s2 - s12))


def _measured_conditional_entropy(rho_joint: DensityMatrix, meas: ProjectiveMeasurementQubit) -> float:
    d2 = rho_joint.dims[1]
    total = 0.0
    for p in meas.projectors():
        m = kron(p, np.eye(d2))
        sub = m @ rho_joint.matrix @ m
        prob = float(np.trace(sub).real)
        if prob > 1e-14:
            cond = trace_out_first(sub, 2, d2) / prob
            total += prob * entropy_of_spectrum(cond)
    return total


def discord(rho_joint: DensityMatrix, cfg: OptimizerConfig | None = None) -> MeasureValue:
    """Quantum discord with the measurement on the first (qubit) factor.

    Minimises the measured conditional entropy over rank-one projective
    measurements of the measured qubit via grid-seeded multi-start search,
    then returns S(A) - S(AB) + min_meas sum_i p_i S(rho_B^i).
    """
    if rho_joint.dims[0] != 2:
        raise ValueError("unsupported measured dimension: first factor must be a qubit")
    cfg = cfg or OptimizerConfig(grid_resolution=24)

    def objective(x):
        return _measured_conditional_entropy(rho_joint, ProjectiveMeasurementQubit(x[0], x[1]))

    result = minimize(objective, [(0.0, np.pi), (0.0, 2 * np.pi)], cfg, periodic=[False, True])
    s_a = von_neumann_entropy(partial_trace(rho_joint, 0))
    s_ab = von_neumann_entropy(rho_joint)
    value = float(s_a - s_ab + result.best_value)
    diags = {
        "theta": float(result.best_point[0]),
        "phi": float(result.best_point[1]),
        "converged": result.converged,
        "evaluations": result.evaluations,
    }
    return MeasureValue("discord", value, diags)


# ---------------------------------------------------------------------------
# Choi states and the distance measure
# ---------------------------------------------------------------------------

def _system_kets(h_sys: thermal.Hamiltonian, pert: PerturbationSpec | None,
                 first_order: bool) -> np.ndarray:
    """Columns used for the maximally entangled input: exact perturbed
    eigenvectors by default, first-order ones on request, unperturbed when
    ``pert`` is None or has zero strength."""
    if pert is None or pert.epsilon == 0.0:
        return h_sys.eigvecs
    if not first_order:
        return thermal.perturbed_eigvectors(h_sys, pert)
    g = thermal.first_order_generator(h_sys, pert.h_prime)
    cols = h_sys.eigvecs + pert.epsilon * (g @ h_sys.eigvecs)
    return cols / np.linalg.norm(cols, axis=0, keepdims=True)


def maximally_entangled_input(h_sys: thermal.Hamiltonian, pert: PerturbationSpec | None = None,
                              first_order: bool = False) -> np.ndarray:
    """Projector onto (1/sqrt(d)) sum_i |i'> (x) |i> as a raw matrix."""
    d = h_sys.dim
    kets = _system_kets(h_sys, pert, first_order)
    phi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        phi += kron(kets[:, i].reshape(-1, 1), np.eye(d)[:, i].reshape(-1, 1)).reshape(-1)
    phi /= np.linalg.norm(phi)
    return np.outer(phi, phi.conj())


def _apply_channel_to_bipartite(channel: Callable[[np.ndarray], np.ndarray],
                                x: np.ndarray, d: int) -> np.ndarray:
    """(channel (x) identity) acting on an operator of the system+ancilla pair."""
    r = x.reshape(d, d, d, d)
    out = np.zeros_like(r)
    for a in range(d):
        for b in range(d):
            out[:, a, :, b] = channel(np.ascontiguousarray(r[:, a, :, b]))
    return out.reshape(d * d, d * d)


def _as_channel(op) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, ThermalOperation):
        return lambda x: thermal.apply_to_operator(op, x)
    return op


def choi_state(op, h_sys: thermal.Hamiltonian, pert: PerturbationSpec | None = None,
               first_order: bool = False, tol: float = STATE_TOL) -> DensityMatrix:
    """Choi state (channel (x) identity) |Phi><Phi| of a system channel.

    ``op`` is a ThermalOperation or any callable taking and returning a
    system operator.  The entangled input pairs system eigenvectors (exact or
    first-order perturbed ones when ``pert`` is given) with a fixed ancilla
    basis.
    """
    d = h_sys.dim
    chi_in = maximally_entangled_input(h_sys, pert, first_order)
    out = _apply_channel_to_bipartite(_as_channel(op), chi_in, d)
    out = 0.5 * (out + dagger(out))
    return DensityMatrix(out, (d, d), tol=tol)


@dataclass(frozen=True)
class MarkovianFamily:
    """Phase-parametrised Markovian channels sharing the target's bath.

    Members are generated by unitaries diagonal over the (non-degenerate)
    total-energy levels, with phases confined to the constraint manifold that
    keeps the evolved joint state in product form.
    """

    h_total: thermal.Hamiltonian
    bath: thermal.GibbsState
    manifold: PhaseManifold

    def __post_init__(self):
        blocks = self.h_total.energy_blocks()
        if any(len(idx) > 1 for _, idx in blocks):
            raise ValueError("Markovian phase family requires a non-degenerate total spectrum")
        if self.manifold.dim != len(blocks):
            raise ValueError("manifold dimension must match the number of energy levels")

    def operation(self, free_phases) -> ThermalOperation:
        phases = self.manifold.embed(free_phases)
        u = thermal.build_block_unitary(self.h_total, [float(p) for p in phases])
        return thermal.thermal_operation(u, self.bath)

    def bounds(self):
        return [(0.0, 2 * np.pi)] * self.manifold.free_dim


def _sampled_state_check(op: ThermalOperation, op_m: ThermalOperation, choi_value: float,
                         samples: int = 16) -> dict:
    """Spot-check that no sampled input state beats the Choi-state distance."""
    rng = np.random.default_rng(71530)
    d = op.d_sys
    worst = 0.0
    for k in range(samples):
        if k % 2 == 0:
            v = rng.normal(size=d) + 1j * rng.normal(size=d)
            v /= np.linalg.norm(v)
            rho = np.outer(v, v.conj())
        else:
            a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            rho = a @ dagger(a)
            rho /= np.trace(rho).real
        diff = thermal.apply_to_operator(op, rho) - thermal.apply_to_operator(op_m, rho)
        worst = max(worst, trace_norm(diff))
    return {"sampled_max": worst, "sampled_exceeds_choi": bool(worst > choi_value + 1e-6)}


def distance_measure(op: ThermalOperation, family: MarkovianFamily,
                     cfg: OptimizerConfig | None = None, pert: PerturbationSpec | None = None,
                     first_order: bool = False) -> MeasureValue:
    """Distance from the channel to the nearest member of a Markovian family.

    The maximisation over input states is carried by the maximally entangled
    Choi input (perturbed eigenvectors when ``pert`` is given); the
    minimisation over the family runs on its constraint manifold.  Best-found
    parameters and convergence go into diagnostics, along with a sampled
    sanity check that no random input state exceeds the Choi-state value.
    """
    cfg = cfg or OptimizerConfig(grid_resolution=8)
    h_sys = op.system_hamiltonian
    d = h_sys.dim
    chi_in = maximally_entangled_input(h_sys, pert, first_order)
    target = _apply_channel_to_bipartite(_as_channel(op), chi_in, d)

    def objective(free):
        candidate = _apply_channel_to_bipartite(_as_channel(family.operation(free)), chi_in, d)
        return trace_norm(target - candidate)

    result = minimize(objective, family.bounds(), cfg, periodic=[True] * family.manifold.free_dim)
    best_full = family.manifold.embed(result.best_point)
    diags = {
        "phases": [float(p) for p in best_full],
        "converged": result.converged,
        "evaluations": result.evaluations,
    }
    if pert is None:
        diags.update(_sampled_state_check(op, family.operation(result.best_point), result.best_value))
    return MeasureValue("choi_distance", float(result.best_value), diags)


# ---------------------------------------------------------------------------
# First-order response quantities
# ---------------------------------------------------------------------------

def _check_support(label: str, direction: np.ndarray, state: np.ndarray, flags: dict,
                   cutoff: float = SUPPORT_CUTOFF, tol: float = 1e-9):
    _, kernel = support_projectors(state, cutoff)
    if np.max(np.abs(kernel)) < tol:
        return
    flags[label] = True
    if trace_norm(kernel @ direction @ kernel) > tol:
        raise ValueError("theta undefined at this point: response leaves the state's support")


def theta_lambda(op: ThermalOperation, rho_coeffs, pert: PerturbationSpec,
                 with_diagnostics: bool = False):
    """Exact first-order response of the mutual information to the perturbation.

    Independent of epsilon: it is built from the perturbing operator, the
    input coefficients and the channel only.  Uses the support convention for
    the logarithms and refuses inputs whose response has weight outside the
    support of the corresponding evolved state.
    """
    h_sys = op.system_hamiltonian
    rho = thermal.state_from_level_coeffs(h_sys, rho_coeffs)
    rho_tilde = thermal.first_order_correction(rho_coeffs, h_sys, pert.h_prime)

    out = thermal.apply(op, rho)
    u = op.unitary.matrix
    joint_dir = u @ kron(rho_tilde, op.bath.state.matrix) @ dagger(u)
    beta_1 = np.einsum("abcb->ac", joint_dir.reshape(op.d_sys, op.d_bath, op.d_sys, op.d_bath))
    beta_2 = np.einsum("abad->bd", joint_dir.reshape(op.d_sys, op.d_bath, op.d_sys, op.d_bath))

    flags: dict = {}
    _check_support("system_support_deficient", beta_1, out.system.matrix, flags)
    _check_support("bath_support_deficient", beta_2, out.bath.matrix, flags)
    _check_support("joint_support_deficient", joint_dir, out.joint.matrix, flags)

    def overlap(direction, state, dim):
        log_term = np.eye(dim) + matrix_log2_on_support(state)
        return float(np.trace(direction @ log_term).real)

    a_bar = overlap(beta_1, out.system.matrix, op.d_sys)
    b_bar = overlap(beta_2, out.bath.matrix, op.d_bath)
    c_bar = overlap(joint_dir, out.joint.matrix, op.d_sys * op.d_bath)
    theta = c_bar - a_bar - b_bar
    if with_diagnostics:
        return theta, {"a_bar": a_bar, "b_bar": b_bar, "c_bar": c_bar, **flags}
    return theta


def x_lambda(op: ThermalOperation, rho_coeffs, sigma: DensityMatrix,
             pert: PerturbationSpec) -> float:
    """Relative-entropy response evaluated against one separable witness.

    Computes Tr[B (I + log2 A - log2 sigma)] with A the evolved joint state
    and B the evolved first-order correction; ``sigma`` must be full rank.
    """
    h_sys = op.system_hamiltonian
    if sigma.dim != op.d_sys * op.d_bath:
        raise ValueError("sigma dimension mismatch")
    if float(np.linalg.eigvalsh(sigma.matrix)[0]) <= SUPPORT_CUTOFF:
        raise ValueError("sigma must be full rank")
    rho = thermal.state_from_level_coeffs(h_sys, rho_coeffs)
    rho_tilde = thermal.first_order_correction(rho_coeffs, h_sys, pert.h_prime)
    u = op.unitary.matrix
    a = u @ kron(rho.matrix, op.bath.state.matrix) @ dagger(u)
    b = u @ kron(rho_tilde, op.bath.state.matrix) @ dagger(u)
    d = a.shape[0]
    log_ratio = matrix_log2_on_support(a) - matrix_log2_on_support(sigma.matrix)
    return float(np.trace(b @ (np.eye(d) + log_ratio)).real)


def expansion_lemma_residual(a: np.ndarray, b: np.ndarray, eps: float) -> float:
    """|Tr[(A+eB) log2(A+eB)] - Tr[A log2 A] - e Tr[B (I + log2 A)]|.

    The first-order trace-log expansion behind both response bounds; the
    residual is O(eps^2) for full-rank PSD A.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = a.shape[0]
    lhs = float(np.trace((a + eps * b) @ matrix_log2_on_support(a + eps * b)).real)
    base = float(np.trace(a @ matrix_log2_on_support(a)).real)
    linear = float(np.trace(b @ (np.eye(d) + matrix_log2_on_support(a))).real)
    return abs(lhs - base - eps * linear)


def response_direction(h_sys: thermal.Hamiltonian, h_prime: thermal.Hamiltonian) -> np.ndarray:
    """Perturbation-direction operator entering the distance response bound.

    Equals (G (x) I) K + K (G (x) I)^dag with K = sum_ij |ii><jj| built on the
    system eigenbasis paired with the ancilla basis; K is d times the
    maximally entangled projector.
    """
    d = h_sys.dim
    g = thermal.first_order_generator(h_sys, h_prime)
    k = d * maximally_entangled_input(h_sys)
    gk = kron(g, np.eye(d)) @ k
    return gk + dagger(gk)


def chi_lambda_bound(op: ThermalOperation, family: MarkovianFamily, pert: PerturbationSpec,
                     cfg: OptimizerConfig | None = None, with_diagnostics: bool = False):
    """Upper bound on the distance-measure response: (eps/d) max ||chi||_1.

    ``chi`` is the family-relative image of the perturbation direction of the
    entangled input; the maximum over the family is taken by multi-start
    search on the constraint manifold.
    """
    cfg = cfg or OptimizerConfig(grid_resolution=8)
    h_sys = op.system_hamiltonian
    d = h_sys.dim
    theta_dir = response_direction(h_sys, pert.h_prime)
    target = _apply_channel_to_bipartite(_as_channel(op), theta_dir, d)

    def objective(free):
        candidate = _apply_channel_to_bipartite(_as_channel(family.operation(free)), theta_dir, d)
        return -trace_norm(target - candidate)

    result = minimize(objective, family.bounds(), cfg, periodic=[True] * family.manifold.free_dim)
    bound = pert.epsilon / d * (-result.best_value)
    if with_diagnostics:
        return bound, {"converged": result.converged, "evaluations": result.evaluations,
                       "phases": [float(p) for p in family.manifold.embed(result.best_point)]}
    return bound


# ---------------------------------------------------------------------------
# Perturbation-response deltas
# ---------------------------------------------------------------------------

_STATE_MEASURES = {
    "log_negativity": log_negativity,
    "mutual_information": mutual_information,
}


def delta(kind: str, op: ThermalOperation, rho_coeffs, pert: PerturbationSpec,
          cfg: OptimizerConfig | None = None, family: MarkovianFamily | None = None) -> DeltaReport:
    """Evaluate one measure with and without the perturbation and difference it.

    Perturbed inputs use exact eigenvectors of the perturbed Hamiltonian;
    the first-order machinery only enters the response quantities, not the
    deltas.
    """
    h_sys = op.system_hamiltonian
    if kind in _STATE_MEASURES or kind == "discord":
        rho = thermal.state_from_level_coeffs(h_sys, rho_coeffs)
        rho_eps = thermal.perturbed_state_exact(rho_coeffs, h_sys, pert)
        joint = thermal.apply(op, rho).joint
        joint_eps = thermal.apply(op, rho_eps).joint
        if kind == "discord":
            before = discord(joint, cfg)
            after = discord(joint_eps, cfg)
        else:
            before = _STATE_MEASURES[kind](joint)
            after = _STATE_MEASURES[kind](joint_eps)
    elif kind == "choi_distance":
        if family is None:
            raise ValueError("choi_distance needs a Markovian family")
        before = distance_measure(op, family, cfg)
        after = distance_measure(op, family, cfg, pert=pert)
    else:
        raise ValueError(f"unknown measure kind: {kind}")
    return DeltaReport(before, after, float(after.value - before.value), pert.epsilon)
