"""Dense complex linear algebra and entropy primitives for small quantum systems.

Operators are plain numpy arrays (row-major, complex128).  States carry an
explicit subsystem factorisation through :class:`DensityMatrix`.  Every
validity check takes an explicit absolute tolerance; defaults live in
``STATE_TOL`` and ``SUPPORT_CUTOFF`` instead of being buried in call sites.
All entropies and matrix logarithms are base 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, localcontext

import numpy as np

# Default absolute tolerance for state validity (hermiticity, trace, positivity).
STATE_TOL = 1e-9

# Eigenvalues at or below this cutoff count as zero support.
SUPPORT_CUTOFF = 1e-12

# 2*pi with enough digits for exact-to-double reduction of huge angles.
_TWO_PI = Decimal("6.2831853071795864769252867665590057683943387987502116419498891846")


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def mat_equal(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    """Entrywise equality within an absolute tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and bool(np.max(np.abs(a - b), initial=0.0) <= tol)


def is_hermitian(m: np.ndarray, tol: float = STATE_TOL) -> bool:
    return mat_equal(m, dagger(m), tol)


def reduce_mod_2pi(angle: float) -> float:
    """Reduce an angle to [0, 2*pi) using extended-precision arithmetic.

    Double-precision ``angle % (2*pi)`` loses ~1e-7 rad for angles of order
    1e9; phases that large appear in the block-unitary configurations, and
    only the reduced value matters to ``exp(-1j*angle)``.
    """
    with localcontext() as ctx:
        ctx.prec = 50
        r = Decimal(float(angle)) % _TWO_PI
        if r < 0:
            r += _TWO_PI
        return float(r)


def ket(amplitudes, tol: float = STATE_TOL) -> np.ndarray:
    """Validate and return a unit-norm complex vector."""
    v = np.asarray(amplitudes, dtype=complex).reshape(-1)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"ket is not normalised: |v| = {norm}")
    return v


def basis_ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive unit-trace Hermitian matrix with a declared factorisation.

    ``dims`` lists subsystem dimensions whose product equals the matrix
    dimension; single-factor states use a one-element tuple.  Validation
    happens on construction at the stored tolerance.
    """

    matrix: np.ndarray
    dims: tuple[int, ...]
    tol: float = field(default=STATE_TOL, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        n = m.shape[0]
        if m.ndim != 2 or m.shape[1] != n:
            raise ValueError("density matrix must be square")
        if int(np.prod(dims)) != n:
            raise ValueError(f"bad factorization: prod{dims} != {n}")
        if not is_hermitian(m, self.tol):
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > self.tol:
            raise ValueError(f"density matrix trace {tr} != 1 within tolerance")
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -self.tol:
            raise ValueError(f"density matrix has negative eigenvalue {lo}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, (i*rows_b + k, j*cols_b + l) -> a[i,j]*b[k,l]."""
    return np.kron(a, b)


def _two_factor_dims(rho: DensityMatrix) -> tuple[int, int]:
    if len(rho.dims) != 2:
        raise ValueError(f"bad factorization: need exactly two factors, got {rho.dims}")
    return rho.dims


def partial_trace(rho: DensityMatrix, keep: int) -> DensityMatrix:
    """Reduced state on one factor of a bipartite density matrix.

    ``keep`` = 0 keeps the first factor, 1 the second.
    """
    d1, d2 = _two_factor_dims(rho)
    if keep not in (0, 1):
        raise ValueError("keep must be 0 or 1")
    r = rho.matrix.reshape(d1, d2, d1, d2)
    if keep == 0:
        out = np.einsum("abcb->ac", r)
        dims = (d1,)
    else:
        out = np.einsum("abad->bd", r)
        dims = (d2,)
    return DensityMatrix(out, dims, tol=max(rho.tol, STATE_TOL))


def trace_out_second(matrix: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Partial trace over the second factor of a raw (d1*d2) square matrix."""
    return np.einsum("abcb->ac", matrix.reshape(d1, d2, d1, d2))


def trace_out_first(matrix: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Partial trace over the first factor of a raw (d1*d2) square matrix."""
    return np.einsum("abad->bd", matrix.reshape(d1, d2, d1, d2))


def partial_transpose(rho: DensityMatrix, on: int) -> np.ndarray:
    """Transpose the indices of one factor only.

    The result is Hermitian with unit trace but in general indefinite, so a
    plain array is returned rather than a DensityMatrix.
    """
    d1, d2 = _two_factor_dims(rho)
    if on not in (0, 1):
        raise ValueError("on must be 0 or 1")
    r = rho.matrix.reshape(d1, d2, d1, d2)
    axes = (2, 1, 0, 3) if on == 0 else (0, 3, 2, 1)
    return r.transpose(axes).reshape(d1 * d2, d1 * d2)


def eigh(m: np.ndarray, tol: float = STATE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix with a fixed phase convention.

    Returns (eigenvalues ascending, eigenvectors as columns).  Each column is
    rescaled so its largest-magnitude component is real positive, which makes
    repeated calls bit-identical and keeps downstream optimisation starts
    reproducible.
    """
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m, tol):
        raise ValueError("eigh requires a Hermitian matrix")
    w, v = np.linalg.eigh(m)
    v = v.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if pivot != 0:
            v[:, k] = col * (pivot.conjugate() / abs(pivot))
    return w, v


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values of a square matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("trace_norm expects a square matrix")
    return float(np.linalg.svd(m, compute_uv=False).sum())


def von_neumann_entropy(rho: DensityMatrix, cutoff: float = SUPPORT_CUTOFF) -> float:
    """Entropy -sum(p log2 p) in bits, with the 0 log 0 = 0 convention."""
    w = np.linalg.eigvalsh(rho.matrix)
    w = w[w > cutoff]
    return float(-np.sum(w * np.log2(w)))


def entropy_of_spectrum(matrix: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> float:
    """Entropy in bits of a raw Hermitian matrix's spectrum (no validation)."""
    w = np.linalg.eigvalsh(matrix)
    w = w[w > cutoff]
    return float(-np.sum(w * np.log2(w)))


def matrix_log2_on_support(m: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """Spectral log2 of a PSD matrix, restricted to its support.

    Eigenvalues at or below ``cutoff`` map to zero (projector-onto-support
    convention); an eigenvalue below ``-cutoff`` is an error.
    """
    w, v = eigh(m)
    if w[0] < -cutoff:
        raise ValueError(f"matrix_log2_on_support: negative eigenvalue {w[0]}")
    on = w > cutoff
    vs = v[:, on]
    return (vs * np.log2(w[on])) @ dagger(vs)


def support_projectors(m: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """(support, kernel) orthogonal projectors of a Hermitian matrix."""
    w, v = eigh(m)
    on = w > cutoff
    vs = v[:, on]
    p = vs @ dagger(vs)
    return p, np.eye(m.shape[0], dtype=complex) - p
