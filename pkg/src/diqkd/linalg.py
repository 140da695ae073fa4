"""Dense complex linear algebra and quantum-state primitives.

Matrices are plain ``numpy`` complex arrays. The validated wrappers
(:class:`DensityOperator`, :class:`BinaryObservable`, :class:`BellDiagonal`)
check their invariants on construction and are immutable afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TOL_HERM = 1e-9
TOL_TRACE = 1e-9
TOL_PSD = 1e-9
TOL_EIG = 1e-8

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (X, Y, Z)

_S2 = np.sqrt(0.5)
PHI_PLUS = np.array([_S2, 0, 0, _S2], dtype=complex)
PSI_MINUS = np.array([0, _S2, -_S2, 0], dtype=complex)
PHI_MINUS = np.array([_S2, 0, 0, -_S2], dtype=complex)
PSI_PLUS = np.array([0, _S2, _S2, 0], dtype=complex)
# Column order (Phi+, Psi-, Phi-, Psi+) matches the BellDiagonal field order.
BELL_BASIS = np.column_stack([PHI_PLUS, PSI_MINUS, PHI_MINUS, PSI_PLUS])


class ValidationError(ValueError):
    """Input violates a type invariant; ``invariant`` names which one."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array (unwrapping state types)."""
    if isinstance(m, (DensityOperator, BinaryObservable)):
        return m.matrix
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise ValidationError("matrix is two-dimensional", f"got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("entries finite")
    return arr


def _check_square(m: np.ndarray) -> int:
    if m.shape[0] != m.shape[1]:
        raise ValidationError("matrix is square", f"shape {m.shape}")
    if m.shape[0] == 0:
        raise ValidationError("dimension positive")
    return m.shape[0]


def hermitian_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive semi-definite, unit-trace complex matrix."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        d = _check_square(m)
        if hermitian_defect(m) > TOL_HERM:
            raise ValidationError("Hermitian", f"defect {hermitian_defect(m):.3g}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TOL_TRACE:
            raise ValidationError("unit trace", f"trace {tr!r}")
        lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
        if lo < -TOL_PSD:
            raise ValidationError("positive semi-definite", f"min eigenvalue {lo:.3g}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", d)

    dim: int = field(init=False, default=0)

    @classmethod
    def from_vector(cls, psi) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True, eq=False)
class BinaryObservable:
    """Hermitian matrix with spectrum in {+1, -1}."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        d = _check_square(m)
        if hermitian_defect(m) > TOL_HERM:
            raise ValidationError("Hermitian", f"defect {hermitian_defect(m):.3g}")
        ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        dev = np.max(np.minimum(np.abs(ev - 1.0), np.abs(ev + 1.0)))
        if dev > TOL_EIG:
            raise ValidationError("eigenvalues are +1 or -1", f"deviation {dev:.3g}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", d)

    dim: int = field(init=False, default=0)

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Projectors onto the +1 and -1 eigenspaces."""
        eye = np.eye(self.dim)
        return 0.5 * (eye + self.matrix), 0.5 * (eye - self.matrix)


@dataclass(frozen=True)
class BellDiagonal:
    """Eigenvalues of a Bell-diagonal two-qubit state, ordered (Phi+, Psi-, Phi-, Psi+)."""

    lam_phi_plus: float
    lam_psi_minus: float
    lam_phi_minus: float
    lam_psi_plus: float

    def __post_init__(self):
        lam = self.as_array()
        if not np.all(np.isfinite(lam)):
            raise ValidationError("entries finite")
        if np.any(lam < -TOL_TRACE) or np.any(lam > 1 + TOL_TRACE):
            raise ValidationError("components in [0, 1]", str(lam))
        if abs(lam.sum() - 1.0) > TOL_TRACE:
            raise ValidationError("components sum to 1", f"sum {lam.sum()!r}")

    @classmethod
    def from_array(cls, lam: Iterable[float]) -> "BellDiagonal":
        a, b, c, d = (float(x) for x in lam)
        return cls(a, b, c, d)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.lam_phi_plus, self.lam_psi_minus, self.lam_phi_minus, self.lam_psi_plus],
            dtype=float,
        )


def tensor(*ops) -> np.ndarray:
    """Kronecker product of one or more matrices (left to right)."""
    out = as_matrix(ops[0])
    for op in ops[1:]:
        out = np.kron(out, as_matrix(op))
    return out


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # First component with |v_i| > tol made real positive.
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size:
            c = col[idx[0]]
            vecs[:, k] = col * (abs(c) / c)
    return vecs


def hermitian_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real, sorted in descending order.
    eigenvectors : ndarray
        Unitary matrix whose columns are the eigenvectors, each with its first
        non-negligible component real and positive.
    """
    m = as_matrix(m)
    _check_square(m)
    if hermitian_defect(m) > TOL_HERM * max(1.0, float(np.max(np.abs(m)))):
        raise ValidationError("Hermitian", f"defect {hermitian_defect(m):.3g}")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_phases(v[:, order])


def partial_trace(rho, dims: Sequence[int], keep: Iterable[int]) -> DensityOperator:
    """Trace out every subsystem not listed in ``keep``."""
    m = partial_trace_matrix(as_matrix(rho), dims, keep)
    return DensityOperator(m)


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Unvalidated partial trace on a raw matrix; works for any operator."""
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ValidationError(
            "product of dims equals state dimension", f"dims {dims} vs shape {m.shape}"
        )
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValidationError("keep indices are subsystem indices", str(keep))
    n = len(dims)
    t = m.reshape(dims + dims)
    # Contract traced subsystems pairwise, highest index first so axes stay valid.
    for k in sorted(set(range(n)) - set(keep), reverse=True):
        nk = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + nk)
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kd, kd)


def purify(rho) -> np.ndarray:
    """Purification on ``dim**2``: the appended system is the second factor.

    A pure input returns its vector tensored with ``|0>`` (up to phase).
    """
    m = as_matrix(rho)
    d = _check_square(m)
    w, v = hermitian_eig(m)
    w = np.clip(w, 0.0, None)
    psi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        if w[i] > 0:
            psi += np.sqrt(w[i]) * np.kron(v[:, i], np.eye(d)[i])
    return psi


def _entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho) -> float:
    """Entropy in bits, with 0 log 0 := 0 and the result clipped to [0, log2 dim]."""
    m = as_matrix(rho)
    d = _check_square(m)
    w = np.clip(np.linalg.eigvalsh(0.5 * (m + m.conj().T)), 0.0, 1.0)
    return float(np.clip(_entropy_bits(w), 0.0, np.log2(d)))


def shannon_entropy(p) -> float:
    """Shannon entropy in bits of a probability vector."""
    return _entropy_bits(np.clip(np.asarray(p, dtype=float), 0.0, 1.0))


def binary_entropy(q):
    """Binary entropy in bits; accepts scalars or arrays with values in [0, 1]."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(q_arr)) or np.any(q_arr < 0) or np.any(q_arr > 1):
        raise ValueError(f"binary_entropy argument outside [0, 1]: {q!r}")
    out = np.zeros_like(q_arr)
    inner = (q_arr > 0) & (q_arr < 1)
    qi = q_arr[inner]
    out[inner] = -qi * np.log2(qi) - (1 - qi) * np.log2(1 - qi)
    return float(out) if out.ndim == 0 else out


def bell_diagonal_to_density(lam: BellDiagonal) -> DensityOperator:
    w = lam.as_array()
    return DensityOperator((BELL_BASIS * w) @ BELL_BASIS.conj().T)


def bell_coefficients(rho) -> tuple[np.ndarray, float]:
    """Diagonal of ``rho`` in the Bell basis and the largest off-diagonal magnitude."""
    m = BELL_BASIS.conj().T @ as_matrix(rho) @ BELL_BASIS
    off = m - np.diag(np.diag(m))
    return np.real(np.diag(m)), float(np.max(np.abs(off)))


def correlation_matrix(rho) -> np.ndarray:
    """3x3 real matrix ``t_ij = tr(rho sigma_i (x) sigma_j)`` of a two-qubit state."""
    m = as_matrix(rho)
    if m.shape != (4, 4):
        raise ValidationError("state is two-qubit", f"shape {m.shape}")
    return np.array(
        [[np.trace(np.kron(si, sj) @ m).real for sj in PAULIS] for si in PAULIS]
    )


def bloch_observable(n) -> np.ndarray:
    """``n . sigma`` for a real 3-vector (x, y, z)."""
    n = np.asarray(n, dtype=float)
    return n[0] * X + n[1] * Y + n[2] * Z


def planar_observable(angle: float) -> np.ndarray:
    """``cos(angle) Z + sin(angle) X``."""
    return np.cos(angle) * Z + np.sin(angle) * X


# -- random sampling used by tests and Monte Carlo harnesses --


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Dirichlet-weighted mixture of Haar-random pure states (rank 1..d)."""
    if rank is None:
        rank = int(rng.integers(1, d + 1))
    w = rng.dirichlet(np.ones(rank))
    m = np.zeros((d, d), dtype=complex)
    for wi in w:
        v = random_pure_state(d, rng)
        m += wi * np.outer(v, v.conj())
    return 0.5 * (m + m.conj().T)


def random_binary_observable(
    d: int, rng: np.random.Generator, n_plus: int | None = None
) -> np.ndarray:
    if n_plus is None:
        n_plus = int(rng.integers(0, d + 1))
    signs = np.array([1.0] * n_plus + [-1.0] * (d - n_plus))
    u = haar_unitary(d, rng)
    m = (u * signs) @ u.conj().T
    return 0.5 * (m + m.conj().T)


def random_qubit_observable(rng: np.random.Generator) -> np.ndarray:
    n = rng.standard_normal(3)
    return bloch_observable(n / np.linalg.norm(n))
