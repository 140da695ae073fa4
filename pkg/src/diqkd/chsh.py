"""CHSH test evaluation and maximisation over measurements.

Outcome bit 0 corresponds to eigenvalue +1 and bit 1 to eigenvalue -1, so a
trial succeeds when ``x xor y == a*b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    X,
    Z,
    BinaryObservable,
    DensityOperator,
    ValidationError,
    as_matrix,
    bloch_observable,
    correlation_matrix,
    planar_observable,
)

TSIRELSON = 2.0 * np.sqrt(2.0)
P_QUANTUM = np.cos(np.pi / 8) ** 2
P_CLASSICAL = 0.75


def _as_observable(o) -> BinaryObservable:
    return o if isinstance(o, BinaryObservable) else BinaryObservable(o)


@dataclass(frozen=True, eq=False)
class ChshStrategy:
    """A bipartite state plus two binary observables per party."""

    state: DensityOperator
    alice_obs: tuple
    bob_obs: tuple
    d_A: int = field(default=0)
    d_B: int = field(default=0)

    def __post_init__(self):
        state = self.state if isinstance(self.state, DensityOperator) else DensityOperator(self.state)
        if len(self.alice_obs) != 2 or len(self.bob_obs) != 2:
            raise ValidationError("two observables per party")
        alice = tuple(_as_observable(o) for o in self.alice_obs)
        bob = tuple(_as_observable(o) for o in self.bob_obs)
        d_a, d_b = alice[0].dim, bob[0].dim
        if alice[1].dim != d_a or bob[1].dim != d_b:
            raise ValidationError("observables of one party share a dimension")
        if (self.d_A and self.d_A != d_a) or (self.d_B and self.d_B != d_b):
            raise ValidationError("declared local dimensions match observables")
        if state.dim != d_a * d_b:
            raise ValidationError("state dimension = d_A * d_B", f"{state.dim} != {d_a}*{d_b}")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "alice_obs", alice)
        object.__setattr__(self, "bob_obs", bob)
        object.__setattr__(self, "d_A", d_a)
        object.__setattr__(self, "d_B", d_b)


@dataclass(frozen=True, eq=False)
class PlanarAngles:
    """Measurement angles in the Z-X plane of each party's local frame.

    Observables are ``F^dag (cos t Z + sin t X) F`` where ``F`` is the party's
    2x2 frame unitary; the identity frame gives the plain planar form.
    """

    alice_angles: tuple[float, float]
    bob_angles: tuple[float, float]
    alice_frame: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex), repr=False)
    bob_frame: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex), repr=False)

    def __post_init__(self):
        ang = np.array(list(self.alice_angles) + list(self.bob_angles), dtype=float)
        if ang.shape != (4,) or not np.all(np.isfinite(ang)):
            raise ValidationError("angles finite", str(ang))
        for frame in (self.alice_frame, self.bob_frame):
            f = np.asarray(frame)
            if f.shape != (2, 2) or np.max(np.abs(f.conj().T @ f - np.eye(2))) > 1e-9:
                raise ValidationError("frame is a 2x2 unitary")


def correlator(state, a_obs, b_obs) -> float:
    """``tr((A (x) B) rho)``."""
    return float(np.trace(np.kron(as_matrix(a_obs), as_matrix(b_obs)) @ as_matrix(state)).real)


def correlators(strategy: ChshStrategy) -> np.ndarray:
    """2x2 array ``E[a, b]`` of correlators."""
    rho = strategy.state.matrix
    return np.array(
        [[correlator(rho, A, B) for B in strategy.bob_obs] for A in strategy.alice_obs]
    )


def chsh_S(strategy: ChshStrategy) -> float:
    """``S = sum_ab (-1)^(ab) tr(A_a (x) B_b rho)``."""
    e = correlators(strategy)
    return float(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])


def outcome_distribution(state, a_obs, b_obs) -> np.ndarray:
    """Born-rule joint distribution ``P[x, y]`` for one pair of settings."""
    rho = as_matrix(state)
    a = _as_observable(a_obs)
    b = _as_observable(b_obs)
    pa, pb = a.projectors(), b.projectors()
    out = np.empty((2, 2))
    for x in range(2):
        for y in range(2):
            out[x, y] = np.trace(np.kron(pa[x], pb[y]) @ rho).real
    return out


def outcome_table(state, alice_obs, bob_obs) -> np.ndarray:
    """Joint distributions ``P[a, b, x, y]`` for every pair of settings."""
    return np.array(
        [[outcome_distribution(state, A, B) for B in bob_obs] for A in alice_obs]
    )


def chsh_p(strategy: ChshStrategy) -> float:
    """Success probability ``P(x xor y = ab)`` under uniform settings (Born rule)."""
    total = 0.0
    for a in range(2):
        for b in range(2):
            joint = outcome_distribution(strategy.state, strategy.alice_obs[a], strategy.bob_obs[b])
            target = a * b
            total += sum(joint[x, y] for x in range(2) for y in range(2) if (x ^ y) == target)
    return float(total / 4.0)


def planar_qubit_strategy(state, angles: PlanarAngles) -> ChshStrategy:
    """Two-qubit strategy with observables ``cos t Z + sin t X`` in each party's frame."""
    state = state if isinstance(state, DensityOperator) else DensityOperator(state)
    if state.dim != 4:
        raise ValidationError("state is two-qubit", f"dim {state.dim}")
    fa = np.asarray(angles.alice_frame)
    fb = np.asarray(angles.bob_frame)
    alice = tuple(fa.conj().T @ planar_observable(t) @ fa for t in angles.alice_angles)
    bob = tuple(fb.conj().T @ planar_observable(t) @ fb for t in angles.bob_angles)
    return ChshStrategy(state, alice, bob)


def s_max_horodecki(state) -> float:
    """Closed-form maximal CHSH value ``2 sqrt(u1 + u2)`` from the correlation matrix."""
    t = correlation_matrix(state)
    u = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return float(2.0 * np.sqrt(max(u[0] + u[1], 0.0)))


def _unit(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(norm > 1e-300, norm, 1.0)
    return np.where(norm > 1e-300, v / safe, fallback)


def _frame_from_vectors(v0: np.ndarray, v1: np.ndarray) -> tuple[np.ndarray, float]:
    """Frame unitary taking ``v0.sigma`` to Z, and the planar angle of ``v1``."""
    ez = v0 / np.linalg.norm(v0)
    perp = v1 - np.dot(v1, ez) * ez
    if np.linalg.norm(perp) < 1e-12:
        # v1 parallel to v0: any orthogonal axis will do.
        trial = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        perp = trial - np.dot(trial, ez) * ez
    ex = perp / np.linalg.norm(perp)
    _, vecs = np.linalg.eigh(bloch_observable(ez))
    v = vecs[:, ::-1]  # +1 eigenvector first
    k = (v.conj().T @ bloch_observable(ex) @ v)[0, 1]
    v = v @ np.diag([1.0, np.conj(k) / abs(k)])
    frame = v.conj().T
    angle = float(np.arctan2(np.dot(v1, ex), np.dot(v1, ez)))
    return frame, angle


def s_max_optimize(
    state, n_starts: int = 16, seed: int = 0, tol: float = 1e-15, max_iter: int = 20000
) -> tuple[float, PlanarAngles]:
    """Maximise S over all qubit observables by multi-start seesaw.

    Each party's optimal observables are found by alternating exact
    maximisation (Alice given Bob, then Bob given Alice) over Bloch vectors;
    the best start wins (ties go to the lowest start index). The optimal
    observables of each party span a plane, so the result is reported as
    planar angles inside a per-party frame.
    """
    state = state if isinstance(state, DensityOperator) else DensityOperator(state)
    if state.dim != 4:
        raise ValidationError("state is two-qubit", f"dim {state.dim}")
    t = correlation_matrix(state.matrix)
    rng = np.random.default_rng(seed)
    b0 = _unit(rng.standard_normal((n_starts, 3)), np.array([0.0, 0.0, 1.0]))
    b1 = _unit(rng.standard_normal((n_starts, 3)), np.array([1.0, 0.0, 0.0]))
    ez = np.array([0.0, 0.0, 1.0])
    ex = np.array([1.0, 0.0, 0.0])
    prev = np.full(n_starts, -np.inf)
    for _ in range(max_iter):
        u = (b0 + b1) @ t.T
        v = (b0 - b1) @ t.T
        a0, a1 = _unit(u, ez), _unit(v, ex)
        p = (a0 + a1) @ t
        q = (a0 - a1) @ t
        b0, b1 = _unit(p, ez), _unit(q, ex)
        s = np.einsum("ki,ki->k", b0, p) + np.einsum("ki,ki->k", b1, q)
        if np.all(s - prev <= tol * max(1.0, float(np.max(np.abs(s))))):
            prev = np.maximum(s, prev)
            break
        prev = s
    best = int(np.argmax(np.round(prev, 12)))
    fa, alpha1 = _frame_from_vectors(a0[best], a1[best])
    fb, beta1 = _frame_from_vectors(b0[best], b1[best])
    angles = PlanarAngles((0.0, alpha1), (0.0, beta1), fa, fb)
    return chsh_S(planar_qubit_strategy(state, angles)), angles


# Measurement sets quoted for the ideal protocol. The literal set (Alice X, Y,
# (X+Y)/sqrt2; Bob (X+Y)/sqrt2, (X-Y)/sqrt2) reaches 2 sqrt2 on |Psi+>; on
# |Phi+> Alice's observables must be transposed (Y -> -Y) instead.
_R2 = np.sqrt(0.5)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
LITERAL_ALICE = (X, _Y, _R2 * (X + _Y))
LITERAL_BOB = (_R2 * (X + _Y), _R2 * (X - _Y))


def planar_optimal_observables() -> tuple[tuple, tuple]:
    """Optimal CHSH and key observables for |Phi+> in the Z-X plane.

    Returns ``((A0, A1, A2), (B0, B1))`` with ``A2`` aligned to ``B0``.
    """
    alice = (planar_observable(0.0), planar_observable(np.pi / 2), planar_observable(np.pi / 4))
    bob = (planar_observable(np.pi / 4), planar_observable(-np.pi / 4))
    return alice, bob
