"""Memoryless device models.

Every model reduces to a list of components, each a table of Born-rule
distributions ``P[a, b, x, y]`` (Alice settings 0-2, Bob settings 0-1), plus
a rule assigning components to trials. The assignment is drawn once before
the run, so a trial's outcomes depend only on its own component and settings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..chsh import outcome_table, planar_optimal_observables
from ..jordan import QubitStrategyMixture, reduce_strategy
from ..linalg import (
    PHI_PLUS,
    BinaryObservable,
    DensityOperator,
    ValidationError,
    as_matrix,
    haar_unitary,
    planar_observable,
)

KINDS = ("honest-noisy", "collective-iid", "coherent-memoryless-mixture", "highdim-blockdiag")


def werner_state(v: float) -> np.ndarray:
    phi = np.outer(PHI_PLUS, PHI_PLUS.conj())
    return v * phi + (1.0 - v) * np.eye(4) / 4.0


def _table(state, alice_obs, bob_obs) -> np.ndarray:
    if len(alice_obs) != 3 or len(bob_obs) != 2:
        raise ValidationError("three Alice settings and two Bob settings")
    a = [BinaryObservable(o) if not isinstance(o, BinaryObservable) else o for o in alice_obs]
    b = [BinaryObservable(o) if not isinstance(o, BinaryObservable) else o for o in bob_obs]
    if len({o.dim for o in a}) != 1 or len({o.dim for o in b}) != 1:
        raise ValidationError("observables of one party share a dimension")
    rho = DensityOperator(state)
    if rho.dim != a[0].dim * b[0].dim:
        raise ValidationError("device dimension: state dim = d_A * d_B",
                              f"{rho.dim} != {a[0].dim}*{b[0].dim}")
    t = outcome_table(rho, a, b)
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class HighDimStrategy:
    """One trial's strategy in arbitrary local dimensions."""

    state: np.ndarray = field(repr=False)
    alice_obs: tuple = field(repr=False)  # settings 0, 1, 2
    bob_obs: tuple = field(repr=False)  # settings 0, 1

    def reduce(self) -> QubitStrategyMixture:
        return reduce_strategy(self.state, self.alice_obs[:2], self.bob_obs, self.alice_obs[2])


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Memoryless source plus measurement devices.

    ``assignment`` fixes the component of every trial; when ``None`` each
    trial draws a component independently from ``weights``.
    """

    kind: str
    tables: np.ndarray = field(repr=False)  # (K, 3, 2, 2, 2)
    weights: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)
    assignment: np.ndarray | None = field(default=None, repr=False)
    highdim: HighDimStrategy | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("device kind is known", self.kind)
        t = np.asarray(self.tables, dtype=float)
        if t.ndim != 5 or t.shape[1:] != (3, 2, 2, 2):
            raise ValidationError("device tables have shape (K, 3, 2, 2, 2)", str(t.shape))
        if np.max(np.abs(t.sum(axis=(3, 4)) - 1.0)) > 1e-9:
            raise ValidationError("outcome distributions normalised")
        # No-signalling: Alice's marginal must not depend on Bob's setting and vice versa.
        pa = t.sum(axis=4)
        pb = t.sum(axis=3)
        if np.max(np.abs(pa[:, :, 0] - pa[:, :, 1])) > 1e-9 or np.max(
            np.abs(pb[:, 0] - pb[:, 1])
        ) > 1e-9 or np.max(np.abs(pb[:, 0] - pb[:, 2])) > 1e-9:
            raise ValidationError("memoryless devices are no-signalling")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (t.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("component weights form a distribution")
        object.__setattr__(self, "tables", t)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def n_components(self) -> int:
        return self.tables.shape[0]

    def schedule(self, n_trials: int, rng: np.random.Generator) -> np.ndarray:
        """Component index of every trial, fixed before any measurement."""
        if self.assignment is not None:
            a = np.asarray(self.assignment, dtype=np.int64)
            if a.size != n_trials:
                raise ValidationError("device assignment covers every trial",
                                      f"{a.size} != {n_trials}")
            return a
        if self.n_components == 1:
            return np.zeros(n_trials, dtype=np.int64)
        return rng.choice(self.n_components, size=n_trials, p=self.weights)

    def sample(self, comp: np.ndarray, a: np.ndarray, b: np.ndarray,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sample outcome bits for each trial given its component and settings."""
        probs = self.tables[comp, a, b].reshape(-1, 4)
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(len(comp))
        k = np.minimum((u[:, None] >= cdf[:, :3]).sum(axis=1), 3)
        return (k >> 1).astype(np.uint8), (k & 1).astype(np.uint8)

    def success_probabilities(self) -> np.ndarray:
        """``P(x xor y = ab | a, b)`` per component, shape (K, 2, 2)."""
        t = self.tables[:, :2]
        same = t[..., 0, 0] + t[..., 1, 1]
        out = same.copy()
        out[:, 1, 1] = 1.0 - same[:, 1, 1]
        return out

    def chsh_success(self) -> np.ndarray:
        """Average CHSH success probability of each component."""
        return self.success_probabilities().mean(axis=(1, 2))

    def describe(self) -> dict:
        return {"kind": self.kind, "components": self.n_components, **self.params}

    # -- factories --

    @classmethod
    def honest_noisy(cls, v: float = 1.0, key_angle: float = np.pi / 4) -> "DeviceModel":
        """Werner state with visibility ``v`` and the optimal planar measurements.

        ``key_angle`` sets Alice's setting-2 direction; the default aligns it
        with Bob's setting 0.
        """
        if not 0.0 <= v <= 1.0:
            raise ValidationError("visibility in [0, 1]", repr(v))
        alice, bob = planar_optimal_observables()
        alice = (alice[0], alice[1], planar_observable(key_angle))
        table = _table(werner_state(v), alice, bob)
        return cls("honest-noisy", table[None], np.ones(1),
                   {"visibility": float(v), "key_angle": float(key_angle)})

    @classmethod
    def collective_iid(cls, state, alice_obs, bob_obs, label: str = "") -> "DeviceModel":
        table = _table(state, alice_obs, bob_obs)
        params = {"label": label} if label else {}
        return cls("collective-iid", table[None], np.ones(1), params)

    @classmethod
    def classical_z(cls) -> "DeviceModel":
        """Deterministic local devices: |00> with every observable Z."""
        z = planar_observable(0.0)
        state = np.zeros((4, 4))
        state[0, 0] = 1.0
        return cls.collective_iid(state, (z, z, z), (z, z), label="classical-z")

    @classmethod
    def from_mixture(cls, mixture: QubitStrategyMixture, assignment=None) -> "DeviceModel":
        tables = []
        for c in mixture.components:
            alice = c.alice_obs if len(c.alice_obs) == 3 else (*c.alice_obs, c.alice_obs[0])
            tables.append(_table(c.state.matrix, alice, c.bob_obs))
        return cls("coherent-memoryless-mixture", np.array(tables), mixture.weights,
                   {"key_offblock_norm": mixture.key_offblock_norm},
                   assignment=None if assignment is None else np.asarray(assignment))

    @classmethod
    def planted(cls, tables, assignment) -> "DeviceModel":
        """Mixture with a fixed per-trial component assignment."""
        tables = np.asarray(tables, dtype=float)
        assignment = np.asarray(assignment, dtype=np.int64)
        counts = np.bincount(assignment, minlength=tables.shape[0]).astype(float)
        return cls("coherent-memoryless-mixture", tables, counts / counts.sum(),
                   {"planted": True}, assignment=assignment)

    @classmethod
    def highdim_blockdiag(cls, strategy: HighDimStrategy) -> "DeviceModel":
        table = _table(strategy.state, strategy.alice_obs, strategy.bob_obs)
        return cls("highdim-blockdiag", table[None], np.ones(1),
                   {"d_A": int(as_matrix(strategy.alice_obs[0]).shape[0]),
                    "d_B": int(as_matrix(strategy.bob_obs[0]).shape[0])},
                   highdim=strategy)

    def reduced(self) -> "DeviceModel":
        """Mixture-of-qubits device obtained from the Jordan reduction."""
        if self.highdim is None:
            raise ValidationError("device carries a high-dimensional strategy")
        return DeviceModel.from_mixture(self.highdim.reduce())


def _sector_state(a_angle: float, b_angle: float) -> np.ndarray:
    """Pure state maximising CHSH for A = (Z, a_angle) and B = (Z, b_angle)."""
    a0, a1 = planar_observable(0.0), planar_observable(a_angle)
    b0, b1 = planar_observable(0.0), planar_observable(b_angle)
    _, vecs = np.linalg.eigh(np.kron(a0, b0 + b1) + np.kron(a1, b0 - b1))
    return vecs[:, -1]


def _key_angle(states) -> float:
    """Alice direction in the Z-X plane best correlated with Bob's Z, averaged over states."""
    zx = (planar_observable(0.0), planar_observable(np.pi / 2))
    bz = np.kron(np.eye(2), planar_observable(0.0))
    corr = np.zeros(2)
    for psi in states:
        rho = np.outer(psi, psi.conj())
        corr += [np.trace(np.kron(o, np.eye(2)) @ bz @ rho).real for o in zx]
    return float(np.arctan2(corr[1], corr[0]))


def _direct_sum(blocks) -> np.ndarray:
    n = len(blocks)
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    for z, blk in enumerate(blocks):
        out[2 * z : 2 * z + 2, 2 * z : 2 * z + 2] = blk
    return out


def planted_highdim_strategy(
    n_blocks_a: int, n_blocks_b: int, rng: np.random.Generator, noise: float = 0.05
) -> HighDimStrategy:
    """Random high-dimensional strategy built from hidden qubit blocks.

    Each party's observables (key setting included) are direct sums of 2x2
    blocks conjugated by a Haar-random unitary, so Alice's key observable
    commutes with her block projectors. The state is a coherent superposition
    over block sectors of CHSH-optimal qubit states, mixed with white noise.
    """
    gammas = rng.uniform(0.35, 0.65, size=n_blocks_a) * np.pi
    deltas = rng.uniform(0.35, 0.65, size=n_blocks_b) * np.pi
    amps = rng.standard_normal((n_blocks_a, n_blocks_b)) + 1j * rng.standard_normal((n_blocks_a, n_blocks_b))
    amps /= np.linalg.norm(amps)
    # Layout per party is (block, qubit); overall (z, qa, w, qb).
    psi = np.zeros((n_blocks_a, 2, n_blocks_b, 2), dtype=complex)
    key_angles = []
    for z in range(n_blocks_a):
        sector_states = [_sector_state(gammas[z], deltas[w]) for w in range(n_blocks_b)]
        key_angles.append(_key_angle(sector_states))
        for w, local in enumerate(sector_states):
            psi[z, :, w, :] = amps[z, w] * local.reshape(2, 2)
    psi = psi.reshape(-1)
    dim = psi.size
    rho = (1.0 - noise) * np.outer(psi, psi.conj()) + noise * np.eye(dim) / dim

    z_obs = planar_observable(0.0)
    alice_blocks = (
        [z_obs] * n_blocks_a,
        [planar_observable(g) for g in gammas],
        [planar_observable(k) for k in key_angles],
    )
    bob_blocks = ([z_obs] * n_blocks_b, [planar_observable(d) for d in deltas])
    ua, ub = haar_unitary(2 * n_blocks_a, rng), haar_unitary(2 * n_blocks_b, rng)
    alice = tuple(ua @ _direct_sum(bl) @ ua.conj().T for bl in alice_blocks)
    bob = tuple(ub @ _direct_sum(bl) @ ub.conj().T for bl in bob_blocks)
    u = np.kron(ua, ub)
    rho = u @ rho @ u.conj().T
    return HighDimStrategy(0.5 * (rho + rho.conj().T), alice, bob)
