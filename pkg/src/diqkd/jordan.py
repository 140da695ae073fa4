"""Simultaneous block diagonalisation of two binary observables, and the
reduction of arbitrary-dimension strategies to mixtures of qubit strategies.

For observables ``A0, A1`` on ``C^d`` the decomposition finds an isometry
``F: C^d -> C^n (x) C^2`` with ``A^a = F^dag (sum_z |z><z| (x) A^{a,z}) F``
and every ``A^{a,z}`` a 2x2 observable with eigenvalues +1 and -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .chsh import ChshStrategy, chsh_S, outcome_table
from .linalg import (
    BinaryObservable,
    DensityOperator,
    ValidationError,
    as_matrix,
)

# Below this norm the A0(-1) component of A1 v is treated as zero (1x1 block).
SIN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JordanBlock:
    """One 2x2 target block.

    ``kind`` is ``"jordan"`` for an irreducible 2x2 block, ``"paired"`` for two
    commuting 1x1 blocks sharing a slot and ``"padded"`` for a single 1x1 block
    whose second dimension lies outside the isometry's range.
    """

    label: int
    kind: str
    a0: np.ndarray = field(repr=False)
    a1: np.ndarray = field(repr=False)
    angles: tuple[float, ...]
    rank: int


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    isometry: np.ndarray = field(repr=False)
    blocks: tuple[JordanBlock, ...]
    block_projectors: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_operator(self, setting: int) -> np.ndarray:
        """``sum_z |z><z| (x) A^{setting,z}`` on ``C^n (x) C^2``."""
        n = self.n_blocks
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        for z, blk in enumerate(self.blocks):
            out[2 * z : 2 * z + 2, 2 * z : 2 * z + 2] = blk.a0 if setting == 0 else blk.a1
        return out

    def block_rows(self, z: int) -> np.ndarray:
        """The 2 x d slice ``(<z| (x) I) F``."""
        return self.isometry[2 * z : 2 * z + 2]

    def isometry_defect(self) -> float:
        f = self.isometry
        return float(np.max(np.abs(f.conj().T @ f - np.eye(f.shape[1]))))

    def reconstruction_residual(self, setting: int, obs) -> float:
        """``|| F A F^dag - P B P ||_F`` with ``P = F F^dag`` the range projector.

        Padded dimensions are outside the range of ``F``, so the comparison is
        made there; it equals ``|| A - F^dag B F ||_F`` for an isometry.
        """
        f = self.isometry
        b = self.block_operator(setting)
        p = f @ f.conj().T
        return float(np.linalg.norm(f @ as_matrix(obs) @ f.conj().T - p @ b @ p))

    def report(self, a0=None, a1=None) -> dict:
        doc = {
            "block_count": self.n_blocks,
            "target_dim": int(self.isometry.shape[0]),
            "source_dim": int(self.isometry.shape[1]),
            "isometry_defect": self.isometry_defect(),
            "blocks": [
                {
                    "label": b.label,
                    "kind": b.kind,
                    "angles": [float(t) for t in b.angles],
                    "projector_rank": b.rank,
                    "padded": b.kind == "padded",
                }
                for b in self.blocks
            ],
        }
        if a0 is not None and a1 is not None:
            doc["reconstruction_residuals"] = [
                self.reconstruction_residual(0, a0),
                self.reconstruction_residual(1, a1),
            ]
        return doc


def _validated(o) -> np.ndarray:
    return (o if isinstance(o, BinaryObservable) else BinaryObservable(o)).matrix


def block_diagonalize(a0, a1, sin_tol: float = SIN_TOL) -> BlockDecomposition:
    """Jordan decomposition of a pair of +-1 observables.

    Irreducible blocks come from the cosine-sine structure of ``A1`` relative
    to the eigenspaces of ``A0``: for each eigenvector ``v`` of ``A1``
    compressed to the +1 space of ``A0`` with value ``c``, the vector
    ``P_- A1 v`` has norm ``s = sqrt(1 - c^2)`` and completes the block.
    Commuting leftovers become 1x1 blocks, paired two per slot (the last one
    padded when their number is odd).
    """
    m0 = _validated(a0)
    m1 = _validated(a1)
    d = m0.shape[0]
    if m1.shape != m0.shape:
        raise ValidationError("observables share a dimension", f"{m0.shape} vs {m1.shape}")

    w0, v0 = np.linalg.eigh(m0)
    vp = v0[:, w0 > 0]
    vm = v0[:, w0 <= 0]

    jordan = []  # (v, w, c, s)
    singles = []  # (vector, a0 value, a1 value)
    if vp.shape[1]:
        comp = vp.conj().T @ m1 @ vp
        c_vals, rot = np.linalg.eigh(0.5 * (comp + comp.conj().T))
        order = np.argsort(-c_vals, kind="stable")
        for i in order:
            v = vp @ rot[:, i]
            x = vm @ (vm.conj().T @ (m1 @ v))
            s = float(np.linalg.norm(x))
            if s > sin_tol:
                jordan.append((v, x / s, float(c_vals[i]), s))
            else:
                singles.append((v, 1.0, 1.0 if c_vals[i] >= 0 else -1.0))

    if vm.shape[1]:
        # A1 maps the part of the -1 space orthogonal to all partners into itself.
        proj = vm @ vm.conj().T
        for _, w, _, _ in jordan:
            proj = proj - np.outer(w, w.conj())
        pw, pv = np.linalg.eigh(0.5 * (proj + proj.conj().T))
        rest = pv[:, pw > 0.5]
        if rest.shape[1]:
            comp = rest.conj().T @ m1 @ rest
            vals, rot = np.linalg.eigh(0.5 * (comp + comp.conj().T))
            for j in np.argsort(-vals, kind="stable"):
                singles.append((rest @ rot[:, j], -1.0, 1.0 if vals[j] >= 0 else -1.0))

    rows = []
    blocks = []
    for v, w, c, s in jordan:
        norm = np.hypot(c, s)
        c, s = c / norm, s / norm
        blk_a0 = np.diag([1.0, -1.0]).astype(complex)
        blk_a1 = np.array([[c, s], [s, -c]], dtype=complex)
        blocks.append(("jordan", blk_a0, blk_a1, (float(np.arccos(np.clip(c, -1, 1))),), 2))
        rows.append((v, w))

    plus = [t for t in singles if t[1] > 0]
    minus = [t for t in singles if t[1] < 0]
    pairs = []
    while plus and minus:
        pairs.append((plus.pop(0), minus.pop(0)))
    left = plus + minus
    while len(left) >= 2:
        pairs.append((left.pop(0), left.pop(0)))
    for p, q in pairs:
        blk_a0 = np.diag([p[1], q[1]]).astype(complex)
        blk_a1 = np.diag([p[2], q[2]]).astype(complex)
        angles = tuple(0.0 if t[1] == t[2] else float(np.pi) for t in (p, q))
        blocks.append(("paired", blk_a0, blk_a1, angles, 2))
        rows.append((p[0], q[0]))
    if left:
        (u, av, bv), = left
        blocks.append(
            ("padded", av * np.eye(2, dtype=complex), bv * np.eye(2, dtype=complex),
             (0.0 if av == bv else float(np.pi),), 1)
        )
        rows.append((u, None))

    n = len(blocks)
    f = np.zeros((2 * n, d), dtype=complex)
    projectors = []
    out_blocks = []
    for z, ((kind, b0, b1, angles, rank), (r0, r1)) in enumerate(zip(blocks, rows)):
        f[2 * z] = r0.conj()
        proj = np.outer(r0, r0.conj())
        if r1 is not None:
            f[2 * z + 1] = r1.conj()
            proj = proj + np.outer(r1, r1.conj())
        projectors.append(proj)
        out_blocks.append(JordanBlock(z, kind, b0, b1, angles, rank))
    return BlockDecomposition(f, tuple(out_blocks), tuple(projectors))


def _binarize(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    signs = np.where(w >= 0, 1.0, -1.0)
    return (v * signs) @ v.conj().T


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    weight: float
    state: DensityOperator
    alice_obs: tuple
    bob_obs: tuple
    labels: tuple
    key_residual: float = 0.0

    def strategy(self) -> ChshStrategy:
        return ChshStrategy(self.state, self.alice_obs[:2], self.bob_obs)


@dataclass(frozen=True, eq=False)
class QubitStrategyMixture:
    """Probability-weighted list of two-qubit strategies.

    ``key_offblock_norm`` measures how far Alice's setting-2 observable is from
    commuting with her block projectors; setting-2 statistics are reproduced
    exactly only when it vanishes.
    """

    components: tuple[MixtureComponent, ...]
    key_offblock_norm: float = 0.0

    def __post_init__(self):
        w = np.array([c.weight for c in self.components])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("weights nonnegative and sum to 1", f"sum {w.sum()!r}")
        for c in self.components:
            if c.state.dim != 4:
                raise ValidationError("component state is two-qubit")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def outcome_table(self) -> np.ndarray:
        return sum(
            c.weight * outcome_table(c.state, c.alice_obs, c.bob_obs) for c in self.components
        )

    def chsh_S(self) -> float:
        return float(sum(c.weight * chsh_S(c.strategy()) for c in self.components))


def reduce_strategy(
    state,
    alice_obs,
    bob_obs,
    alice_key_obs=None,
    weight_floor: float = 1e-14,
) -> QubitStrategyMixture:
    """Reduce a single-trial strategy to a mixture of qubit strategies.

    Both parties' setting-0/1 pairs are block diagonalised; the block labels
    ``(z, w)`` are measured first (this commutes with every setting-0/1
    measurement), and each outcome leaves a two-qubit state with qubit
    observables. Alice's setting-2 observable, if given, is compressed to each
    block and re-binarised by eigenvalue sign; the compression residual is
    kept on the component.
    """
    rho = as_matrix(state)
    a_pair = [_validated(o) for o in alice_obs]
    b_pair = [_validated(o) for o in bob_obs]
    if len(a_pair) != 2 or len(b_pair) != 2:
        raise ValidationError("two observables per party")
    d_a, d_b = a_pair[0].shape[0], b_pair[0].shape[0]
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise ValidationError("state dimension = d_A * d_B", f"{rho.shape} vs {d_a}*{d_b}")
    key = _validated(alice_key_obs) if alice_key_obs is not None else None
    if key is not None and key.shape[0] != d_a:
        raise ValidationError("key observable acts on Alice's space")

    dec_a = block_diagonalize(*a_pair)
    dec_b = block_diagonalize(*b_pair)

    key_blocks = []
    offblock = 0.0
    if key is not None:
        diag_part = sum(p @ key @ p for p in dec_a.block_projectors)
        offblock = float(np.linalg.norm(key - diag_part))
        for z in range(dec_a.n_blocks):
            rows = dec_a.block_rows(z)
            comp = rows @ key @ rows.conj().T
            binar = _binarize(comp)
            support = rows @ rows.conj().T
            resid = float(np.linalg.norm(support @ (comp - binar) @ support))
            key_blocks.append((binar, resid))

    comps = []
    total = 0.0
    for z, w in product(range(dec_a.n_blocks), range(dec_b.n_blocks)):
        k = np.kron(dec_a.block_rows(z), dec_b.block_rows(w))
        sigma = k @ rho @ k.conj().T
        weight = float(np.trace(sigma).real)
        if weight <= weight_floor:
            continue
        sigma = sigma / weight
        sigma = 0.5 * (sigma + sigma.conj().T)
        ba, bb = dec_a.blocks[z], dec_b.blocks[w]
        alice = (ba.a0, ba.a1)
        resid = 0.0
        if key is not None:
            alice = alice + (key_blocks[z][0],)
            resid = key_blocks[z][1]
        comps.append(
            MixtureComponent(weight, DensityOperator(sigma), alice, (bb.a0, bb.a1), (z, w), resid)
        )
        total += weight
    # Weights below the floor are dropped; renormalise what remains.
    comps = tuple(
        MixtureComponent(c.weight / total, c.state, c.alice_obs, c.bob_obs, c.labels, c.key_residual)
        for c in comps
    )
    return QubitStrategyMixture(comps, offblock)


def reduce_trials(trials) -> list[QubitStrategyMixture]:
    """Reduce a product-across-trials strategy trial by trial.

    ``trials`` is an iterable of ``(state, alice_pair, bob_pair, key_obs)``.
    """
    return [reduce_strategy(*t) for t in trials]


@dataclass(frozen=True, eq=False)
class MultiTrialComponent:
    weight: float
    labels: tuple
    state: np.ndarray = field(repr=False)
    alice_obs: tuple = field(repr=False)
    bob_obs: tuple = field(repr=False)


def reduce_multitrial(state, alice_pairs, bob_pairs, weight_floor: float = 1e-14):
    """Reduce an n-trial strategy whose state may be entangled across trials.

    The state is laid out per trial as ``A_1 B_1 A_2 B_2 ...``. The block
    projectors of different trials act on different factors and commute, so
    measuring every ``(z_j, w_j)`` at once yields a mixture of n-trial
    strategies on qubit pairs. Returns a list of :class:`MultiTrialComponent`
    whose states live on ``(C^2 (x) C^2)^(x)n`` in the same layout.
    """
    rho = as_matrix(state)
    decs_a = [block_diagonalize(*p) for p in alice_pairs]
    decs_b = [block_diagonalize(*p) for p in bob_pairs]
    if len(decs_a) != len(decs_b):
        raise ValidationError("same number of trials for both parties")
    dim = int(np.prod([da.isometry.shape[1] * db.isometry.shape[1] for da, db in zip(decs_a, decs_b)]))
    if rho.shape != (dim, dim):
        raise ValidationError("state dimension matches per-trial layout", f"{rho.shape} vs {dim}")
    ranges = []
    for da, db in zip(decs_a, decs_b):
        ranges.append(range(da.n_blocks))
        ranges.append(range(db.n_blocks))
    comps = []
    for labels in product(*ranges):
        k = np.ones((1, 1), dtype=complex)
        for j, (da, db) in enumerate(zip(decs_a, decs_b)):
            k = np.kron(k, np.kron(da.block_rows(labels[2 * j]), db.block_rows(labels[2 * j + 1])))
        sigma = k @ rho @ k.conj().T
        weight = float(np.trace(sigma).real)
        if weight <= weight_floor:
            continue
        alice = tuple((da.blocks[labels[2 * j]].a0, da.blocks[labels[2 * j]].a1) for j, da in enumerate(decs_a))
        bob = tuple((db.blocks[labels[2 * j + 1]].a0, db.blocks[labels[2 * j + 1]].a1) for j, db in enumerate(decs_b))
        comps.append(MultiTrialComponent(weight, labels, sigma / weight, alice, bob))
    total = sum(c.weight for c in comps)
    return [MultiTrialComponent(c.weight / total, c.labels, c.state, c.alice_obs, c.bob_obs) for c in comps]
