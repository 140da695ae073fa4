"""Classical post-processing: CHSH estimation, reconciliation with ideal
leakage accounting, Toeplitz hashing over GF(2) and the final key length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bounds import key_rate
from ..chsh import TSIRELSON
from ..linalg import binary_entropy


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit strings must contain only 0 and 1")
    return arr


def estimate_S(trials) -> tuple[float, int]:
    """``(S_est, Y)`` from estimation trials, with ``S_est = 8 Y/m - 4``.

    Accepts a sequence of :class:`TrialRecord` or a :class:`TrialTable`
    restricted to estimation trials.
    """
    a, b, x, y, roles = _columns(trials)
    if a.size == 0:
        raise ValueError("estimate_S needs at least one estimation trial")
    if np.any(roles != 0):
        raise ValueError("estimate_S accepts estimation trials only")
    y_count = int(np.count_nonzero((x ^ y) == (a & b)))
    return 8.0 * y_count / a.size - 4.0, y_count


def _columns(trials):
    if hasattr(trials, "a") and hasattr(trials, "role") and isinstance(trials.a, np.ndarray):
        return (trials.a.astype(np.int64), trials.b.astype(np.int64),
                trials.x.astype(np.int64), trials.y.astype(np.int64),
                trials.role.astype(np.int64))
    recs = list(trials)
    cols = np.array([[t.a, t.b, t.x, t.y, 0 if t.role == "estimation" else 1] for t in recs],
                    dtype=np.int64).reshape(-1, 5)
    return tuple(cols[:, i] for i in range(5))


def toeplitz_seed_length(n_in: int, n_out: int) -> int:
    return n_in + n_out - 1 if n_out > 0 else 0


def toeplitz_hash(key_in, out_len: int, seed) -> np.ndarray:
    """``out_i = XOR_j T[i, j] key_j`` with ``T[i, j] = seed[i - j + len(key) - 1]``."""
    key = _as_bits(key_in)
    seed = _as_bits(seed)
    n = key.size
    if out_len < 0 or out_len > n:
        raise ValueError(f"out_len={out_len} must lie in [0, {n}]")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    need = toeplitz_seed_length(n, out_len)
    if seed.size < need:
        raise ValueError(f"seed has {seed.size} bits, need {need}")
    # Full convolution c[t] = sum_j seed[t - j] key[j]; out_i = c[i + n - 1].
    conv = np.convolve(seed[:need].astype(np.int64), key.astype(np.int64))
    return (conv[n - 1 : n - 1 + out_len] & 1).astype(np.uint8)


def privacy_amplify(key_in, out_len: int, seed) -> np.ndarray:
    """Compress ``key_in`` to ``out_len`` bits with a seeded Toeplitz matrix."""
    return toeplitz_hash(key_in, out_len, seed)


def tag_bits_for(eps_cor: float) -> int:
    return max(1, math.ceil(math.log2(1.0 / eps_cor)))


def seed_bits(seed: int, length: int) -> np.ndarray:
    """Expand a public 64-bit seed into ``length`` uniformly random bits."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.integers(0, 2, size=length, dtype=np.uint8)


def verification_tag(bits, tag_len: int, seed: int) -> np.ndarray:
    """Toeplitz-hash tag (2-universal) of ``bits`` from a public 64-bit seed."""
    bits = _as_bits(bits)
    t = min(tag_len, bits.size)
    return toeplitz_hash(bits, t, seed_bits(seed, toeplitz_seed_length(bits.size, t)))


@dataclass(frozen=True)
class ReconcileResult:
    corrected: np.ndarray
    leak: int
    ok: bool
    tag_len: int


def reconcile(
    alice_raw,
    bob_raw,
    q_est: float,
    eps_cor: float,
    tag_seed: int = 0,
    corrupt_bit: int | None = None,
) -> ReconcileResult:
    """Ideal-leakage reconciliation toward Bob's string.

    Alice's corrected string is Bob's; leakage is ``ceil(n h(q_est))`` plus
    the verification tag. ``corrupt_bit`` flips one bit of the corrected
    string before tagging (fault injection for the verification path).
    """
    a = _as_bits(alice_raw)
    b = _as_bits(bob_raw)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    t = tag_bits_for(eps_cor)
    corrected = b.copy()
    if corrupt_bit is not None:
        corrected[corrupt_bit] ^= 1
    leak = math.ceil(a.size * binary_entropy(q_est)) + t
    ok = bool(np.array_equal(verification_tag(corrected, t, tag_seed), verification_tag(b, t, tag_seed)))
    return ReconcileResult(corrected, leak, ok, t)


def safety_margin(eps: float) -> int:
    return math.ceil(2.0 * math.log2(1.0 / eps))


def certified_S(S_est: float, mu: float) -> float:
    """``8 (Y/m - mu) - 4``, capped at the quantum maximum."""
    return min(S_est - 8.0 * mu, TSIRELSON)


def final_key_length(
    S_est: float, mu: float, q_est: float, n: int, leak_ec: int, eps: float
) -> int:
    """``max(0, floor(n * rate(S_floor, q)) - leak_ec - ceil(2 log2(1/eps)))``."""
    return max(0, asymptotic_key_length(S_est, mu, q_est, n, leak_ec) - safety_margin(eps))


def asymptotic_key_length(S_est: float, mu: float, q_est: float, n: int, leak_ec: int) -> int:
    """Key length before the finite-size safety margin."""
    rate = key_rate(certified_S(S_est, mu), q_est)
    return max(0, math.floor(n * rate) - leak_ec)
