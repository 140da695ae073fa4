import math

import numpy as np
import pytest

from diqkd.chsh import P_QUANTUM, TSIRELSON
from diqkd.protocol.postprocess import (
    asymptotic_key_length,
    certified_S,
    estimate_S,
    final_key_length,
    privacy_amplify,
    reconcile,
    safety_margin,
    seed_bits,
    tag_bits_for,
    toeplitz_hash,
    verification_tag,
)
from diqkd.protocol.runner import TrialRecord

import oracles
from oracles import gf2_toeplitz


def records(successes, total):
    """Estimation records with settings (0, 0): success iff x == y."""
    return [TrialRecord(i, "estimation", 0, 0, 0, 0 if i < successes else 1, 0) for i in range(total)]


def test_estimate_S_examples():
    assert estimate_S(records(100, 100)) == (4.0, 100)
    assert estimate_S(records(75, 100))[0] == pytest.approx(2.0, abs=1e-15)
    assert 8 * P_QUANTUM - 4 == pytest.approx(TSIRELSON, abs=1e-12)


def test_estimate_S_success_rule():
    # Success iff x xor y == a b.
    recs = [
        TrialRecord(0, "estimation", 1, 1, 0, 1, 0),  # 1 == 1: success
        TrialRecord(1, "estimation", 1, 1, 1, 1, 0),  # 0 != 1: failure
        TrialRecord(2, "estimation", 1, 0, 1, 1, 0),  # 0 == 0: success
        TrialRecord(3, "estimation", 0, 1, 0, 1, 0),  # 1 != 0: failure
    ]
    assert estimate_S(recs) == (0.0, 2)


def test_estimate_S_errors():
    with pytest.raises(ValueError, match="at least one"):
        estimate_S([])
    with pytest.raises(ValueError, match="estimation trials only"):
        estimate_S([TrialRecord(0, "key", 2, 0, 0, 0, 0)])


def test_privacy_amplify_trivial_cases():
    rng = np.random.default_rng(0)
    assert privacy_amplify(rng.integers(0, 2, 10), 0, []).size == 0
    zeros = np.zeros(20, dtype=np.uint8)
    for _ in range(10):
        seed = rng.integers(0, 2, 20 + 7 - 1)
        assert not privacy_amplify(zeros, 7, seed).any()


def test_privacy_amplify_fixed_vector():
    key = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=np.uint8)
    seed = np.array([0, 1, 1, 0, 1, 0, 0, 1, 1, 1], dtype=np.uint8)
    expected = gf2_toeplitz(key, 3, seed)
    np.testing.assert_array_equal(privacy_amplify(key, 3, seed), expected)
    np.testing.assert_array_equal(expected, [1, 0, 0])  # worked by hand


def test_privacy_amplify_errors():
    with pytest.raises(ValueError, match="out_len"):
        privacy_amplify(np.zeros(4), 5, np.zeros(8))
    with pytest.raises(ValueError, match="seed has"):
        privacy_amplify(np.zeros(4), 3, np.zeros(5))
    with pytest.raises(ValueError, match="only 0 and 1"):
        toeplitz_hash([0, 2], 1, [0, 0])


def test_toeplitz_linear():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n, k = 40, 15
        a, b = rng.integers(0, 2, n), rng.integers(0, 2, n)
        seed = rng.integers(0, 2, n + k - 1)
        np.testing.assert_array_equal(toeplitz_hash(a ^ b, k, seed), toeplitz_hash(a, k, seed) ^ toeplitz_hash(b, k, seed))


def test_reconcile_examples():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 2, 1000)
    res = reconcile(x, x, 0.0, 2.0**-64)
    assert res.ok and res.leak == 64 == res.tag_len
    np.testing.assert_array_equal(res.corrected, x)
    # Leakage at q = 0.11 for 10^4 bits (frozen mpmath value of h(0.11)).
    a = np.zeros(10_000, dtype=np.uint8)
    res = reconcile(a, a, 0.11, 2.0**-64)
    assert res.leak == math.ceil(10_000 * oracles.H_0_11) + 64 == 5000 + 64


def test_reconcile_corrects_to_bob():
    rng = np.random.default_rng(3)
    b = rng.integers(0, 2, 500).astype(np.uint8)
    a = b.copy()
    a[:25] ^= 1
    res = reconcile(a, b, 0.05, 1e-10)
    assert res.ok
    np.testing.assert_array_equal(res.corrected, b)
    assert res.tag_len == tag_bits_for(1e-10) == 34


def test_reconcile_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        reconcile([0, 1], [0], 0.0, 0.5)


def test_corrupted_bit_detected_at_collision_rate():
    # Single-bit corruption: detection fails only on a tag collision (<= 2^-t).
    rng = np.random.default_rng(4)
    tag_bits, trials, missed = 4, 4000, 0
    for i in range(trials):
        b = rng.integers(0, 2, 64).astype(np.uint8)
        res = reconcile(b, b, 0.0, 2.0**-tag_bits, tag_seed=i, corrupt_bit=int(rng.integers(64)))
        missed += res.ok
    rate = missed / trials
    assert rate <= 2.0**-tag_bits + 4 * math.sqrt(2.0**-tag_bits / trials)
    res = reconcile(np.zeros(64), np.zeros(64), 0.0, 2.0**-64, tag_seed=9, corrupt_bit=3)
    assert not res.ok


def test_seed_bits_deterministic():
    np.testing.assert_array_equal(seed_bits(5, 100), seed_bits(5, 100))
    assert not np.array_equal(seed_bits(5, 100), seed_bits(6, 100))
    assert verification_tag(np.ones(10), 4, 1).size == 4


def test_final_key_length_examples():
    n, tag, eps = 10_000, 64, 1e-6
    margin = safety_margin(eps)
    assert margin == 40
    assert final_key_length(TSIRELSON, 0.0, 0.0, n, tag, eps) == n - tag - margin
    assert final_key_length(2.0, 0.0, 0.0, n, tag, eps) == 0
    assert final_key_length(1.5, 0.0, 0.3, n, tag, eps) == 0
    # S floor 2.5, q 0.02, leak 1416 + 64; rate is the frozen mpmath value.
    expected = math.floor(n * oracles.KEY_RATE_2_5_0_02) - 1480 - margin
    assert final_key_length(2.5, 0.0, 0.02, n, 1480, eps) == expected == 1629
    assert asymptotic_key_length(2.5, 0.0, 0.02, n, 1480) == 3149 - 1480


def test_final_key_length_uses_mu_deflated_floor():
    assert certified_S(2.7, 0.01) == pytest.approx(2.62)
    assert certified_S(3.5, 0.0) == TSIRELSON
    assert final_key_length(2.7, 0.01, 0.0, 1000, 0, 0.1) == final_key_length(2.62, 0.0, 0.0, 1000, 0, 0.1)


def test_final_key_length_at_most_n():
    rng = np.random.default_rng(5)
    for _ in range(200):
        S, q = rng.uniform(1.5, 4.0), rng.uniform(0, 0.5)
        n = int(rng.integers(1, 5000))
        assert 0 <= final_key_length(S, rng.uniform(0, 0.1), q, n, 0, 0.5) <= n
