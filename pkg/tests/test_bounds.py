import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diqkd.bounds import (
    COS4_PI8,
    EstimationParams,
    InfeasibleError,
    definetti_bound,
    h_x_given_e,
    invert_mu,
    key_rate,
    lambda_pm,
    lemma1_bound,
    lemma1_exponent,
    mu_as_printed,
    mu_closed_form,
    pironio_lemma4_gap,
    tail_bound,
)
from diqkd.linalg import BellDiagonal, ValidationError, binary_entropy

import oracles
from oracles import h_x_given_e_bruteforce, mp_key_rate, sigma_xe

TSIRELSON = 2 * math.sqrt(2)


def test_key_rate_examples():
    assert key_rate(TSIRELSON, 0.0) == pytest.approx(1.0, abs=1e-12)
    for q in (0.0, 0.02, 0.11, 0.5):
        assert key_rate(2.0, q) == pytest.approx(-binary_entropy(q), abs=1e-12)
    assert key_rate(2.5, 0.02) == pytest.approx(oracles.KEY_RATE_2_5_0_02, abs=1e-14)
    assert key_rate(2.5, 0.02) == pytest.approx(mp_key_rate("2.5", "0.02"), abs=1e-14)


def test_key_rate_below_two_clamped_and_super_quantum_rejected():
    assert key_rate(1.5, 0.1) == key_rate(2.0, 0.1)
    with pytest.raises(ValueError, match="quantum bound"):
        key_rate(2.9, 0.0)


@given(st.floats(2.0, TSIRELSON), st.floats(0.0, 0.5))
@settings(max_examples=200, deadline=None)
def test_key_rate_matches_mpmath(S, q):
    assert key_rate(S, q) == pytest.approx(mp_key_rate(S, q), abs=1e-12)


def test_key_rate_monotone():
    s_grid = np.arange(2.0, TSIRELSON, 1e-3)
    rates = [key_rate(s, 0.02) for s in s_grid]
    assert np.all(np.diff(rates) >= -1e-15)
    q_grid = np.arange(0.0, 0.5, 1e-3)
    rates = [key_rate(2.6, q) for q in q_grid]
    assert np.all(np.diff(rates) <= 1e-15)


def test_lambda_pm_examples():
    assert lambda_pm(BellDiagonal(1, 0, 0, 0), 0.0) == pytest.approx((0.5, 0.0))
    for phi in (0.0, 0.3, 1.7):
        assert lambda_pm(BellDiagonal(0.25, 0.25, 0.25, 0.25), phi) == pytest.approx((0.25, 0.25))


def test_lambda_pm_against_purification():
    rng = np.random.default_rng(0)
    for _ in range(300):
        lam = rng.dirichlet(np.ones(4))
        phi = rng.uniform(0, 2 * np.pi)
        lp, lm = lambda_pm(BellDiagonal.from_array(lam), phi)
        assert lp + lm == 0.5
        w = np.sort(np.linalg.eigvalsh(sigma_xe(lam, phi)))
        nonzero = np.sort([lm, lm, lp, lp])
        # sigma_XE lives on 8 dims; the other four eigenvalues vanish.
        np.testing.assert_allclose(w[4:], nonzero, atol=1e-9)
        np.testing.assert_allclose(w[:4], 0, atol=1e-9)


def test_lambda_plus_maximised_at_phi_zero():
    rng = np.random.default_rng(1)
    grid = np.linspace(0, np.pi, 181)
    for _ in range(100):
        lam = rng.dirichlet(np.ones(4))
        if (lam[0] - lam[1]) * (lam[2] - lam[3]) < 0:
            continue
        bd = BellDiagonal.from_array(lam)
        vals = [lambda_pm(bd, p)[0] for p in grid]
        assert vals[0] >= max(vals) - 1e-15


def test_h_x_given_e_examples_and_oracle():
    assert h_x_given_e(BellDiagonal(1, 0, 0, 0)) == pytest.approx(1.0, abs=1e-12)
    assert h_x_given_e(BellDiagonal(0.25, 0.25, 0.25, 0.25)) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(300):
        lam = rng.dirichlet(np.ones(4))
        v = h_x_given_e(BellDiagonal.from_array(lam))
        assert v == pytest.approx(h_x_given_e_bruteforce(lam), abs=1e-9)
        assert -1e-12 <= v <= 1 + 1e-12


def test_entropy_gap_examples():
    lhs, rhs = pironio_lemma4_gap(BellDiagonal(1, 0, 0, 0))
    assert lhs == pytest.approx(0, abs=1e-12) and rhs == pytest.approx(0, abs=1e-6)
    lhs, rhs = pironio_lemma4_gap(BellDiagonal(0.25, 0.25, 0.25, 0.25))
    assert lhs == pytest.approx(1) and rhs == 1.0


def test_tail_bound_examples():
    p = EstimationParams(n=10_000, m=10_000, r=0)
    assert COS4_PI8 == pytest.approx(oracles.COS4_PI8, abs=1e-15)
    assert lemma1_bound(p, 0.05) == pytest.approx(oracles.TAIL_M1E4_MU005, rel=1e-12)
    assert lemma1_exponent(p, 0.05) == pytest.approx(-68.629150101523961, abs=1e-10)
    p2 = EstimationParams(n=3000, m=2000, r=0, p=0.8)
    for mu in (0.01, 0.02, 0.03):
        assert lemma1_bound(p2, mu) == pytest.approx(math.exp(-2 * 2000 * mu**2 / COS4_PI8), rel=1e-12)


def test_tail_bound_vacuous_and_errors():
    p = EstimationParams(n=1000, m=1000, r=10, p=0.8)
    assert lemma1_bound(p, 0.0) == 1.0
    assert lemma1_bound(p, 10 * 0.2 / 1000) == 1.0  # m mu = r (1 - p)
    with pytest.raises(ValidationError):
        EstimationParams(n=10, m=10, r=11)
    res = tail_bound(p, 0.2)
    assert 0 <= res.bound <= 1 and res.Y_threshold == pytest.approx(1000)


def test_tail_bound_monotone_in_mu():
    p = EstimationParams(n=5000, m=2000, r=20, p=0.8)
    grid = np.linspace(0.003, 0.5, 400)
    vals = [lemma1_bound(p, mu) for mu in grid]
    assert np.all(np.diff(vals) <= 1e-300)


def test_invert_mu_examples():
    eps = 1e-6
    target = 2 * eps / 9
    p0 = EstimationParams(n=10_000, m=10_000, r=0, eps=eps)
    closed = math.sqrt(-math.log(target) * COS4_PI8 / (2 * 10_000))
    assert invert_mu(p0, target) == pytest.approx(closed, abs=1e-10)
    p50 = EstimationParams(n=10_000, m=10_000, r=50, eps=eps)
    mu = invert_mu(p50, target)
    assert lemma1_bound(p50, mu) == pytest.approx(target, rel=1e-9)
    assert mu == pytest.approx(mu_closed_form(p50, target), rel=1e-12)
    assert invert_mu(p50, 1.0) == 0.0


def test_invert_mu_large_offset():
    # r (1 - p) / m well above the initial bracket width
    p = EstimationParams(n=100_000, m=100_000, r=1000, eps=1e-6, p=0.8)
    mu = invert_mu(p, 2e-6 / 9)
    assert 1000 * 0.2 / 100_000 < mu < 0.2
    assert lemma1_bound(p, mu) == pytest.approx(2e-6 / 9, rel=1e-9)


def test_invert_mu_infeasible():
    with pytest.raises(InfeasibleError, match="p \\+ mu"):
        invert_mu(EstimationParams(n=10, m=10, r=0, p=0.8), 1e-9)
    with pytest.raises(InfeasibleError, match="target"):
        invert_mu(EstimationParams(n=10, m=10), 0.0)


def test_mu_as_printed_is_diagnostic():
    p = EstimationParams(n=10_000, m=10_000, r=0)
    assert mu_as_printed(p) == 0.0  # prefactor 4r/m vanishes at r = 0
    p50 = EstimationParams(n=10_000, m=10_000, r=50)
    assert math.isnan(mu_as_printed(p50))  # radicand negative for these parameters


def test_definetti_examples():
    assert definetti_bound(10_000, 1000, 100, 4) == pytest.approx(oracles.DEFINETTI_1E4_1E3_100_4, rel=1e-12)
    vals = [definetti_bound(10_000, 100, r, 4) for r in range(0, 10_000, 500)]
    assert np.all(np.diff(vals) < 0)
    k = 37
    ratio = definetti_bound(500, k, 20, 16) / definetti_bound(500, k, 20, 4)
    assert ratio == pytest.approx(math.exp(6 * math.log(k)), rel=1e-12)
    with pytest.raises(ValueError):
        definetti_bound(10, 0, 1, 4)
