import numpy as np
import pytest

from diqkd.chsh import P_QUANTUM
from diqkd.linalg import ValidationError, Z
from diqkd.presets import device_from_spec
from diqkd.protocol.devices import DeviceModel, planted_highdim_strategy, werner_state

from oracles import born_table


def test_honest_device_table_matches_born_rule():
    from diqkd.chsh import planar_optimal_observables

    dev = DeviceModel.honest_noisy(0.9)
    alice, bob = planar_optimal_observables()
    np.testing.assert_allclose(dev.tables[0], born_table(werner_state(0.9), alice, bob), atol=1e-12)


def test_honest_success_probability():
    for v in (1.0, 0.8, 0.6):
        p = DeviceModel.honest_noisy(v).chsh_success()[0]
        assert p == pytest.approx(0.5 + v * (P_QUANTUM - 0.5), abs=1e-12)


def test_classical_device_at_local_bound():
    assert DeviceModel.classical_z().chsh_success()[0] == pytest.approx(0.75)


def test_key_setting_aligned_with_bob():
    t = DeviceModel.honest_noisy(1.0).tables[0]
    assert t[2, 0, 0, 1] + t[2, 0, 1, 0] == pytest.approx(0.0, abs=1e-12)


def test_sampling_frequencies():
    dev = DeviceModel.honest_noisy(0.8)
    rng = np.random.default_rng(0)
    n = 200_000
    a = rng.integers(0, 2, n)
    b = rng.integers(0, 2, n)
    x, y = dev.sample(np.zeros(n, dtype=np.int64), a, b, rng)
    success = np.mean((x ^ y) == (a & b))
    assert abs(success - dev.chsh_success()[0]) < 5 * np.sqrt(0.25 / n)


def test_validation():
    good = DeviceModel.honest_noisy(1.0).tables
    with pytest.raises(ValidationError, match="shape"):
        DeviceModel("honest-noisy", good[:, :2], np.ones(1))
    bad = good.copy()
    bad[0, 0, 0] = [[1, 0], [0, 0]]
    bad[0, 0, 1] = [[0, 0], [0, 1]]  # Alice's marginal depends on Bob's setting
    with pytest.raises(ValidationError, match="no-signalling"):
        DeviceModel("honest-noisy", bad, np.ones(1))
    with pytest.raises(ValidationError, match="kind"):
        DeviceModel("telepathic", good, np.ones(1))
    with pytest.raises(ValidationError, match="visibility"):
        DeviceModel.honest_noisy(1.5)


def test_assignment_length_checked():
    dev = DeviceModel.planted(np.stack([DeviceModel.classical_z().tables[0]] * 2), [0, 1, 1])
    with pytest.raises(ValidationError, match="assignment"):
        dev.schedule(5, np.random.default_rng(0))


def test_highdim_strategy_reduces_exactly():
    rng = np.random.default_rng(1)
    strat = planted_highdim_strategy(2, 3, rng)
    dev = DeviceModel.highdim_blockdiag(strat)
    red = dev.reduced()
    assert red.n_components == 6
    # Mixture statistics equal the high-dimensional ones on every setting pair.
    mixed = np.einsum("k,kabxy->abxy", red.weights, red.tables)
    np.testing.assert_allclose(mixed, dev.tables[0], atol=1e-9)
    assert red.params["key_offblock_norm"] <= 1e-9


def test_device_from_spec():
    assert device_from_spec(None).kind == "honest-noisy"
    assert device_from_spec({"kind": "collective-iid", "preset": "werner", "visibility": 0.7}).chsh_success()[0] == pytest.approx(
        0.5 + 0.7 * (P_QUANTUM - 0.5)
    )
    assert device_from_spec({"kind": "coherent-memoryless-mixture"}).kind == "coherent-memoryless-mixture"
    with pytest.raises(ValidationError, match="unknown"):
        device_from_spec({"kind": "honest-noisy", "colour": 3})
    with pytest.raises(ValidationError, match="kind"):
        device_from_spec({"kind": "nope"})
