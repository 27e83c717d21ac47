import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxai.apxnum import EnergyLedger
from approxai.errors import FeatureInSubsetError, OutOfRangeError, TooManyFeaturesError
from approxai.tinymodel import TinyModel, dense, forward, random_mlp
from approxai.xai_shapley import (ShapleyConfig, coalition_values, marginal_contribution, shapley,
                                  shapley_from_values, shapley_weight, select_level)
from oracles import permutation_shapley


def linear_model(w, b=0.0):
    w = np.asarray(w, dtype=np.float64)
    return TinyModel((dense(w[None, :], [b]),), (w.size,))


def test_weights():
    assert shapley_weight(1, 3) == pytest.approx(1 / 6, abs=0)
    assert shapley_weight(0, 3) == pytest.approx(1 / 3, abs=0)
    for bad in ((3, 3), (-1, 3), (0, 0)):
        with pytest.raises(OutOfRangeError):
            shapley_weight(*bad)


@pytest.mark.parametrize("n", range(1, 13))
def test_weights_sum_to_one_per_feature(n):
    from math import comb, fsum

    assert fsum(comb(n - 1, s) * shapley_weight(s, n) for s in range(n)) == pytest.approx(1.0, abs=1e-15)


def test_marginal_examples():
    w = np.array([1.5, -2.0, 0.25])
    m = linear_model(w)
    x = np.array([0.4, 0.3, -1.0])
    for i in range(3):
        assert marginal_contribution(m, x, np.zeros(3), [], i) == pytest.approx(w[i] * x[i])
        for S in range(8):
            if not S >> i & 1:
                assert marginal_contribution(m, x, x, S, i) == 0.0
    with pytest.raises(FeatureInSubsetError):
        marginal_contribution(m, x, np.zeros(3), [1], 1)


def test_marginals_golden(golden):
    from conftest import load_case

    m, x = load_case("mlp_4_8_2")
    table = golden["mlp_4_8_2"]["marginals"]
    assert len(table) == 32
    for key, want in table.items():
        S, i = map(int, key.split(":"))
        assert marginal_contribution(m, x, np.zeros(4), S, i) == pytest.approx(want, abs=1e-12)


def test_linear_game_gives_w_times_x():
    w = np.array([0.7, -1.1, 0.3, 2.2, -0.6])
    x = np.array([0.9, 0.2, -0.8, 0.5, 0.1])
    res = shapley(linear_model(w, 0.2), x, ShapleyConfig(level=11))
    # split products carry about 2**-40 relative error; the weights sum to 1
    assert np.all(np.abs(res.values - w * x) <= 1e-10 * np.abs(w * x))
    coarse = shapley(linear_model(w, 0.2), x, ShapleyConfig(level=0))
    assert np.all(np.abs(coarse.values - w * x) <= 2.0**-3 * np.abs(w * x))


def test_dummy_feature_is_zero():
    w = np.array([1.0, 0.0, -0.5, 0.75])
    res = shapley(linear_model(w), np.array([0.3, 0.9, -0.2, 0.6]), ShapleyConfig(level=11))
    assert res.values[1] == 0.0
    mlp = random_mlp([4, 6, 1], np.random.default_rng(5))
    mlp.layers[0].weights[:, 2] = 0.0
    res = shapley(mlp, np.array([0.3, 0.9, -0.2, 0.6]), ShapleyConfig(level=3))
    assert res.values[2] == 0.0


def test_symmetry_swaps_exactly():
    m = linear_model([0.8, 0.8, -0.3])
    res = shapley(m, np.array([0.5, 0.5, 0.1]), ShapleyConfig(level=4))
    assert res.values[0] == res.values[1]
    mlp = random_mlp([3, 5, 1], np.random.default_rng(1), hidden="tanh")
    mlp.layers[0].weights[:, 1] = mlp.layers[0].weights[:, 0]
    res = shapley(mlp, np.array([0.2, 0.2, -0.7]), ShapleyConfig(level=6))
    assert res.values[0] == res.values[1]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31))
def test_subset_formula_equals_permutation_oracle(n, seed):
    v = np.random.default_rng(seed).normal(size=1 << n)
    v[0] = 0.0
    perm = permutation_shapley(lambda mask: v[mask], n)
    assert np.max(np.abs(shapley_from_values(v) - perm)) <= 1e-10


def test_fixture_golden_and_efficiency(golden):
    from conftest import load_case

    m, x = load_case("mlp_4_8_2")
    g = golden["mlp_4_8_2"]
    res = shapley(m, x, ShapleyConfig(level=11))
    assert np.array_equal(res.values, g["shapley_level11"])
    assert np.allclose(res.values, g["shapley"], rtol=1e-2, atol=1e-3)
    assert res.efficiency_gap <= 1e-3
    exact = shapley_from_values(coalition_values(m, x, np.zeros(4)))
    assert np.max(np.abs(exact - g["shapley"])) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_efficiency_property(seed):
    rng = np.random.default_rng(seed)
    m = random_mlp([6, 8, 2], rng, hidden="tanh")
    x, xb = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)
    res = shapley(m, x, ShapleyConfig(level=11, baseline=xb, class_index=1))
    df = forward(m, x)[1] - forward(m, xb)[1]
    assert res.efficiency_gap <= 1e-2 * abs(df) + 1e-6


def test_worker_invariance():
    from conftest import load_case

    m, x = load_case("conv_1_4_4")
    groups = tuple(tuple(range(4 * r, 4 * r + 4)) for r in range(4))
    ref_led = EnergyLedger()
    ref = shapley(m, x, ShapleyConfig(level=5, workers=1, groups=groups), ref_led)
    for w in (2, 4, 8):
        led = EnergyLedger()
        out = shapley(m, x, ShapleyConfig(level=5, workers=w, groups=groups), led)
        assert np.array_equal(out.values, ref.values) and out.efficiency_gap == ref.efficiency_gap
        assert led.total == ref_led.total


def test_energy_counts_one_multiply_per_term():
    led = EnergyLedger()
    shapley(random_mlp([5, 3, 1], np.random.default_rng(0)), np.ones(5), ShapleyConfig(level=2), led)
    assert led.count_by_level[2] == 15 * 5 * 2**4


def test_too_many_features():
    m = linear_model(np.ones(13))
    with pytest.raises(TooManyFeaturesError):
        shapley(m, np.ones(13))
    with pytest.raises(TooManyFeaturesError):
        shapley(linear_model(np.ones(5)), np.ones(5), ShapleyConfig(max_features=4))


def test_groups_as_players():
    m = linear_model([1.0, 2.0, 3.0, 4.0])
    res = shapley(m, np.ones(4), ShapleyConfig(groups=((0, 1), (2, 3))))
    assert res.values.tolist() == [3.0, 7.0]


def test_select_level():
    from conftest import load_case

    m, _ = load_case("mlp_tanh_4_8_2")
    xs = list(np.random.default_rng(4).uniform(-1, 1, (10, 4)))
    level, frac = select_level(m, xs, ShapleyConfig(), c_t=0.95, P_t=0.9)
    assert frac >= 0.9
    if level > 0:
        # the next level down must miss the target
        from approxai.xai_ig import pearson

        ref = [shapley(m, x).values for x in xs]
        below = [pearson(shapley(m, x, ShapleyConfig(level=level - 1)).values, r) for x, r in zip(xs, ref)]
        assert np.mean(np.array(below) >= 0.95) < 0.9


def test_zero_input_all_levels():
    m = random_mlp([3, 4, 1], np.random.default_rng(2))
    for k in range(12):
        res = shapley(m, np.zeros(3), ShapleyConfig(level=k))
        assert np.all(res.values == 0.0)
