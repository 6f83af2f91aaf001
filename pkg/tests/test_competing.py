import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfcsr.competing import (
    BaselineResult,
    clark_evans,
    clark_evans_moments,
    default_l_range,
    isotropic_weights,
    l_test,
    mc_p_value,
    omega_bar_test,
    ripley_khat,
)
from cfcsr.patterns import PointPattern
from cfcsr.simulate import rng_for, sim_csr
from cfcsr.statistic import omega_bar_squared


def _arc_fraction_brute(c, r, k=200_000):
    t = (np.arange(k) + 0.5) * 2 * np.pi / k
    x = c[0] + r * np.cos(t)
    y = c[1] + r * np.sin(t)
    return np.mean((x >= 0) & (x <= 1) & (y >= 0) & (y <= 1))


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 0.7))
def test_isotropic_weight_matches_brute_force(x, y, r):
    w = isotropic_weights(np.array([[x, y]]), np.array([r]))[0]
    assert w == pytest.approx(_arc_fraction_brute((x, y), r), abs=1e-4)


def test_isotropic_weight_interior_and_corner():
    w = isotropic_weights(np.array([[0.5, 0.5], [0.0, 0.0]]), np.array([0.1, 0.1]))
    np.testing.assert_allclose(w, [1.0, 0.25])


def test_khat_two_points():
    p = PointPattern(np.array([[0.4, 0.5], [0.6, 0.5]]))
    # two ordered pairs with weight one each: K = 2 / n^2
    assert ripley_khat(p, 0.25) == pytest.approx(0.5)
    assert ripley_khat(p, 0.1) == 0.0


def test_khat_is_nondecreasing():
    p = sim_csr(40, 2, 3)
    k = ripley_khat(p, np.linspace(0.01, 0.4, 50))
    assert np.all(np.diff(k) >= 0)


def test_khat_unbiased_under_csr():
    r = 0.1
    vals = [ripley_khat(sim_csr(100, 2, rng_for(4, 0, i)), r) for i in range(300)]
    # the n^2 normalization gives E K = (n - 1)/n pi r^2
    assert np.mean(vals) == pytest.approx(0.99 * math.pi * r * r, rel=0.03)


def test_khat_rejects_bad_radius():
    with pytest.raises(ValueError):
        ripley_khat(sim_csr(5, 2, 0), 0.0)


def test_l_test_definition():
    p = sim_csr(30, 2, 7)
    s = default_l_range(30)
    r = s * np.arange(1, 513) / 512
    expected = np.max(np.abs(np.sqrt(ripley_khat(p, r) / np.pi) - r))
    res = l_test(p)
    assert res.name == "l_test" and res.statistic == pytest.approx(expected, rel=1e-14)


def test_l_test_validation():
    with pytest.raises(ValueError):
        l_test(sim_csr(5, 2, 0), s=-1.0)
    with pytest.raises(ValueError):
        l_test(sim_csr(5, 1, 0))


def test_clark_evans_standardized_under_csr():
    z = np.array([clark_evans(sim_csr(50, 2, rng_for(9, 0, i))).statistic for i in range(600)])
    assert abs(z.mean()) < 4 / math.sqrt(600)
    assert z.std() == pytest.approx(1.0, abs=0.1)


def test_clark_evans_moments_formula():
    mean, var = clark_evans_moments(25)
    assert mean == pytest.approx(0.1 + (0.0514 + 0.0082) * 4 / 25)
    assert var == pytest.approx(0.070 / 625 + 0.148 / 25**2.5)


def test_clark_evans_needs_two_points():
    with pytest.raises(ValueError):
        clark_evans(sim_csr(1, 2, 0))


def test_omega_bar_wrapper():
    p = sim_csr(12, 2, 1)
    assert omega_bar_test(p).statistic == omega_bar_squared(p)


@pytest.mark.parametrize(
    "tail, expected", [("upper", 0.3), ("lower", 0.8), ("two_sided", 0.6)]
)
def test_mc_p_value(tail, expected):
    null = np.arange(10.0)
    assert mc_p_value(7.0, null, tail) == pytest.approx(expected)


def test_mc_p_value_validation():
    with pytest.raises(ValueError):
        mc_p_value(1.0, [1.0], "left")
    with pytest.raises(ValueError):
        mc_p_value(1.0, [])


@given(st.floats(-5, 5), st.lists(st.floats(-5, 5), min_size=1, max_size=50))
def test_mc_p_value_in_unit_interval(obs, null):
    for tail in ("upper", "lower", "two_sided"):
        assert 0.0 <= mc_p_value(obs, null, tail) <= 1.0


def test_baseline_result_validation():
    with pytest.raises(ValueError):
        BaselineResult("ripley", 1.0)
    with pytest.raises(ValueError):
        BaselineResult("l_test", float("nan"))
    with pytest.raises(ValueError):
        BaselineResult("l_test", 1.0, p_value=1.5)
