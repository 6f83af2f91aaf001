import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from cfcsr.high_rho import (
    CumulantModel,
    cumulant,
    cumulant_model,
    high_rho_cdf,
    high_rho_quantile,
    k0_eval,
    use_high_rho,
)
from cfcsr.high_rho import _g_eval
from cfcsr.null_moments import null_mean, null_variance

mp.mp.dps = 80


def _g_mp(y, dim):
    return complex(mp.nsum(lambda m: (1j * y) ** m / (m**dim * mp.factorial(m)), [1, mp.inf]))


def test_cumulant_formula():
    assert cumulant(2, 25, 10.0, 2) == pytest.approx(24 * (2 / 25) * (1.0) ** 2 / 100)
    assert cumulant(3, 10, 2.0, 1) == pytest.approx(9 * (0.2) ** 2 * (2 / 3) / 2)


@pytest.mark.parametrize("m", [1, 0, 2.5])
def test_cumulant_order_validated(m):
    with pytest.raises(ValueError):
        cumulant(m, 10, 1.0, 2)


@pytest.mark.parametrize("rho, ratio_tol", [(500.0, 3e-3), (5000.0, 3e-4)])
def test_second_cumulant_approaches_exact_variance(rho, ratio_tol):
    assert cumulant(2, 25, rho, 2) / null_variance(rho, 2, 25) == pytest.approx(1.0, abs=ratio_tol)


def test_method_switch_boundary():
    edge = math.pi * 5.0
    assert not use_high_rho(edge, 25, 2)
    assert use_high_rho(edge * 1.001, 25, 2)
    assert use_high_rho(math.pi * 100.0 * 1.01, 100, 1)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("y", [0.5, 5.9, 6.1, 20.0, 75.0])
def test_g_against_high_precision_series(dim, y):
    assert _g_eval(np.array([y]), dim)[0] == pytest.approx(_g_mp(y, dim), abs=1e-13)


@given(st.floats(0.0, 500.0), st.integers(1, 3))
def test_real_part_of_g_is_non_positive(y, dim):
    assert _g_eval(np.array([y]), dim)[0].real <= 1e-14


def test_k0_basic_properties():
    model = cumulant_model(25, 20.0, 2)
    assert k0_eval(0.0, model) == 0.0
    ts = np.array([0.3, 2.0, 40.0])
    np.testing.assert_allclose(model.k0(-ts), np.conj(model.k0(ts)), rtol=1e-14)
    np.testing.assert_allclose(model.k0(ts), [k0_eval(t, model) for t in ts], rtol=1e-13)


def test_k0_derivatives_give_the_cumulants():
    model = cumulant_model(25, 20.0, 2)
    h = 1e-3
    k = [complex(k0_eval(t, model)) for t in (-h, 0.0, h)]
    first = (k[2] - k[0]) / (2 * h)
    second = (k[2] - 2 * k[1] + k[0]) / h**2
    assert first.imag == pytest.approx(model.kappa1, rel=1e-6)
    assert -second.real == pytest.approx(model.kappa2, rel=1e-5)


def test_kappa_accessor():
    model = cumulant_model(30, 40.0, 2)
    assert model.kappa(1) == null_mean(40.0, 2)
    assert model.kappa(3) == cumulant(3, 30, 40.0, 2)


@given(st.floats(-300.0, 300.0), st.integers(5, 200), st.floats(10.0, 200.0))
def test_characteristic_function_modulus_at_most_one(t, n, rho):
    model = cumulant_model(n, rho, 2)
    assert k0_eval(t, model).real <= 1e-10


def test_model_validation():
    with pytest.raises(ValueError):
        CumulantModel(1, 10.0, 2, 0.9)
    with pytest.raises(ValueError):
        CumulantModel(10, -1.0, 2, 0.9)


@pytest.fixture(scope="module")
def model():
    return cumulant_model(25, 5.0 * math.pi * 1.5, 2)


def test_cdf_is_a_distribution(model):
    sd = math.sqrt(model.kappa2)
    xs = model.kappa1 + sd * np.array([-6.0, -1.0, 0.0, 1.0, 8.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        F = high_rho_cdf(xs, model)
    assert np.all(np.diff(F) > 0)
    assert F[0] < 1e-4 and F[-1] > 1 - 1e-4


def test_cdf_reproduces_mean_and_variance(model):
    sd = math.sqrt(model.kappa2)
    xs = np.linspace(model.kappa1 - 8 * sd, model.kappa1 + 14 * sd, 1201)
    F = high_rho_cdf(xs, model)
    lo = xs[0]
    mean = lo + integrate.simpson(1.0 - F, x=xs)
    second = lo**2 + integrate.simpson(2.0 * xs * (1.0 - F), x=xs)
    assert mean == pytest.approx(model.kappa1, abs=1e-3 * sd)
    assert second - mean**2 == pytest.approx(model.kappa2, rel=2e-3)


def test_quantile_round_trip_and_adjustment(model):
    ps = np.array([0.025, 0.5, 0.975])
    raw = high_rho_quantile(ps, model, adjust=False)
    np.testing.assert_allclose(high_rho_cdf(raw, model), ps, atol=2e-6)
    adj = high_rho_quantile(ps, model)
    scale = math.sqrt(null_variance(model.rho, 2, 25) / model.kappa2)
    np.testing.assert_allclose(adj - model.kappa1, (raw - model.kappa1) * scale, rtol=1e-12)
