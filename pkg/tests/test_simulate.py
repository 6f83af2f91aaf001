import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cfcsr.simulate import (
    MATERN_LADDER,
    SimSpec,
    SimulationError,
    inhom_intensity,
    matern_parameters,
    mc_critical_values,
    null_statistics,
    rng_for,
    sim_csr,
    sim_inhom,
    sim_matern,
    sim_ssi,
    simulate,
)
from cfcsr.statistic import cf_statistic


def test_streams_are_reproducible_and_distinct():
    a = rng_for(7, 1, 3).random(5)
    np.testing.assert_array_equal(a, rng_for(7, 1, 3).random(5))
    assert not np.allclose(a, rng_for(7, 1, 4).random(5))
    assert not np.allclose(a, rng_for(7, 2, 3).random(5))
    assert not np.allclose(a, rng_for(8, 1, 3).random(5))


@given(st.integers(1, 200), st.integers(1, 3), st.integers(0, 2**32))
def test_csr_shape_and_range(n, dim, seed):
    p = sim_csr(n, dim, seed)
    assert p.points.shape == (n, dim)
    assert np.all((p.points >= 0) & (p.points < 1))


def test_csr_is_uniform():
    x = sim_csr(20000, 2, 1).points
    for col in x.T:
        assert stats.kstest(col, "uniform").pvalue > 1e-3


@pytest.mark.parametrize("r", sorted(MATERN_LADDER))
def test_matern_parameters(r):
    mu, kappa = matern_parameters(75, r)
    assert mu == pytest.approx(75 ** MATERN_LADDER[r])
    assert mu * kappa == pytest.approx(75)


def test_matern_parameters_reject_other_radius():
    with pytest.raises(ValueError):
        matern_parameters(25, 0.2)


@pytest.mark.parametrize("r", sorted(MATERN_LADDER))
def test_matern_has_exactly_n_points_near_parents(r):
    mu, kappa = matern_parameters(50, r)
    p = sim_matern(50, mu, kappa, r, seed=3)
    assert p.n == 50
    assert np.all((p.points >= 0) & (p.points <= 1))


def test_matern_is_clustered():
    # mean nearest-neighbour distance far below the CSR value for tight clusters
    from scipy.spatial import cKDTree

    nn = []
    for rep in range(20):
        pts = sim_matern(75, 75**0.25, 75**0.75, 0.075, rng_for(5, 0, rep)).points
        nn.append(cKDTree(pts).query(pts, k=2)[0][:, 1].mean())
    assert np.mean(nn) < 0.5 / np.sqrt(75)


def test_matern_infeasible_raises():
    with pytest.raises(SimulationError):
        sim_matern(1000, 0.01, 0.01, 0.05, seed=0, max_attempts=50)


@pytest.mark.parametrize("delta", [0.02, 0.05])
def test_ssi_respects_inhibition_distance(delta):
    p = sim_ssi(60, delta, seed=4)
    d = np.sqrt(((p.points[:, None, :] - p.points[None, :, :]) ** 2).sum(-1))
    d[np.diag_indices(60)] = np.inf
    assert d.min() >= delta


def test_ssi_infeasible_packing_raises():
    with pytest.raises(SimulationError, match="infeasible"):
        sim_ssi(200, 0.2, seed=0, max_proposals=20000)


def test_inhom_intensity_corners():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(inhom_intensity(corners, 4.0, 10.0), [40.0, 10.0, 4.0, 1.0])


def test_inhom_marginal_mean():
    # x1 has density proportional to theta1 - (theta1 - 1) x1
    t1 = 4.0
    x = sim_inhom(40000, t1, 1.0, seed=2).points[:, 0]
    expected = (t1 / 2 - (t1 - 1) / 3) / ((t1 + 1) / 2)
    assert x.mean() == pytest.approx(expected, abs=4 * x.std() / np.sqrt(x.size))


@pytest.mark.parametrize(
    "kind, params",
    [("csr", {}), ("matern", {"r": 0.15, "mu": 5.0, "kappa": 5.0}), ("ssi", {"delta": 0.03}),
     ("inhom_poisson", {"theta1": 4.0, "theta2": 4.0})],
)
def test_simspec_round_trip_and_determinism(kind, params):
    spec = SimSpec(kind, 25, params=params, seed=9)
    assert SimSpec.from_json(spec.to_json()) == spec
    np.testing.assert_array_equal(simulate(spec, 2).points, simulate(spec, 2).points)
    assert simulate(spec, 2).n == 25
    assert json.loads(spec.to_json())["kind"] == kind


@pytest.mark.parametrize(
    "kind, params, dim",
    [("nope", {}, 2), ("matern", {"r": 0.1}, 2), ("ssi", {"delta": -1.0}, 2),
     ("inhom_poisson", {"theta1": 0.5, "theta2": 2.0}, 2), ("ssi", {"delta": 0.1}, 3)],
)
def test_simspec_validation(kind, params, dim):
    with pytest.raises(ValueError):
        SimSpec(kind, 10, dim=dim, params=params)


def test_simspec_label():
    assert SimSpec("ssi", 10, params={"delta": 0.05}).label() == "ssi(delta=0.05)"
    assert SimSpec("csr", 10).label() == "csr"


def test_null_statistics_reproducible():
    f = lambda p: cf_statistic(p, 1.0)  # noqa: E731
    a = null_statistics(f, 10, 2, 20, seed=1)
    np.testing.assert_array_equal(a, null_statistics(f, 10, 2, 20, seed=1))


def test_mc_critical_values_order_and_validation():
    f = lambda p: float(p.points.mean())  # noqa: E731
    lo, hi = mc_critical_values(f, 5, 1, 0.1, 1000, seed=0)
    assert lo < 0.5 < hi
    with pytest.raises(ValueError):
        mc_critical_values(f, 5, 1, 0.1, 10, seed=0)
    with pytest.raises(ValueError):
        mc_critical_values(f, 5, 1, 0.0, 1000, seed=0)
