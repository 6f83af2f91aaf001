import math

import numpy as np
import pytest

from cfcsr.simulate import SimSpec
from cfcsr.study import (
    POWER_TESTS,
    PowerResult,
    paper_alternatives,
    pattern_statistics,
    power_study,
    type1_rhos,
    type1_study,
)
from cfcsr.simulate import sim_csr
from cfcsr.statistic import cf_statistic, omega_bar_squared


def test_type1_rhos():
    r = type1_rhos(25)
    assert r == pytest.approx((1.0, 2.5 * math.pi, 5 * math.pi, 10 * math.pi))


def test_type1_rows_are_consistent():
    rows = type1_study([10], reps=40, seed=1, rhos={10: [1.0]})
    by_tail = {r.tail: r for r in rows}
    assert set(by_tail) == {"two_sided", "lower", "upper"}
    assert by_tail["two_sided"].rejection_rate == pytest.approx(
        by_tail["lower"].rejection_rate + by_tail["upper"].rejection_rate)
    assert all(r.method == "imhof" and r.reps == 40 for r in rows)


def test_type1_alpha_zero_never_rejects():
    rows = type1_study([10], reps=10, seed=1, alpha=0.0, rhos={10: [1.0]})
    assert all(r.rejection_rate == 0.0 and r.mc_se == 0.0 for r in rows)


@pytest.mark.parametrize("kwargs", [{"reps": 0}, {"alpha": 1.0}, {"alpha": -0.1}])
def test_type1_validation(kwargs):
    args = {"ns": [10], "reps": 5, "seed": 0} | kwargs
    with pytest.raises(ValueError):
        type1_study(**args)


@pytest.mark.parametrize("n", [25, 75])
def test_paper_alternatives(n):
    specs = paper_alternatives(n)
    assert [s.kind for s in specs] == ["matern"] * 3 + ["ssi"] * 3 + ["inhom_poisson"] * 3
    assert all(s.n == n for s in specs)
    assert len({s.label() for s in specs}) == 9


def test_paper_alternatives_unknown_n():
    with pytest.raises(ValueError):
        paper_alternatives(50)


def test_pattern_statistics_layout():
    p = sim_csr(25, 2, 4)
    s = pattern_statistics(p)
    assert s.shape == (9,)
    assert s[0] == pytest.approx(cf_statistic(p, 1.0))
    assert s[2] == pytest.approx(cf_statistic(p, 30.0))
    assert s[6] == pytest.approx(omega_bar_squared(p))


def test_power_study_small():
    alts = {20: [SimSpec("matern", 20, 2, {"r": 0.075, "mu": 10.0, "kappa": 2.0}, 0),
                 SimSpec("ssi", 20, 2, {"delta": 0.4}, 0)]}
    res = power_study([20], reps=30, null_reps=200, seed=2, alternatives=alts)
    assert isinstance(res, PowerResult)
    label = alts[20][0].label()
    for test in POWER_TESTS:
        p, se = res.power(label, 20, test)
        assert 0.0 <= p <= 1.0 and se >= 0.0
    # strong clustering is detected by the nearest-neighbour test
    assert res.power(label, 20, "clark_evans")[0] > 0.8
    # the impossible packing is reported instead of aborting the study
    assert list(res.failed) == [(alts[20][1].label(), 20)]
    rows = list(res.rows())
    assert rows[-1][2] == "failed" and len(rows) == len(POWER_TESTS) + 1


def test_paired_difference():
    res = PowerResult(reps=4, null_reps=0, alpha=0.05)
    res.indicators[("a", 10, "x")] = np.array([True, True, False, False])
    res.indicators[("a", 10, "y")] = np.array([True, False, False, False])
    d, se = res.paired_difference("a", 10, "x", "y")
    assert d == pytest.approx(0.25)
    assert se == pytest.approx(np.std([0, 1, 0, 0], ddof=1) / 2)
