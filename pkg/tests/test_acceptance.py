"""Acceptance criteria 1-10.

Each test prints one ``criterion k: PASS|FAIL`` line (also repeated in the
terminal summary) and then asserts the verdict.  Tolerances are the stated
ones; a criterion that cannot be met is reported as a failure, not relaxed.
"""

import math
import time

import numpy as np
import pytest

from cfcsr.competing import mc_p_value
from cfcsr.datasets import DatasetUnavailable, load_dataset
from cfcsr.imhof import ImhofEvaluator
from cfcsr.inference import HighRhoNull, ImhofNull, choose_method
from cfcsr.null_moments import cauchy_alpha, limiting_variance, null_mean
from cfcsr.simulate import SimSpec, matern_parameters, rng_for, sim_csr, simulate
from cfcsr.spectrum import build_spectrum, eigvals_s, one_dim_spectra, one_dim_trace_tail
from cfcsr.statistic import (
    TriangularWeight,
    cf_statistic,
    cf_statistic_oracle,
    omega_bar_squared,
    weighted_l2_oracle,
)
from cfcsr.study import pattern_statistics, power_study, type1_study
from helpers import ACCEPTANCE_LINES, compressed, dense_matrices, series_draws, top_eigenvalues

pytestmark = pytest.mark.acceptance

SEED = 20240611


@pytest.fixture
def verdict(capsys):
    def report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return report


def test_criterion_01_closed_form_matches_oracle(verdict):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst = 0.0
    for k in range(50):
        n = int(rng.integers(1, 21))
        dim = int(rng.integers(1, 3))
        rho = float(rng.choice([0.5, 1.0, 5.0, 20.0]))
        p = sim_csr(n, dim, rng_for(SEED, 1, k))
        delta = cf_statistic(p, rho)
        err = abs(delta - cf_statistic_oracle(p, rho)) / max(1.0, delta)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-6 and elapsed < 60.0,
            f"max scaled error {worst:.2e} (tol 1e-6), {elapsed:.1f}s (limit 60s)")


def test_criterion_02_omega_bar_identity(verdict):
    worst = 0.0
    for k in range(20):
        p = sim_csr(int(np.random.default_rng(k).integers(2, 30)), 2, rng_for(SEED, 2, k))
        four = 4.0 * omega_bar_squared(p)
        err = abs(four - weighted_l2_oracle(p, TriangularWeight())) / max(1.0, four)
        worst = max(worst, err)
    verdict(2, worst <= 1e-6, f"max scaled error {worst:.2e} (tol 1e-6)")


def test_criterion_03_trace_identities(verdict):
    start = time.perf_counter()
    J = 4000
    lines, ok = [], True
    for dim in (1, 2):
        for rho in (1.0, 8.0, 30.0):
            res = eigvals_s(rho, dim)
            sp = one_dim_spectra(rho, J)
            tail, tail_sq = one_dim_trace_tail(rho, J)
            one = sp.lambda_a1.sum() + sp.lambda_a2.sum() + tail
            one_sq = np.sum(sp.lambda_a1**2) + np.sum(sp.lambda_a2**2) + tail_sq
            gap = res.trace_gap()
            e_gap = abs(gap / cauchy_alpha(rho) ** dim - 1.0)
            e_mean = abs((one**dim - gap) / null_mean(rho, dim) - 1.0)
            square_sum = one_sq**dim - res.square_gap()
            var = limiting_variance(rho, dim)
            e_sq = abs(square_sum / var - 1.0)
            e_half = abs(square_sum / (0.5 * var) - 1.0)
            ok &= max(e_gap, e_mean, e_sq) <= 1e-6
            lines.append(f"D={dim} rho={rho:g}: gap {e_gap:.1e}, mean {e_mean:.1e}, "
                         f"squares vs var {e_sq:.1e} (vs var/2 {e_half:.1e})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120.0
    verdict(3, ok, f"{elapsed:.0f}s (limit 120s); " + "; ".join(lines))


def test_criterion_04_dense_oracle(verdict):
    worst = {"A1": 0.0, "A2": 0.0, "S": 0.0}
    extrapolated = 0.0
    for rho in (1.0, 10.0, 30.0):
        A1, A2, _ = dense_matrices(rho, 3000)
        sp = one_dim_spectra(rho, 20)
        mu = eigvals_s(rho, 1).mu[:20]
        pairs = {"A1": (sp.lambda_a1, top_eigenvalues(A1, 20)),
                 "A2": (sp.lambda_a2, top_eigenvalues(A2, 20)),
                 "S": (mu, top_eigenvalues(compressed(A1), 20))}
        for key, (ours, dense) in pairs.items():
            worst[key] = max(worst[key], float(np.max(np.abs(ours / dense - 1.0))))
        # diagnostic: the sine block converges like 1/N, so extrapolate 3000 -> infinity
        _, A2h, _ = dense_matrices(rho, 1500)
        rich = 2.0 * pairs["A2"][1] - top_eigenvalues(A2h, 20)
        extrapolated = max(extrapolated, float(np.max(np.abs(sp.lambda_a2 / rich - 1.0))))
    ok = max(worst.values()) <= 1e-6
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(4, ok, f"max relative error {detail} (tol 1e-6); "
                   f"A2 against the extrapolated truncation {extrapolated:.1e}")


def test_criterion_05_imhof_against_monte_carlo(verdict):
    rng = np.random.default_rng(SEED)
    lines, ok = [], True
    for rho in (1.0, 8.0):
        spec = build_spectrum(rho, 2)
        k = min(300, spec.values.size)
        vals, mult = spec.values[:k], spec.mult[:k]
        head = float(np.dot(vals, mult))
        head_sq = float(np.dot(vals**2, mult))
        draws = series_draws(vals, mult, 10**6, rng, tail_mean=spec.sum_all - head,
                             tail_var=2.0 * (spec.sum_sq_all - head_sq))
        q = np.quantile(draws, [0.025, 0.975])
        F = ImhofEvaluator(spec).cdf(q)
        err = np.abs(F - [0.025, 0.975])
        ok &= bool(np.all(err <= 0.004))
        lines.append(f"rho={rho:g}: F(q) = {F[0]:.4f}, {F[1]:.4f}")
    verdict(5, ok, "; ".join(lines) + " (tol 0.004)")


def test_criterion_06_type_one_error(verdict):
    start = time.perf_counter()
    grids = {n: (1.0, math.pi * math.sqrt(n), 2.0 * math.pi * math.sqrt(n)) for n in (25, 100)}
    rows = [r for r in type1_study([25, 100], 5000, SEED, rhos=grids) if r.tail == "two_sided"]
    elapsed = time.perf_counter() - start
    ok = elapsed < 600.0
    parts = []
    for r in rows:
        expected = "high_rho" if r.rho > math.pi * math.sqrt(r.n) * (1 + 1e-12) else "imhof"
        good = abs(r.rejection_rate - 0.05) <= 0.01 and r.method == expected
        ok &= good
        parts.append(f"n={r.n} rho={r.rho:.2f} {r.method} {r.rejection_rate:.4f}")
    verdict(6, ok, f"{elapsed:.0f}s (limit 600s); " + "; ".join(parts))


def test_criterion_07_methods_agree_at_the_switch(verdict):
    n = 25
    rho = math.pi * math.sqrt(n)
    assert choose_method(rho, n, 2) == "imhof"
    probs = np.array([0.025, 0.975])
    qi = np.asarray(ImhofNull(rho, n, 2).quantile(probs))
    qh = np.asarray(HighRhoNull(rho, n, 2).quantile(probs))
    rel = np.abs(qh / qi - 1.0)
    verdict(7, bool(np.all(rel <= 0.05)),
            f"Imhof {qi.round(5).tolist()}, high-rho {qh.round(5).tolist()}, "
            f"relative differences {rel.round(4).tolist()} (tol 0.05)")


def test_criterion_08_power_claims(verdict):
    start = time.perf_counter()
    res = power_study([25, 75], reps=2000, null_reps=5000, seed=SEED)
    elapsed = time.perf_counter() - start
    failures = [f"{label} n={n}: {msg}" for (label, n), msg in res.failed.items()]
    checks = {"a": [], "b": [], "c": [], "d": []}
    for label, n in res.cells():
        d, se = res.paired_difference(label, n, "cf_rho1", "omega_bar")
        checks["a"].append((abs(d) + 2 * se <= 0.03, f"{label} n={n} d={d:+.3f}"))
        if not (label.startswith("matern") and n == 25 and "r=0.075" in label):
            d, se = res.paired_difference(label, n, "omnibus", "clark_evans")
            checks["b"].append((d >= -2 * se, f"{label} n={n} d={d:+.3f} se={se:.3f}"))
        if label.startswith("inhom_poisson"):
            d, se = res.paired_difference(label, n, "omnibus", "l_test")
            checks["c"].append((d > 2 * se, f"{label} n={n} d={d:+.3f} se={se:.3f}"))
        if label.startswith("ssi"):
            d, se = res.paired_difference(label, n, "l_test", "omnibus")
            checks["d"].append((d > 2 * se, f"{label} n={n} d={d:+.3f} se={se:.3f}"))
    ok = not failures and elapsed < 3600.0 and all(all(g for g, _ in v) for v in checks.values())
    parts = [f"{k}: {sum(g for g, _ in v)}/{len(v)}" for k, v in checks.items()]
    bad = [msg for v in checks.values() for g, msg in v if not g]
    detail = f"{elapsed:.0f}s (limit 3600s); " + ", ".join(parts)
    if bad or failures:
        detail += "; failing: " + "; ".join(bad + failures)
    verdict(8, ok, detail)


# p-values of Table 1 for the three public patterns; None marks "< 0.001"
_TABLE = {
    "japanesepines": (0.621, 0.541, 0.783, 1.000, 0.697, 0.915),
    "redwood": (0.726, None, None, None, None, None),
    "cells": (0.005, None, None, None, None, None),
}


def _dataset_p_values(pattern, reps: int) -> list[float]:
    """MC p-values of the CF tests at the omnibus rhos, omnibus, L-test and Clark-Evans."""
    n = pattern.n
    null = np.array([pattern_statistics(sim_csr(n, 2, rng_for(SEED, 9, r))) for r in range(reps)])
    obs = pattern_statistics(pattern)
    cf = [mc_p_value(obs[j], null[:, j], "two_sided") for j in (3, 4, 5)]
    omni = min(1.0, 3 * min(cf))
    return cf + [omni, mc_p_value(obs[7], null[:, 7], "upper"),
                 mc_p_value(obs[8], null[:, 8], "two_sided")]


def test_criterion_09_applications(verdict):
    try:
        patterns = {name: load_dataset(name) for name in _TABLE}
    except DatasetUnavailable as exc:
        verdict(9, False, f"dataset coordinates not available ({exc}); "
                          "scouring rush excluded by design")
        return
    ok, parts = True, []
    for name, pattern in patterns.items():
        got = _dataset_p_values(pattern, 2000)
        for value, ref in zip(got, _TABLE[name]):
            ok &= value < 0.001 + 0.02 if ref is None else abs(value - ref) <= 0.02
        if name in ("redwood", "cells"):
            ok &= got[3] < 0.001
        parts.append(f"{name}: " + ", ".join(f"{v:.3f}" for v in got))
    verdict(9, ok, "; ".join(parts) + " (desk scale, tol 0.02)")


def test_criterion_10_direction_of_bias(verdict):
    mu, kappa = matern_parameters(75, 0.15)
    cases = [("matern r=0.15", SimSpec("matern", 75, 2, {"r": 0.15, "mu": mu, "kappa": kappa},
                                       SEED), 8.0, 1.0),
             ("ssi delta=0.025", SimSpec("ssi", 75, 2, {"delta": 0.025}, SEED), 30.0, -1.0)]
    ok, parts = True, []
    for name, spec, rho, sign in cases:
        d = np.array([cf_statistic(simulate(spec, r, 10), rho) for r in range(2000)])
        z = (d.mean() - null_mean(rho, 2)) / (d.std(ddof=1) / math.sqrt(d.size))
        ok &= sign * z > 3.0
        parts.append(f"{name} at rho={rho:g}: z = {z:+.1f}")
    verdict(10, ok, "; ".join(parts) + " (need beyond 3 sigma in the stated direction)")
