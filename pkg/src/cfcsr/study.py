"""Monte Carlo harnesses: type I error of the CF test and power against alternatives.

Replicate ``r`` of every cell draws from its own Philox stream, so results
do not depend on the order in which cells or replicates are run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .competing import clark_evans, l_test
from .inference import bonferroni, default_omnibus_rhos, null_distribution
from .patterns import PointPattern
from .simulate import SimSpec, SimulationError, matern_parameters, rng_for, sim_csr, simulate
from .statistic import CfEvaluator, omega_bar_squared

__all__ = [
    "POWER_TESTS",
    "PowerResult",
    "Type1Row",
    "paper_alternatives",
    "pattern_statistics",
    "power_study",
    "type1_rhos",
    "type1_study",
]

# stream numbers keep the CSR calibration draws and each alternative apart
_NULL_STREAM = 1
_TYPE1_STREAM = 2
_ALT_STREAM = 100


# ---------------------------------------------------------------------------
# Type I error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Type1Row:
    n: int
    rho: float
    tail: str
    method: str
    rejection_rate: float
    mc_se: float
    reps: int


def type1_rhos(n: int) -> tuple[float, ...]:
    """``1, (1/2) pi sqrt(n), pi sqrt(n), 2 pi sqrt(n)``."""
    s = math.pi * math.sqrt(n)
    return 1.0, 0.5 * s, s, 2.0 * s


def type1_study(ns: Sequence[int], reps: int, seed: int, alpha: float = 0.05,
                rhos: dict | None = None, dim: int = 2) -> list[Type1Row]:
    """Rejection rates of the CF test on CSR patterns.

    The two one-sided rows use the ``alpha/2`` tails of the two-sided test, so
    their rates add up to the two-sided rate.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")
    rows = []
    for n in ns:
        grid = tuple(rhos[n]) if rhos and n in rhos else type1_rhos(n)
        deltas = np.empty((reps, len(grid)))
        for r in range(reps):
            ev = CfEvaluator(sim_csr(n, dim, rng_for(seed, _TYPE1_STREAM + 1000 * n, r)))
            deltas[r] = [ev.delta(rho) for rho in grid]
        for j, rho in enumerate(grid):
            null = null_distribution(rho, n, dim)
            if alpha == 0.0:
                lower = np.zeros(reps, dtype=bool)
                upper = np.zeros(reps, dtype=bool)
            else:
                lo, hi = np.asarray(null.quantile([alpha / 2.0, 1.0 - alpha / 2.0]), dtype=float)
                lower = deltas[:, j] < lo
                upper = deltas[:, j] > hi
            for tail, hits in (("two_sided", lower | upper), ("lower", lower), ("upper", upper)):
                rate = float(hits.mean())
                rows.append(Type1Row(n, float(rho), tail, null.method, rate,
                                     math.sqrt(rate * (1.0 - rate) / reps), reps))
    return rows


# ---------------------------------------------------------------------------
# Power
# ---------------------------------------------------------------------------

POWER_TESTS = ("cf_rho1", "cf_rho8", "cf_rho30", "omnibus", "omega_bar", "l_test", "clark_evans")
_CF_RHOS = (1.0, 8.0, 30.0)
# tail of each single-statistic test; the omnibus test works on p-values
_TEST_TAIL = {"cf_rho1": "two_sided", "cf_rho8": "two_sided", "cf_rho30": "two_sided",
              "omega_bar": "two_sided", "l_test": "upper", "clark_evans": "two_sided"}
_SSI_DELTAS = {25: (0.05, 0.06, 0.07), 75: (0.015, 0.02, 0.025)}
_INHOM_THETAS = ((1.0, 4.0), (4.0, 4.0), (4.0, 10.0))


def paper_alternatives(n: int, seed: int = 0) -> list[SimSpec]:
    """The nine alternatives of the power study for sample size ``n``."""
    specs = []
    for r in (0.075, 0.15, 0.30):
        mu, kappa = matern_parameters(n, r)
        specs.append(SimSpec("matern", n, 2, {"r": r, "mu": mu, "kappa": kappa}, seed))
    deltas = _SSI_DELTAS.get(n)
    if deltas is None:
        raise ValueError(f"no inhibition distances defined for n={n}; use n in {sorted(_SSI_DELTAS)}")
    specs.extend(SimSpec("ssi", n, 2, {"delta": d}, seed) for d in deltas)
    specs.extend(SimSpec("inhom_poisson", n, 2, {"theta1": a, "theta2": b}, seed)
                 for a, b in _INHOM_THETAS)
    return specs


def pattern_statistics(pattern: PointPattern) -> np.ndarray:
    """``[Delta(1), Delta(8), Delta(30), Delta at the omnibus rhos..., omega2, L_m, CE z]``."""
    ev = CfEvaluator(pattern)
    rhos = _CF_RHOS + default_omnibus_rhos(pattern.n)
    cf = [ev.delta(r) for r in rhos]
    return np.array(cf + [omega_bar_squared(pattern), l_test(pattern).statistic,
                          clark_evans(pattern).statistic])


_N_CF = len(_CF_RHOS)
_OMNI = slice(_N_CF, _N_CF + 3)
_COLUMN = {"cf_rho1": 0, "cf_rho8": 1, "cf_rho30": 2, "omega_bar": 6, "l_test": 7,
           "clark_evans": 8}


@dataclass
class _Calibration:
    """Thresholds for one sample size, from simulated CSR patterns."""

    null: np.ndarray  # reps x 9 statistics
    alpha: float
    sorted_omni: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sorted_omni = np.sort(self.null[:, _OMNI], axis=0)

    def omnibus_p(self, values: np.ndarray) -> np.ndarray:
        """Bonferroni p-values of rows of omnibus-rho statistics, per-rho calibrated by MC."""
        reps = self.sorted_omni.shape[0]
        ps = np.empty(values.shape)
        for j in range(values.shape[1]):
            col = self.sorted_omni[:, j]
            lower = np.searchsorted(col, values[:, j], side="right") / reps
            upper = 1.0 - np.searchsorted(col, values[:, j], side="left") / reps
            ps[:, j] = np.minimum(1.0, 2.0 * np.minimum(lower, upper))
        return np.array([bonferroni(row) for row in ps])

    def reject(self, stats: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        a = self.alpha
        for test, col in _COLUMN.items():
            null = self.null[:, col]
            x = stats[:, col]
            if _TEST_TAIL[test] == "upper":
                out[test] = x > np.quantile(null, 1.0 - a)
            else:
                lo, hi = np.quantile(null, [a / 2.0, 1.0 - a / 2.0])
                out[test] = (x < lo) | (x > hi)
        out["omnibus"] = self.omnibus_p(stats[:, _OMNI]) <= a
        return out


@dataclass
class PowerResult:
    """Rejection indicators per (alternative label, n, test)."""

    reps: int
    null_reps: int
    alpha: float
    indicators: dict = field(default_factory=dict)  # (label, n, test) -> bool array
    failed: dict = field(default_factory=dict)  # (label, n) -> message

    def power(self, label: str, n: int, test: str) -> tuple[float, float]:
        hits = self.indicators[(label, n, test)]
        p = float(hits.mean())
        return p, math.sqrt(p * (1.0 - p) / hits.size)

    def paired_difference(self, label: str, n: int, a: str, b: str) -> tuple[float, float]:
        """Power of ``a`` minus power of ``b`` with its paired standard error."""
        d = (self.indicators[(label, n, a)].astype(float)
             - self.indicators[(label, n, b)].astype(float))
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0

    def cells(self) -> list[tuple[str, int]]:
        return sorted({(label, n) for label, n, _ in self.indicators})

    def rows(self) -> Iterable[tuple]:
        for label, n in self.cells():
            for test in POWER_TESTS:
                p, se = self.power(label, n, test)
                yield label, n, test, p, se
        for (label, n), msg in sorted(self.failed.items()):
            yield label, n, "failed", float("nan"), float("nan")


def _null_sample(n: int, reps: int, seed: int) -> np.ndarray:
    return np.array([pattern_statistics(sim_csr(n, 2, rng_for(seed, _NULL_STREAM + 1000 * n, r)))
                     for r in range(reps)])


def power_study(ns: Sequence[int], reps: int, null_reps: int, seed: int, alpha: float = 0.05,
                alternatives: dict | None = None, progress=None) -> PowerResult:
    """Power of the CF tests and baselines against the study alternatives.

    Thresholds come from ``null_reps`` CSR patterns per sample size.  The
    omnibus test combines two-sided Monte Carlo p-values at its three
    resolutions with the Bonferroni rule.  ``alternatives`` maps ``n`` to a
    list of :class:`SimSpec`; by default :func:`paper_alternatives` is used.
    """
    result = PowerResult(reps=reps, null_reps=null_reps, alpha=alpha)
    for n in ns:
        calib = _Calibration(_null_sample(n, null_reps, seed), alpha)
        specs = alternatives[n] if alternatives else paper_alternatives(n, seed)
        for k, spec in enumerate(specs):
            label = spec.label()
            try:
                stats = np.array([pattern_statistics(simulate(spec, r, _ALT_STREAM + 1000 * n + k))
                                  for r in range(reps)])
            except SimulationError as exc:
                result.failed[(label, n)] = str(exc)
                continue
            for test, hits in calib.reject(stats).items():
                result.indicators[(label, n, test)] = hits
            if progress is not None:
                progress(label, n)
    return result
