"""User-facing CF tests: single resolution, Bonferroni omnibus and envelopes.

The null distribution of Delta at resolution rho is one of

* ``imhof``: the weighted chi-square series for the limiting statistic,
  evaluated from the operator spectrum and rescaled to the exact finite-n
  variance about the exact mean;
* ``high_rho``: the cumulant approximation for large rho, with the same
  variance rescaling;
* ``monte_carlo``: the empirical distribution of Delta over simulated CSR
  patterns.

``auto`` picks ``high_rho`` when ``rho > pi n^(1/D)`` and ``imhof`` otherwise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .competing import mc_p_value
from .high_rho import HighRhoWarning, cumulant_model, high_rho_cdf, high_rho_quantile, use_high_rho
from .imhof import ImhofEvaluator, adjust_quantile
from .null_moments import limiting_variance, null_mean, null_variance
from .patterns import PointPattern
from .simulate import rng_for, sim_csr
from .spectrum import build_spectrum
from .statistic import CfEvaluator, cf_statistic

__all__ = [
    "EnvelopeCurve",
    "HighRhoNull",
    "ImhofNull",
    "MonteCarloNull",
    "TestReport",
    "bonferroni",
    "cf_test",
    "choose_method",
    "default_envelope_grid",
    "default_omnibus_rhos",
    "envelope",
    "null_distribution",
    "omnibus_test",
    "p_value_from_cdf",
]

TAILS = ("two_sided", "upper", "lower")
METHODS = ("imhof", "high_rho", "monte_carlo")


@dataclass(frozen=True)
class TestReport:
    """Outcome of a CF test.

    For an omnibus test ``rho`` is the tuple of resolutions, ``method`` is the
    method of the resolution with the smallest p-value, and ``components``
    lists ``(rho, statistic, p_value, method)`` per resolution.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    tail: str
    method: str
    rho: float | tuple[float, ...]
    n: int
    dim: int
    seed: int | None = None
    components: tuple = ()

    def __post_init__(self):
        if self.tail not in TAILS:
            raise ValueError(f"tail must be one of {TAILS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")

    def as_dict(self) -> dict:
        out = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "tail": self.tail,
            "method": self.method,
            "rho": list(self.rho) if isinstance(self.rho, tuple) else self.rho,
            "n": self.n,
            "dim": self.dim,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        if self.components:
            out["components"] = [
                {"rho": r, "statistic": s, "p_value": p, "method": m}
                for r, s, p, m in self.components
            ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


# ---------------------------------------------------------------------------
# Null distributions
# ---------------------------------------------------------------------------


def choose_method(rho: float, n: int, dim: int) -> str:
    return "high_rho" if use_high_rho(rho, n, dim) else "imhof"


class _AdjustedNull:
    """CDF and quantiles of an asymptotic law rescaled to the exact variance.

    The rescaled variable is ``E + (X - E) s`` with ``s = sqrt(exact / asym)``,
    so ``F_adj(x) = F(E + (x - E) / s)``; quantiles map the other way.
    """

    method: str

    def __init__(self, rho: float, n: int, dim: int, asym_var: float):
        self.rho, self.n, self.dim = float(rho), int(n), int(dim)
        self.mean = null_mean(rho, dim)
        self.variance = null_variance(rho, dim, n)
        self.asym_var = asym_var

    def _raw_cdf(self, x):
        raise NotImplementedError

    def _raw_quantile(self, p):
        raise NotImplementedError

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        back = self.mean + (x - self.mean) * math.sqrt(self.asym_var / self.variance)
        out = self._raw_cdf(back)
        return out if np.ndim(x) else float(out)

    def quantile(self, p):
        q = self._raw_quantile(p)
        return adjust_quantile(q, self.mean, self.variance, self.asym_var)


class ImhofNull(_AdjustedNull):
    method = "imhof"

    def __init__(self, rho: float, n: int, dim: int, abs_tol: float = 1e-6):
        super().__init__(rho, n, dim, limiting_variance(rho, dim))
        self.evaluator = ImhofEvaluator(build_spectrum(rho, dim), abs_tol=abs_tol)

    def _raw_cdf(self, x):
        return self.evaluator.cdf(x)

    def _raw_quantile(self, p):
        return self.evaluator.quantile(p)


class HighRhoNull(_AdjustedNull):
    method = "high_rho"

    def __init__(self, rho: float, n: int, dim: int):
        model = cumulant_model(n, rho, dim)
        super().__init__(rho, n, dim, model.kappa2)
        self.model = model

    def _raw_cdf(self, x):
        return high_rho_cdf(x, self.model)

    def _raw_quantile(self, p):
        return high_rho_quantile(p, self.model, adjust=False)


class MonteCarloNull:
    """Empirical null of Delta from ``reps`` CSR patterns."""

    method = "monte_carlo"

    def __init__(self, rho: float, n: int, dim: int, reps: int, seed: int, stream: int = 0):
        if reps < 1:
            raise ValueError("reps must be at least 1")
        self.rho, self.n, self.dim = float(rho), int(n), int(dim)
        self.reps, self.seed = int(reps), int(seed)
        self.sample = np.sort(_mc_sample((float(rho),), n, dim, reps, seed, stream)[:, 0])
        self.mean = null_mean(rho, dim)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.sample, x, side="right") / self.reps
        return out if np.ndim(x) else float(out)

    def upper(self, x):
        """Fraction of null values at or above ``x``."""
        x = np.asarray(x, dtype=float)
        out = 1.0 - np.searchsorted(self.sample, x, side="left") / self.reps
        return out if np.ndim(x) else float(out)

    def quantile(self, p):
        return np.quantile(self.sample, p)


def _mc_sample(rhos: tuple[float, ...], n: int, dim: int, reps: int, seed: int,
               stream: int = 0) -> np.ndarray:
    """``reps x len(rhos)`` array of Delta over CSR replicates (shared patterns across rho)."""
    out = np.empty((reps, len(rhos)))
    for r in range(reps):
        ev = CfEvaluator(sim_csr(n, dim, rng_for(seed, stream, r)))
        out[r] = [ev.delta(rho) for rho in rhos]
    return out


@lru_cache(maxsize=64)
def _analytic_null(rho: float, n: int, dim: int, method: str):
    if method == "high_rho":
        null = HighRhoNull(rho, n, dim)
        if null.model.modulus_ok():
            return null
        warnings.warn(f"cumulant approximation invalid at rho={rho}, n={n}; using the Imhof null",
                      HighRhoWarning, stacklevel=3)
    return ImhofNull(rho, n, dim)


def null_distribution(rho: float, n: int, dim: int, method: str = "auto",
                      reps: int = 5000, seed: int = 0):
    """Null law of Delta at ``rho`` for patterns of ``n`` points in ``[0,1]^dim``."""
    if method == "auto":
        method = choose_method(rho, n, dim)
    if method == "monte_carlo":
        return MonteCarloNull(rho, n, dim, reps, seed)
    if method not in METHODS:
        raise ValueError(f"method must be 'auto' or one of {METHODS}")
    return _analytic_null(float(rho), int(n), int(dim), method)


def p_value_from_cdf(lower, upper, tail: str):
    """Combine ``F(x)`` (``lower``) and ``pr(X >= x)`` (``upper``) into a p-value."""
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if tail == "upper":
        p = upper
    elif tail == "lower":
        p = lower
    else:
        p = 2.0 * np.minimum(lower, upper)
    p = np.clip(p, 0.0, 1.0)
    return p if np.ndim(p) else float(p)


def _p_values(null, x, tail: str):
    if isinstance(null, MonteCarloNull):
        return p_value_from_cdf(null.cdf(x), null.upper(x), tail)
    F = null.cdf(x)
    return p_value_from_cdf(F, 1.0 - np.asarray(F), tail)


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------


def cf_test(pattern: PointPattern, rho: float, tail: str = "two_sided", method: str = "auto",
            reps: int = 5000, seed: int = 0) -> TestReport:
    """CF test of CSR at one resolution.

    ``upper`` targets aggregation or heterogeneity (large Delta), ``lower``
    regularity (small Delta).
    """
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}")
    stat = cf_statistic(pattern, rho)
    n = pattern.n
    if n < 2:
        raise ValueError("the CF test needs at least 2 points")
    null = null_distribution(rho, n, pattern.dim, method, reps, seed)
    p = _p_values(null, stat, tail)
    return TestReport(statistic=stat, p_value=float(p), tail=tail, method=null.method,
                      rho=float(rho), n=n, dim=pattern.dim,
                      seed=int(seed) if null.method == "monte_carlo" else None)


def default_omnibus_rhos(n: int) -> tuple[float, float, float]:
    """``1``, ``(2 pi sqrt(n))^(1/2)`` and ``2 pi sqrt(n)``."""
    top = 2.0 * math.pi * math.sqrt(n)
    return 1.0, math.sqrt(top), top


def bonferroni(p_values: Sequence[float]) -> float:
    """``min(m * min p, 1)``."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    return float(min(1.0, p.size * p.min()))


def omnibus_test(pattern: PointPattern, rhos: Sequence[float] | None = None,
                 tail: str = "two_sided", method: str = "auto", reps: int = 5000,
                 seed: int = 0) -> TestReport:
    """Bonferroni combination of CF tests over several resolutions.

    With ``method="monte_carlo"`` every resolution is calibrated on the same
    set of simulated CSR patterns.
    """
    rhos = default_omnibus_rhos(pattern.n) if rhos is None else tuple(float(r) for r in rhos)
    if len(rhos) == 0:
        raise ValueError("rhos must be non-empty")
    if len(set(rhos)) != len(rhos):
        raise ValueError("rhos must be distinct")
    ev = CfEvaluator(pattern)
    stats = [ev.delta(r) for r in rhos]
    if method == "monte_carlo":
        sample = _mc_sample(rhos, pattern.n, pattern.dim, reps, seed)
        ps = [mc_p_value(s, sample[:, i], tail) for i, s in enumerate(stats)]
        methods = ["monte_carlo"] * len(rhos)
    else:
        ps, methods = [], []
        for r, s in zip(rhos, stats):
            rep = cf_test(pattern, r, tail, method, reps, seed)
            ps.append(rep.p_value)
            methods.append(rep.method)
    best = int(np.argmin(ps))
    components = tuple((r, s, p, m) for r, s, p, m in zip(rhos, stats, ps, methods))
    return TestReport(statistic=stats[best], p_value=bonferroni(ps), tail=tail,
                      method=methods[best], rho=rhos, n=pattern.n, dim=pattern.dim,
                      seed=int(seed) if "monte_carlo" in methods else None,
                      components=components)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeCurve:
    """Delta over a resolution grid with its null mean and 95% / 99% bands."""

    rho_grid: np.ndarray
    delta: np.ndarray
    null_mean: np.ndarray
    band_95: np.ndarray  # shape (k, 2)
    band_99: np.ndarray
    methods: tuple = field(default=())

    def __post_init__(self):
        if np.any(np.diff(self.rho_grid) <= 0):
            raise ValueError("rho_grid must be increasing")

    def rows(self):
        """``(rho, delta, mean, lo95, hi95, lo99, hi99)`` per grid point."""
        for i in range(self.rho_grid.size):
            yield (float(self.rho_grid[i]), float(self.delta[i]), float(self.null_mean[i]),
                   float(self.band_95[i, 0]), float(self.band_95[i, 1]),
                   float(self.band_99[i, 0]), float(self.band_99[i, 1]))


def default_envelope_grid(n: int, size: int = 64) -> np.ndarray:
    """``size`` log-spaced resolutions in ``[1, 2 pi sqrt(n)]``."""
    return np.geomspace(1.0, 2.0 * math.pi * math.sqrt(n), size)


def envelope(pattern: PointPattern, rho_grid: Sequence[float] | None = None,
             method: str = "auto", reps: int = 5000, seed: int = 0) -> EnvelopeCurve:
    """Delta(rho) with pointwise central 95% and 99% null bands."""
    grid = default_envelope_grid(pattern.n) if rho_grid is None else np.asarray(rho_grid, float)
    probs = np.array([0.005, 0.025, 0.975, 0.995])
    ev = CfEvaluator(pattern)
    delta = ev.delta_grid(grid)
    means = np.array([null_mean(r, pattern.dim) for r in grid])
    bands = np.empty((grid.size, 4))
    methods = []
    if method == "monte_carlo":
        sample = _mc_sample(tuple(grid), pattern.n, pattern.dim, reps, seed)
        bands[:] = np.quantile(sample, probs, axis=0).T
        methods = ["monte_carlo"] * grid.size
    else:
        for i, r in enumerate(grid):
            null = null_distribution(float(r), pattern.n, pattern.dim, method, reps, seed)
            bands[i] = np.sort(np.asarray(null.quantile(probs), dtype=float))
            methods.append(null.method)
    return EnvelopeCurve(rho_grid=grid, delta=delta, null_mean=means,
                         band_95=bands[:, [1, 2]], band_99=bands[:, [0, 3]],
                         methods=tuple(methods))
