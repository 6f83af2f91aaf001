"""Classical CSR tests used as baselines: the L-test, Clark-Evans and omega-bar squared.

All three operate on patterns in the unit square.  Their null distributions
are calibrated by Monte Carlo (see :func:`mc_p_value`), as in the simulation
study the baselines are taken from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .patterns import PointPattern
from .statistic import omega_bar_squared

__all__ = [
    "BaselineResult",
    "clark_evans",
    "clark_evans_moments",
    "default_l_range",
    "isotropic_weights",
    "l_test",
    "mc_p_value",
    "omega_bar_test",
    "ripley_khat",
]

_AREA = 1.0
_PERIMETER = 4.0
_NAMES = ("l_test", "clark_evans", "omega_bar")
_TAILS = ("two_sided", "upper", "lower")


@dataclass(frozen=True)
class BaselineResult:
    """A baseline statistic with an optional Monte Carlo p-value."""

    name: str
    statistic: float
    p_value: float | None = None

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ValueError(f"unknown baseline {self.name!r}")
        if not math.isfinite(self.statistic):
            raise ValueError("baseline statistic must be finite")
        if self.p_value is not None and not (0.0 <= self.p_value <= 1.0):
            raise ValueError("p_value must lie in [0, 1]")


def _require_plane(pattern: PointPattern) -> np.ndarray:
    if pattern.dim != 2:
        raise ValueError(f"baseline tests need dim=2, got dim={pattern.dim}")
    return pattern.points


# ---------------------------------------------------------------------------
# Ripley's K with the isotropic edge correction
# ---------------------------------------------------------------------------


def isotropic_weights(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Fraction of each circle's circumference lying inside the unit square.

    The square is the intersection of four half-planes, so the outside arc is
    the union of one arc per side.  A side at distance ``e < r`` cuts off an
    arc of half-angle ``acos(e / r)`` centred on its normal; arcs of opposite
    sides never meet (each is shorter than a half circle), and arcs of
    adjacent sides, whose centres are a quarter turn apart, overlap by
    ``a_i + a_j - pi/2`` when that is positive.
    """
    centers = np.asarray(centers, dtype=float)
    r = np.asarray(radii, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # side order: left, bottom, right, top (adjacent in cyclic order)
        dist = np.stack([centers[:, 0], centers[:, 1], 1.0 - centers[:, 0], 1.0 - centers[:, 1]])
        half = np.where(dist < r, np.arccos(np.clip(dist / r, -1.0, 1.0)), 0.0)
    outside = 2.0 * half.sum(axis=0)
    for i in range(4):
        j = (i + 1) % 4
        outside -= np.maximum(half[i] + half[j] - 0.5 * np.pi, 0.0)
    return 1.0 - outside / (2.0 * np.pi)


def _pair_table(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted ordered-pair distances and cumulative inverse edge weights."""
    n = points.shape[0]
    j, k = np.triu_indices(n, 1)
    d = np.hypot(points[j, 0] - points[k, 0], points[j, 1] - points[k, 1])
    # both orders: the weight depends on which point is the circle centre
    inv = 1.0 / isotropic_weights(points[j], d) + 1.0 / isotropic_weights(points[k], d)
    order = np.argsort(d, kind="stable")
    return d[order], np.cumsum(inv[order])


def _khat_from_table(d: np.ndarray, cum: np.ndarray, r: np.ndarray, n: int) -> np.ndarray:
    idx = np.searchsorted(d, r, side="right")
    total = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return _AREA * total / (n * n)


def ripley_khat(pattern: PointPattern, r) -> np.ndarray | float:
    """Isotropic-corrected ``K(r)`` for the unit square; vectorized over ``r``."""
    pts = _require_plane(pattern)
    rs = np.asarray(r, dtype=float)
    if np.any(rs <= 0.0):
        raise ValueError("r must be positive")
    if pts.shape[0] < 2:
        out = np.zeros(rs.shape)
    else:
        d, cum = _pair_table(pts)
        out = _khat_from_table(d, cum, np.atleast_1d(rs), pts.shape[0]).reshape(rs.shape)
    return out if out.ndim else float(out)


def default_l_range(n: int) -> float:
    """Upper end ``s = 1.25 / sqrt(n)`` of the distance range of the L-test."""
    return 1.25 / math.sqrt(n)


def l_test(pattern: PointPattern, s: float | None = None, grid_size: int = 512) -> BaselineResult:
    """``L_m = max_{0 < r <= s} |sqrt(K(r)/pi) - r|`` over ``grid_size`` equally spaced radii."""
    pts = _require_plane(pattern)
    n = pts.shape[0]
    s = default_l_range(n) if s is None else float(s)
    if s <= 0.0 or grid_size < 1:
        raise ValueError("need s > 0 and grid_size >= 1")
    r = s * np.arange(1, grid_size + 1) / grid_size
    if n < 2:
        khat = np.zeros_like(r)
    else:
        d, cum = _pair_table(pts)
        khat = _khat_from_table(d, cum, r, n)
    stat = float(np.max(np.abs(np.sqrt(khat / np.pi) - r)))
    return BaselineResult("l_test", stat)


# ---------------------------------------------------------------------------
# Clark-Evans with Donnelly's edge correction
# ---------------------------------------------------------------------------


def clark_evans_moments(n: int) -> tuple[float, float]:
    """Edge-corrected mean and variance of the mean nearest-neighbour distance."""
    mean = 0.5 * math.sqrt(_AREA / n) + (0.0514 + 0.041 / math.sqrt(n)) * _PERIMETER / n
    var = 0.070 * _AREA / n**2 + 0.037 * _PERIMETER * math.sqrt(_AREA) / n**2.5
    return mean, var


def clark_evans(pattern: PointPattern) -> BaselineResult:
    """z-score of the mean nearest-neighbour distance; negative means aggregation."""
    pts = _require_plane(pattern)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("Clark-Evans needs at least 2 points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    dbar = float(np.mean(dist[:, 1]))
    mean, var = clark_evans_moments(n)
    return BaselineResult("clark_evans", (dbar - mean) / math.sqrt(var))


def omega_bar_test(pattern: PointPattern) -> BaselineResult:
    return BaselineResult("omega_bar", omega_bar_squared(pattern))


# ---------------------------------------------------------------------------
# Monte Carlo calibration
# ---------------------------------------------------------------------------


def mc_p_value(observed: float, null_values, tail: str = "two_sided") -> float:
    """p-value of ``observed`` against a simulated null sample.

    ``upper`` is the fraction of null values at or above ``observed``,
    ``lower`` the fraction at or below, and ``two_sided`` twice the smaller of
    the two, capped at 1.
    """
    if tail not in _TAILS:
        raise ValueError(f"tail must be one of {_TAILS}")
    null = np.asarray(null_values, dtype=float)
    if null.size == 0:
        raise ValueError("empty null sample")
    upper = float(np.mean(null >= observed))
    lower = float(np.mean(null <= observed))
    if tail == "upper":
        return upper
    if tail == "lower":
        return lower
    return min(1.0, 2.0 * min(upper, lower))
