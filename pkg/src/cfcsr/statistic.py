"""The CF statistic Delta, the omega-bar-squared statistic and a quadrature oracle.

Delta is the weighted L2 distance between the empirical characteristic
function of the pattern and the CSR characteristic function,

    Delta = n * integral |phi0(t) - phihat(t)|^2 w(t) dt.

For the product Cauchy weight with scale ``rho`` the integral has a closed
form that only needs ``exp``.  ``cf_statistic_oracle`` evaluates the same
integral numerically and is used to cross-check the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.spatial.distance import pdist

from .null_moments import cauchy_alpha
from .patterns import PointPattern

__all__ = [
    "CauchyWeight",
    "CfEvaluator",
    "OracleError",
    "TriangularWeight",
    "cf_statistic",
    "cf_statistic_oracle",
    "omega_bar_squared",
    "triangular_statistic",
    "weighted_l2_oracle",
]


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0.0 and np.isfinite(rho)):
        raise ValueError(f"rho must be positive and finite, got {rho}")
    return rho


def _edge_term(points: np.ndarray, rho: float) -> float:
    """``(2/rho^D) sum_j prod_d (2 - e^{-rho x} - e^{-rho(1-x)})``."""
    # 2 - e^{-a} - e^{-b} = -expm1(-a) - expm1(-b), divided by rho per coordinate
    per_coord = -(np.expm1(-rho * points) + np.expm1(-rho * (1.0 - points))) / rho
    return 2.0 * float(np.sum(np.prod(per_coord, axis=1)))


def cf_statistic(pattern: PointPattern, rho: float) -> float:
    """Closed-form CF statistic with Cauchy weight of scale ``rho``.

    Cost is O(n^2 D).  Use :class:`CfEvaluator` to sweep many ``rho`` values.
    """
    rho = _check_rho(rho)
    return CfEvaluator(pattern).delta(rho)


@dataclass(frozen=True, eq=False)
class CfEvaluator:
    """Evaluate Delta over many resolutions reusing the pairwise L1 distances."""

    pattern: PointPattern
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = pdist(self.pattern.points, metric="cityblock") if self.pattern.n > 1 else np.empty(0)
        d.setflags(write=False)
        object.__setattr__(self, "_dist", d)

    def delta(self, rho: float) -> float:
        rho = _check_rho(rho)
        pts = self.pattern.points
        n, dim = pts.shape
        # diagonal pairs contribute xi(0) = 1 each; unordered pairs are doubled
        pair = (n + 2.0 * float(np.sum(np.exp(-rho * self._dist)))) / n
        return pair - _edge_term(pts, rho) + n * cauchy_alpha(rho) ** dim

    def delta_grid(self, rhos: Sequence[float]) -> np.ndarray:
        return np.array([self.delta(r) for r in np.atleast_1d(rhos)], dtype=float)


def triangular_statistic(pattern: PointPattern) -> float:
    """Weighted L2 statistic with the product triangular kernel (D = 2).

    Equals four times omega-bar-squared.
    """
    pts = pattern.points
    if pattern.dim != 2:
        raise ValueError(f"omega-bar-squared is defined for D = 2, got D = {pattern.dim}")
    n = pattern.n
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    pair = float(np.sum(np.prod(1.0 - diff, axis=2))) / n
    edge = 2.0 * float(np.sum(np.prod(pts**2 - pts - 0.5, axis=1)))
    return pair - edge + 4.0 * n / 9.0


def omega_bar_squared(pattern: PointPattern) -> float:
    """Zimmerman's omega-bar-squared CSR statistic on the unit square."""
    return triangular_statistic(pattern) / 4.0


# ---------------------------------------------------------------------------
# Quadrature oracle
#
# The weight and |phi0 - phihat|^2 are both products over coordinates once
# the square is expanded:
#
#   n|phi0 - phihat|^2 = n|phi0|^2 - 2 sum_j Re(phi0 conj e_j) + (1/n) sum_{j,k} e_j conj e_k
#
# with e_j(t) = exp(i t.x_j).  Every term is a product of one-dimensional
# functions, so each D-dimensional integral is a product of one-dimensional
# integrals.  Those are computed by QUADPACK: plain adaptive Gauss-Kronrod on
# a finite head [0, L] and the Fourier-weighted routine (QAWF) on the
# oscillatory tail [L, T], where T is the explicit truncation point.
# ---------------------------------------------------------------------------


class OracleError(RuntimeError):
    """Quadrature in the oracle did not reach the requested accuracy."""


@dataclass(frozen=True)
class _Term:
    """``coef * h(t) * cos(omega t)``: one smooth piece of a 1-d weight."""

    coef: float
    h: Callable[[float], float]
    omega: float


@dataclass(frozen=True)
class CauchyWeight:
    """Cauchy density with scale ``rho``: ``1 / (pi rho (1 + (t/rho)^2))``."""

    rho: float

    def pdf(self, t):
        return 1.0 / (np.pi * self.rho * (1.0 + (t / self.rho) ** 2))

    def terms(self) -> list[_Term]:
        return [_Term(1.0, self.pdf, 0.0)]

    def tail_mass(self, T: float) -> float:
        """Mass outside ``[-T, T]``."""
        return 2.0 / np.pi * np.arctan(self.rho / T)

    def cutoff(self, mass: float) -> float:
        """Smallest ``T`` with ``tail_mass(T) <= mass``."""
        return self.rho / np.tan(np.pi * mass / 2.0)


@dataclass(frozen=True)
class TriangularWeight:
    """Density ``(1 - cos t) / (pi t^2)``; its CF is the triangle ``(1 - |a|)^+``."""

    def pdf(self, t):
        half = np.sin(np.asarray(t, dtype=float) / 2.0)
        t = np.asarray(t, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = 2.0 * half**2 / (np.pi * t**2)
        return np.where(t == 0.0, 1.0 / (2.0 * np.pi), val)

    def terms(self) -> list[_Term]:
        h = lambda t: 1.0 / (np.pi * t * t)  # noqa: E731
        return [_Term(1.0, h, 0.0), _Term(-1.0, h, 1.0)]

    def tail_mass(self, T: float) -> float:
        # bounded above by 2 * integral_T^inf 2/(pi t^2) dt
        return 4.0 / (np.pi * T)

    def cutoff(self, mass: float) -> float:
        return 4.0 / (np.pi * mass)


_QUAD_OPTS = dict(limit=500, epsabs=1e-14, epsrel=1e-12)


def _tail(h, omega: float, kind: str, start: float, end: float) -> tuple[float, float]:
    """``integral_start^end h(t) trig(omega t) dt`` for smooth decaying ``h``."""
    if kind == "sin" and omega == 0.0:
        return 0.0, 0.0
    total, err = 0.0, 0.0
    for lo, sign in ((start, 1.0), (end, -1.0)):
        val, e = _fourier_to_inf(h, omega, kind, lo)
        total += sign * val
        err += e
    return total, err


def _fourier_to_inf(h, omega: float, kind: str, lo: float) -> tuple[float, float]:
    # full_output keeps QUADPACK diagnostics out of the warning stream; the
    # error estimates are accumulated and checked by the caller instead
    if omega == 0.0:
        return quad(h, lo, np.inf, full_output=1, **_QUAD_OPTS)[:2]
    trig = np.cos if kind == "cos" else np.sin
    val, err = 0.0, 0.0
    # QAWF works cycle by cycle; when a cycle is long compared with the decay
    # scale of h, integrate the first few cycles directly instead
    span = 10.0 * np.pi / omega
    if span > lo:
        val, err = quad(lambda t: h(t) * trig(omega * t), lo, lo + span, full_output=1,
                        **_QUAD_OPTS)[:2]
        lo = lo + span
    v, e = quad(h, lo, np.inf, weight=kind, wvar=omega, limlst=200, epsabs=1e-15,
                full_output=1)[:2]
    return val + v, err + e


class _OneDim:
    """One-dimensional building blocks of the oracle for a given weight."""

    def __init__(self, weight, T: float, head: float):
        self.weight = weight
        self.T = T
        self.L = min(head, T)
        self.max_err = 0.0

    def _integrate(self, full: Callable, pieces: list[tuple[float, Callable, float, str]]) -> float:
        """Head of ``full`` on [0, L] plus the sum of oscillatory tail pieces on [L, T]."""
        head, err = quad(full, 0.0, self.L, full_output=1, **_QUAD_OPTS)[:2]
        total = head
        for coef, h, omega, kind in pieces:
            sign = 1.0
            if omega < 0.0:
                omega = -omega
                sign = -1.0 if kind == "sin" else 1.0
            val, e = _tail(h, omega, kind, self.L, self.T)
            total += coef * sign * val
            err += abs(coef) * e
        self.max_err = max(self.max_err, err)
        return 2.0 * total

    def pair(self, a: float) -> float:
        """``integral cos(a t) w(t) dt`` over ``[-T, T]``."""
        w = self.weight
        pieces = []
        for term in w.terms():
            for om in (term.omega + a, term.omega - a):
                pieces.append((0.5 * term.coef, term.h, om, "cos"))
        return self._integrate(lambda t: np.cos(a * t) * w.pdf(t), pieces)

    def cross(self, x: float) -> float:
        """``integral phi0(t) exp(-i t x) w(t) dt``; the imaginary part is odd and vanishes."""
        w = self.weight
        b, c = 1.0 - x, x

        def full(t):
            # (sin(bt) + sin(ct)) / t, finite at t = 0
            return (b * np.sinc(b * t / np.pi) + c * np.sinc(c * t / np.pi)) * w.pdf(t)

        pieces = []
        for term in w.terms():
            ht = (lambda h: (lambda t: h(t) / t))(term.h)
            for freq in (b, c):
                for om in (freq + term.omega, freq - term.omega):
                    pieces.append((0.5 * term.coef, ht, om, "sin"))
        return self._integrate(full, pieces)

    def null(self) -> float:
        """``integral |phi0(t)|^2 w(t) dt`` with ``|phi0|^2 = (2 - 2 cos t) / t^2``."""
        w = self.weight

        def full(t):
            return np.sinc(t / (2.0 * np.pi)) ** 2 * w.pdf(t)

        pieces = []
        for term in w.terms():
            ht2 = (lambda h: (lambda t: h(t) / (t * t)))(term.h)
            pieces.append((2.0 * term.coef, ht2, term.omega, "cos"))
            for om in (term.omega + 1.0, term.omega - 1.0):
                pieces.append((-term.coef, ht2, om, "cos"))
        return self._integrate(full, pieces)


def weighted_l2_oracle(pattern: PointPattern, weight, abs_tol: float = 1e-9,
                       head: float | None = None) -> float:
    """Numerically integrate ``n |phi0 - phihat|^2`` against a product weight.

    ``weight`` supplies the one-dimensional density (see :class:`CauchyWeight`
    and :class:`TriangularWeight`).  The domain is truncated to ``[-T, T]^D``
    with the discarded weight mass below ``abs_tol / 10``.
    """
    pts = pattern.points
    n, dim = pts.shape
    if dim > 2:
        raise ValueError("the quadrature oracle supports D <= 2")
    # 1 - (1 - m)^D < abs_tol/10  <=>  m < 1 - (1 - abs_tol/10)^(1/D)
    mass = -np.expm1(np.log1p(-abs_tol / 10.0) / dim)
    T = weight.cutoff(mass)
    if head is None:
        head = 8.0 * getattr(weight, "rho", 1.0) + 16.0
    one = _OneDim(weight, T, head)

    pair_cache: dict[float, float] = {}

    def pair(a: float) -> float:
        a = abs(float(a))
        if a not in pair_cache:
            pair_cache[a] = one.pair(a)
        return pair_cache[a]

    pair_sum = float(n) * pair(0.0) ** dim
    for j in range(n):
        for k in range(j + 1, n):
            pair_sum += 2.0 * np.prod([pair(pts[j, d] - pts[k, d]) for d in range(dim)])
    cross_sum = sum(np.prod([one.cross(float(pts[j, d])) for d in range(dim)]) for j in range(n))
    null = one.null() ** dim
    value = pair_sum / n - 2.0 * cross_sum + n * null
    # every one-dimensional factor is at most 1 in modulus, so the error of
    # each of the ~4n summed products is bounded by dim times the worst
    # one-dimensional error estimate
    achieved = 4.0 * n * dim * one.max_err
    if achieved > abs_tol:
        raise OracleError(
            f"oracle quadrature error estimate {achieved:.3g} exceeds abs_tol {abs_tol:.3g}"
        )
    return float(value)


def cf_statistic_oracle(pattern: PointPattern, rho: float, abs_tol: float = 1e-9) -> float:
    """Quadrature oracle for :func:`cf_statistic` (D <= 2)."""
    return weighted_l2_oracle(pattern, CauchyWeight(_check_rho(rho)), abs_tol)
