"""Eigenvalues of the null covariance operator for the Cauchy weight.

Under CSR the CF statistic converges to ``sum_j lambda_j Z_j^2`` where the
``lambda_j`` are the eigenvalues of the integral operator with kernel

    prod_d [xi(x_d - y_d) - E xi(x_d - Y) - E xi(X - y_d) + alpha],  xi(a) = e^{-rho|a|}.

In one dimension the operator splits into two infinite matrices ``A1`` (even
part) and ``A2`` (odd part) whose eigenvalues are ``lambda = 2 rho/(tau^2 +
rho^2)`` with ``tau`` the roots of

    A1:  tau sin(tau/2) - rho cos(tau/2) = 0,  tau in ((2k-2) pi, (2k-1) pi)
    A2:  rho sin(tau/2) + tau cos(tau/2) = 0,  tau in ((2k-1) pi, 2k pi).

In D dimensions the spectrum is every product of D one-dimensional
eigenvalues that involves at least one ``A2`` factor (ordered tuples, so a
product built from d ``A2`` factors carries the binomial multiplicity), plus
the spectrum of ``S``, the compression of ``A1^{(x)D}`` that removes the
constant direction.  Each eigenvalue ``mu_k`` of ``S`` lies between two
consecutive distinct products ``nu_{k+1} < mu_k < nu_k`` of ``A1``
eigenvalues and solves the rank-two secular equation.

The rank-two equation collapses: with ``A = alpha^D`` and
``F_l(mu) = sum_j nu_j^l zeta_j^2 / (nu_j - mu)``, the identities
``sum zeta^2 = A`` and ``sum nu zeta^2 = A^2`` give ``F_1 = A + mu F_0`` and
``F_2 = A^2 + mu A + mu^2 F_0``, and the left side of the equation reduces to
``-mu F_0(mu) / A``.  So ``mu_k`` is the unique zero of the increasing
function ``F_0`` on ``(nu_{k+1}, nu_k)``.  ``F_0`` is evaluated through a
closed form of the resolvent entry ``[(A1 - x)^{-1}]_{11}`` in one dimension
and a recursion over one coordinate for D > 1.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import bernoulli, digamma, zeta

from .null_moments import cauchy_alpha, limiting_variance, null_mean

__all__ = [
    "GMoments",
    "NullSpectrum",
    "OneDimSpectra",
    "SecularResult",
    "SpectrumTruncationError",
    "a1_resolvent",
    "build_spectrum",
    "eigvals_s",
    "g_moments",
    "load_spectrum",
    "one_dim_spectra",
    "roots_a1",
    "roots_a2",
]


class SpectrumTruncationError(RuntimeError):
    """The requested truncation cannot be met with the given settings."""


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0.0 and np.isfinite(rho)):
        raise ValueError(f"rho must be positive and finite, got {rho}")
    return rho


# ---------------------------------------------------------------------------
# One-dimensional roots
# ---------------------------------------------------------------------------


def _solve_theta(rho: float, offset: np.ndarray) -> np.ndarray:
    """Solve ``(c + 2 theta) sin(theta) = rho cos(theta)`` for theta in (0, pi/2).

    Both root families reduce to this form with ``tau = c + 2 theta``: the
    ``A1`` family has ``c = 2(k-1) pi`` and the ``A2`` family ``c = (2k-1) pi``
    (after shifting ``tau / 2`` by a multiple of ``pi / 2``).  The left side
    minus the right side is increasing in theta, negative at 0 and positive
    at pi/2, so Halley's method is safeguarded by the sign bracket and falls
    back to bisection whenever a step leaves it.
    """
    c = np.asarray(offset, dtype=float)
    lo = np.zeros_like(c)
    hi = np.full_like(c, np.pi / 2)
    theta = np.arctan(rho / (c + 1.0 + rho / (np.pi / 2)))
    active = np.ones(c.shape, dtype=bool)
    for _ in range(100):
        if not active.any():
            break
        th = theta[active]
        cc = c[active]
        s, co = np.sin(th), np.cos(th)
        tau = cc + 2.0 * th
        g = tau * s - rho * co
        g1 = (2.0 + rho) * s + tau * co
        g2 = (4.0 + rho) * co - tau * s
        neg = g < 0
        lo_a = np.where(neg, th, lo[active])
        hi_a = np.where(neg, hi[active], th)
        newton = g / g1
        denom = 1.0 - 0.5 * newton * g2 / g1
        step = np.where(np.abs(denom) > 0.1, newton / denom, newton)
        new = th - step
        outside = ~((new > lo_a) & (new < hi_a))
        new = np.where(outside, 0.5 * (lo_a + hi_a), new)
        # an exact zero collapses the bracket onto th, so keep th as the root
        exact = g == 0.0
        new = np.where(exact, th, new)
        done = (np.abs(new - th) <= 4e-16 * np.maximum(th, 1e-300)) | exact
        theta[active] = new
        lo[active] = lo_a
        hi[active] = hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return theta


def roots_a1(rho: float, J: int) -> np.ndarray:
    """First ``J`` roots of ``tau sin(tau/2) - rho cos(tau/2)``, one per ((2k-2)pi, (2k-1)pi)."""
    rho = _check_rho(rho)
    if J < 1:
        raise ValueError("J must be at least 1")
    c = 2.0 * np.pi * np.arange(J)
    return c + 2.0 * _solve_theta(rho, c)


def roots_a2(rho: float, J: int) -> np.ndarray:
    """First ``J`` roots of ``rho sin(tau/2) + tau cos(tau/2)``, one per ((2k-1)pi, 2k pi)."""
    rho = _check_rho(rho)
    if J < 1:
        raise ValueError("J must be at least 1")
    c = np.pi * (2.0 * np.arange(J) + 1.0)
    return c + 2.0 * _solve_theta(rho, c)


def _lambda_from_tau(tau: np.ndarray, rho: float) -> np.ndarray:
    return 2.0 * rho / (tau * tau + rho * rho)


@dataclass(frozen=True, eq=False)
class OneDimSpectra:
    """Eigenvalues of ``A1`` and ``A2`` (decreasing) with the ``A1`` weights.

    ``zeta_sq[k] = alpha q_k[0]^2`` where ``q_k`` is the unit eigenvector of
    ``A1`` for ``lambda_a1[k]``; these weights sum to ``alpha``.
    """

    rho: float
    tau_a1: np.ndarray
    tau_a2: np.ndarray
    lambda_a1: np.ndarray
    lambda_a2: np.ndarray
    zeta_sq: np.ndarray

    @property
    def J(self) -> int:
        return int(self.tau_a1.shape[0])

    @property
    def alpha(self) -> float:
        return cauchy_alpha(self.rho)


def _zeta_sq(lam: np.ndarray, tau: np.ndarray, rho: float, alpha: float) -> np.ndarray:
    # 2 - lambda rho = 2 tau^2 / (tau^2 + rho^2), written without cancellation
    two_minus = 2.0 * tau * tau / (tau * tau + rho * rho)
    return 4.0 * alpha * lam * lam / ((lam + 1.0) * two_minus)


def one_dim_spectra(rho: float, J: int) -> OneDimSpectra:
    rho = _check_rho(rho)
    t1 = roots_a1(rho, J)
    t2 = roots_a2(rho, J)
    l1 = _lambda_from_tau(t1, rho)
    l2 = _lambda_from_tau(t2, rho)
    z = _zeta_sq(l1, t1, rho, cauchy_alpha(rho))
    for arr in (t1, t2, l1, l2, z):
        arr.setflags(write=False)
    return OneDimSpectra(rho, t1, t2, l1, l2, z)


def root_count_for(rho: float, floor: float) -> int:
    """Number of roots per family so that the last ``A1`` eigenvalue is below ``floor``."""
    # lambda_k < 2 rho / ((2 pi (k-1))^2 + rho^2)
    if floor >= 2.0 / rho:
        return 8
    k = 1 + math.sqrt(max(2.0 * rho / floor - rho * rho, 0.0)) / (2.0 * np.pi)
    return int(math.ceil(k)) + 8


# ---------------------------------------------------------------------------
# G_m sums and (A1^m)_{11}
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GMoments:
    """``G_m = sum_j u_j^m`` for m = 2..5 and ``(A1^m)_{11}`` for m = 0..5."""

    rho: float
    G: dict
    a1_power: tuple

    @property
    def beta(self) -> float:
        return math.sqrt(2.0) * -math.expm1(-self.rho) / self.rho

    @property
    def gamma(self) -> float:
        return -math.expm1(-self.rho)


_G_SERIES_CUTOFF = 4.0


def _g_series(m: int, rho: float) -> float:
    """``G_m`` from the binomial expansion in ``(rho / 2 pi)^2``; converges for rho < 2 pi."""
    total = 0.0
    q = (rho / (2.0 * np.pi)) ** 2
    coef = 1.0  # C(m + s - 1, s)
    term_scale = (2.0 * rho) ** m / (2.0 * np.pi) ** (2 * m)
    for s in range(400):
        if s > 0:
            coef *= (m + s - 1) / s
        term = coef * (-q) ** s * float(zeta(2 * m + 2 * s))
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return term_scale * total


def _g_closed(m: int, rho: float) -> float:
    E = math.exp(-rho)
    om = -math.expm1(-rho)  # 1 - E
    if m == 2:
        return (2.0 * E * rho**2 / om**2 + rho * (1.0 + E) / om - 4.0) / (2.0 * rho**2)
    if m == 3:
        coth_half = (1.0 + E) / om
        return (
            rho**3 * coth_half * 2.0 * E / om**2
            + 6.0 * rho**2 * E / om**2
            + 3.0 * rho * (1.0 + E) / om
            - 16.0
        ) / (4.0 * rho**3)
    if m == 4:
        E2, E3, E4 = E * E, E**3, E**4
        num = (
            (2.0 * rho**4 - 15.0 * rho**2 - 144.0) * E2
            + 1.5 * rho * (2.0 * rho**2 - 5.0) * (E - E3)
            + 3.75 * rho * (1.0 - E4)
            + 0.5 * (rho**4 + 15.0 * rho**2 + 192.0) * (E + E3)
            - 24.0 * (1.0 + E4)
        )
        return num / (3.0 * om**4 * rho**4)
    if m == 5:
        h = math.exp(-rho / 2.0)
        h2, h4, h6, h8, h10 = h**2, h**4, h**6, h**8, h**10
        s1 = 0.5 * (h4 - h6)  # e^{-5rho/2} sinh(rho/2)
        s2 = 0.25 * (h2 + h6 - h4 - h8)  # e^{-5rho/2} sinh(rho/2) cosh(rho)
        c1 = 0.5 * (h4 + h6)
        c3 = 0.5 * (h2 + h8)
        c5 = 0.5 * (1.0 + h10)
        bracket = (
            20.0 * rho * (4.0 * rho**2 * s1 + (2.0 * rho**2 + 21.0) * s2 - 21.0 * s1)
            + (22.0 * rho**4 - 90.0 * rho**2 + 210.0) * c1
            + (2.0 * rho**4 + 90.0 * rho**2 - 315.0) * c3
            + 105.0 * c5
        )
        return -16.0 / rho**5 + bracket / (24.0 * rho**4 * om**5)
    raise ValueError("closed forms are available for m = 2..5")


def g_sum(m: int, rho: float) -> float:
    """``G_m(rho) = sum_{j>=1} (2 rho / ((2 pi j)^2 + rho^2))^m`` for m = 2..5."""
    rho = _check_rho(rho)
    if rho < _G_SERIES_CUTOFF:
        return _g_series(m, rho)
    return _g_closed(m, rho)


def _a1_powers(alpha: float, beta: float, gamma: float, G: dict) -> tuple:
    a, b, g = alpha, beta, gamma
    G2, G3, G4, G5 = G[2], G[3], G[4], G[5]
    b2, b4 = b * b, b**4
    p0 = 1.0
    p1 = a
    p2 = a**2 + b2 * G2
    p3 = a**3 + 2 * a * b2 * G2 - b2 * g * G2**2 + b2 * G3
    p4 = (
        a**4 + 3 * a**2 * b2 * G2 - 2 * a * b2 * g * G2**2 + 2 * a * b2 * G3 + b4 * G2**2
        + b2 * g**2 * G2**3 - 2 * b2 * g * G2 * G3 + b2 * G4
    )
    p5 = (
        a**5 + 4 * a**3 * b2 * G2 - 3 * a**2 * b2 * g * G2**2 + 3 * a * b4 * G2**2
        + 2 * a * b2 * g**2 * G2**3 - 2 * b4 * g * G2**3
        + 3 * a**2 * b2 * G3 - 4 * a * b2 * g * G2 * G3 + 2 * b4 * G2 * G3
        - b2 * g**3 * G2**4 + 3 * b2 * g**2 * G2**2 * G3
        + 2 * a * b2 * G4 - 2 * b2 * g * G2 * G4 - b2 * g * G3**2 + b2 * G5
    )
    return (p0, p1, p2, p3, p4, p5)


def g_moments(rho: float) -> GMoments:
    """Closed forms of ``G_2..G_5`` and ``(A1^m)_{11}``, m = 0..5."""
    rho = _check_rho(rho)
    G = {m: g_sum(m, rho) for m in range(2, 6)}
    beta = math.sqrt(2.0) * -math.expm1(-rho) / rho
    gamma = -math.expm1(-rho)
    return GMoments(rho, G, _a1_powers(cauchy_alpha(rho), beta, gamma, G))


# ---------------------------------------------------------------------------
# Closed-form resolvent of A1
#
# A1 = [[alpha, -beta u^T], [-beta u, diag(u) - gamma u u^T]] with
# u_j = 2 rho / ((2 pi j)^2 + rho^2).  Two Schur complements give
#
#   [(A1 - x)^{-1}]_{11} = N / ((2/rho - x) N - 2 gamma / rho^2),  N = 1 - gamma sigma(x),
#
# where sigma(x) = sum_j u_j^2 / (u_j - x) = coth(rho/2)/2 - 1/rho - rho g(y),
# y = 2 rho / x - rho^2 and g(y) = (1 - (sqrt(y)/2) cot(sqrt(y)/2)) / y.
# ---------------------------------------------------------------------------

_B = bernoulli(44)
# g(y) = sum_{n>=1} (-1)^{n+1} B_{2n} y^{n-1} / (2n)!
_G_COEF = np.array([(-1) ** (n + 1) * _B[2 * n] / math.factorial(2 * n) for n in range(1, 21)])
_G_DCOEF = np.array([(n - 1) * c for n, c in zip(range(2, 21), _G_COEF[1:])])
_Y_SERIES = 0.5


def _horner(coef: np.ndarray, y: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(y)
    for c in coef[::-1]:
        acc = acc * y + c
    return acc


def _g_and_dg(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.empty_like(y)
    dg = np.empty_like(y)
    small = np.abs(y) < _Y_SERIES
    if small.any():
        ys = y[small]
        g[small] = _horner(_G_COEF, ys)
        dg[small] = _horner(_G_DCOEF, ys)
    pos = (~small) & (y > 0)
    if pos.any():
        yp = y[pos]
        half = 0.5 * np.sqrt(yp)
        tn = np.tan(half)
        c = half / tn
        # dc/dy = (cot(h)/2 - h csc^2(h)/2) / (2 * 2h) with h = sqrt(y)/2
        dc = (1.0 / tn - half / np.sin(half) ** 2) / (8.0 * half)
        g[pos] = (1.0 - c) / yp
        dg[pos] = -dc / yp - (1.0 - c) / yp**2
    neg = (~small) & (y < 0)
    if neg.any():
        yn = y[neg]
        half = 0.5 * np.sqrt(-yn)
        th = np.tanh(half)
        c = half / th
        # d/dy of h coth(h) with h = sqrt(-y)/2, dh/dy = -1/(8h)
        dc = -(1.0 / th - half / np.sinh(half) ** 2) / (8.0 * half)
        g[neg] = (1.0 - c) / yn
        dg[neg] = -dc / yn - (1.0 - c) / yn**2
    return g, dg


def a1_resolvent(x, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """``R(x) = [(A1 - x I)^{-1}]_{11}`` and ``R'(x)`` for ``x > 0``."""
    rho = _check_rho(rho)
    x = np.asarray(x, dtype=float)
    y = 2.0 * rho / x - rho * rho
    g, dg = _g_and_dg(np.atleast_1d(y).astype(float))
    g = g.reshape(x.shape)
    dg = dg.reshape(x.shape)
    gamma = -math.expm1(-rho)
    e = math.exp(-rho)
    half_coth = 0.5 * (1.0 + e) / (-math.expm1(-rho))
    sigma = half_coth - 1.0 / rho - rho * g
    # dy/dx = -2 rho / x^2
    dsigma = 2.0 * rho * rho * dg / (x * x)
    N = 1.0 - gamma * sigma
    w2 = 2.0 / (rho * rho)
    den = (2.0 / rho - x) * N - gamma * w2
    R = N / den
    dR = (N * N + gamma * gamma * w2 * dsigma) / (den * den)
    return R, dR


# ---------------------------------------------------------------------------
# Products of one-dimensional eigenvalues
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Products:
    """Distinct multisets of one-dimensional eigenvalues with value >= threshold.

    ``mult`` counts orderings of the multiset.  ``pure`` marks multisets made
    of ``A1`` eigenvalues only; ``zeta_sq`` is the product of their weights.
    """

    value: np.ndarray
    mult: np.ndarray
    pure: np.ndarray
    zeta_sq: np.ndarray


def _enumerate_products(spectra: OneDimSpectra, dim: int, threshold: float,
                        max_entries: int) -> _Products:
    lam = np.concatenate([spectra.lambda_a1, spectra.lambda_a2])
    fam_a1 = np.concatenate([np.ones(spectra.J, bool), np.zeros(spectra.J, bool)])
    wz = np.concatenate([spectra.zeta_sq, np.zeros(spectra.J)])
    order = np.argsort(-lam, kind="stable")
    lam, fam_a1, wz = lam[order], fam_a1[order], wz[order]
    neg_lam = -lam  # increasing, for searchsorted

    val = np.ones(1)
    last = np.zeros(1, dtype=np.int64)
    run = np.zeros(1, dtype=np.int64)
    denom = np.ones(1)
    pure = np.ones(1, dtype=bool)
    zsq = np.ones(1)
    for level in range(dim):
        remaining = dim - level
        # a completion using index j and later (smaller) eigenvalues needs
        # val * lam_j^remaining >= threshold
        need = (threshold / val) ** (1.0 / remaining)
        stop = np.searchsorted(neg_lam, -need, side="right")
        counts = np.maximum(stop - last, 0)
        total = int(counts.sum())
        if total > max_entries:
            raise SpectrumTruncationError(
                f"{total} eigenvalue products exceed max_entries={max_entries}; "
                "raise max_entries or the relative cutoff"
            )
        parent = np.repeat(np.arange(val.shape[0]), counts)
        starts = np.repeat(last - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
        j = np.arange(total, dtype=np.int64) + starts
        same = j == last[parent]
        new_run = np.where(same & (level > 0), run[parent] + 1, 1)
        denom = denom[parent] * new_run
        run = new_run
        val = val[parent] * lam[j]
        pure = pure[parent] & fam_a1[j]
        zsq = zsq[parent] * wz[j]
        last = j
    if spectra.lambda_a1[-1] > 0.5 * threshold / max(spectra.lambda_a1[0], 1e-300) ** (dim - 1) \
            and spectra.lambda_a1[-1] * spectra.lambda_a1[0] ** (dim - 1) >= threshold:
        raise SpectrumTruncationError(
            f"J={spectra.J} roots per family do not reach the cutoff {threshold:.3g}; use a larger J"
        )
    mult = np.rint(math.factorial(dim) / denom).astype(np.int64)
    order = np.argsort(-val, kind="stable")
    return _Products(val[order], mult[order], pure[order], np.where(pure, zsq, 0.0)[order])


# ---------------------------------------------------------------------------
# Secular function F_0 in D dimensions
# ---------------------------------------------------------------------------

_TAYLOR_RATIO = 0.25
# an interval is converged when the last step is below this fraction of the
# distance from the iterate to the nearer pole
_STEP_RTOL = 1e-10
# the closed-form F_0 places its poles to about 1e-12 relative accuracy, so
# steps and residuals are also accepted below these fractions of mu itself
_STEP_FLOOR = 1e-13
_RESID_FLOOR = 1e-11
_TAYLOR_TERMS = 32


class _SecularF0:
    """Evaluate ``F_0(mu) = sum_k zeta_k^2 / (nu_k - mu)`` and its derivative.

    ``nu_k`` runs over all D-fold products of ``A1`` eigenvalues.  In one
    dimension ``F_0 = alpha R(mu)``.  For D > 1 one coordinate is summed
    explicitly,

        F_0^(D)(mu) = sum_j (zeta_j^2 / lambda_j) F_0^(D-1)(mu / lambda_j),

    over the ``j`` with ``lambda_1 lambda_j / mu`` above a fixed ratio; the
    remaining ``j`` are summed through the Taylor expansion of the inner
    function, ``F_0^(D-1)(x) = -sum_r M_r^(D-1) / x^(r+1)`` with
    ``M_r = sum_k lambda_k^r zeta_k^2 = alpha (A1^r)_{11}``.
    """

    def __init__(self, spectra: OneDimSpectra):
        self.rho = spectra.rho
        self.alpha = spectra.alpha
        self.lam = np.asarray(spectra.lambda_a1)
        self.z2 = np.asarray(spectra.zeta_sq)
        r = np.arange(_TAYLOR_TERMS)
        # terms lambda_j^r zeta_j^2, summed from the end for accurate suffixes
        powers = self.lam[None, :] ** r[:, None] * self.z2[None, :]
        suffix = np.cumsum(powers[:, ::-1], axis=1)[:, ::-1]
        # beyond the last root: zeta^2 ~ 2 alpha lambda^2, lambda ~ rho / (2 pi^2 (k-1)^2)
        J = self.lam.shape[0]
        scale = self.rho / (2.0 * np.pi**2)
        beyond = 2.0 * self.alpha * scale ** (r + 2) * zeta(2.0 * (r + 2), J)
        self.suffix = np.concatenate([suffix, np.zeros((_TAYLOR_TERMS, 1))], axis=1) + beyond[:, None]
        moments = suffix[:, 0] + beyond
        gm = g_moments(self.rho)
        moments[:6] = self.alpha * np.asarray(gm.a1_power)
        self.moments = moments

    def tail_index(self, mu_min: float, depth: int) -> int:
        """Explicit outer terms needed so the Taylor remainder converges fast."""
        inner_max = self.lam[0] ** (depth - 1)
        cut = _TAYLOR_RATIO * mu_min / inner_max
        j = int(np.searchsorted(-self.lam, -cut, side="right"))
        if j >= self.lam.shape[0]:
            raise SpectrumTruncationError("one-dimensional roots exhausted in the secular tail")
        return j

    def __call__(self, mu: np.ndarray, dim: int, j_outer: int | None = None):
        mu = np.asarray(mu, dtype=float)
        if dim == 1:
            R, dR = a1_resolvent(mu, self.rho)
            return self.alpha * R, self.alpha * dR
        if j_outer is None:
            j_outer = self.tail_index(float(np.min(mu)), dim)
        lam = self.lam[:j_outer]
        x = mu[..., None] / lam
        inner, dinner = self(x.reshape(-1), dim - 1)
        inner = inner.reshape(x.shape)
        dinner = dinner.reshape(x.shape)
        F = inner @ (self.z2[:j_outer] / lam)
        dF = dinner @ (self.z2[:j_outer] / lam**2)
        Mi = self.moments ** (dim - 1)
        T = self.suffix[:, j_outer]
        r = np.arange(_TAYLOR_TERMS)
        inv = 1.0 / mu[..., None]
        powers = inv ** (r + 1)
        F = F - (powers * (Mi * T)).sum(axis=-1)
        dF = dF + (powers * inv * ((r + 1) * Mi * T)).sum(axis=-1)
        return F, dF


# ---------------------------------------------------------------------------
# Secular solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SecularResult:
    """Eigenvalues of ``S`` resolved against the distinct products ``nu``.

    ``mu[k]`` lies in ``[nu[k+1], nu[k]]``; only the first ``n_solved``
    intervals are solved, deeper ones use ``mu_k = nu_{k+1}``.
    """

    nu: np.ndarray
    nu_mult: np.ndarray
    nu_weight: np.ndarray
    mu: np.ndarray
    n_solved: int
    alpha_d: float
    flags: dict = field(default_factory=dict)

    def trace_gap(self) -> float:
        """``sum_k (nu_k - mu_k)`` with the unsolved tail telescoped."""
        k = self.n_solved
        tail = self.nu[k] if k < self.nu.shape[0] else 0.0
        return float(np.sum(self.nu[:k] - self.mu[:k]) + tail)

    def square_gap(self) -> float:
        """``sum_k (nu_k^2 - mu_k^2)`` with the unsolved tail telescoped."""
        k = self.n_solved
        tail = self.nu[k] ** 2 if k < self.nu.shape[0] else 0.0
        return float(np.sum(self.nu[:k] ** 2 - self.mu[:k] ** 2) + tail)


def _pick_root(qa, qb, qc, gap):
    """Root of ``qa d^2 + qb d + qc`` in (0, gap) nearest 0, NaN if none."""
    disc = qb * qb - 4.0 * qa * qc
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    q = -0.5 * (qb + np.copysign(sq, qb))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(qa != 0.0, q / qa, np.nan)
        r2 = np.where(q != 0.0, qc / q, np.nan)
    r1 = np.where(ok, r1, np.nan)
    r2 = np.where(ok, r2, np.nan)
    in1 = (r1 > 0.0) & (r1 < gap)
    in2 = (r2 > 0.0) & (r2 < gap)
    both = in1 & in2
    out = np.where(in1, r1, np.where(in2, r2, np.nan))
    return np.where(both, np.minimum(r1, r2), out)


def _quadratic_iteration(U, L, wU, wL, A, f0: Callable, max_iter: int = 20):
    """Solve ``F_0(mu) = 0`` on (L, U) by the fixed-weight quadratic approximation.

    ``F_l`` is modelled near the current iterate as
    ``a_l / (U - mu) + b_l + wL L^l / (L - mu)`` with ``log a_l`` linear in
    ``l`` (least-squares fit to the three exact derivative matches), which
    turns the secular equation into a quadratic in ``delta = mu - L``.
    """
    gap = U - L
    mu = L + 0.1 * gap
    lo, hi = L.copy(), U.copy()
    active = gap > 4.0 * np.finfo(float).eps * U
    mu = np.where(active, mu, L)
    no_root = np.zeros(U.shape, dtype=bool)
    n_bisect = 0
    A2 = A * A
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        m = mu[idx]
        Ui, Li, wl, g = U[idx], L[idx], wL[idx], gap[idx]
        F0, dF0 = f0(m, idx)
        below = F0 < 0.0  # F_0 increases through its zero
        lo[idx] = np.where(below, m, lo[idx])
        hi[idx] = np.where(below, hi[idx], m)
        # an iterate whose Newton correction is already negligible is done;
        # near a pole the model coefficients are dominated by cancellation
        room0 = np.minimum(m - Li, Ui - m)
        done_now = np.abs(F0) <= np.maximum(1e-2 * _STEP_RTOL * room0, _STEP_FLOOR * m) * np.abs(dF0)
        if done_now.any():
            active[idx[done_now]] = False
            keep = ~done_now
            idx, m, Ui, Li, wl, g = idx[keep], m[keep], Ui[keep], Li[keep], wl[keep], g[keep]
            F0, dF0 = F0[keep], dF0[keep]
            if idx.size == 0:
                break
        F1 = A + m * F0
        F2 = A2 + m * A + m * m * F0
        dF1 = F0 + m * dF0
        dF2 = A + 2.0 * m * F0 + m * m * dF0
        d = Ui - m
        e = Li - m
        d2, e2 = d * d, e * e
        at0 = d2 * (dF0 - wl / e2)
        at1 = d2 * (dF1 - wl * Li / e2)
        at2 = d2 * (dF2 - wl * Li * Li / e2)
        bad = (at0 <= 0) | (at1 <= 0) | (at2 <= 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            l0, l1, l2 = np.log(at0), np.log(at1), np.log(at2)
            a0 = np.exp((5.0 * l0 + 2.0 * l1 - l2) / 6.0)
            a1 = np.exp((l0 + l1 + l2) / 3.0)
            a2 = np.exp((-l0 + 2.0 * l1 + 5.0 * l2) / 6.0)
            b0 = F0 - a0 / d - wl / e
            b1 = F1 - a1 / d - wl * Li / e
            b2 = F2 - a2 / d - wl * Li * Li / e
            s1 = 2 * a1 * b1 - a0 * b2 - a2 * b0 - 2 * a1 * A + a0 * A2
            s2 = b1 * b1 - b0 * b2 - 2 * b1 * A + (b0 + 1.0) * A2
            s3 = a0 * Li * Li - 2 * a1 * Li + a2
            s4 = b0 * Li * Li - 2 * b1 * Li + b2 - A2 + 2 * A * Li
            qa = s2
            qb = -s2 * g - s1 + wl * s4
            qc = -wl * s4 * g - wl * s3
            delta = _pick_root(qa, qb, qc, g)
        new = Li + delta
        missing = ~bad & ~np.isfinite(new)
        # no in-interval root: the approximation is replaced by the lower pole
        no_root[idx[missing]] = True
        new = np.where(missing, Li, new)
        change = np.abs(new - m)
        room = np.minimum(m - Li, Ui - m)
        tol = np.maximum(_STEP_RTOL * room, _STEP_FLOOR * m)
        small = ~bad & ~missing & (change <= tol)
        # when the fit fails, model F_0 as a constant plus the nearer pole
        near_low = (m - Li) <= (Ui - m)
        with np.errstate(invalid="ignore", divide="ignore"):
            c_low = F0 - wl / (Li - m)
            c_up = F0 - wU[idx] / (Ui - m)
            one_pole = np.where(near_low, Li + wl / c_low, Ui + wU[idx] / c_up)
        new = np.where(bad, one_pole, new)
        inside_bracket = (new >= lo[idx]) & (new <= hi[idx]) & np.isfinite(new)
        step_bad = ~missing & ~small & ~inside_bracket
        n_bisect += int(step_bad.sum())
        new = np.where(step_bad, 0.5 * (lo[idx] + hi[idx]), new)
        converged = missing | small
        mu[idx] = new
        active[idx[converged]] = False
    return mu, no_root, int(active.sum()), n_bisect


def _pole_free(f0: Callable, U: float, L: float, wU: float, wL: float, k: int):
    """``H(mu) = F_0(mu) (U - mu)(mu - L)``: continuous, -wL gap at L, +wU gap at U."""
    gap = U - L

    def H(m):
        if m <= L:
            return -wL * gap
        if m >= U:
            return wU * gap
        F0, _ = f0(np.array([m]), np.array([k]))
        return float(F0[0]) * (U - m) * (m - L)

    return H


def solve_secular(nu: np.ndarray, weight: np.ndarray, A: float, f0_factory,
                  depth_tol: float = 1e-11, max_solved: int | None = None,
                  block: int = 256) -> tuple[np.ndarray, int, dict]:
    """Solve the secular intervals ``(nu[k+1], nu[k])`` in decreasing order.

    ``weight[k]`` is the pole weight ``C_k zeta_k^2``.  Blocks are solved until
    a block's total ``sum (mu_k - nu_{k+1})`` drops below ``depth_tol * A``
    or ``max_solved`` intervals are done.  Returns ``mu`` for the solved
    intervals, their count and diagnostic counters.
    """
    n_int = nu.shape[0] - 1
    limit = n_int if max_solved is None else min(n_int, max_solved)
    mu_all = np.empty(limit)
    flags = {"no_root": 0, "bisection_steps": 0, "unconverged": 0, "bracketed_fallback": 0,
             "clamped": 0}
    k0 = 0
    while k0 < limit:
        k1 = min(k0 + block, limit)
        U, L = nu[k0:k1], nu[k0 + 1:k1 + 1]
        wU, wL = weight[k0:k1], weight[k0 + 1:k1 + 1]
        f0 = f0_factory(float(L.min()))

        def f0_idx(m, idx, f0=f0):
            return f0(m)

        mu, no_root, unconverged, n_bis = _quadratic_iteration(U, L, wU, wL, A, f0_idx)
        flags["no_root"] += int(no_root.sum())
        flags["bisection_steps"] += n_bis
        flags["unconverged"] += unconverged
        # residual check: the Newton correction at mu must be negligible
        # relative to the distance to the nearer pole
        inside = (mu > L) & (mu < U)
        resid = np.full(mu.shape, np.inf)
        if inside.any():
            F0, dF0 = f0(mu[inside])
            room = np.minimum(mu[inside] - L[inside], U[inside] - mu[inside])
            step = np.abs(F0 / dF0)
            resid[inside] = np.where(step <= _RESID_FLOOR * mu[inside], 0.0, step / room)
        tiny_gap = (U - L) <= 4.0 * np.finfo(float).eps * U
        redo = np.flatnonzero((resid > 1e-8) & ~tiny_gap)
        for i in redo:
            H = _pole_free(lambda m, idx, f0=f0: f0(m), float(U[i]), float(L[i]), float(wU[i]),
                           float(wL[i]), i)
            try:
                mu[i] = brentq(H, float(L[i]), float(U[i]), xtol=1e-15 * float(U[i]), rtol=1e-15,
                               maxiter=200)
                flags["bracketed_fallback"] += 1
            except (ValueError, RuntimeError):
                mu[i] = min(max(mu[i], float(L[i])), float(U[i]))
                flags["clamped"] += 1
        mu_all[k0:k1] = mu
        k0 = k1
        if max_solved is None and np.sum(mu - L) < depth_tol * A:
            break
    return mu_all[:k0], k0, flags


def eigvals_s(rho: float, dim: int, J: int | None = None, rel_cutoff: float = 1e-8,
              depth_tol: float = 1e-11, max_solved: int | None = None,
              max_entries: int = 30_000_000) -> SecularResult:
    """Eigenvalues of ``S`` whose interlacing interval lies above the cutoff.

    The distinct products ``nu`` of ``A1`` eigenvalues down to
    ``rel_cutoff * nu_1`` are enumerated; all intervals are solved for D = 1,
    and for D > 1 intervals are solved until the depth rule of
    :func:`solve_secular` stops.  ``mu_k = nu_{k+1}`` beyond that.
    """
    rho = _check_rho(rho)
    spectra, threshold = _spectra_for(rho, dim, J, rel_cutoff)
    prods = _enumerate_products(spectra, dim, threshold, max_entries)
    return _secular_from_products(spectra, dim, prods, depth_tol, max_solved)


def _spectra_for(rho: float, dim: int, J: int | None, rel_cutoff: float):
    probe = one_dim_spectra(rho, 2)
    top = float(probe.lambda_a1[0])
    threshold = rel_cutoff * top**dim
    floor = _TAYLOR_RATIO * threshold / top ** (dim - 1) / 2.0
    needed = root_count_for(rho, floor)
    if J is None:
        J = needed
    elif J < needed:
        raise SpectrumTruncationError(
            f"J={J} roots per family cannot resolve the cutoff {threshold:.3g}; use J >= {needed}"
        )
    return one_dim_spectra(rho, J), threshold


def _secular_from_products(spectra: OneDimSpectra, dim: int, prods: _Products,
                           depth_tol: float, max_solved: int | None) -> SecularResult:
    pure = prods.pure
    nu = prods.value[pure]
    mult = prods.mult[pure]
    weight = mult * prods.zeta_sq[pure]
    A = spectra.alpha**dim
    F = _SecularF0(spectra)

    def factory(mu_min):
        if dim == 1:
            return lambda m: F(m, 1)
        j_outer = F.tail_index(mu_min, dim)
        return lambda m: F(m, dim, j_outer)

    if dim == 1:
        max_solved = None if max_solved is None else max_solved
        mu, k, flags = solve_secular(nu, weight, A, factory, depth_tol=0.0, max_solved=max_solved,
                                     block=4096)
    else:
        mu, k, flags = solve_secular(nu, weight, A, factory, depth_tol=depth_tol,
                                     max_solved=max_solved)
    for arr in (nu, mult, weight, mu):
        arr.setflags(write=False)
    return SecularResult(nu, mult, weight, mu, k, A, flags)


# ---------------------------------------------------------------------------
# Full null spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NullSpectrum:
    """Stored eigenvalues (decreasing, with multiplicities) and exact tail sums.

    ``sum_all`` is the exact null mean.  ``sum_sq_all`` is the exact sum of
    squared eigenvalues, which is half the limiting variance of the statistic
    because ``var(sum lambda Z^2) = 2 sum lambda^2``.
    """

    dim: int
    rho: float
    values: np.ndarray
    mult: np.ndarray
    sum_all: float
    sum_sq_all: float
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.mult, dtype=np.int64)
        if v.shape != m.shape or v.ndim != 1:
            raise ValueError("values and mult must be 1-d arrays of equal length")
        if v.size and (np.any(v <= 0) or np.any(np.diff(v) > 0)):
            raise ValueError("eigenvalues must be positive and sorted in decreasing order")
        if np.any(m < 1):
            raise ValueError("multiplicities must be positive")
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mult", m)

    @property
    def sum_trunc(self) -> float:
        return float(np.dot(self.values, self.mult))

    @property
    def sum_sq_trunc(self) -> float:
        return float(np.dot(self.values**2, self.mult))

    @property
    def tail_sum(self) -> float:
        return max(self.sum_all - self.sum_trunc, 0.0)

    @property
    def tail_sum_sq(self) -> float:
        return max(self.sum_sq_all - self.sum_sq_trunc, 0.0)

    @property
    def eigs(self) -> list[tuple[float, int]]:
        return list(zip(self.values.tolist(), self.mult.tolist()))

    def expanded(self, limit: int | None = None) -> np.ndarray:
        """Eigenvalues repeated by multiplicity, optionally only the first ``limit``."""
        out = np.repeat(self.values, self.mult)
        return out if limit is None else out[:limit]

    def to_json(self) -> str:
        payload = {
            "dim": self.dim,
            "rho": self.rho,
            "sum_all": self.sum_all,
            "sum_sq_all": self.sum_sq_all,
            "sum_trunc": self.sum_trunc,
            "sum_sq_trunc": self.sum_sq_trunc,
            "eigs": [[float(v), int(m)] for v, m in zip(self.values, self.mult)],
            "info": self.info,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "NullSpectrum":
        data = json.loads(text)
        eigs = np.asarray(data["eigs"], dtype=float).reshape(-1, 2)
        return cls(int(data["dim"]), float(data["rho"]), eigs[:, 0], eigs[:, 1].astype(np.int64),
                   float(data["sum_all"]), float(data["sum_sq_all"]), data.get("info", {}))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def load_spectrum(path: str | os.PathLike) -> NullSpectrum:
    with open(path, encoding="utf-8") as fh:
        return NullSpectrum.from_json(fh.read())


def _merge(values: np.ndarray, mult: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-values, kind="stable")
    v, m = values[order], mult[order]
    # fold exactly equal values (e.g. mu_k = nu_{k+1}) into one entry
    keep = np.concatenate([[True], v[1:] != v[:-1]])
    starts = np.flatnonzero(keep)
    return v[starts], np.add.reduceat(m, starts)


_SPECTRUM_CACHE: dict = {}


def build_spectrum(rho: float, dim: int, J: int | None = None, rel_cutoff: float = 1e-8,
                   coverage: float = 0.999, max_entries: int = 30_000_000,
                   depth_tol: float = 1e-11, max_solved: int | None = None,
                   cache: bool = True) -> NullSpectrum:
    """Null spectrum of the CF statistic for resolution ``rho`` in ``dim`` dimensions.

    Every eigenvalue down to ``rel_cutoff`` times the largest is stored; if
    the stored mass is below ``coverage`` of the null mean the cutoff is
    lowered by factors of 10 until it is reached or ``max_entries`` would be
    exceeded.  ``J`` (roots per one-dimensional family) is chosen
    automatically unless given.
    """
    rho = _check_rho(rho)
    if int(dim) != dim or dim < 1:
        raise ValueError("dim must be a positive integer")
    key = (rho, int(dim), J, rel_cutoff, coverage, max_entries, depth_tol, max_solved)
    if cache and key in _SPECTRUM_CACHE:
        return _SPECTRUM_CACHE[key]
    total = null_mean(rho, dim)
    cutoff = rel_cutoff
    while True:
        spec = _build_once(rho, dim, J, cutoff, max_entries, depth_tol, max_solved)
        if spec.sum_trunc >= coverage * total:
            break
        if J is not None:
            raise SpectrumTruncationError(
                f"stored eigenvalues cover {spec.sum_trunc / total:.5f} of the mean at J={J}; "
                "use a larger J"
            )
        cutoff /= 10.0
        if cutoff < 1e-14:
            raise SpectrumTruncationError("coverage target unreachable")
    if cache:
        _SPECTRUM_CACHE[key] = spec
    return spec


def _build_once(rho, dim, J, rel_cutoff, max_entries, depth_tol, max_solved) -> NullSpectrum:
    spectra, threshold = _spectra_for(rho, dim, J, rel_cutoff)
    prods = _enumerate_products(spectra, dim, threshold, max_entries)
    sec = _secular_from_products(spectra, dim, prods, depth_tol, max_solved)
    k = sec.n_solved
    nu, nu_mult = np.asarray(sec.nu), np.asarray(sec.nu_mult)
    # S: nu_k repeated (C_k - 1) times, one mu per interval; beyond the solved
    # depth mu_k = nu_{k+1}, which restores nu_{k+1} to full multiplicity
    s_mult = nu_mult - 1
    s_mult[k + 1:] += 1
    mixed = ~prods.pure
    values = np.concatenate([nu, np.asarray(sec.mu), prods.value[mixed]])
    mult = np.concatenate([s_mult, np.ones(k, dtype=np.int64), prods.mult[mixed]])
    pos = (mult > 0) & (values > 0)
    values, mult = _merge(values[pos], mult[pos])
    lam_max = float(values[0])
    keep = values >= rel_cutoff * lam_max
    info = {
        "J": spectra.J,
        "rel_cutoff": rel_cutoff,
        "secular_solved": k,
        "secular_intervals": int(max(nu.shape[0] - 1, 0)),
        "secular_flags": sec.flags,
        "trace_gap": sec.trace_gap(),
        "square_gap": sec.square_gap(),
        "alpha_d": sec.alpha_d,
    }
    return NullSpectrum(
        dim=int(dim),
        rho=rho,
        values=values[keep],
        mult=mult[keep],
        sum_all=null_mean(rho, dim),
        sum_sq_all=0.5 * limiting_variance(rho, dim),
        info=info,
    )


def one_dim_trace_tail(rho: float, J: int) -> tuple[float, float]:
    """Asymptotic ``sum`` and ``sum of squares`` of 1-d eigenvalues beyond ``J`` roots per family.

    Past the first few roots ``tau ~ c + 2 rho / c`` with ``c = (m-1) pi``, so
    ``lambda_m ~ 2 rho / (pi^2 (m-1)^2 + rho^2 + 4 rho)``; the sum of that
    rational function from ``m - 1 = 2J`` on is a digamma difference.
    """
    b = math.sqrt(rho * rho + 4.0 * rho) / np.pi
    K = 2 * J
    # sum_{k>=K} 1/(k^2 + b^2) = Im(psi(K + i b)) / b
    s1 = float(np.imag(digamma(K + 1j * b))) / b
    total = 2.0 * rho / np.pi**2 * s1
    sq = (2.0 * rho / np.pi**2) ** 2 * float(zeta(4.0, K))
    return total, sq
