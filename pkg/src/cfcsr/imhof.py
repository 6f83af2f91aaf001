"""Distribution of ``sum_j lambda_j Z_j^2`` by Imhof's inversion integral.

For positive weights ``lambda_j`` the CDF is

    pr(Q <= x) = 1/2 - (1/pi) int_0^inf sin(theta(u) - x u / 2) / (u exp(eta(u))) du,
    theta(u) = 1/2 sum_j arctan(lambda_j u),   eta(u) = 1/4 sum_j log(1 + lambda_j^2 u^2).

A :class:`~cfcsr.spectrum.NullSpectrum` stores every eigenvalue above a
relative cutoff together with the exact totals ``sum lambda`` and
``sum lambda^2``.  For each ``u`` the terms with ``lambda u`` above a small
threshold are summed explicitly; the remaining stored terms enter through
their Taylor series in ``lambda u`` using precomputed power sums; the
eigenvalues below the cutoff enter through first and second order
expansions driven by the exact totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .spectrum import NullSpectrum

__all__ = [
    "ImhofEvaluator",
    "QuadratureError",
    "adjust_quantile",
    "imhof_cdf",
    "imhof_quantile",
    "invert_cdf",
    "lognormal_guess",
    "theta_eta",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")
        self.achieved = achieved


# Stored terms with lambda u below this use the Taylor series.
_SMALL = 1e-2
# Taylor orders: arctan uses x - x^3/3 + ... (5 terms), log1p(x^2) uses
# x^2 - x^4/2 + ... (5 terms); at x < 1e-2 the first omitted term is < 1e-20.
_N_TAYLOR = 5
# Paper's arctan shortcut: reuse the previous evaluation by a first-order
# expansion when the eigenvalue gap times u is below this.
_SHORTCUT_GAP = 1e-3
# ... and only when the second-order error bound is below this.
_SHORTCUT_ERR = 1e-14
# Cut points for the Taylor tail: lambda_1 * 2^(-i/4).
_GRID_STEP = 2.0 ** -0.25
# Oscillations of sin(x u / 2) integrated directly before the Fourier tail.
_MAX_PERIODS = 400


@dataclass(frozen=True, eq=False)
class _Terms:
    """Explicit weights with the power-sum tables for their Taylor tails."""

    values: np.ndarray
    mult: np.ndarray
    cuts: np.ndarray  # indices into values, increasing
    cut_values: np.ndarray  # values[cuts]
    odd: np.ndarray  # odd[i, r] = sum_{k >= cuts[i]} m_k lambda_k^(2r+1)
    even: np.ndarray  # even[i, r] = sum_{k >= cuts[i]} m_k lambda_k^(2r+2)
    rest_sum: float  # mass below the stored eigenvalues
    rest_sq: float

    @classmethod
    def build(cls, values, mult, rest_sum: float, rest_sq: float) -> "_Terms":
        values = np.asarray(values, dtype=float)
        mult = np.asarray(mult, dtype=float)
        if values.size == 0:
            cuts = np.zeros(1, dtype=np.int64)
        else:
            n_grid = int(math.ceil(math.log(values[0] / values[-1]) / -math.log(_GRID_STEP))) + 2
            levels = values[0] * _GRID_STEP ** np.arange(n_grid)
            cuts = np.unique(np.searchsorted(-values, -levels, side="left"))
            cuts = np.concatenate([cuts, [values.size]]) if cuts[-1] != values.size else cuts
        odd = np.zeros((cuts.size, _N_TAYLOR))
        even = np.zeros((cuts.size, _N_TAYLOR))
        if values.size:
            for r in range(_N_TAYLOR):
                w_odd = mult * values ** (2 * r + 1)
                w_even = mult * values ** (2 * r + 2)
                suf_odd = np.concatenate([np.cumsum(w_odd[::-1])[::-1], [0.0]])
                suf_even = np.concatenate([np.cumsum(w_even[::-1])[::-1], [0.0]])
                odd[:, r] = suf_odd[cuts]
                even[:, r] = suf_even[cuts]
        cut_values = np.where(cuts < values.size, values[np.minimum(cuts, max(values.size - 1, 0))], 0.0)
        return cls(values, mult, cuts, cut_values, odd, even, float(rest_sum), float(rest_sq))


def _arctan_sum(x: np.ndarray, m: np.ndarray) -> float:
    """``sum m_j arctan(x_j)`` for decreasing ``x`` with the first-order shortcut.

    A term reuses the exact value at the start of its run when the gap to
    that anchor is below ``_SHORTCUT_GAP`` and the second-order remainder
    ``|arctan''| gap^2 / 2`` is below ``_SHORTCUT_ERR``; ``|arctan''|`` is
    bounded by its value at the smaller argument, which is where it is
    largest on the gap for arguments above 1/sqrt(3).
    """
    if x.size < 2:
        return float(np.dot(m, np.arctan(x)))
    # anchors: runs of width _SHORTCUT_GAP in x
    bucket = np.floor(x / _SHORTCUT_GAP)
    start = np.concatenate([[True], bucket[1:] != bucket[:-1]])
    anchor = np.maximum.accumulate(np.where(start, np.arange(x.size), 0))
    xa = x[anchor]
    gap = x - xa
    d2 = 2.0 * x / (1.0 + x * x) ** 2
    ok = (~start) & (x > 0.6) & (0.5 * d2 * gap * gap <= _SHORTCUT_ERR)
    out = np.empty_like(x)
    exact = ~ok | start
    out[exact] = np.arctan(x[exact])
    idx = np.flatnonzero(ok)
    base = np.arctan(xa[idx])  # anchors are exact
    out[idx] = base + gap[idx] / (1.0 + xa[idx] ** 2)
    return float(np.dot(m, out))


def _theta_eta_terms(u: float, terms: _Terms) -> tuple[float, float]:
    if u <= 0.0:
        return 0.0, 0.0
    # first cut whose eigenvalue times u is below the Taylor threshold
    i = int(np.searchsorted(-terms.cut_values, -_SMALL / u, side="right"))
    i = min(i, terms.cuts.size - 1)
    k = int(terms.cuts[i])
    x = terms.values[:k] * u
    m = terms.mult[:k]
    atan = _arctan_sum(x, m)
    logs = float(np.dot(m, np.log1p(x * x)))
    # Taylor tail over stored terms
    r = np.arange(_N_TAYLOR)
    u_odd = u ** (2 * r + 1)
    u_even = u ** (2 * r + 2)
    atan += float(np.sum((-1.0) ** r * u_odd * terms.odd[i] / (2 * r + 1)))
    logs += float(np.sum((-1.0) ** r * u_even * terms.even[i] / (r + 1)))
    theta = 0.5 * atan + 0.5 * u * terms.rest_sum
    eta = 0.25 * logs + 0.25 * u * u * terms.rest_sq
    return theta, eta


def _rest(spectrum: NullSpectrum) -> tuple[float, float]:
    return spectrum.tail_sum, spectrum.tail_sum_sq


def theta_eta(u, spectrum: NullSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """``theta(u)`` and ``eta(u)`` of the Imhof integrand, with tail corrections."""
    terms = _Terms.build(spectrum.values, spectrum.mult, *_rest(spectrum))
    u = np.asarray(u, dtype=float)
    flat = np.array([_theta_eta_terms(float(v), terms) for v in u.ravel()]).reshape(u.shape + (2,))
    return flat[..., 0], flat[..., 1]


def lognormal_guess(p, mean: float, var: float):
    """Quantile of the log-normal distribution with the given mean and variance."""
    s2 = math.log1p(var / (mean * mean))
    mu = math.log(mean) - 0.5 * s2
    return np.exp(mu + math.sqrt(s2) * stats.norm.ppf(p))


def invert_cdf(cdf, p, mean: float, var: float, tol: float = 1e-5, max_rounds: int = 60):
    """Solve ``cdf(q) = p`` for one or many ``p`` by bracket and solve.

    ``cdf`` must accept an array.  Starting points are log-normal quantiles
    with the given moments; each target is bracketed by stepping outward in
    units of the standard deviation and then refined by a safeguarded secant
    (regula falsi, Illinois variant) until the CDF is within ``tol`` of ``p``.
    All targets are refined together so every round is one vectorized CDF call.
    """
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((ps <= 0.0) | (ps >= 1.0)):
        raise ValueError("p must lie strictly between 0 and 1")
    sd = math.sqrt(var)
    x = np.asarray(lognormal_guess(ps, mean, var), dtype=float)
    fx = cdf(x) - ps
    lo = np.where(fx <= 0, x, np.nan)
    hi = np.where(fx > 0, x, np.nan)
    flo = np.where(fx <= 0, fx, np.nan)
    fhi = np.where(fx > 0, fx, np.nan)
    step = 0.5 * sd
    for _ in range(200):
        need_lo = np.isnan(lo)
        need_hi = np.isnan(hi)
        if not (need_lo.any() or need_hi.any()):
            break
        trial = np.where(need_lo, hi - step, np.where(need_hi, lo + step, x))
        todo = need_lo | need_hi
        ft = cdf(trial[todo]) - ps[todo]
        idx = np.flatnonzero(todo)
        below = ft <= 0
        # a trial on the known side moves that endpoint outward
        for j, val, fval, b in zip(idx, trial[todo], ft, below):
            if b:
                lo[j], flo[j] = val, fval
            else:
                hi[j], fhi[j] = val, fval
        step *= 2.0
    q = np.where(np.abs(flo) <= np.abs(fhi), lo, hi)
    done = np.minimum(np.abs(flo), np.abs(fhi)) <= tol
    side = np.zeros(ps.shape, dtype=int)
    for _ in range(max_rounds):
        if done.all():
            break
        act = np.flatnonzero(~done)
        a, b, fa, fb = lo[act], hi[act], flo[act], fhi[act]
        xm = a - fa * (b - a) / (fb - fa)
        bad = ~((xm > a) & (xm < b)) | ~np.isfinite(xm)
        xm = np.where(bad, 0.5 * (a + b), xm)
        fm = cdf(xm) - ps[act]
        left = fm <= 0
        for j, jj in enumerate(act):
            if left[j]:
                lo[jj], flo[jj] = xm[j], fm[j]
                if side[jj] == -1:
                    fhi[jj] *= 0.5
                side[jj] = -1
            else:
                hi[jj], fhi[jj] = xm[j], fm[j]
                if side[jj] == 1:
                    flo[jj] *= 0.5
                side[jj] = 1
            if abs(fm[j]) <= tol or (hi[jj] - lo[jj]) <= 1e-13 * max(abs(xm[j]), sd):
                q[jj] = xm[j]
                done[jj] = True
    if not done.all():
        raise QuadratureError("quantile inversion did not converge", float(np.max(np.abs(fm))))
    return q if np.ndim(p) else float(q[0])


@dataclass(frozen=True, eq=False)
class ImhofEvaluator:
    """CDF and quantiles of ``sum lambda_j Z_j^2`` for a stored spectrum."""

    spectrum: NullSpectrum
    abs_tol: float = 1e-6
    _terms: _Terms = field(init=False, repr=False)
    _upper: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.abs_tol <= 1e-3):
            raise ValueError("abs_tol must lie in (0, 1e-3]")
        terms = _Terms.build(self.spectrum.values, self.spectrum.mult, *_rest(self.spectrum))
        object.__setattr__(self, "_terms", terms)
        object.__setattr__(self, "_upper", self._find_upper(terms))

    @classmethod
    def from_weights(cls, weights, abs_tol: float = 1e-6) -> "ImhofEvaluator":
        """Evaluator for an explicit finite list of positive weights (no tail)."""
        w = np.sort(np.asarray(weights, dtype=float))[::-1]
        values, counts = np.unique(w, return_counts=True)
        values, counts = values[::-1], counts[::-1]
        spec = NullSpectrum(dim=0, rho=float("nan"), values=values, mult=counts,
                            sum_all=float(np.dot(values, counts)),
                            sum_sq_all=float(np.dot(values**2, counts)))
        return cls(spec, abs_tol)

    @property
    def mean(self) -> float:
        return self.spectrum.sum_all

    @property
    def variance(self) -> float:
        return 2.0 * self.spectrum.sum_sq_all

    def theta_eta(self, u: float) -> tuple[float, float]:
        return _theta_eta_terms(float(u), self._terms)

    def _find_upper(self, terms: _Terms) -> float:
        # integrand envelope is exp(-eta(u)) / u; require the envelope and the
        # remaining integral bound to fall below abs_tol / 10
        target = self.abs_tol / 10.0
        lam1 = float(terms.values[0]) if terms.values.size else 1.0
        u = 1.0 / lam1
        for _ in range(200):
            _, eta = _theta_eta_terms(u, terms)
            if math.exp(-eta) < target and self._tail_bound(u, eta, terms) < target:
                return u
            u *= 2.0
        raise QuadratureError("could not locate the integration cutoff", float("inf"))

    @staticmethod
    def _tail_bound(U: float, eta: float, terms: _Terms) -> float:
        """Bound on ``(1/pi) int_U^inf exp(-eta(u)) / u du``.

        ``exp(-eta)`` decays at least like ``u^{-k/2}`` where ``k`` counts
        eigenvalues with ``lambda U >= 1``: for those ``(1 + lambda^2 u^2)^{1/4}``
        grows at least like ``(u / U)^{1/2}`` past U.  With ``k >= 1`` the
        bound integrates to ``exp(-eta(U)) 2 / (pi k)``.
        """
        k = float(np.sum(terms.mult[terms.values * U >= 1.0]))
        if k < 1:
            return float("inf")
        return math.exp(-eta) * 2.0 / (math.pi * k)

    def _integrand(self, u: float, x: np.ndarray) -> np.ndarray:
        theta, eta = _theta_eta_terms(u, self._terms)
        return np.sin(theta - 0.5 * x * u) / (u * math.exp(eta))

    def cdf(self, x) -> np.ndarray | float:
        """``pr(sum lambda Z^2 <= x)``; vectorized over ``x``."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(xs.shape)
        pos = xs > 0.0
        if pos.any():
            xp = xs[pos]
            # direct integration covers at most _MAX_PERIODS oscillations of
            # sin(x u / 2); past that the slowly varying amplitude is handled
            # by a Fourier-weighted rule
            head = min(self._upper, _MAX_PERIODS * 4.0 * math.pi / float(xp.max()))
            total, err = self._head(xp, head)
            if head < self._upper:
                for j, xv in enumerate(xp):
                    val, e = self._fourier_tail(float(xv), head)
                    total[j] += val
                    err = max(err, e)
            if err > self.abs_tol:
                raise QuadratureError("Imhof integral did not converge", err)
            out[pos] = np.clip(0.5 - total / math.pi, 0.0, 1.0)
        return out if np.ndim(x) else float(out[0])

    def _head(self, xp: np.ndarray, U: float) -> tuple[np.ndarray, float]:
        # break points: a few periods of the fastest oscillation near the
        # origin, then geometric growth to U
        period = 4.0 * math.pi / max(float(xp.max()), 1e-300)
        pts = sorted({p for p in np.geomspace(min(period, U / 2), U, 24)[:-1] if 0 < p < U})
        edges = [0.0] + pts + [U]
        total = np.zeros(xp.shape)
        err = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, e = integrate.quad_vec(lambda u: self._integrand(u, xp), a, b,
                                        epsabs=self.abs_tol / (10.0 * len(edges)),
                                        epsrel=0.0, limit=2000)
            total += val
            err += float(np.max(np.abs(e))) if np.ndim(e) else float(e)
        return total, err

    def _fourier_tail(self, x: float, start: float) -> tuple[float, float]:
        """``int_start^inf sin(theta(u) - x u/2) exp(-eta(u)) / u du``.

        Expanding the sine gives ``sin(theta) cos(x u/2) - cos(theta) sin(x u/2)``
        with amplitudes that vary slowly once every ``lambda u`` is large.
        """
        def amp(u, trig):
            theta, eta = _theta_eta_terms(u, self._terms)
            return trig(theta) * math.exp(-eta) / u

        opts = dict(weight="cos", wvar=0.5 * x, limlst=200, full_output=1)
        c = integrate.quad(amp, start, np.inf, args=(math.sin,), **opts)
        opts["weight"] = "sin"
        s = integrate.quad(amp, start, np.inf, args=(math.cos,), **opts)
        return c[0] - s[0], c[1] + s[1]

    def quantile(self, p, tol: float = 1e-5):
        """Invert :meth:`cdf`; ``p`` may be a scalar or an array."""
        return invert_cdf(self.cdf, p, self.mean, self.variance, tol=tol)


def imhof_cdf(x, evaluator: ImhofEvaluator):
    return evaluator.cdf(x)


def imhof_quantile(p: float, evaluator: ImhofEvaluator) -> float:
    return evaluator.quantile(p)


def adjust_quantile(q: float, exact_mean: float, exact_var: float, asym_var: float) -> float:
    """Rescale an asymptotic quantile to the exact finite-n variance about the mean."""
    if asym_var <= 0.0:
        raise ValueError("asym_var must be positive")
    return (q - exact_mean) * math.sqrt(exact_var / asym_var) + exact_mean
