"""Small-sample null distribution of the CF statistic for large rho.

As rho grows the m-th cumulant (m >= 2) of the statistic behaves like

    kappa_m = (n - 1) (2/n)^(m-1) (2/m)^D rho^(-D),

and with ``kappa_1`` the exact null mean the cumulant generating function is
``K0(t) = i t kappa_1 + sum_{m>=2} kappa_m (i t)^m / m!``.  Writing
``c = (n - 1)(n/2)(2/rho)^D`` and ``y = 2t/n`` the series is

    K0(t) = i t kappa_1 + c [g_D(i y) - i y],   g_D(z) = sum_{m>=1} z^m / (m^D m!).

``exp(Re K0)`` decays only like ``exp(-c (log y)^D / D!)``, so the inversion
integral reaches ``y`` in the hundreds where the power series is useless.
For larger ``y`` the function is evaluated from its integral form:
``g_1(iy) = i Si(y) - Cin(y)`` and ``g_D(iy) = int_0^y g_{D-1}(iv)/v dv``.
Since ``Cin >= 0``, ``Re g_D(iy) <= 0`` for every D, so ``|exp K0| <= 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .imhof import QuadratureError, adjust_quantile, invert_cdf
from .null_moments import null_mean, null_variance

__all__ = [
    "CumulantModel",
    "HighRhoWarning",
    "SeriesCapError",
    "cumulant",
    "cumulant_model",
    "high_rho_cdf",
    "high_rho_quantile",
    "k0_eval",
    "use_high_rho",
]


class SeriesCapError(ArithmeticError):
    """The cumulant series did not converge within the term cap."""


class HighRhoWarning(UserWarning):
    """The cumulant approximation is unusable at these parameters."""


def cumulant(m: int, n: int, rho: float, dim: int) -> float:
    """Large-rho cumulant ``kappa_m`` of order ``m >= 2``."""
    if int(m) != m or m < 2:
        raise ValueError("cumulant order must be an integer >= 2; kappa_1 is the exact null mean")
    return (n - 1) * (2.0 / n) ** (m - 1) * (2.0 / m) ** dim * rho ** (-dim)


def use_high_rho(rho: float, n: int, dim: int) -> bool:
    """Method switch: the cumulant distribution is used when ``rho > pi n^(1/D)``."""
    return rho > math.pi * n ** (1.0 / dim) * (1.0 + 1e-12)


# ---------------------------------------------------------------------------
# g_D(i y)
# ---------------------------------------------------------------------------

_SERIES_Y = 6.0
_PANEL = 1.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _g_series(y: np.ndarray, dim: int, cap: int) -> np.ndarray:
    """``sum_{m>=1} (i y)^m / (m^D m!)`` by direct summation."""
    y = np.asarray(y, dtype=float)
    total = np.zeros(y.shape, dtype=complex)
    term = np.ones(y.shape, dtype=complex)  # (iy)^m / m!
    for m in range(1, cap + 1):
        term = term * (1j * y) / m
        add = term / m**dim
        total = total + add
        if np.all(np.abs(add) < 1e-16 * (1.0 + np.abs(total))):
            return total
    raise SeriesCapError(f"series for g_{dim} did not converge in {cap} terms at y={float(np.max(y))}")


def _g_series_scalar(y: float, dim: int, cap: int) -> complex:
    z = 1j * y
    term = 1.0 + 0.0j
    total = 0.0j
    for m in range(1, cap + 1):
        term *= z / m
        add = term / m**dim
        total += add
        if abs(add) < 1e-16 * (1.0 + abs(total)):
            return total
    raise SeriesCapError(f"series for g_{dim} did not converge in {cap} terms at y={y}")


def _g1(y: np.ndarray) -> np.ndarray:
    si, ci = special.sici(y)
    cin = np.euler_gamma + np.log(y) - ci
    return 1j * si - cin


class _GTable:
    """Cumulative panel integrals of ``g_{D-1}(iv)/v`` from ``_SERIES_Y`` upward."""

    def __init__(self, dim: int):
        self.dim = dim
        self.edges = np.array([_SERIES_Y])
        self.cum = np.array([_g_series(np.array([_SERIES_Y]), dim, 200)[0]])

    def _extend(self, y_max: float) -> None:
        if self.edges[-1] >= y_max:
            return
        n_new = int(math.ceil((y_max - self.edges[-1]) / _PANEL))
        a = self.edges[-1] + _PANEL * np.arange(n_new)
        b = a + _PANEL
        nodes = 0.5 * (a + b)[:, None] + 0.5 * _PANEL * _GL_X[None, :]
        vals = _g_eval(nodes.ravel(), self.dim - 1).reshape(nodes.shape) / nodes
        panel = 0.5 * _PANEL * (vals @ _GL_W)
        self.edges = np.concatenate([self.edges, b])
        self.cum = np.concatenate([self.cum, self.cum[-1] + np.cumsum(panel)])

    def __call__(self, y: np.ndarray) -> np.ndarray:
        self._extend(float(np.max(y)))
        k = np.searchsorted(self.edges, y, side="right") - 1
        a = self.edges[k]
        half = 0.5 * (y - a)
        nodes = (a + half)[:, None] + half[:, None] * _GL_X[None, :]
        vals = _g_eval(nodes.ravel(), self.dim - 1).reshape(nodes.shape) / nodes
        return self.cum[k] + half * (vals @ _GL_W)


_TABLES: dict[int, _GTable] = {}


def _g_eval(y: np.ndarray, dim: int) -> np.ndarray:
    """``g_D(i y)`` for ``y >= 0``."""
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape, dtype=complex)
    small = y <= _SERIES_Y
    if small.any():
        out[small] = _g_series(y[small], dim, 200)
    if (~small).any():
        if dim == 1:
            out[~small] = _g1(y[~small])
        else:
            table = _TABLES.get(dim)
            if table is None:
                table = _TABLES[dim] = _GTable(dim)
            out[~small] = table(y[~small])
    return out


# ---------------------------------------------------------------------------
# Model and distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CumulantModel:
    """Cumulant generating function of the statistic for large rho.

    ``kappa1`` is the exact null mean; ``max_terms`` caps the power series
    used for small ``|t|``.
    """

    n: int
    rho: float
    dim: int
    kappa1: float
    max_terms: int = 200
    _upper: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("the cumulant model needs n >= 2")
        if not (self.rho > 0.0 and math.isfinite(self.rho)):
            raise ValueError("rho must be positive and finite")

    @property
    def scale(self) -> float:
        """``c = (n - 1)(n/2)(2/rho)^D``, so ``kappa_m = c (2/n)^m / m^D``."""
        return (self.n - 1) * (self.n / 2.0) * (2.0 / self.rho) ** self.dim

    @property
    def kappa2(self) -> float:
        return cumulant(2, self.n, self.rho, self.dim)

    def kappa(self, m: int) -> float:
        return self.kappa1 if m == 1 else cumulant(m, self.n, self.rho, self.dim)

    def k0(self, t) -> np.ndarray:
        """``K0(t)`` (complex); vectorized over ``t``."""
        t = np.asarray(t, dtype=float)
        y = 2.0 * np.abs(t) / self.n
        if t.ndim == 0 and y <= _SERIES_Y:
            g0 = _g_series_scalar(float(y), self.dim, self.max_terms)
            val0 = 1j * abs(float(t)) * self.kappa1 + self.scale * (g0 - 1j * float(y))
            return np.asarray(np.conj(val0) if t < 0 else val0)
        flat = y.ravel()
        g = np.empty(flat.shape, dtype=complex)
        small = flat <= _SERIES_Y
        if small.any():
            g[small] = _g_series(flat[small], self.dim, self.max_terms)
        if (~small).any():
            g[~small] = _g_eval(flat[~small], self.dim)
        g = g.reshape(y.shape)
        val = 1j * np.abs(t) * self.kappa1 + self.scale * (g - 1j * y)
        # real cumulants: K0(-t) is the conjugate of K0(t)
        return np.where(t < 0, np.conj(val), val)

    def upper_limit(self, level: float = 1e-9) -> float:
        """Smallest doubling point where ``exp(Re K0) < level``."""
        if level in self._upper:
            return self._upper[level]
        t = 1.0 / math.sqrt(self.kappa2)
        for _ in range(200):
            if math.exp(float(np.real(self.k0(t)))) < level:
                self._upper[level] = t
                return t
            t *= 2.0
        raise QuadratureError("exp(Re K0) does not decay", float("inf"))

    def modulus_ok(self, t_max: float = 50.0, n_grid: int = 401) -> bool:
        t = np.linspace(-t_max, t_max, n_grid)
        return bool(np.all(np.real(self.k0(t)) <= 1e-12))


def cumulant_model(n: int, rho: float, dim: int) -> CumulantModel:
    return CumulantModel(int(n), float(rho), int(dim), null_mean(rho, dim))


def k0_eval(t, model: CumulantModel):
    val = model.k0(t)
    return complex(val) if np.ndim(val) == 0 else val


def high_rho_cdf(x, model: CumulantModel, abs_tol: float = 1e-7):
    """Gil-Pelaez inversion ``1/2 - (1/pi) int_0^inf sin(Im K0 - t x) exp(Re K0) / t dt``."""
    if not model.modulus_ok():
        warnings.warn("exp(K0) exceeds modulus 1; the cumulant distribution is invalid here",
                      HighRhoWarning, stacklevel=2)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    U = model.upper_limit()
    sd = math.sqrt(model.kappa2)

    def f(t):
        k = model.k0(t)
        return np.sin(np.imag(k) - t * xs) * np.exp(np.real(k)) / t

    edges = np.unique(np.concatenate([[0.0], np.geomspace(0.5 / sd, U, 40)]))
    edges = edges[edges <= U]
    if edges[-1] < U:
        edges = np.append(edges, U)
    total = np.zeros(xs.shape)
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad_vec(f, a, b, epsabs=abs_tol / (10.0 * len(edges)), epsrel=0.0,
                                    limit=4000)
        total += val
        err += float(np.max(np.abs(e))) if np.ndim(e) else float(e)
    if err > max(abs_tol, 1e-6):
        raise QuadratureError("Gil-Pelaez integral did not converge", err)
    out = np.clip(0.5 - total / math.pi, 0.0, 1.0)
    return out if np.ndim(x) else float(out[0])


def high_rho_quantile(p, model: CumulantModel, adjust: bool = True, tol: float = 1e-6):
    """Quantile of the cumulant distribution, optionally rescaled to the exact variance.

    ``p`` may be a scalar or an array.
    """
    q = invert_cdf(lambda v: high_rho_cdf(v, model), p, model.kappa1, model.kappa2, tol=tol)
    if not adjust:
        return q
    exact_var = null_variance(model.rho, model.dim, model.n)
    return adjust_quantile(q, model.kappa1, exact_var, model.kappa2)
