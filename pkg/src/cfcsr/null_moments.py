"""Exact null mean and variance of the CF statistic under CSR (Cauchy weight).

With the Cauchy weight the one-dimensional kernel is ``xi(a) = exp(-rho|a|)``
and every null moment factorizes over coordinates.  Three one-dimensional
expectations appear, for independent uniforms ``x, y, z``:

* ``alpha = E xi(x - y)        = 2(e^{-rho} + rho - 1) / rho^2``
* ``c2    = E xi(x - y)^2      = alpha(2 rho)``
* ``c3    = E xi(x - y) xi(x - z)
          = (-e^{-2rho} + 2 e^{-rho}(rho + 4) + 4 rho - 7) / rho^3``

The D-dimensional versions are their D-th powers.  All three tend to 1 as
``rho -> 0`` and the closed forms lose every significant digit there, so
below ``SERIES_CUTOFF`` they are summed from their Taylor series instead.
The functions return the deviations from 1 as well, because the variance is
a combination of them with coefficients that sum to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = [
    "NullMoments",
    "SERIES_CUTOFF",
    "cauchy_alpha",
    "limiting_variance",
    "moment_brackets",
    "null_mean",
    "null_moments",
    "null_variance",
]

# Below this rho the Taylor series are used.  The closed form for c3 loses
# about log10(7/rho^3) digits, so the cutoff has to sit near rho = 1, not at
# a tiny value; at rho < 1 both series converge in under 30 terms.
SERIES_CUTOFF = 1.0
_N_TERMS = 32

# alpha - 1 = 2 * sum_{m>=1} (-rho)^m / (m+2)!
_ALPHA_COEF = np.array([2.0 * (-1) ** m / factorial(m + 2) for m in range(1, _N_TERMS)])
# c3 - 1 = sum_{m>=4} a_m rho^{m-3}
_C3_COEF = np.array(
    [
        (8.0 * (-1) ** m - (-2.0) ** m) / factorial(m) + 2.0 * (-1) ** (m - 1) / factorial(m - 1)
        for m in range(4, _N_TERMS + 3)
    ]
)


def _poly(coef: np.ndarray, rho: float) -> float:
    """Evaluate ``sum_k coef[k] rho^(k+1)`` by Horner's rule."""
    acc = 0.0
    for c in coef[::-1]:
        acc = acc * rho + c
    return acc * rho


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0.0 and np.isfinite(rho)):
        raise ValueError(f"rho must be positive and finite, got {rho}")
    return rho


def _alpha_dev(rho: float) -> float:
    """``alpha(rho) - 1``, accurate for every ``rho > 0``."""
    if rho < SERIES_CUTOFF:
        return _poly(_ALPHA_COEF, rho)
    return 2.0 * (np.expm1(-rho) + rho) / rho**2 - 1.0


def _c3_dev(rho: float) -> float:
    if rho < SERIES_CUTOFF:
        return _poly(_C3_COEF, rho)
    e1 = np.exp(-rho)
    return (-(e1 * e1) + 2.0 * e1 * (rho + 4.0) + 4.0 * rho - 7.0) / rho**3 - 1.0


def cauchy_alpha(rho: float) -> float:
    """One-dimensional mean kernel ``E exp(-rho|x - y|) = 2(e^{-rho}+rho-1)/rho^2``."""
    return 1.0 + _alpha_dev(_check_rho(rho))


def moment_brackets(rho: float) -> tuple[float, float, float]:
    """One-dimensional ``(alpha, c2, c3)``; raise to the D-th power for dimension D."""
    rho = _check_rho(rho)
    return 1.0 + _alpha_dev(rho), 1.0 + _alpha_dev(2.0 * rho), 1.0 + _c3_dev(rho)


def _pow_dev(dev: float, power: int) -> float:
    """``(1 + dev)**power - 1`` without cancellation."""
    return float(np.expm1(power * np.log1p(dev)))


def null_mean(rho: float, dim: int) -> float:
    """Exact CSR mean ``E0(Delta) = 1 - alpha^D`` (independent of n)."""
    rho = _check_rho(rho)
    _check_dim(dim)
    return -_pow_dev(_alpha_dev(rho), dim)


def _check_dim(dim: int) -> None:
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")


def _variance(rho: float, dim: int, coefs: tuple[float, float, float]) -> float:
    rho = _check_rho(rho)
    _check_dim(dim)
    da = _pow_dev(_alpha_dev(rho), 2 * dim)
    db = _pow_dev(_alpha_dev(2.0 * rho), dim)
    dc = _pow_dev(_c3_dev(rho), dim)
    # the coefficients sum to zero, so only the deviations from 1 contribute
    return coefs[0] * da + coefs[1] * db + coefs[2] * dc


def null_variance(rho: float, dim: int, n: int) -> float:
    """Exact CSR variance of Delta for sample size ``n >= 2``."""
    if int(n) != n or n < 2:
        raise ValueError(f"null_variance needs n >= 2, got {n}")
    n = float(n)
    return _variance(rho, dim, ((2 * n - 6) / n, (2 * n - 2) / n, -(4 * n - 8) / n))


def limiting_variance(rho: float, dim: int) -> float:
    """``lim_{n -> inf} var0(Delta)``; coefficients ``(2, 2, -4)``."""
    return _variance(rho, dim, (2.0, 2.0, -4.0))


@dataclass(frozen=True)
class NullMoments:
    mean: float
    variance: float
    n: int
    rho: float
    dim: int

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))


def null_moments(rho: float, dim: int, n: int) -> NullMoments:
    return NullMoments(
        mean=null_mean(rho, dim),
        variance=null_variance(rho, dim, n),
        n=int(n),
        rho=float(rho),
        dim=int(dim),
    )
