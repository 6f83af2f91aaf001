"""Independent oracles shared by the test modules.

The dense matrices are explicit truncations of the one-dimensional operator
in the Fourier basis ``{1, sqrt2 cos(2 pi j x), sqrt2 sin(2 pi j x)}``; they
do not use any code from the package.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

# one "criterion k: PASS|FAIL ..." line per acceptance criterion, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def dense_matrices(rho: float, N: int):
    """``(A1, A2, alpha)``: the even block (constant + N cosines) and the odd block (N sines)."""
    j = np.arange(1, N + 1)
    u = 2 * rho / ((2 * np.pi * j) ** 2 + rho**2)
    v = 2 * np.pi * j / rho * u
    a = 2 * (np.exp(-rho) + rho - 1) / rho**2
    b = np.sqrt(2) * (1 - np.exp(-rho)) / rho
    g = 1 - np.exp(-rho)
    A1 = np.zeros((N + 1, N + 1))
    A1[0, 0] = a
    A1[0, 1:] = -b * u
    A1[1:, 0] = -b * u
    A1[1:, 1:] = np.diag(u) - g * np.outer(u, u)
    A2 = np.diag(u) + g * np.outer(v, v)
    return A1, A2, a


def compressed(A1: np.ndarray) -> np.ndarray:
    """``A1`` with the constant direction projected out."""
    S = A1.copy()
    S[0, :] = 0.0
    S[:, 0] = 0.0
    return S


def top_eigenvalues(M: np.ndarray, k: int) -> np.ndarray:
    return np.sort(np.linalg.eigvalsh(M))[::-1][:k]


def bracketed_roots(rho: float, J: int, family: int) -> np.ndarray:
    """Roots ``tau`` of the two transcendental equations by plain Brent iteration."""
    out = []
    for k in range(1, J + 1):
        if family == 1:
            f = lambda t: t * np.sin(t / 2) - rho * np.cos(t / 2)  # noqa: E731
            lo, hi = (2 * k - 2) * np.pi, (2 * k - 1) * np.pi
        else:
            f = lambda t: rho * np.sin(t / 2) + t * np.cos(t / 2)  # noqa: E731
            lo, hi = (2 * k - 1) * np.pi, 2 * k * np.pi
        out.append(brentq(f, lo + 1e-15, hi - 1e-15, xtol=1e-14, rtol=1e-15))
    return np.array(out)


def series_draws(values: np.ndarray, mult: np.ndarray, size: int, rng: np.random.Generator,
                 tail_mean: float = 0.0, tail_var: float = 0.0, chunk: int = 50_000) -> np.ndarray:
    """Draws of ``sum_j lambda_j chi2(m_j)`` plus an independent normal for the remainder."""
    out = np.empty(size)
    for start in range(0, size, chunk):
        m = min(chunk, size - start)
        acc = np.zeros(m)
        for lam, k in zip(values, mult):
            acc += lam * rng.chisquare(int(k), size=m)
        if tail_var > 0.0:
            acc += rng.normal(tail_mean, np.sqrt(tail_var), size=m)
        out[start:start + m] = acc
    return out
