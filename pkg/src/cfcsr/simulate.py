"""Point-process generators and Monte Carlo critical values.

Every generator is a pure function of its parameters and a seed.  Random
streams come from a counter-based Philox generator keyed by
``(seed, stream, replicate)``, so replicate ``r`` of a study draws the same
numbers regardless of how many replicates ran before it or on which worker.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .patterns import PointPattern

__all__ = [
    "MATERN_LADDER",
    "SimSpec",
    "SimulationError",
    "matern_parameters",
    "mc_critical_values",
    "null_statistics",
    "rng_for",
    "sim_csr",
    "sim_inhom",
    "sim_matern",
    "sim_ssi",
    "simulate",
]

class SimulationError(RuntimeError):
    """A sampler exhausted its attempt budget (parameters effectively infeasible)."""


def rng_for(seed: int, stream: int = 0, rep: int = 0) -> np.random.Generator:
    """Independent generator for replicate ``rep`` of named stream ``stream``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(seed)


def sim_csr(n: int, dim: int = 2, seed=0) -> PointPattern:
    """``n`` i.i.d. uniform points in the unit cube."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return PointPattern(_rng(seed).random((n, dim)), label="csr")


# cluster radius -> exponent of n giving the mean cluster size; smaller
# clusters carry fewer points so that the three settings are comparably hard
MATERN_LADDER = {0.075: 0.25, 0.15: 1.0 / 3.0, 0.30: 0.5}


def matern_parameters(n: int, r: float) -> tuple[float, float]:
    """``(mu, kappa)`` for the study radii: ``mu = n^a`` and ``kappa = n / mu``."""
    try:
        a = MATERN_LADDER[r]
    except KeyError:
        raise ValueError(f"radius {r} is not one of {sorted(MATERN_LADDER)}") from None
    mu = float(n) ** a
    return mu, n / mu


def sim_matern(n: int, mu: float, kappa: float, r: float, seed=0,
               max_attempts: int = 1_000_000, batch: int = 256) -> PointPattern:
    """Matérn cluster pattern in the unit square conditioned on exactly ``n`` points.

    Parents form a Poisson process of intensity ``kappa`` on the unit square;
    each has a Poisson(``mu``) number of offspring uniform in the disk of
    radius ``r`` around it.  Offspring outside the square are discarded and
    whole patterns are regenerated until exactly ``n`` offspring remain.
    """
    if n < 1 or mu <= 0 or kappa <= 0 or r <= 0:
        raise ValueError("need n >= 1 and positive mu, kappa, r")
    rng = _rng(seed)
    attempts = 0
    while attempts < max_attempts:
        for _ in range(min(batch, max_attempts - attempts)):
            attempts += 1
            n_par = rng.poisson(kappa)
            if n_par == 0:
                continue
            counts = rng.poisson(mu, size=n_par)
            total = int(counts.sum())
            if total < n:
                continue
            parents = rng.random((n_par, 2))
            centers = np.repeat(parents, counts, axis=0)
            radius = r * np.sqrt(rng.random(total))
            angle = 2.0 * np.pi * rng.random(total)
            pts = centers + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
            inside = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
            if int(inside.sum()) == n:
                return PointPattern(pts[inside], label="matern")
    raise SimulationError(
        f"no Matérn pattern with exactly n={n} points in {max_attempts} attempts "
        f"(mu={mu}, kappa={kappa}, r={r})"
    )


def sim_ssi(n: int, delta: float, seed=0, max_proposals: int = 1_000_000,
            batch: int = 1024) -> PointPattern:
    """Simple sequential inhibition: uniform proposals closer than ``delta`` are rejected."""
    if n < 1 or delta <= 0:
        raise ValueError("need n >= 1 and delta > 0")
    rng = _rng(seed)
    accepted = np.empty((n, 2))
    k = 0
    proposals = 0
    d2 = delta * delta
    while k < n:
        if proposals >= max_proposals:
            raise SimulationError(f"packing infeasible: n={n}, delta={delta} "
                                  f"({max_proposals} proposals exhausted)")
        cand = rng.random((min(batch, max_proposals - proposals), 2))
        for c in cand:
            proposals += 1
            if k == 0 or np.min(np.sum((accepted[:k] - c) ** 2, axis=1)) >= d2:
                accepted[k] = c
                k += 1
                if k == n:
                    break
    return PointPattern(accepted, label="ssi")


def inhom_intensity(x: np.ndarray, theta1: float, theta2: float) -> np.ndarray:
    """``lambda(x1, x2) = (theta1 - (theta1 - 1) x1)(theta2 - (theta2 - 1) x2)``."""
    return (theta1 - (theta1 - 1.0) * x[:, 0]) * (theta2 - (theta2 - 1.0) * x[:, 1])


def sim_inhom(n: int, theta1: float, theta2: float, seed=0) -> PointPattern:
    """``n`` points from the linear-gradient intensity by rejection with bound ``theta1 theta2``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if theta1 < 1 or theta2 < 1:
        raise ValueError("theta1 and theta2 must be at least 1")
    rng = _rng(seed)
    bound = theta1 * theta2
    out = []
    have = 0
    while have < n:
        m = max(2 * (n - have) * int(np.ceil(bound)), 16)
        cand = rng.random((m, 2))
        keep = rng.random(m) * bound <= inhom_intensity(cand, theta1, theta2)
        out.append(cand[keep])
        have += int(keep.sum())
    return PointPattern(np.concatenate(out)[:n], label="inhom")


@dataclass(frozen=True)
class SimSpec:
    """Parameters of one process.

    ``params`` by kind: ``matern`` needs ``r, mu, kappa``; ``ssi`` needs
    ``delta``; ``inhom_poisson`` needs ``theta1, theta2``; ``csr`` none.
    """

    kind: str
    n: int
    dim: int = 2
    params: dict = field(default_factory=dict)
    seed: int = 0

    _REQUIRED = {"csr": (), "matern": ("r", "mu", "kappa"), "ssi": ("delta",),
                 "inhom_poisson": ("theta1", "theta2")}

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        missing = [p for p in self._REQUIRED[self.kind] if p not in self.params]
        if missing:
            raise ValueError(f"{self.kind} needs parameters {missing}")
        if self.kind != "csr" and self.dim != 2:
            raise ValueError(f"{self.kind} is only implemented for dim=2")
        p = self.params
        if self.kind == "matern" and min(p["r"], p["mu"], p["kappa"]) <= 0:
            raise ValueError("matern parameters must be positive")
        if self.kind == "ssi" and p["delta"] <= 0:
            raise ValueError("delta must be positive")
        if self.kind == "inhom_poisson" and min(p["theta1"], p["theta2"]) < 1:
            raise ValueError("theta1 and theta2 must be at least 1")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimSpec":
        d = json.loads(text)
        return cls(kind=d["kind"], n=int(d["n"]), dim=int(d.get("dim", 2)),
                   params=dict(d.get("params", {})), seed=int(d.get("seed", 0)))

    def label(self) -> str:
        inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})" if inner else self.kind


def simulate(spec: SimSpec, rep: int = 0, stream: int = 0) -> PointPattern:
    """Replicate ``rep`` of the process described by ``spec``."""
    rng = rng_for(spec.seed, stream, rep)
    p = spec.params
    if spec.kind == "csr":
        return sim_csr(spec.n, spec.dim, rng)
    if spec.kind == "matern":
        return sim_matern(spec.n, p["mu"], p["kappa"], p["r"], rng)
    if spec.kind == "ssi":
        return sim_ssi(spec.n, p["delta"], rng)
    return sim_inhom(spec.n, p["theta1"], p["theta2"], rng)


def null_statistics(statistic_fn: Callable[[PointPattern], float], n: int, dim: int, reps: int,
                    seed: int, stream: int = 0) -> np.ndarray:
    """Statistic values over ``reps`` CSR patterns (replicate ``r`` uses its own stream)."""
    out = np.empty(reps)
    for r in range(reps):
        out[r] = statistic_fn(sim_csr(n, dim, rng_for(seed, stream, r)))
    return out


def mc_critical_values(statistic_fn: Callable[[PointPattern], float], n: int, dim: int,
                       alpha: float, reps: int, seed: int, stream: int = 0) -> tuple[float, float]:
    """Empirical ``alpha/2`` and ``1 - alpha/2`` quantiles of the statistic under CSR."""
    if reps < 1000:
        raise ValueError("mc_critical_values needs reps >= 1000")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    values = null_statistics(statistic_fn, n, dim, reps, seed, stream)
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)
