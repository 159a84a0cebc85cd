"""Empirical distributions, KS distances, Laplace estimates and seeding."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SeedPlan:
    """Per-replica random streams derived from one 64-bit master seed.

    The stream key for replica ``r`` is the 32-byte BLAKE2b digest of the
    little-endian 8-byte encoding of ``r``, keyed with the little-endian 8-byte
    master seed.  The key seeds a ``SeedSequence`` that drives a Philox
    generator, so replica ``r`` draws the same numbers no matter which worker
    runs it or in which order.
    """

    masterSeed: int
    replicaCount: int = 0

    def __post_init__(self):
        if not 0 <= self.masterSeed < 2**64:
            raise ValueError("masterSeed must fit in 64 bits")

    def stream_key(self, replica_id: int) -> int:
        h = hashlib.blake2b(
            int(replica_id).to_bytes(8, "little"),
            key=int(self.masterSeed).to_bytes(8, "little"),
            digest_size=32,
        )
        return int.from_bytes(h.digest(), "little")

    streamFor = stream_key

    def generator(self, replica_id: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.stream_key(replica_id))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, label: int) -> "SeedPlan":
        """A plan for an independent experiment sharing this master seed."""
        sub = self.stream_key(2**63 + int(label)) % 2**64
        return SeedPlan(sub, self.replicaCount)


class EmptySampleError(ValueError):
    pass


@dataclass
class EmpiricalDistribution:
    """Sorted sample with optional right censoring.

    ``values`` holds the observed (uncensored) points; ``n`` counts all
    samples, censored ones included, so ``evaluate`` is an unbiased CDF
    estimate below ``horizon``.
    """

    values: np.ndarray = field(repr=False)
    n: int
    horizon: float = math.inf

    @property
    def censored(self) -> int:
        return self.n - self.values.size

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.horizon) and self.censored:
            raise ValueError("CDF is not identified at or beyond the censoring horizon")
        out = np.searchsorted(self.values, t, side="right") / self.n
        return float(out) if out.ndim == 0 else out


def ecdf(samples, censored=None, horizon: float = math.inf) -> EmpiricalDistribution:
    """Build an empirical distribution.

    ``censored`` is an optional boolean mask marking samples only known to
    exceed ``horizon``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySampleError("ecdf of an empty sample")
    if censored is None:
        obs = x
    else:
        censored = np.asarray(censored, dtype=bool).ravel()
        obs = x[~censored]
        if censored.any() and not math.isfinite(horizon):
            raise ValueError("censored samples need a finite horizon")
    return EmpiricalDistribution(np.sort(obs), x.size, horizon)


def ks_distance(dist: EmpiricalDistribution, cdf, t_max: float = math.inf) -> float:
    """``sup |F_n(t) - F(t)|`` over ``t <= min(t_max, horizon)``.

    Both sides of every jump are compared, and the right end of the window is
    checked as well so a truncated window cannot hide a gap.
    """
    upper = min(t_max, dist.horizon)
    x = dist.values[dist.values <= upper] if math.isfinite(upper) else dist.values
    n = dist.n
    d = 0.0
    if x.size:
        F = np.asarray(cdf(x), dtype=float)
        F_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
        hi = np.searchsorted(x, x, side="right") / n
        lo = np.searchsorted(x, x, side="left") / n
        d = float(max(np.max(np.abs(hi - F)), np.max(np.abs(F_left - lo))))
    if math.isfinite(upper):
        end = upper if upper < dist.horizon else np.nextafter(upper, -math.inf)
        Fe = float(np.asarray(cdf(np.array([end])))[0])
        d = max(d, abs(x.size / n - Fe))
    return d


@dataclass
class LaplaceEstimate:
    value: float
    stderr: float
    n: int


class CensoredSampleError(ValueError):
    pass


def laplace_estimate(samples, lam: float, censored=None) -> LaplaceEstimate:
    """Plug-in estimate of ``E exp(-lam X)`` with its standard error."""
    x = np.asarray(samples, dtype=float).ravel()
    if censored is not None and np.any(censored):
        raise CensoredSampleError("Laplace estimates need every replica to have coalesced")
    if x.size == 0:
        raise EmptySampleError("no samples")
    y = np.exp(-lam * x)
    se = float(y.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return LaplaceEstimate(float(y.mean()), se, int(x.size))


def ks_critical(n: int, level: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value (1.63/sqrt(n) at the 1% level)."""
    c = {0.05: 1.358, 0.01: 1.628, 0.001: 1.949}[level]
    return c / math.sqrt(n)


def comparison_report(metric: str, value: float, n: int, tolerance: float, passed: bool | None = None) -> dict:
    if passed is None:
        passed = value <= tolerance
    return {"metric": metric, "value": float(value), "n": int(n), "tolerance": float(tolerance), "pass": bool(passed)}
