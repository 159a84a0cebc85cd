"""Potential theory for dispersal kernels.

n-step laws by convolution, the local CLT error audit, the recurrent
potential kernel ``a(x) = sum_k (p_k(x) - p_k(0))``, Green's functions of an
interval and hitting probabilities of 0.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal, special

from .dispersal import DispersalKernel, one_minus_char_fn

TRIM = 1e-16
DIRECT_CONV_LIMIT = 4_000_000
MAX_SUPPORT = 50_000_000


class WalkError(ValueError):
    pass


@dataclass
class StepDistribution:
    """Law of the walk after ``k`` steps; ``mass[i]`` sits at ``i - radius``."""

    k: int
    radius: int
    mass: np.ndarray = field(repr=False)
    truncated: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.radius, self.radius + 1)

    def at(self, x) -> np.ndarray:
        x = np.asarray(x)
        out = np.zeros(x.shape)
        ok = np.abs(x) <= self.radius
        out[ok] = self.mass[x[ok] + self.radius]
        return out


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size * b.size <= DIRECT_CONV_LIMIT:
        out = np.convolve(a, b)
    else:
        out = np.clip(signal.fftconvolve(a, b), 0.0, None)
    if np.array_equal(a, a[::-1]) and np.array_equal(b, b[::-1]):
        # symmetric inputs: remove round-off asymmetry from the summation order
        out = 0.5 * (out + out[::-1])
    return out


def _trim(mass: np.ndarray, radius: int):
    """Drop symmetric tails where every entry is below ``TRIM``."""
    big = np.flatnonzero(np.maximum(mass, mass[::-1]) >= TRIM)
    if big.size == 0:
        return mass, radius, 0.0
    cut = int(big[0])
    if cut == 0:
        return mass, radius, 0.0
    lost = float(mass[:cut].sum() + mass[mass.size - cut:].sum())
    return mass[cut:mass.size - cut].copy(), radius - cut, lost


def _combine(p: StepDistribution, q: StepDistribution) -> StepDistribution:
    if (p.radius + q.radius) * 2 + 1 > MAX_SUPPORT:
        raise WalkError("step distribution support exceeds the memory guard")
    mass = _convolve(p.mass, q.mass)
    mass, radius, lost = _trim(mass, p.radius + q.radius)
    return StepDistribution(p.k + q.k, radius, mass, p.truncated + q.truncated + lost)


def delta() -> StepDistribution:
    return StepDistribution(0, 0, np.ones(1), 0.0)


def from_kernel(kernel: DispersalKernel) -> StepDistribution:
    return StepDistribution(1, kernel.radius, np.array(kernel.mass, dtype=float), 0.0)


def step_distribution(kernel: DispersalKernel, k: int) -> StepDistribution:
    """``p_k`` by repeated squaring (``p_2k = p_k * p_k``)."""
    if k < 0:
        raise WalkError("k must be >= 0")
    if k * kernel.radius > MAX_SUPPORT:
        raise WalkError("k * radius exceeds the memory guard")
    result = delta()
    base = from_kernel(kernel)
    while k:
        if k & 1:
            result = _combine(result, base) if result.k else base
        k >>= 1
        if k:
            base = _combine(base, base)
    return result


def step_distributions(kernel: DispersalKernel, kmax: int):
    """Yield ``p_1, ..., p_kmax`` by successive convolution with the kernel."""
    q = from_kernel(kernel)
    p = q
    yield p
    for _ in range(kmax - 1):
        p = _combine(p, q)
        yield p


def rho(ell: float, x, sigma2: float):
    """Normal density with variance ``ell * sigma2``."""
    if ell <= 0:
        raise WalkError("ell must be positive")
    v = ell * sigma2
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)
    return out if out.ndim else float(out)


@dataclass
class LCLTAudit:
    N: int
    k: np.ndarray
    normalized: np.ndarray
    truncated: np.ndarray

    @property
    def C_star(self) -> float:
        return float(np.max(self.normalized))

    def trend_ratio(self) -> float:
        """Mean of the last quarter of ``k`` over the mean of the first."""
        n = self.normalized.size
        q = max(1, n // 4)
        return float(self.normalized[-q:].mean() / self.normalized[:q].mean())

    def to_dict(self) -> dict:
        return {"N": self.N, "k": self.k.tolist(), "normalized": self.normalized.tolist(),
                "truncated": self.truncated.tolist(), "C_star": self.C_star}


def lclt_error_audit(kernel: DispersalKernel, kSet) -> LCLTAudit:
    """``sqrt(N) k^(3/2) sup_x |p_k(x) - rho_{kN}(x)|`` for each ``k`` in ``kSet``."""
    if kernel.exempt:
        raise WalkError("the audit applies to non-exempt kernels")
    ks = sorted(set(int(k) for k in kSet))
    if ks[0] < 1:
        raise WalkError("k must be >= 1")
    wanted = set(ks)
    vals, trunc = [], []
    N = kernel.N
    for p in step_distributions(kernel, ks[-1]):
        if p.k in wanted:
            err = np.max(np.abs(p.mass - rho(p.k * N, p.support, kernel.sigma2)))
            vals.append(math.sqrt(N) * p.k**1.5 * err)
            trunc.append(p.truncated)
    return LCLTAudit(N, np.array(ks), np.array(vals), np.array(trunc))


# potential kernel

@dataclass
class PotentialKernelTable:
    N: int
    xMax: int
    values: np.ndarray = field(repr=False)
    seriesDepth: int
    tailBound: float
    C_star: float

    def __call__(self, x):
        x = np.abs(np.asarray(x))
        if np.any(x > self.xMax):
            raise WalkError("x outside the table")
        out = self.values[x]
        return out if out.ndim else float(out)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value", "certified_bound"])
            for x, v in enumerate(self.values):
                w.writerow([x, repr(float(v)), repr(self.tailBound)])


def _grid_size(kernel: DispersalKernel, K: int, xMax: int) -> int:
    spread = min(K * kernel.radius, 14.0 * math.sqrt(K * kernel.variance) + 2 * kernel.radius)
    need = 2 * (int(spread) + xMax) + 2
    return 1 << max(10, (need - 1).bit_length())


def _one_minus_phi_grid(kernel: DispersalKernel, n: int) -> np.ndarray:
    """``1 - phi(2 pi j / n)`` for ``j = 0..n/2``, accurate near 0."""
    circ = np.zeros(n)
    r = kernel.radius
    circ[: r + 1] = kernel.mass[r:]
    circ[n - r:] = kernel.mass[:r]
    omc = 1.0 - np.fft.rfft(circ).real
    theta = 2.0 * np.pi * np.arange(omc.size) / n
    small = omc < 1e-3
    omc[small] = one_minus_char_fn(kernel, theta[small])
    return omc


def potential_partial_sum(kernel: DispersalKernel, K: int, xMax: int) -> np.ndarray:
    """``sum_{k=0}^{K} (p_k(x) - p_k(0))`` for ``x = 0..xMax``.

    Evaluated as an inverse DFT of ``(1 - phi^(K+1)) / (1 - phi)`` on a
    circle wide enough that no ``p_k`` with ``k <= K`` wraps around.
    """
    n = _grid_size(kernel, K, xMax)
    omc = _one_minus_phi_grid(kernel, n)
    phi = 1.0 - omc
    ratio = np.empty_like(omc)
    ratio[0] = K + 1.0
    nz = omc[1:]
    near = phi[1:] > 0.5
    geo = np.empty_like(nz)
    # 1 - phi^(K+1) via expm1/log1p where phi is close to 1
    geo[near] = -np.expm1((K + 1.0) * np.log1p(-nz[near]))
    geo[~near] = 1.0 - phi[1:][~near] ** (K + 1)
    ratio[1:] = geo / nz
    s = np.fft.irfft(ratio, n)
    return s[: xMax + 1] - s[0]


def _gaussian_tail(x: np.ndarray, T: float, var: float) -> np.ndarray:
    """``int_T^inf (rho_k(x) - rho_k(0)) dk`` for per-step variance ``var``."""
    c = x.astype(float) ** 2 / (2.0 * var)
    out = np.zeros(x.shape)
    pos = c > 0
    a = c[pos] / T
    sa = np.sqrt(a)
    integral = 2.0 * (-np.expm1(-a)) / sa - 2.0 * math.sqrt(math.pi) * special.erf(sa)
    out[pos] = np.sqrt(c[pos]) * integral / math.sqrt(2.0 * math.pi * var)
    return out


def potential_kernel(kernel: DispersalKernel, xMax: int, epsilon: float = 1e-3, C_star: float | None = None,
                     max_depth: int = 2_000_000, x_limit_factor: float = 64.0) -> PotentialKernelTable:
    """Tabulate ``a(x)`` for ``|x| <= xMax`` with a certified error bound.

    The series is summed exactly to depth ``K``; the remainder is replaced by
    the same sum for Gaussian densities, and the difference is bounded with
    the local CLT envelope ``C* / (sqrt(N) k^(3/2))`` per term, giving
    ``4 C* / sqrt(N K)``.  ``C_star`` defaults to an audit over ``k <= 64``.
    """
    if xMax > x_limit_factor * kernel.variance + 64:
        raise WalkError("xMax beyond the configured multiple of sigma^2 N")
    N = kernel.N
    if C_star is None:
        C_star = lclt_error_audit(kernel, range(1, 65)).C_star if not kernel.exempt else 1.0
    K = int(math.ceil((4.0 * C_star / (epsilon * math.sqrt(N))) ** 2))
    K = max(64, min(K, max_depth))
    x = np.arange(xMax + 1)
    part = potential_partial_sum(kernel, K, xMax)
    T = K + 0.5
    tail = _gaussian_tail(x, T, kernel.variance)
    midpoint_err = (1.0 / 24.0) / math.sqrt(2.0 * math.pi * kernel.variance) * T**-1.5
    bound = 4.0 * C_star / math.sqrt(N * K) + midpoint_err
    return PotentialKernelTable(N, xMax, part + tail, K, bound, C_star)


def potential_kernel_fourier(kernel: DispersalKernel, x, n: int = 1 << 16) -> np.ndarray:
    """Independent route: trapezoid rule for ``(1/2pi) int (cos x t - 1) / (1 - phi(t)) dt``.

    The integrand is smooth and periodic (at ``t = 0`` it equals
    ``-x^2 / (sigma^2 N)``), so the rule converges fast in ``n``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = 2.0 * np.pi * np.arange(1, n // 2 + 1) / n
    omc = one_minus_char_fn(kernel, theta)
    w = np.full(theta.size, 2.0)
    if n % 2 == 0:
        w[-1] = 1.0
    out = np.empty(x.size)
    for i, xi in enumerate(x):
        num = -2.0 * np.sin(0.5 * xi * theta) ** 2
        out[i] = (np.sum(w * num / omc) - xi**2 / kernel.variance) / n
    return out


def potential_kernel_direct(kernel: DispersalKernel, K: int, x) -> np.ndarray:
    """``sum_{k=0}^{K} (p_k(x) - p_k(0))`` by explicit convolution (small ``K``)."""
    x = np.asarray(x)
    total = (x == 0).astype(float) - 1.0
    for p in step_distributions(kernel, K):
        total = total + p.at(x) - p.at(np.zeros_like(x))
    return total


def potential_kernel_asymptotic(kernel: DispersalKernel, x):
    x = np.asarray(x)
    return -1.0 + (x == 0) - np.abs(x) / kernel.variance


# interval Green's functions

@dataclass(frozen=True)
class IntervalProblem:
    kernel: DispersalKernel
    Mhalf: int

    def __post_init__(self):
        if self.Mhalf < 1:
            raise WalkError("Mhalf must be >= 1")
        if 2 * self.Mhalf + 1 > 200_001:
            raise WalkError("interval too large for the banded solve")

    @classmethod
    def default(cls, kernel: DispersalKernel) -> "IntervalProblem":
        return cls(kernel, int(math.ceil(2.0 * kernel.N ** (5.0 / 6.0))))

    @property
    def size(self) -> int:
        return 2 * self.Mhalf + 1

    def contains(self, x) -> bool:
        return abs(int(x)) <= self.Mhalf


_SOLVE_CACHE: dict = {}


def _banded_system(problem: IntervalProblem):
    k = problem.kernel
    r = min(k.radius, problem.size - 1)
    n = problem.size
    ab = np.zeros((2 * r + 1, n))
    for off in range(-r, r + 1):
        q = k.mass[k.radius + off] if abs(off) <= k.radius else 0.0
        # entry (i, i + off) of I - P lives in row r - off
        row = r - off
        val = (1.0 if off == 0 else 0.0) - q
        if off >= 0:
            ab[row, off:] = val
        else:
            ab[row, : n + off] = val
    return r, ab


def green_column(problem: IntervalProblem, y: int) -> tuple[np.ndarray, float]:
    """``G_I(., y)`` over the interval and the solve residual."""
    if not problem.contains(y):
        raise WalkError("y outside the interval")
    key = (id(problem.kernel), problem.kernel.digest(), problem.Mhalf, int(y))
    if key in _SOLVE_CACHE:
        return _SOLVE_CACHE[key]
    r, ab = _banded_system(problem)
    rhs = np.zeros(problem.size)
    rhs[y + problem.Mhalf] = 1.0
    g = linalg.solve_banded((r, r), ab, rhs)
    # residual of (I - P) g = delta_y
    Pg = np.zeros_like(g)
    k = problem.kernel
    full = np.convolve(g, k.mass[::-1], mode="full")
    Pg = full[k.radius: k.radius + g.size]
    res = float(np.max(np.abs(g - Pg - rhs)))
    if len(_SOLVE_CACHE) > 256:
        _SOLVE_CACHE.clear()
    _SOLVE_CACHE[key] = (g, res)
    return g, res


def green_exact(problem: IntervalProblem, x: int, y: int) -> float:
    if not problem.contains(x):
        raise WalkError("x outside the interval")
    g, _ = green_column(problem, y)
    return float(g[x + problem.Mhalf])


def green_asymptotic(problem: IntervalProblem, x, y):
    M = problem.Mhalf
    k = problem.kernel
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (x == y) + (M / (k.sigma2 * k.N)) * (-np.abs(x - y) / M + (1.0 - x * y / M**2))
    return out if out.ndim else float(out)


def hitting_prob(problem: IntervalProblem, x: int) -> float:
    """``P_x(hit 0 before leaving I) = G(x, 0) / G(0, 0)``."""
    g, _ = green_column(problem, 0)
    return float(g[x + problem.Mhalf] / g[problem.Mhalf])


def hitting_prob_asymptotic(N: float, sigma: float) -> float:
    return 1.0 / (sigma**2 * N ** (1.0 / 6.0))


def green_error_scale(N: float) -> float:
    return N ** (-1.0 / 3.0) * math.log(N)


def log_probes(lo: float, hi: float, count: int = 32) -> np.ndarray:
    return np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))


def green_comparison_constant(problem: IntervalProblem, probes=None) -> float:
    """Fitted ``c`` with ``|G_exact - G_asym| <= c N^(-1/3) log N`` over probe pairs."""
    M = problem.Mhalf
    if probes is None:
        pos = log_probes(1, M, 32)
        probes = np.concatenate([-pos[::-1], [0], pos])
    worst = 0.0
    for y in (0, int(probes[len(probes) // 3]), int(probes[-1] // 2)):
        g, _ = green_column(problem, y)
        ex = g[np.asarray(probes) + M]
        worst = max(worst, float(np.max(np.abs(ex - green_asymptotic(problem, probes, y)))))
    return worst / green_error_scale(problem.kernel.N)


@dataclass
class BoundCheck:
    passed: bool
    bound: float
    worst_x: int
    worst_value: float
    violations: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "bound": self.bound, "worst_x": self.worst_x,
                "worst_value": self.worst_value, "violations": self.violations}


def hitting_prob_bound_check(problem: IntervalProblem, xSet, c: float | None = None) -> BoundCheck:
    """Check ``H(x, 0) <= 2 / (sigma^2 N^(1/6)) + c N^(-1/3) log N`` on every probe."""
    k = problem.kernel
    N = k.N
    if c is None:
        c = green_comparison_constant(problem)
    bound = 2.0 / (k.sigma2 * N ** (1.0 / 6.0)) + c * green_error_scale(N)
    outer = 2.0 * N ** (5.0 / 6.0)
    g, _ = green_column(problem, 0)
    M = problem.Mhalf
    viol = []
    worst_x, worst = None, -math.inf
    for x in xSet:
        x = int(x)
        if not 0 < abs(x) < outer:
            raise WalkError(f"probe {x} outside 0 < |x| < 2 N^(5/6)")
        h = float(g[x + M] / g[M])
        if h > worst:
            worst_x, worst = x, h
        if h > bound:
            viol.append(x)
    return BoundCheck(not viol, bound, worst_x, worst, viol)


def exit_walks(kernel: DispersalKernel, Mhalf: int, x0, rng, max_steps: int = 10**7):
    """Run independent walks from ``x0`` until ``|X| > Mhalf``; return exit positions."""
    pos = np.array(x0, dtype=np.int64).copy()
    alive = np.abs(pos) <= Mhalf
    steps = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        pos[idx] += kernel.sample(rng, idx.size)
        alive[idx] = np.abs(pos[idx]) <= Mhalf
        steps += 1
        if steps > max_steps:
            raise WalkError("walks failed to exit")
    return pos


def audit_json(audits) -> str:
    return json.dumps([a.to_dict() for a in audits], indent=2)
