"""Pairwise coalescence simulators and the cycle decomposition of walk paths.

Three models are covered: the stepping stone model on the integers, the same
dynamics on a ring of colonies, and the voter model with a long-range
dispersal kernel.  Each simulator returns a :class:`CoalescenceSample`.

Stepping stone dynamics (continuous time): every lineage has replacement
events at rate 1.  With probability ``1 - nu`` the parent is drawn uniformly
from the lineage's own colony of ``M`` individuals, otherwise from a uniformly
chosen neighbouring colony.  The pair coalesces when the parent colony is the
other lineage's colony and the uniform pick is the other lineage.

Two implementations are provided.  ``simulate_*_pair`` follows both lineages
event by event; it is the reference.  The ``sample_*`` functions draw the same
law much faster from the difference chain: the separation performs a simple
random walk jumping at rate ``2 nu``, a jump landing on 0 coalesces with
chance ``1/M`` and while the separation is 0 coalescence happens at rate
``2 (1 - nu) / M``.  Excursion lengths are drawn from exact first-passage
tables and holding times are summed as Gamma variates.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .dispersal import DispersalKernel
from .stats import SeedPlan

DEFAULT_MAX_EVENTS = 10**9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SteppingStoneConfig:
    M: int
    nu: float
    L: int
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not 0 < self.nu < 1:
            raise ConfigError("nu must lie in (0, 1)")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if self.M == 1 and self.L == 0:
            raise ConfigError("two individuals cannot share a colony of size 1")
        if self.max_events < 1:
            raise ConfigError("max_events must be >= 1")

    @property
    def alpha(self) -> float:
        return self.M * self.nu / self.L if self.L else math.inf

    @property
    def time_scale(self) -> float:
        """``scaled_time = raw_time * time_scale``; ``L = 0`` uses the unit length."""
        return 2.0 * self.nu / max(self.L, 1) ** 2

    @classmethod
    def from_alpha(cls, alpha: float, nu: float, L: int, **kw) -> "SteppingStoneConfig":
        return cls(M=int(round(alpha * L / nu)), nu=nu, L=L, **kw)


@dataclass(frozen=True)
class RingConfig:
    """Ring of ``colonies`` demes holding ``2 * dipSize`` genes each.

    ``scale_length`` is the ``L`` in ``t0 / (L^2 / m)``; it defaults to the
    ring size.
    """

    colonies: int
    dipSize: int
    m: float
    u: float = 0.0
    i: int = 0
    max_events: int = DEFAULT_MAX_EVENTS
    scale_length: int | None = None

    def __post_init__(self):
        if self.colonies < 3:
            raise ConfigError("colonies must be >= 3")
        if self.dipSize < 1:
            raise ConfigError("dipSize must be >= 1")
        if not 0 < self.m < 1:
            raise ConfigError("m must lie in (0, 1)")
        if not 0 <= self.u < 1:
            raise ConfigError("u must lie in [0, 1)")
        if not 0 <= self.i < self.colonies:
            raise ConfigError("i must lie in [0, colonies)")

    @property
    def genes(self) -> int:
        return 2 * self.dipSize

    @property
    def L(self) -> int:
        return self.scale_length or self.colonies

    @property
    def alpha(self) -> float:
        """Coalescence strength matched to Maruyama's transform.

        Continuous-time Moran pairs coalesce at twice the Wright-Fisher rate,
        hence the factor 4 rather than 2 between genes and diploids.
        """
        return self.genes * self.m / (4.0 * self.L)

    @property
    def time_scale(self) -> float:
        return self.m / self.L**2

    @classmethod
    def from_alpha(cls, alpha: float, m: float, colonies: int, **kw) -> "RingConfig":
        L = kw.get("scale_length") or colonies
        genes = 4.0 * alpha * L / m
        return cls(colonies=colonies, dipSize=int(round(genes / 2)), m=m, **kw)


@dataclass(frozen=True)
class VoterConfig:
    kernel: DispersalKernel
    L: int
    maxSteps: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if self.maxSteps < 1:
            raise ConfigError("maxSteps must be >= 1")

    @property
    def x0(self) -> float:
        k = self.kernel
        return self.L / (k.sigmaN * k.N)

    @property
    def time_scale(self) -> float:
        return 2.0 / self.kernel.N


@dataclass
class CoalescenceSample:
    replica: int
    raw_time: float
    scaled_time: float
    coalesced: bool = True
    events: int = 0

    def to_json(self) -> str:
        d = {"replica": self.replica, "raw_time": self.raw_time,
             "scaled_time": self.scaled_time, "coalesced": self.coalesced}
        return json.dumps(d, separators=(",", ":"))


def _sample(replica, raw, scale, coalesced=True, events=0) -> CoalescenceSample:
    return CoalescenceSample(int(replica), float(raw), float(raw * scale), bool(coalesced), int(events))


# event-level reference simulators

def _pair_events(M, nu, start, modulus, max_events, rng, replica, scale) -> CoalescenceSample:
    a, b = 0, start
    t = 0.0
    inv_m = 1.0 / M
    for n in range(1, max_events + 1):
        t += rng.exponential(0.5)
        mover_is_a = rng.random() < 0.5
        own, other = (a, b) if mover_is_a else (b, a)
        if rng.random() < nu:
            parent = own + (1 if rng.random() < 0.5 else -1)
            if modulus:
                parent %= modulus
        else:
            parent = own
        if parent == other and rng.random() < inv_m:
            return _sample(replica, t, scale, True, n)
        if mover_is_a:
            a = parent
        else:
            b = parent
    return _sample(replica, t, scale, False, max_events)


def simulate_stepping_pair(cfg: SteppingStoneConfig, rng: np.random.Generator, replica: int = 0) -> CoalescenceSample:
    """Event-by-event simulation of both lineages on the integers."""
    return _pair_events(cfg.M, cfg.nu, cfg.L, 0, cfg.max_events, rng, replica, cfg.time_scale)


def simulate_ring_pair(cfg: RingConfig, rng: np.random.Generator, replica: int = 0) -> CoalescenceSample:
    """Event-by-event simulation of both lineages on the ring."""
    return _pair_events(cfg.genes, cfg.m, cfg.i, cfg.colonies, cfg.max_events, rng, replica, cfg.time_scale)


# exact first-passage tables for the simple random walk

def _cdf_table(pmf: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmf)
    return np.minimum(cdf, 1.0)


@lru_cache(maxsize=64)
def line_passage_cdf(start: int, cap: int) -> np.ndarray:
    """CDF over ``n = 0..cap`` of the first hitting time of 0 from ``start``.

    Uses ``P(tau = n) = (d / n) P(S_n = d)``.
    """
    d = abs(int(start))
    n = np.arange(cap + 1, dtype=float)
    pmf = np.zeros(cap + 1)
    if d == 0:
        pmf[0] = 1.0
        return _cdf_table(pmf)
    ok = (n >= d) & ((n - d) % 2 == 0)
    nn = n[ok]
    logp = (math.log(d) - np.log(nn) + special.gammaln(nn + 1)
            - special.gammaln((nn + d) / 2 + 1) - special.gammaln((nn - d) / 2 + 1) - nn * math.log(2.0))
    pmf[ok] = np.exp(logp)
    return _cdf_table(pmf)


@lru_cache(maxsize=64)
def ring_passage_cdf(start: int, colonies: int, cap: int | None = None) -> np.ndarray:
    """CDF of the hitting time of ``{0, colonies}`` for SRW on ``[0, colonies]``.

    Spectral form: ``P(tau = n) = (2/C) sum_k sin(pi k s/C) sin(pi k/C) cos(pi k/C)^(n-1)``
    over odd ``k``.  ``cap`` defaults to the step count at which the
    remaining mass falls below 1e-18.
    """
    C = int(colonies)
    s = int(start) % C
    if s == 0:
        pmf = np.zeros(1 if cap is None else cap + 1)
        pmf[0] = 1.0
        return _cdf_table(pmf)
    if cap is None:
        c1 = math.cos(math.pi / C)
        cap = int(math.ceil(math.log(1e-18) / math.log(c1))) + 2 * C
    k = np.arange(1, C, 2, dtype=float)
    w = (2.0 / C) * np.sin(math.pi * k * s / C) * np.sin(math.pi * k / C)
    c = np.cos(math.pi * k / C)
    pmf = np.zeros(cap + 1)
    block = 8192
    for lo in range(1, cap + 1, block):
        n = np.arange(lo, min(cap + 1, lo + block), dtype=float)
        pmf[lo:lo + n.size] = np.power(c[None, :], n[:, None] - 1.0) @ w
    return _cdf_table(np.clip(pmf, 0.0, None))


def _draw(cdf: np.ndarray, rng, size=None):
    """Draw from a tabulated CDF; ``len(cdf)`` marks mass beyond the table."""
    return np.searchsorted(cdf, rng.random(size), side="right")


@dataclass(frozen=True)
class _DifferenceChain:
    genes: int
    nu: float
    start: int
    colonies: int | None
    cap: int

    @property
    def jump_rate(self) -> float:
        return 2.0 * self.nu

    @property
    def kill_rate(self) -> float:
        return 2.0 * (1.0 - self.nu) / self.genes

    def tables(self):
        if self.colonies:
            first = ring_passage_cdf(self.start % self.colonies, self.colonies, None)
            ret = ring_passage_cdf(1, self.colonies, None)
        else:
            first = line_passage_cdf(abs(self.start), self.cap)
            ret = line_passage_cdf(1, self.cap)
        return first, ret

    def draw(self, rng, horizon: float):
        """Return ``(raw_time, coalesced)``; ``horizon`` bounds the observation window."""
        first, ret = self.tables()
        jr, kr = self.jump_rate, self.kill_rate
        p_land = 1.0 / self.genes
        p_soj = kr / (jr + kr)
        away = 0
        zero = 0
        if self.start % (self.colonies or 2**62) != 0:
            h = int(_draw(first, rng))
            if h >= first.size:
                return horizon, False
            away += h
            landing = True
        else:
            landing = False
        if not landing:
            # initial sojourn at 0 without a landing event
            zero += 1
            if rng.random() < p_soj:
                return self._time(rng, away, zero, jr, kr), True
        q = (1.0 - p_land) * (1.0 - p_soj)
        survived = int(rng.geometric(1.0 - q)) - 1
        excursions = survived + (0 if landing else 1)
        # landing killed vs sojourn killed on the final visit
        killed_on_landing = rng.random() < p_land / (1.0 - q)
        zero += survived + (0 if killed_on_landing else 1)
        if excursions:
            lens = _draw(ret, rng, excursions)
            if lens.max() >= ret.size:
                return horizon, False
            away += int(lens.sum())
            if self.colonies is None and away > self.cap:
                return horizon, False
        return self._time(rng, away, zero, jr, kr), True

    @staticmethod
    def _time(rng, away, zero, jr, kr) -> float:
        t = 0.0
        if away:
            t += rng.gamma(away) / jr
        if zero:
            t += rng.gamma(zero) / (jr + kr)
        return t


def _step_cap(rate: float, horizon: float) -> int:
    mean = rate * horizon
    return int(math.ceil(mean + 12.0 * math.sqrt(mean) + 64))


MAX_TABLE = 1 << 24
DEFAULT_TMAX = 16.0


def sample_stepping(cfg: SteppingStoneConfig, rng, replica: int = 0, tmax: float = DEFAULT_TMAX) -> CoalescenceSample:
    """Exact fast sampler for the stepping stone pair on the integers.

    ``tmax`` is the observation horizon in scaled time.  Replicas still
    running there are returned censored with ``raw_time`` at the horizon, as
    are replicas exceeding ``max_events``.
    """
    scale = cfg.time_scale
    horizon = min(tmax / scale, cfg.max_events / 2.0)
    cap = _step_cap(2 * cfg.nu, horizon)
    if cap > MAX_TABLE:
        raise ConfigError(f"horizon needs a {cap}-step passage table; lower tmax")
    chain = _DifferenceChain(cfg.M, cfg.nu, cfg.L, None, cap)
    t, ok = chain.draw(rng, horizon)
    if ok and t > horizon:
        t, ok = horizon, False
    return _sample(replica, t, scale, ok)


def sample_ring(cfg: RingConfig, rng, replica: int = 0) -> CoalescenceSample:
    """Exact fast sampler for the ring pair; every replica coalesces."""
    chain = _DifferenceChain(cfg.genes, cfg.m, cfg.i, cfg.colonies, 0)
    t, ok = chain.draw(rng, math.inf)
    return _sample(replica, t, cfg.time_scale, ok)


# voter model

def voter_jump_count(kernel: DispersalKernel, L: int, rng, max_steps: int, chunk: int = 4096) -> int | None:
    """Number of kernel jumps until the difference walk from ``L`` first hits 0."""
    if L == 0:
        return 0
    pos = L
    done = 0
    while done < max_steps:
        n = min(chunk, max_steps - done)
        path = pos + np.cumsum(kernel.sample(rng, n))
        hit = np.flatnonzero(path == 0)
        if hit.size:
            return done + int(hit[0]) + 1
        pos = int(path[-1])
        done += n
        chunk = min(chunk * 2, 1 << 18)
    return None


def simulate_voter_pair(cfg: VoterConfig, rng, replica: int = 0, tmax: float | None = None) -> CoalescenceSample:
    """Difference walk with rate-2 jumps drawn from the kernel.

    With ``tmax`` (scaled time) the walk is stopped once the jump count makes
    the horizon unreachable except with negligible probability.
    """
    scale = cfg.time_scale
    max_steps = cfg.maxSteps
    horizon = math.inf
    if tmax is not None:
        horizon = tmax / scale
        max_steps = min(max_steps, _step_cap(2.0, horizon))
    k = voter_jump_count(cfg.kernel, cfg.L, rng, max_steps)
    if k is None:
        t = horizon if math.isfinite(horizon) else rng.gamma(max_steps) / 2.0
        return _sample(replica, t, scale, False, max_steps)
    t = rng.gamma(k) / 2.0 if k else 0.0
    if t > horizon:
        return _sample(replica, horizon, scale, False, k)
    return _sample(replica, t, scale, True, k)


# replica batches

def _run_chunk(args):
    fn, cfg, seed, ids, kw = args
    plan = SeedPlan(seed)
    return [(r, fn(cfg, plan.generator(r), r, **kw)) for r in ids]


def default_threads() -> int:
    env = os.environ.get("STONEWALK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(fn, cfg, plan: SeedPlan, replicas: int, threads: int = 1, first: int = 0, **kw) -> list:
    """Run ``fn(cfg, rng, replica, **kw)`` for each replica id, ordered by id.

    Each replica draws from its own stream, so the output does not depend on
    ``threads``.  ``fn`` must be a module-level function when ``threads > 1``.
    """
    ids = list(range(first, first + replicas))
    if threads <= 1 or replicas < 2:
        pairs = _run_chunk((fn, cfg, plan.masterSeed, ids, kw))
    else:
        n_chunks = min(replicas, threads * 4)
        chunks = [ids[i::n_chunks] for i in range(n_chunks)]
        pairs = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(_run_chunk, [(fn, cfg, plan.masterSeed, c, kw) for c in chunks]):
                pairs.extend(part)
        pairs.sort(key=lambda p: p[0])
    return [v for _, v in pairs]


def write_ndjson(samples, fh) -> None:
    for s in samples:
        fh.write(s.to_json())
        fh.write("\n")


def read_ndjson(fh) -> list[CoalescenceSample]:
    out = []
    for line in fh:
        line = line.strip()
        if line:
            d = json.loads(line)
            out.append(CoalescenceSample(d["replica"], d["raw_time"], d["scaled_time"], d["coalesced"]))
    return out


def identity_by_descent(samples, u: float) -> float:
    """``E (1 - 2u)^t0`` with ``t0`` in model time units."""
    t = np.array([s.raw_time for s in samples])
    if not all(s.coalesced for s in samples):
        raise ValueError("identity by descent needs coalesced samples")
    return float(np.mean(np.exp(t * math.log1p(-2.0 * u))))


# zero visits of the embedded walk

def srw_path(start: int, steps: int, rng) -> np.ndarray:
    """Embedded jump chain of the stepping stone separation: SRW from ``start``."""
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = start
    out[1:] = start + np.cumsum(rng.integers(0, 2, steps) * 2 - 1)
    return out


def count_zero_visits(path, horizon: int | None = None) -> np.ndarray:
    """``V_m = #{1 <= k <= m : Y_k = 0}`` for ``m = 0..horizon``."""
    y = np.asarray(path)
    if horizon is None:
        horizon = y.size - 1
    hits = np.zeros(horizon + 1, dtype=np.int64)
    hits[1:] = y[1:horizon + 1] == 0
    return np.cumsum(hits)


# cycle decomposition

@dataclass
class CycleRecord:
    m: int
    S: int | None
    T: int
    eta: int | None
    crossed: bool
    positionAtS: int | None
    positionAtT: int | None

    CSV_HEADER = "m,S,T,eta,crossed,posS,posT"

    def csv_row(self) -> str:
        f = lambda v: "" if v is None else str(int(v))
        return ",".join([str(self.m), f(self.S), str(self.T), f(self.eta),
                         "1" if self.crossed else "0", f(self.positionAtS), f(self.positionAtT)])

    @property
    def complete(self) -> bool:
        return self.S is not None


@dataclass
class CycleDecomposition:
    N: int
    records: list
    pre_phase: bool
    J: int | None
    length: int

    @property
    def inner(self) -> float:
        return self.N ** (5.0 / 6.0)

    @property
    def S(self) -> np.ndarray:
        return np.array([r.S for r in self.records if r.complete], dtype=np.int64)

    @property
    def T(self) -> np.ndarray:
        return np.array([r.T for r in self.records], dtype=np.int64)

    def M(self, n: int) -> int:
        """``sup{m : S_m <= n}``; -1 before ``S_0``."""
        s = self.S
        return int(np.searchsorted(s, n, side="right")) - 1

    def L(self, n: int) -> int:
        """Number of sign-changing cycles ``1 <= m <= M(n)``."""
        k = self.M(n)
        return sum(1 for r in self.records[1:k + 1] if r.crossed)

    def A(self, j: int) -> int:
        T, S = self.T, self.S
        return int(T[0] + np.sum(T[1:j + 1] - S[:j]))

    def B(self, j: int) -> int:
        T, S = self.T, self.S
        return int(np.sum(S[:j + 1] - T[:j + 1]))

    def write_csv(self, fh) -> None:
        fh.write(CycleRecord.CSV_HEADER + "\n")
        for r in self.records:
            fh.write(r.csv_row() + "\n")


def _first_index(mask_fn, absx: np.ndarray, start: int) -> int | None:
    n = absx.size
    lo = start
    step = 1024
    while lo < n:
        hi = min(n, lo + step)
        hit = np.flatnonzero(mask_fn(absx[lo:hi]))
        if hit.size:
            return lo + int(hit[0])
        lo = hi
        step *= 2
    return None


def cycle_decompose(path, N: float) -> CycleDecomposition:
    """Interleaved exit and re-entry times of the strip around 0.

    ``S_m`` is the first step after ``T_m`` with ``|X| > 2 N^(5/6)``, and
    ``T_{m+1}`` the first step after ``S_m`` with
    ``|X| < |X(S_m)| - N^(5/6)``, starting from ``T_0 = -1``.  Both thresholds
    are real-valued and the comparisons strict.  If the path starts inside
    the strip ``S_0`` is the first exit and the result is flagged
    ``pre_phase``.
    """
    x = np.asarray(path, dtype=np.int64)
    absx = np.abs(x)
    a = float(N) ** (5.0 / 6.0)
    outer = 2.0 * a
    zero_idx = np.flatnonzero(x == 0)
    records = []
    pre = not absx[0] > outer if x.size else True
    T = -1
    posT = None
    prevS_sign = 0
    m = 0
    J = None
    while True:
        S = _first_index(lambda v: v > outer, absx, T + 1)
        lo = max(T, 0)
        hi = S if S is not None else x.size - 1
        if J is None and zero_idx.size:
            i = np.searchsorted(zero_idx, lo)
            if i < zero_idx.size and zero_idx[i] <= hi:
                J = m
        if S is None:
            records.append(CycleRecord(m, None, T, None, False, None, posT))
            break
        sign = 1 if x[S] > 0 else -1
        crossed = m >= 1 and sign * prevS_sign < 0
        records.append(CycleRecord(m, S, T, S - T, crossed, int(x[S]), posT))
        prevS_sign = sign
        thr = absx[S] - a
        Tn = _first_index(lambda v: v < thr, absx, S + 1)
        if Tn is None:
            break
        T, posT = Tn, int(x[Tn])
        m += 1
    return CycleDecomposition(int(N), records, pre, J, int(x.size))


def crossing_count(path, N: float, t: float) -> int:
    dec = cycle_decompose(path, N)
    n = int(math.floor(N * t))
    return dec.L(n)


def crossing_local_time(path, N: float, t: float) -> float:
    """``2 L^N(floor(N t)) / N^(1/6)``: sign-changing cycles completed by step ``N t``.

    As ``N`` grows this approaches ``sigma`` times half the occupation-density
    local time at 0 of the rescaled path.
    """
    return 2.0 * crossing_count(path, N, t) / float(N) ** (1.0 / 6.0)


def local_time_estimate(path, N: float, t: float, sigma: float) -> float:
    """Occupation-density local time at 0 estimated from strip crossings."""
    return 2.0 * crossing_local_time(path, N, t) / sigma


def kernel_path(kernel: DispersalKernel, start: int, steps: int, rng) -> np.ndarray:
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = start
    out[1:] = start + np.cumsum(kernel.sample(rng, steps))
    return out


# cycle moments

@dataclass
class CycleMoments:
    n_cycles: int
    mean_eta: float
    mean_eta_se: float
    second_eta: float
    second_eta_se: float
    target_mean: float
    target_second: float
    b_index: int
    b_threshold: float
    b_paths: int
    b_exceed: float
    insufficient: bool

    def to_dict(self) -> dict:
        return asdict(self)


def cycle_moment_diagnostics(decompositions, kernel: DispersalKernel, min_cycles: int = 1000) -> CycleMoments:
    """Empirical ``E eta``, ``E eta^2`` and the frequency of ``B_j > 2 N^(17/18)``.

    Only complete cycles with ``m >= 1`` enter the moments, since cycle 0 is
    an artefact of ``T_0 = -1``.  ``j = floor(N^(2/9))``; paths whose
    ``S_j`` was not reached do not count towards the frequency.
    """
    if isinstance(decompositions, CycleDecomposition):
        decompositions = [decompositions]
    N = kernel.N
    eta = []
    for d in decompositions:
        eta.extend(r.eta for r in d.records[1:] if r.complete)
    eta = np.asarray(eta, dtype=float)
    n = eta.size
    j = int(math.floor(N ** (2.0 / 9.0)))
    thr = 2.0 * N ** (17.0 / 18.0)
    exceed = []
    for d in decompositions:
        if d.S.size > j:
            exceed.append(d.B(j) > thr)
    s2 = kernel.sigma2
    mean = float(eta.mean()) if n else math.nan
    sec = float((eta**2).mean()) if n else math.nan
    mse = float(eta.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    sse = float((eta**2).std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return CycleMoments(
        n_cycles=int(n), mean_eta=mean, mean_eta_se=mse, second_eta=sec, second_eta_se=sse,
        target_mean=3.0 * N ** (2.0 / 3.0) / s2, target_second=19.0 * N ** (4.0 / 3.0) / s2**2,
        b_index=j, b_threshold=thr, b_paths=len(exceed),
        b_exceed=float(np.mean(exceed)) if exceed else math.nan,
        insufficient=n < min_cycles,
    )


def run_manifest(subcommand: str, config: dict, seed: int, counts: dict, kernel: DispersalKernel | None = None,
                 **extra) -> dict:
    from . import __version__
    doc = {"subcommand": subcommand, "config": config, "masterSeed": seed,
           "kernel_hash": kernel.digest() if kernel is not None else None,
           "version": __version__, "counts": counts}
    doc.update(extra)
    return doc
