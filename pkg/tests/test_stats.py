import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stonewalk.stats import (
    CensoredSampleError, EmptySampleError, SeedPlan, comparison_report, ecdf, ks_critical, ks_distance,
    laplace_estimate,
)

GOLDEN_42 = [
    0xc482a9e8e540ad941fa9f00f9fd11c102d912f993815fe2bc3100bb066bc0c8e,
    0xb5dfa7a3851b0a22b7234bd799a4ee7d5c9734ebe2e7b1cfcc3a06265fa6e56a,
    0x2e98db9cdfb79edfdb1c13a42290119687c3e43cac373a35190faed0eb0176dc,
    0x6e3746828d00e3f21bfd44cadf8551b670430ecd680bfe2b223e79feb6c32e6a,
    0xdb6b4f04c147032d067fbfcec3609cf0aa06caadbf0cfdd646220139bfb5548,
    0x4312ab9743d40277f397b4a9c2795714208d2558ba52f226ca524c9c541cb7bb,
    0xf8a98ef8133537d0d09f568a928e4a9888b840fd01670e631b6d031daa8fc9bc,
    0x31e3b4791c7cd4039c49846b2334f8cca6db4f9a7918410f1d868b60639cd7e1,
]


def test_seed_golden_vectors():
    plan = SeedPlan(42)
    assert [plan.streamFor(r) for r in range(8)] == GOLDEN_42


def test_seed_golden_draws():
    assert SeedPlan(42).generator(0).integers(0, 2**32, 3).tolist() == [932587924, 477895906, 212040074]


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 2**40))
def test_distinct_replicas_distinct_keys(seed, a, b):
    plan = SeedPlan(seed)
    assert (plan.stream_key(a) == plan.stream_key(b)) == (a == b)


def test_generator_independent_of_order():
    plan = SeedPlan(7)
    forward = [plan.generator(r).random() for r in range(5)]
    backward = [plan.generator(r).random() for r in reversed(range(5))][::-1]
    assert forward == backward


def test_seed_range_checked():
    with pytest.raises(ValueError):
        SeedPlan(-1)
    with pytest.raises(ValueError):
        SeedPlan(2**64)


def test_child_plans_differ():
    p = SeedPlan(42)
    assert p.child(1).masterSeed != p.child(2).masterSeed
    assert p.child(1) == SeedPlan(42).child(1)


def test_ecdf_examples():
    d = ecdf([3, 1, 2])
    assert d.evaluate(2) == pytest.approx(2 / 3)
    assert d.evaluate(0.5) == 0.0
    assert d.evaluate(10) == 1.0
    assert list(d.values) == [1, 2, 3]


def test_ecdf_right_continuous():
    d = ecdf([1.0, 2.0])
    assert d.evaluate(1.0) == 0.5
    assert d.evaluate(np.nextafter(1.0, 0)) == 0.0


def test_ecdf_empty_rejected():
    with pytest.raises(EmptySampleError):
        ecdf([])


def test_ecdf_censoring():
    d = ecdf([0.5, 4.0, 1.5, 4.0], censored=[False, True, False, True], horizon=4.0)
    assert d.n == 4 and d.censored == 2
    assert d.evaluate(2.0) == 0.5
    with pytest.raises(ValueError):
        d.evaluate(4.0)


def test_ks_against_own_ecdf_is_zero():
    x = np.random.default_rng(1).random(200)
    d = ecdf(x)
    assert ks_distance(d, lambda t: d.evaluate(t)) == 0.0


def test_ks_constant_sample():
    c = 0.3
    d = ecdf(np.full(50, c))
    F = stats.norm.cdf
    assert ks_distance(d, F) == pytest.approx(max(F(c), 1 - F(c)), abs=1e-15)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60))
def test_ks_matches_scipy(xs):
    d = ecdf(xs)
    ref = stats.kstest(xs, "norm").statistic
    assert ks_distance(d, stats.norm.cdf) == pytest.approx(ref, abs=1e-12)


def test_ks_calibration():
    n = 10**4
    rng = np.random.default_rng(2024)
    hits = sum(ks_distance(ecdf(rng.exponential(size=n)), stats.expon.cdf) < ks_critical(n) for _ in range(200))
    # at the 1% level at most a handful of the 200 draws may exceed the critical value
    assert hits >= 194
    assert ks_critical(n) == pytest.approx(1.63 / math.sqrt(n), rel=2e-3)


def test_ks_window_catches_gap_at_end():
    # every sample sits at 0; below the window end the true CDF lags by ~0.5
    d = ecdf(np.zeros(10), censored=np.zeros(10, bool), horizon=1.0)
    assert ks_distance(d, lambda t: np.clip(np.asarray(t) / 2, 0, 1)) == pytest.approx(1.0)
    d2 = ecdf(np.concatenate([np.zeros(5), np.full(5, 1.0)]), censored=[False] * 5 + [True] * 5, horizon=1.0)
    assert ks_distance(d2, lambda t: np.asarray(t) * 0 + 0.5) == pytest.approx(0.5)


def test_laplace_examples():
    x = np.random.default_rng(0).exponential(size=10)
    e = laplace_estimate(x, 0.0)
    assert e.value == 1.0 and e.stderr == 0.0
    assert laplace_estimate(np.zeros(5), 3.0).value == 1.0
    e = laplace_estimate(np.random.default_rng(11).exponential(size=10**5), 1.0)
    assert abs(e.value - 0.5) < 3 * e.stderr
    assert e.n == 10**5


def test_laplace_rejects_censoring():
    with pytest.raises(CensoredSampleError):
        laplace_estimate([1.0, 2.0], 1.0, censored=[False, True])
    with pytest.raises(EmptySampleError):
        laplace_estimate([], 1.0)


def test_comparison_report_schema():
    r = comparison_report("ks", 0.01, 100, 0.02)
    assert r == {"metric": "ks", "value": 0.01, "n": 100, "tolerance": 0.02, "pass": True}
    assert comparison_report("ks", 0.03, 100, 0.02)["pass"] is False
