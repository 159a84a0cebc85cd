import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stonewalk.dispersal import (
    KernelError, build_kernel, char_fn, from_masses, kernel_from_json, charfn_gap_constants, truncation_radius,
    verify_assumptions,
)


def test_nearest_neighbor_definition():
    k = build_kernel("nearest-neighbor", 1, 0.0)
    assert k.pmf([-1, 0, 1]).tolist() == [0.5, 0.0, 0.5]
    assert k.variance == pytest.approx(1.0, abs=1e-15)
    assert k.exempt


def test_uniform_25_full_mix():
    k = build_kernel("uniform", 25, 1.0)
    z = np.arange(-5, 6)
    assert np.allclose(k.pmf(z), 1 / 11, rtol=0, atol=1e-15)
    assert k.pmf([6, -6]).tolist() == [0.0, 0.0]
    # sum z^2 / 11 = 2 (1 + 4 + 9 + 16 + 25) / 11
    assert k.variance == pytest.approx(10.0, rel=1e-14)
    assert k.sigma2 == pytest.approx(0.4, rel=1e-14)


def test_discrete_normal_large_n():
    k = build_kernel("discrete-normal", 10000, 0.1)
    assert k.pmf(0) > 0
    assert k.radius <= math.ceil(k.B * 100 * math.log(10000))
    assert verify_assumptions(k).passed


def test_rejects_bad_inputs():
    with pytest.raises(KernelError):
        build_kernel("uniform", 0)
    with pytest.raises(KernelError):
        build_kernel("uniform", 25, 1.5)
    with pytest.raises(KernelError):
        build_kernel("uniform", 25, -0.1)
    with pytest.raises(KernelError):
        build_kernel("cauchy", 25)


def test_rejects_truncation_that_moves_variance():
    with pytest.raises(KernelError):
        build_kernel("bilateral-exponential", 400, 0.1, B=0.5)


def test_tiny_n_bilateral_exponential_rejected():
    with pytest.raises(KernelError):
        build_kernel("bexp", 2, 1.0)


def test_truncation_radius_formula():
    assert truncation_radius(400, 8.0) == math.ceil(8 * 20 * math.log(400))


@pytest.mark.parametrize("family", ["uniform", "bexp", "dnormal"])
@pytest.mark.parametrize("N", [100, 400])
def test_built_kernels_pass_audit(family, N):
    rep = verify_assumptions(build_kernel(family, N))
    assert rep.passed, rep.first_failure


@settings(max_examples=40, deadline=None)
@given(family=st.sampled_from(["uniform", "bexp", "dnormal"]), N=st.integers(3, 2500),
       mix=st.floats(0.05, 1.0))
def test_kernel_invariants(family, N, mix):
    k = build_kernel(family, N, mix)
    m = k.mass
    assert np.all(m >= 0)
    assert abs(m.sum() - 1.0) < 1e-12
    assert np.array_equal(m, m[::-1])
    z = k.support.astype(float)
    assert np.sum(z**2 * m) == pytest.approx(k.sigmaN**2 * N, rel=1e-12)
    assert k.radius <= k.truncation_radius
    inner = np.abs(k.support) <= math.sqrt(N)
    assert m[inner].min() >= k.floor_constant / math.sqrt(N) * (1 - 1e-12)
    assert k.floor_constant > 0


def test_sample_support_nearest_neighbor(rng):
    k = build_kernel("nn", 1)
    assert set(np.unique(k.sample(rng, 1000)).tolist()) == {-1, 1}


def test_sample_moments(rng):
    k = build_kernel("uniform", 25, 1.0)
    x = k.sample(rng, 10**6)
    assert abs(x.mean()) < 4 * k.sigmaN * math.sqrt(k.N) / 1e3
    assert x.var() == pytest.approx(10.0, rel=0.01)


def test_sample_chi_square_smoke():
    k = build_kernel("dnormal", 100)
    x = k.sample(np.random.default_rng(7), 10**6)
    counts = np.bincount(x + k.radius, minlength=k.mass.size)
    expected = k.mass * x.size
    keep = expected > 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 1e-6


def test_sample_reproducible_table_layout():
    k = build_kernel("uniform", 25, 1.0)
    u = np.random.default_rng(3).random(5)
    expected = np.searchsorted(np.cumsum(k.mass), u, side="right") - k.radius
    assert k.sample(np.random.default_rng(3), 5).tolist() == expected.tolist()


def test_char_fn_values():
    k = build_kernel("uniform", 25, 1.0)
    assert char_fn(k, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert char_fn(build_kernel("nn", 1), math.pi) == pytest.approx(-1.0, abs=1e-15)
    th = 0.01
    taylor = 1 - k.variance / 2 * th**2
    # fourth-order remainder bounded by sum z^4 q / 24 * theta^4
    assert abs(char_fn(k, th) - taylor) <= k.fourth_moment() / 24 * th**4 * 1.0001
    assert char_fn(k, th) == pytest.approx(1 - 5e-4, abs=1e-6)


def test_char_fn_even():
    k = build_kernel("bexp", 400)
    th = np.linspace(0, math.pi, 257)
    assert np.array_equal(char_fn(k, th), char_fn(k, -th))


def test_char_fn_gap_uniform_in_n():
    worst = []
    for N in (100, 400, 1600, 6400):
        k = build_kernel("uniform", N)
        th = np.linspace(math.pi / 10_000, math.pi, 10_000)
        th = th[th > 0.1 / math.sqrt(N)]
        worst.append(np.max(np.abs(char_fn(k, th))))
    assert max(worst) < 1 - 1e-3
    # the bound does not creep towards 1 as N grows
    assert worst[-1] <= worst[0] + 1e-3


def test_audit_flags_missing_floor():
    k = from_masses({-2: 0.5, 2: 0.5}, N=4)
    rep = verify_assumptions(k)
    assert not rep.passed
    assert rep.first_failure.name.startswith("3")


def test_audit_exempt_nearest_neighbor():
    rep = verify_assumptions(build_kernel("nn", 1))
    assert rep.passed and rep.exempt
    assert {c.name for c in rep.checks} == {"normalised", "1-symmetry", "2-variance"}


def test_audit_reports_charfn_gap_constants():
    k = build_kernel("uniform", 25, 1.0)
    rep = verify_assumptions(k)
    assert rep.a > 0 and rep.b > 0
    a, b, theta, phi = charfn_gap_constants(k)
    bound = np.maximum(1 - b * k.N * theta**2, 1 - a)
    assert np.all(phi <= bound + 1e-12)


def test_audit_asymmetric_witness():
    k = from_masses({-1: 0.3, 0: 0.2, 1: 0.5}, N=1)
    rep = verify_assumptions(k)
    sym = [c for c in rep.checks if c.name == "1-symmetry"][0]
    assert not sym.passed and abs(sym.witness) == 1


@pytest.mark.parametrize("family,N", [("uniform", 25), ("bexp", 400), ("dnormal", 1600)])
def test_json_round_trip_bit_exact(family, N):
    k = build_kernel(family, N)
    doc = json.loads(k.to_json())
    assert set(doc) == {"family", "N", "mix", "B", "support_radius", "sigmaN", "mass"}
    k2 = kernel_from_json(k.to_json())
    assert np.array_equal(k.mass, k2.mass)
    assert k2.sigmaN == k.sigmaN
    assert k2.digest() == k.digest()
