import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from stonewalk.limit_law import (
    ABSORBED_1_1, LimitLawError, eq2_joint_density, erfc, maruyama_exact, maruyama_f0_asymptotic,
    maruyama_laplace, ring_laplace, survival, survival_closed, survival_pde, survival_quadrature,
    theorem2_limit_survival, theorem3_limit_survival,
)

LAMS = (0.5, 1.0, 2.0, 5.0)


@pytest.fixture(scope="module")
def pde_solutions():
    return {lam: survival_pde(lam, tMax=2.0) for lam in LAMS}


def _tail_by_series(y, terms=300):
    # P(Z > y) = 1/2 - phi(y) * sum y^(2k+1) / (2k+1)!!
    total, term = 0.0, y
    for k in range(terms):
        total += term
        term *= y * y / (2 * k + 3)
    return 0.5 - math.exp(-y * y / 2) / math.sqrt(2 * math.pi) * total


def test_erfc_is_normal_tail():
    assert erfc(0.0) == 0.5
    assert abs(erfc(-38.0) - 1.0) < 1e-14
    assert erfc(1.959963985) == pytest.approx(_tail_by_series(1.959963985), abs=1e-12)
    assert erfc(1.959963985) == pytest.approx(0.025, abs=1e-9)


@given(st.floats(-6, 6))
def test_erfc_against_series(y):
    assert erfc(y) == pytest.approx(_tail_by_series(y), abs=1e-13)


def test_density_without_killing_is_heat_kernel():
    for x, z in [(0.3, -1.2), (1.0, 1.0), (-2.0, 0.5)]:
        expected = math.exp(-(z - x) ** 2 / 2) / math.sqrt(2 * math.pi)
        assert eq2_joint_density(1.0, x, z, 0.0) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.05, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 6))
def test_density_reflection_symmetry(t, x, z, lam):
    assert eq2_joint_density(t, x, z, lam) == pytest.approx(eq2_joint_density(t, -x, -z, lam), rel=1e-12, abs=1e-300)


def test_density_rejects_nonpositive_time():
    with pytest.raises(LimitLawError):
        eq2_joint_density(0.0, 1.0, 0.0, 1.0)


def test_density_integral_matches_pde():
    mass, _ = integrate.quad(lambda z: eq2_joint_density(1.0, 1.0, z, 1.0), -11, 11, points=[0.0, 1.0], epsabs=1e-12)
    assert mass == pytest.approx(survival(1.0, 1.0, 1.0, method="pde"), abs=1e-4)


def test_normal_tail_reading_is_not_a_probability():
    # the literal normal-tail reading leaves the unit interval; kept only as a diagnostic
    vals = [survival_quadrature(1.0, 0.0, lam, convention="normal-tail") for lam in (1.0, 3.0, 10.0)]
    assert any(v < 0 or v > 1 for v in vals)


def test_quadrature_examples():
    assert survival_quadrature(1.3, 0.7, 0.0) == 1.0
    assert survival_quadrature(0.0, 0.7, 5.0) == 1.0
    assert survival_quadrature(1e-6, 3.0, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert survival_quadrature(1.0, 1.0, 1e4) == pytest.approx(0.682689, abs=2e-3)


def test_absorbed_constant_from_reflection():
    assert ABSORBED_1_1 == pytest.approx(2 * stats.norm.cdf(1.0) - 1, abs=1e-15)


def test_pde_examples():
    sol = survival_pde(0.0, tMax=1.0)
    assert np.all(sol.values == 1.0)
    assert survival(1.0, 1.0, 1.0, method="pde") == pytest.approx(survival_quadrature(1.0, 1.0, 1.0), abs=1e-4)
    assert survival(1.0, 1.0, 1e4, method="pde") == pytest.approx(0.682689, abs=5e-3)


def test_pde_rejects_close_far_field():
    with pytest.raises(LimitLawError):
        survival_pde(1.0, tMax=1.0, xMax=4.0, xProbe=3.0)


def test_pde_reports_solver_residual(pde_solutions):
    assert all(s.residual < 1e-10 for s in pde_solutions.values())


def test_grid_invariants(pde_solutions):
    for sol in pde_solutions.values():
        v = sol.values
        assert v.min() >= 0 and v.max() <= 1
        assert np.all(np.diff(v, axis=0) <= 1e-12)
        assert np.all(np.diff(v, axis=1) >= -1e-12)


def test_monotonicity_grid(pde_solutions):
    ts = np.linspace(0.1, 2.0, 20)
    xs = np.linspace(0.0, 3.0, 20)
    for route in ("quadrature", "pde"):
        cube = np.empty((len(LAMS), ts.size, xs.size))
        for a, lam in enumerate(LAMS):
            for b, t in enumerate(ts):
                for c, x in enumerate(xs):
                    cube[a, b, c] = (survival_quadrature(t, x, lam) if route == "quadrature"
                                     else pde_solutions[lam].at(t, x))
        assert np.all(np.diff(cube, axis=0) <= 1e-9), route
        assert np.all(np.diff(cube, axis=1) <= 1e-9), route
        assert np.all(np.diff(cube, axis=2) >= -1e-9), route


def test_route_agreement(pde_solutions):
    worst = 0.0
    for lam in LAMS:
        for t in np.linspace(0.1, 2.0, 12):
            for x in np.linspace(0.0, 3.0, 13):
                q = survival_quadrature(t, x, lam)
                worst = max(worst, abs(q - pde_solutions[lam].at(t, x)))
                assert q == pytest.approx(survival_closed(t, x, lam), abs=1e-7)
    assert worst < 1e-4


def test_boundary_condition_converges_first_order():
    gaps = []
    for dx in (1 / 50, 1 / 100, 1 / 200):
        sol = survival_pde(1.0, tMax=1.0, dx=dx, dt=dx / 2)
        row = sol.values[-1]
        gaps.append(abs((row[1] - row[0]) / dx - 1.0 * row[0]))
    r1, r2 = gaps[0] / gaps[1], gaps[1] / gaps[2]
    assert 1.8 < r1 < 2.2 and 1.8 < r2 < 2.2


def test_grid_csv_round_trip(tmp_path):
    sol = survival_pde(1.0, tMax=0.5, dx=1 / 20, dt=1 / 40)
    sol.to_json_csv(tmp_path / "g")
    data = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert data.shape[0] == sol.values.size
    assert np.array_equal(data[:, 2], sol.values.ravel())


def test_theorem2_examples():
    assert theorem2_limit_survival(0.0, 1.0) == 1.0
    assert theorem2_limit_survival(1.0, 1e-4) == pytest.approx(0.682689, abs=1e-3)
    assert theorem2_limit_survival(1.0, 1e6) >= 0.999
    with pytest.raises(LimitLawError):
        theorem2_limit_survival(1.0, 0.0)


def test_theorem2_routes():
    for alpha in (0.25, 1.0, 4.0):
        closed = theorem2_limit_survival(1.0, alpha)
        assert theorem2_limit_survival(1.0, alpha, method="quadrature") == pytest.approx(closed, abs=1e-7)
        assert theorem2_limit_survival(1.0, alpha, method="pde") == pytest.approx(closed, abs=1e-4)


def test_theorem3_examples():
    assert theorem3_limit_survival(0.0, 0.7, 1.0) == 1.0
    assert theorem3_limit_survival(1.0, 1e-3, 1.0) == pytest.approx(0.682689, abs=1e-2)
    at0 = theorem3_limit_survival(1.0, 0.8, 0.0)
    assert at0 < 1
    assert at0 == pytest.approx(survival_quadrature(1.0, 0.0, 1 / 0.8), abs=1e-7)
    doubled = theorem3_limit_survival(1.0, 0.8, 0.0, rate_per_sigma=2.0)
    assert doubled == pytest.approx(survival_quadrature(1.0, 0.0, 2 / 0.8), abs=1e-7)
    with pytest.raises(LimitLawError):
        theorem3_limit_survival(1.0, 0.0, 1.0)


def test_closed_form_at_origin():
    # E_0 exp(-lam l(t)) = exp(lam^2 t / 2) * 2 P(Z > lam sqrt t)
    for lam, t in [(1.0, 1.0), (2.0, 0.3), (0.5, 2.0)]:
        expected = math.exp(lam * lam * t / 2) * special.erfc(lam * math.sqrt(t) / math.sqrt(2))
        assert survival_closed(t, 0.0, lam) == pytest.approx(expected, rel=1e-12)


def test_maruyama_laplace_examples():
    assert maruyama_laplace(0.25, 1.0) == 0.5
    assert maruyama_laplace(0.6, 0.0) == 1.0
    assert maruyama_laplace(1.0, 4.0) == pytest.approx(1 / 9, rel=1e-15)


def test_ring_laplace_tends_to_line():
    assert ring_laplace(0.25, 1.0, 1e3) == pytest.approx(maruyama_laplace(0.25, 1.0), rel=1e-12)
    assert ring_laplace(0.25, 1.0, 1.0) > maruyama_laplace(0.25, 1.0)


def test_maruyama_exact_examples():
    small = maruyama_exact(1e-6, 0.1, 10.0)
    assert small.I0 == pytest.approx(0.5 / math.sqrt(2e-6 * 0.1), rel=0.01)
    big = maruyama_exact(0.99, 0.1, 10.0)
    assert 0 < big.I0 < 10
    u, m = 1e-6, 0.1
    dip = 1 / (4 * math.sqrt(2 * u * m))
    assert maruyama_exact(u, m, dip).f0 == pytest.approx(0.5, rel=0.02)
    assert maruyama_f0_asymptotic(u, m, dip) == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(LimitLawError):
        maruyama_exact(0.0, 0.1, 1.0)


def test_maruyama_exact_against_trapezoid():
    # periodic integrand: the trapezoid rule over a full period converges geometrically
    u, m = 1e-2, 0.3
    th = np.linspace(0, 2 * np.pi, 20001)[:-1]
    g = 1 - m * (1 - np.cos(th))
    ref = np.mean(g * g / (1 - (1 - u) ** 2 * g * g))
    assert maruyama_exact(u, m, 1.0).I0 == pytest.approx(ref, rel=1e-10)


def test_identity_integral_asymptotics():
    errs = [abs(maruyama_exact(u, 0.1, 1.0).I0 * math.sqrt(2 * u * 0.1) - 0.5) / 0.5 for u in (1e-4, 1e-5, 1e-6)]
    assert errs[0] < 0.05 and errs[1] < 0.01 and errs[2] < 0.003
    assert errs[0] > errs[1] > errs[2]
