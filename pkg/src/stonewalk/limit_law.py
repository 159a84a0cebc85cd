"""Survival function of the local-time limit laws.

``u(t, x) = E_x exp(-lam * l(t))`` where ``l`` is the local time at 0 of a
standard Brownian motion, normalised as an occupation density (so that
``|B_t| - l(t)`` is a martingale).  Three routes are provided:

* ``closed``: the density of ``E_x(exp(-lam l(t)); B_t in dz)`` integrated in
  closed form,
* ``quadrature``: numerical integration of that joint density over ``z``,
* ``pde``: Crank-Nicolson solution of ``u_t = u_xx / 2`` on ``x >= 0`` with the
  Robin condition ``u_x(t, 0+) = lam u(t, 0)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special

SQRT2 = math.sqrt(2.0)
ABSORBED_1_1 = math.erf(1.0 / SQRT2)  # P_1(T_0 > 1) = 2 Phi(1) - 1

QUAD_CUTOFF = 12.0
QUAD_TOL = 1e-8
REF_DX = 1.0 / 400
REF_DT = 1.0 / 800


class LimitLawError(ValueError):
    pass


def erfc(y):
    """Upper tail ``P(Z > y)`` of a standard normal ``Z``.

    This is *not* the ``2/sqrt(pi) int_y^inf exp(-s^2) ds`` function of the
    same name in ``math``; the two are related by
    ``erfc(y) == math.erfc(y / sqrt(2)) / 2``.
    """
    if np.ndim(y) == 0:
        return 0.5 * math.erfc(float(y) / SQRT2)
    return 0.5 * special.erfc(np.asarray(y, dtype=float) / SQRT2)


def _tail_times_exp(b, log_prefactor_minus_half_b2):
    """``exp(c) * P(Z > b)`` given ``c - b^2/2``; stable for large ``b``."""
    return 0.5 * special.erfcx(b / SQRT2) * np.exp(log_prefactor_minus_half_b2)


def eq2_joint_density(t, x, z, lam, convention: str = "standard"):
    """Density in ``z`` of ``E_x(exp(-lam l(t)); B_t in dz)``.

    The second term carries ``(lam / 2) exp((|z|+|x|) lam + lam^2 t / 2)``
    times a complementary error function at ``lam sqrt(t/2) + (|z|+|x|)/sqrt(2t)``.

    ``convention="standard"`` reads that function as the usual
    ``2/sqrt(pi) int exp(-s^2)`` erfc, which is the reading that integrates to
    the known law of ``l(t)``.  ``convention="normal-tail"`` reads it as the
    standard-normal upper tail :func:`erfc`; it is kept as a diagnostic and
    fails the cross-route checks.
    """
    if np.any(np.asarray(t) <= 0):
        raise LimitLawError("eq2 density needs t > 0")
    z = np.asarray(z, dtype=float)
    a = np.abs(z) + abs(x)
    heat = np.exp(-((z - x) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
    if lam == 0:
        return heat
    if convention == "standard":
        # (lam/2) e^{c} erfc_std(b/sqrt2) = lam e^{c} P(Z > b), b = lam sqrt(t) + a/sqrt(t)
        b = lam * math.sqrt(t) + a / math.sqrt(t)
        kill = lam * _tail_times_exp(b, -(a**2) / (2 * t))
    elif convention == "normal-tail":
        arg = lam * math.sqrt(t) / SQRT2 + a / math.sqrt(2 * t)
        kill = 0.5 * lam * np.exp(a * lam + lam**2 * t / 2) * erfc(arg)
    else:
        raise LimitLawError(f"unknown convention {convention!r}")
    return heat - kill


def survival_closed(t, x, lam):
    """``u(t, x) = 1 - 2 P(Z > |x|/sqrt t) + 2 exp(lam|x| + lam^2 t/2) P(Z > lam sqrt t + |x|/sqrt t)``."""
    t = np.asarray(t, dtype=float)
    x = np.abs(np.asarray(x, dtype=float))
    if lam < 0:
        raise LimitLawError("lambda must be >= 0")
    t, x = np.broadcast_arrays(t, x)
    out = np.ones(t.shape)
    live = t > 0
    if lam > 0 and live.any():
        tt, xx = t[live], x[live]
        st = np.sqrt(tt)
        b = lam * st + xx / st
        out[live] = 1.0 - 2.0 * erfc(xx / st) + 2.0 * _tail_times_exp(b, -(xx**2) / (2 * tt))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def survival_quadrature(t: float, x: float, lam: float, convention: str = "standard") -> float:
    """Integrate :func:`eq2_joint_density` over ``|z| <= |x| + 12 sqrt(t)``."""
    if t < 0 or lam < 0:
        raise LimitLawError("need t >= 0 and lambda >= 0")
    if t == 0 or lam == 0:
        return 1.0
    cut = abs(x) + QUAD_CUTOFF * math.sqrt(t)

    def f(z):
        return float(eq2_joint_density(t, x, z, lam, convention))

    # the integrand has kinks at 0 and a peak at x
    pts = sorted({-cut, 0.0, float(x), cut})
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            val, _ = integrate.quad(f, lo, hi, epsabs=QUAD_TOL, epsrel=1e-10, limit=200)
            total += val
    return total


@dataclass
class GridSolution:
    """``u`` on the lattice ``t_j = j dt``, ``x_i = i dx`` for ``x in [0, xMax]``."""

    lam: float
    dx: float
    dt: float
    xMax: float
    tMax: float
    values: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.values.shape[1]) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dt

    def at(self, t: float, x: float) -> float:
        """Bilinear interpolation of the stored lattice values (``x`` by symmetry)."""
        x = abs(x)
        if x > self.xMax or t > self.tMax + 1e-12 or t < 0:
            raise LimitLawError("query outside the solved grid")
        tj = t / self.dt
        xi = x / self.dx
        j0 = min(int(math.floor(tj)), self.values.shape[0] - 2)
        i0 = min(int(math.floor(xi)), self.values.shape[1] - 2)
        ft, fx = tj - j0, xi - i0
        v = self.values
        return float(
            (1 - ft) * ((1 - fx) * v[j0, i0] + fx * v[j0, i0 + 1])
            + ft * ((1 - fx) * v[j0 + 1, i0] + fx * v[j0 + 1, i0 + 1])
        )

    def to_csv(self, path, stride_t: int = 1, stride_x: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u"])
            for j in range(0, self.values.shape[0], stride_t):
                for i in range(0, self.values.shape[1], stride_x):
                    w.writerow([repr(j * self.dt), repr(i * self.dx), repr(float(self.values[j, i]))])

    def header(self) -> dict:
        return {"lambda": self.lam, "dx": self.dx, "dt": self.dt, "xMax": self.xMax,
                "tMax": self.tMax, "residual": self.residual, "shape": list(self.values.shape)}

    def to_json_csv(self, stem) -> None:
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.header(), fh, indent=2)
        self.to_csv(f"{stem}.csv")


def survival_pde(lam: float, tMax: float = 2.0, xMax: float | None = None, dx: float = REF_DX,
                 dt: float = REF_DT, xProbe: float = 3.0, rannacher_steps: int = 4) -> GridSolution:
    """Crank-Nicolson solve of the Robin problem on ``[0, xMax]``.

    The boundary row uses a ghost node ``u_{-1} = u_1 - 2 dx lam u_0``; the far
    field is held at ``u = 1``.  The first step is replaced by
    ``rannacher_steps`` implicit-Euler substeps, which damps the oscillation
    that the incompatible corner (``u = 1`` meets ``u_x = lam u``) otherwise
    excites in Crank-Nicolson.
    """
    if dx <= 0 or dt <= 0:
        raise LimitLawError("dx and dt must be positive")
    if lam < 0:
        raise LimitLawError("lambda must be >= 0")
    if xMax is None:
        xMax = max(3.0, xProbe + 6.0 * math.sqrt(tMax))
    if xMax - xProbe < 6.0 * math.sqrt(tMax) - 1e-12:
        raise LimitLawError(
            f"far boundary at {xMax} is within 6 sqrt(tMax) of the probe region x <= {xProbe}"
        )
    nx = int(round(xMax / dx))
    nt = int(round(tMax / dt))
    values = np.ones((nt + 1, nx + 1))
    if lam == 0:
        return GridSolution(lam, dx, dt, nx * dx, nt * dt, values)

    # unknowns u_0..u_{nx-1}; u_nx = 1 fixed
    n = nx

    def operator():
        # A u approximates (1/2) u_xx with the Robin ghost row
        lower = np.full(n - 1, 0.5 / dx**2)
        diag = np.full(n, -1.0 / dx**2)
        upper = np.full(n - 1, 0.5 / dx**2)
        diag[0] = -(1.0 + lam * dx) / dx**2
        upper[0] = 1.0 / dx**2
        return lower, diag, upper

    lower, diag, upper = operator()
    rhs_bc = 0.5 / dx**2  # coupling of u_{n-1} to the fixed u_n = 1

    def banded(theta_dt):
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta_dt * upper
        ab[1, :] = 1.0 - theta_dt * diag
        ab[2, :-1] = -theta_dt * lower
        return ab

    def apply(u, s):
        out = u + s * (diag * u)
        out[:-1] += s * upper * u[1:]
        out[1:] += s * lower * u[:-1]
        out[-1] += s * rhs_bc
        return out

    u = np.ones(n)
    worst = 0.0
    sub = dt / rannacher_steps
    ab_be = banded(sub)
    for _ in range(rannacher_steps):
        rhs = u.copy()
        rhs[-1] += sub * rhs_bc
        u_new = linalg.solve_banded((1, 1), ab_be, rhs)
        worst = max(worst, _residual(ab_be, u_new, rhs))
        u = u_new
    values[1, :n] = u
    ab_cn = banded(0.5 * dt)
    for j in range(2, nt + 1):
        rhs = apply(u, 0.5 * dt)
        rhs[-1] += 0.5 * dt * rhs_bc
        u_new = linalg.solve_banded((1, 1), ab_cn, rhs)
        if j % 64 == 0 or j == nt:
            worst = max(worst, _residual(ab_cn, u_new, rhs))
        u = u_new
        values[j, :n] = u
    np.clip(values, 0.0, 1.0, out=values)
    return GridSolution(lam, dx, dt, nx * dx, nt * dt, values, residual=worst)


def _residual(ab, u, rhs) -> float:
    r = ab[1] * u
    r[:-1] += ab[0, 1:] * u[1:]
    r[1:] += ab[2, :-1] * u[:-1]
    return float(np.max(np.abs(r - rhs)))


def survival(t: float, x: float, lam: float, method: str = "closed", **grid) -> float:
    """Evaluate ``u(t, x)`` by the named route."""
    if method == "closed":
        return survival_closed(t, x, lam)
    if method == "quadrature":
        return survival_quadrature(t, x, lam)
    if method == "pde":
        if t == 0 or lam == 0:
            return 1.0
        sol = survival_pde(lam, tMax=max(t, grid.pop("tMax", t)), xProbe=max(abs(x), grid.pop("xProbe", 0.0)), **grid)
        return sol.at(t, x)
    raise LimitLawError(f"unknown method {method!r}")


def theorem2_limit_survival(t, alpha: float, method: str = "closed"):
    """``P(T > t)`` for ``T`` the inverse local time at ``alpha * xi`` of BM from 1."""
    if alpha <= 0:
        raise LimitLawError("alpha must be positive")
    if method == "closed":
        return survival_closed(t, 1.0, 1.0 / alpha)
    return survival(t, 1.0, 1.0 / alpha, method)


def theorem3_limit_survival(t, sigma: float, x0: float, method: str = "closed",
                            rate_per_sigma: float = 1.0):
    """Limit survival for the rescaled voter coalescence time ``2 t0 / N``.

    Returns ``u(t, x0; rate_per_sigma / sigma)``.  With the occupation-density
    normalisation of local time used throughout this module the killing rate
    is ``1 / sigma``; ``rate_per_sigma=2`` reproduces the same law written
    with a local time half as large.
    """
    if sigma <= 0:
        raise LimitLawError("sigma must be positive")
    if x0 < 0:
        raise LimitLawError("x0 must be >= 0")
    lam = rate_per_sigma / sigma
    if method == "closed":
        return survival_closed(t, x0, lam)
    return survival(t, x0, lam, method)


def maruyama_laplace(alpha: float, lam: float) -> float:
    """``(1 + 4 alpha sqrt(lam))^-1``."""
    if alpha <= 0:
        raise LimitLawError("alpha must be positive")
    if lam < 0:
        raise LimitLawError("lambda must be >= 0")
    return 1.0 / (1.0 + 4.0 * alpha * math.sqrt(lam))


def ring_laplace(alpha: float, lam: float, circumference: float) -> float:
    """Finite-ring counterpart of :func:`maruyama_laplace`.

    On a circle of the given circumference (in units of the scaling length)
    the inverse local time at 0 has Laplace exponent
    ``sqrt(2 mu) tanh(circumference sqrt(2 mu) / 2)``; as the circumference
    grows this tends to :func:`maruyama_laplace`.
    """
    if lam == 0:
        return 1.0
    r = math.sqrt(lam)
    return 1.0 / (1.0 + 4.0 * alpha * r * math.tanh(circumference * r / 2.0))


@dataclass
class MaruyamaResult:
    I0: float
    f0: float
    abserr: float


def maruyama_exact(u: float, m: float, dipSize: float) -> MaruyamaResult:
    """Identity-by-descent probability of two genes from one colony.

    ``I0 = (1/pi) int_0^pi g^2 / (1 - (1-u)^2 g^2) dtheta`` with
    ``g = 1 - m (1 - cos theta)``, and ``f0 = (1-u)^2 / ((1-u)^2 + 2 N / I0)``.
    The integrand has a spike of width ``~ sqrt(u/m)`` at 0, resolved by a
    geometrically graded set of breakpoints.
    """
    if not 0 < u < 1 or not 0 < m < 1:
        raise LimitLawError("need 0 < u < 1 and 0 < m < 1")
    s = (1.0 - u) ** 2

    def f(theta):
        g = 1.0 - m * 2.0 * math.sin(theta / 2) ** 2
        # 1 - s g^2 = (1 - s) + s (1 - g^2), the second piece without cancellation
        one_minus_g = m * 2.0 * math.sin(theta / 2) ** 2
        return g * g / ((1.0 - s) + s * one_minus_g * (1.0 + g))

    width = math.sqrt(u / m)
    pts = [0.0]
    w = width / 8
    while w < math.pi:
        pts.append(w)
        w *= 2.0
    pts.append(math.pi)
    total, err = 0.0, 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
        err += e
    I0 = total / math.pi
    f0 = s / (s + 2.0 * dipSize / I0)
    return MaruyamaResult(I0, f0, err / math.pi)


def maruyama_f0_asymptotic(u: float, m: float, dipSize: float) -> float:
    return 1.0 / (1.0 + 4.0 * dipSize * math.sqrt(2.0 * u * m))
