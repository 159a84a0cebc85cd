"""Dispersal kernels on the integers.

A kernel is a symmetric probability mass function ``q`` on displacements
``z`` indexed by a scale parameter ``N``.  Non-exempt families are built as a
mixture ``mix * uniform[-sqrt(N), sqrt(N)] + (1 - mix) * shape`` so the
lower-bound floor on ``|z| <= sqrt(N)`` holds by construction, and every shape
is truncated at ``ceil(B * sqrt(N) * log(N))`` and renormalised.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("uniform", "bilateral-exponential", "discrete-normal", "nearest-neighbor")
FAMILY_ALIASES = {
    "uniform": "uniform",
    "bexp": "bilateral-exponential",
    "bilateral-exponential": "bilateral-exponential",
    "dnormal": "discrete-normal",
    "discrete-normal": "discrete-normal",
    "nn": "nearest-neighbor",
    "nearest-neighbor": "nearest-neighbor",
}

DEFAULT_MIX = 0.1
DEFAULT_B = 8.0
# largest tolerated relative change of the variance caused by truncation
_VARIANCE_SHIFT_LIMIT = 0.01
# tail-fit rate used when reporting the exponential-tail constant
_TAIL_RATE = 1.0
_TAIL_CONSTANT_LIMIT = 10.0


class KernelError(ValueError):
    """Raised for invalid kernel parameters."""


@dataclass(frozen=True, eq=False)
class DispersalKernel:
    """Immutable symmetric jump law.

    ``mass[i]`` is the probability of displacement ``i - radius``.
    """

    family: str
    N: int
    mix: float
    B: float
    radius: int
    mass: np.ndarray = field(repr=False)
    sigmaN: float
    exempt: bool = False

    def __post_init__(self):
        self.mass.setflags(write=False)
        cdf = np.cumsum(self.mass)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.radius, self.radius + 1)

    @property
    def variance(self) -> float:
        return self.sigmaN**2 * self.N

    @property
    def sigma2(self) -> float:
        return self.sigmaN**2

    @property
    def truncation_radius(self) -> int:
        if self.exempt:
            return self.radius
        return truncation_radius(self.N, self.B)

    @property
    def floor_constant(self) -> float:
        """Realised ``h``: the smallest ``sqrt(N) * q(z)`` over ``|z| <= sqrt(N)``."""
        inner = np.abs(self.support) <= math.sqrt(self.N)
        return float(self.mass[inner].min() * math.sqrt(self.N))

    def fourth_moment(self) -> float:
        z = self.support.astype(float)
        return float(np.sum(z**4 * self.mass))

    def pmf(self, z) -> np.ndarray:
        z = np.asarray(z)
        out = np.zeros(z.shape)
        ok = np.abs(z) <= self.radius
        out[ok] = self.mass[z[ok] + self.radius]
        return out

    def sample(self, rng: np.random.Generator, size=None):
        """Draw displacements by inverse-CDF table lookup.

        One uniform per draw, mapped through ``searchsorted(cdf, u, 'right')``;
        the layout is the mass array ordered from ``-radius`` to ``+radius``.
        """
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        return idx - self.radius

    def char_fn(self, theta):
        return char_fn(self, theta)

    def to_json(self) -> str:
        doc = {
            "family": self.family,
            "N": self.N,
            "mix": self.mix,
            "B": self.B,
            "support_radius": self.radius,
            "sigmaN": float(repr_float(self.sigmaN)),
            "mass": [float(repr_float(m)) for m in self.mass],
        }
        return json.dumps(doc, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def repr_float(x: float) -> str:
    return format(float(x), ".17g")


def kernel_from_json(text: str) -> DispersalKernel:
    doc = json.loads(text)
    family = FAMILY_ALIASES[doc["family"]]
    mass = np.array(doc["mass"], dtype=float)
    radius = int(doc["support_radius"])
    if mass.size != 2 * radius + 1:
        raise KernelError("mass array length does not match support_radius")
    return DispersalKernel(
        family=family,
        N=int(doc["N"]),
        mix=float(doc["mix"]),
        B=float(doc["B"]),
        radius=radius,
        mass=mass,
        sigmaN=float(doc["sigmaN"]),
        exempt=family == "nearest-neighbor",
    )


def truncation_radius(N: int, B: float = DEFAULT_B) -> int:
    return int(math.ceil(B * math.sqrt(N) * math.log(N)))


def _shape(family: str, N: int, z: np.ndarray) -> np.ndarray:
    scale = math.sqrt(N)
    if family == "uniform":
        return (np.abs(z) <= math.floor(scale)).astype(float)
    if family == "bilateral-exponential":
        return np.exp(-np.abs(z) / scale)
    if family == "discrete-normal":
        return np.exp(-0.5 * (z / scale) ** 2)
    raise KernelError(f"unknown family {family!r}")


def _variance(w: np.ndarray, z: np.ndarray) -> float:
    w = w / w.sum()
    return float(np.sum(z.astype(float) ** 2 * w))


def build_kernel(family: str, N: int, mix: float = DEFAULT_MIX, B: float = DEFAULT_B) -> DispersalKernel:
    """Build a kernel of the given family at scale ``N``.

    Parameters
    ----------
    family : str
        ``uniform``, ``bilateral-exponential``, ``discrete-normal`` or
        ``nearest-neighbor`` (short aliases ``bexp``, ``dnormal``, ``nn``).
    N : int
        Scale parameter; the typical jump is of order ``sqrt(N)``.
    mix : float
        Weight of the uniform floor component, in [0, 1].
    B : float
        Truncation constant; the support is cut at ``ceil(B sqrt(N) log N)``.
    """
    try:
        family = FAMILY_ALIASES[family]
    except KeyError:
        raise KernelError(f"unknown family {family!r}") from None
    if int(N) != N or N < 1:
        raise KernelError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    if not 0.0 <= mix <= 1.0:
        raise KernelError(f"mix must lie in [0, 1], got {mix!r}")

    if family == "nearest-neighbor":
        mass = np.array([0.5, 0.0, 0.5])
        return DispersalKernel(family, N, float(mix), float(B), 1, mass, 1.0 / math.sqrt(N), exempt=True)

    if N < 2:
        raise KernelError("non-exempt families need N >= 2 (truncation radius is 0 at N = 1)")
    R = truncation_radius(N, B)
    K = math.floor(math.sqrt(N))
    if K > R:
        raise KernelError("truncation radius smaller than the uniform floor; increase B")

    z = np.arange(-R, R + 1)
    shape = _shape(family, N, z)
    # compare against a much wider window to see what truncation removed
    wide = np.arange(-8 * R, 8 * R + 1)
    wide_shape = _shape(family, N, wide)
    v_trunc, v_wide = _variance(shape, z), _variance(wide_shape, wide)
    if abs(v_trunc - v_wide) > _VARIANCE_SHIFT_LIMIT * v_wide:
        raise KernelError(
            f"truncation at radius {R} shifts the variance by "
            f"{abs(v_trunc - v_wide) / v_wide:.2%}; B is too small"
        )

    floor = (np.abs(z) <= K).astype(float)
    mass = mix * floor / floor.sum() + (1.0 - mix) * shape / shape.sum()
    mass = 0.5 * (mass + mass[::-1])
    mass /= mass.sum()
    mass = 0.5 * (mass + mass[::-1])

    nz = np.nonzero(mass)[0]
    radius = int(R - nz[0])
    mass = mass[R - radius : R + radius + 1].copy()
    zz = np.arange(-radius, radius + 1).astype(float)
    var = float(np.sum(zz**2 * mass))
    return DispersalKernel(family, N, float(mix), float(B), radius, mass, math.sqrt(var / N))


def from_masses(masses: dict, N: int = 1, family: str = "custom") -> DispersalKernel:
    """Wrap an explicit ``{z: q(z)}`` table (used for audits of hand-built laws)."""
    radius = max(abs(int(z)) for z in masses)
    mass = np.zeros(2 * radius + 1)
    for z, m in masses.items():
        mass[int(z) + radius] = m
    zz = np.arange(-radius, radius + 1).astype(float)
    var = float(np.sum(zz**2 * mass))
    return DispersalKernel(family, int(N), 0.0, DEFAULT_B, radius, mass, math.sqrt(var / N))


def char_fn(kernel: DispersalKernel, theta):
    """``phi(theta) = sum_z q(z) cos(z theta)``."""
    theta = np.asarray(theta, dtype=float)
    z = np.arange(1, kernel.radius + 1)
    pos = kernel.mass[kernel.radius + 1 :]
    out = kernel.mass[kernel.radius] + 2.0 * np.cos(np.multiply.outer(theta, z)) @ pos
    return out if out.ndim else float(out)


def one_minus_char_fn(kernel: DispersalKernel, theta):
    """``1 - phi(theta)`` without cancellation near ``theta = 0``."""
    theta = np.asarray(theta, dtype=float)
    z = np.arange(1, kernel.radius + 1)
    pos = kernel.mass[kernel.radius + 1 :]
    return 4.0 * np.sin(0.5 * np.multiply.outer(theta, z)) ** 2 @ pos


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None


@dataclass
class AuditReport:
    exempt: bool
    checks: list
    a: float = float("nan")
    b: float = float("nan")
    tail_c: float = float("nan")
    tail_C: float = float("nan")
    floor_h: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self):
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "exempt": self.exempt,
            "passed": self.passed,
            "a": self.a,
            "b": self.b,
            "tail_c": self.tail_c,
            "tail_C": self.tail_C,
            "floor_h": self.floor_h,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail, "witness": c.witness}
                for c in self.checks
            ],
        }


def charfn_gap_constants(kernel: DispersalKernel, n_grid: int = 10_000):
    """Fit ``(a, b)`` in ``|phi(theta)| <= max(1 - b N theta^2, 1 - a)`` on a grid."""
    theta = np.linspace(math.pi / n_grid, math.pi, n_grid)
    L = math.sqrt(kernel.N)
    omc = one_minus_char_fn(kernel, theta)
    phi = 1.0 - omc
    gap = np.where(phi >= 0, omc, 1.0 + phi)
    phi = np.abs(phi)
    inner = theta <= 4.0 / (2 * L + 1)
    b = float(np.min(gap[inner] / (kernel.N * theta[inner] ** 2))) if inner.any() else float("nan")
    a = float(np.min(gap[~inner])) if (~inner).any() else float("nan")
    return a, b, theta, phi


def verify_assumptions(kernel: DispersalKernel, n_grid: int = 10_000) -> AuditReport:
    checks = []
    z = kernel.support
    m = kernel.mass

    total = float(m.sum())
    checks.append(AssumptionCheck("normalised", bool(np.all(m >= 0)) and abs(total - 1) < 1e-12,
                                  f"sum={total!r}", None if np.all(m >= 0) else int(z[np.argmin(m)])))
    asym = np.abs(m - m[::-1])
    checks.append(AssumptionCheck("1-symmetry", bool(asym.max() == 0.0), f"max |q(z)-q(-z)|={asym.max():.3g}",
                                  int(z[np.argmax(asym)]) if asym.max() > 0 else None))
    var = float(np.sum(z.astype(float) ** 2 * m))
    rel = abs(var - kernel.variance) / var if var > 0 else float("inf")
    checks.append(AssumptionCheck("2-variance", rel < 1e-12, f"sum z^2 q = {var!r}, sigmaN^2 N = {kernel.variance!r}"))

    if kernel.exempt:
        return AuditReport(True, checks)

    h = kernel.floor_constant
    inner = np.abs(z) <= math.sqrt(kernel.N)
    witness = int(z[inner][np.argmin(m[inner])])
    checks.append(AssumptionCheck("3-floor", h > 0, f"h = {h:.6g}", None if h > 0 else witness))

    nz = z[m > 0]
    C = float(np.max(m[m > 0] * np.exp(_TAIL_RATE * np.abs(nz) / math.sqrt(kernel.N))))
    checks.append(AssumptionCheck("4-exponential-tail", C <= _TAIL_CONSTANT_LIMIT,
                                  f"q(z) <= {C:.4g} exp(-{_TAIL_RATE}|z|/sqrt(N))"))

    R = truncation_radius(kernel.N, kernel.B)
    outside = np.abs(z) > R
    bad = outside & (m > 0)
    checks.append(AssumptionCheck("5-truncation", not bad.any(), f"radius {kernel.radius} <= {R}",
                                  int(z[bad][0]) if bad.any() else None))

    a, b, theta, phi = charfn_gap_constants(kernel, n_grid)
    ok = a > 0 and b > 0
    wit = None
    if not ok:
        wit = float(theta[np.argmax(phi)])
    checks.append(AssumptionCheck("charfn-gap", ok, f"a={a:.4g}, b={b:.4g}", wit))
    return AuditReport(False, checks, a=a, b=b, tail_c=_TAIL_RATE, tail_C=C, floor_h=h)
