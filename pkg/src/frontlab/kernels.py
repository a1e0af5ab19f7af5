"""Dispersal kernels, exponential moment transforms, and discrete stencils.

A kernel is a symmetric, unimodal probability density k on the line.  Its
moment transform

    mgf(k, lam) = integral of k(y) * exp(lam * y) dy

drives every dispersion-relation computation; `max_rate` is the supremum
of rates at which that integral stays finite (the rate window available
to decaying modes).  `discretize` turns a kernel into the renormalized
convolution stencil used by the time stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    HalfWidthOverflow,
    InvalidParam,
    NonNormalizable,
    NonSymmetric,
    NotUnimodal,
    QuadratureFailure,
    RateOutOfRange,
)

FAMILIES = ("gaussian", "laplace", "compact_bump", "tabulated")

#: absolute tolerance for the adaptive panel quadrature
QUAD_TOL = 1e-10

#: exp() argument beyond which float64 overflows; treated as +inf
_EXP_OVERFLOW = 709.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _exp(arg: float) -> float:
    return math.inf if arg > _EXP_OVERFLOW else math.exp(arg)


def _panel(f, a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


def adaptive_gauss_legendre(f, a: float, b: float, tol: float = QUAD_TOL,
                            max_depth: int = 40) -> float:
    """Integrate f over [a, b] on dyadically refined Gauss-Legendre panels.

    Deterministic by construction: panels split in half until the
    refined two-panel sum agrees with the parent panel within tol.
    """
    def recurse(lo, hi, whole, depth):
        mid = 0.5 * (lo + hi)
        left = _panel(f, lo, mid)
        right = _panel(f, mid, hi)
        if abs(left + right - whole) <= tol:
            return left + right
        if depth >= max_depth:
            raise QuadratureFailure(
                f"panel [{lo}, {hi}] not converged at depth {depth}")
        return (recurse(lo, mid, left, depth + 1)
                + recurse(mid, hi, right, depth + 1))

    return recurse(a, b, _panel(f, a, b), 0)


# Mass of exp(-1/(1-s^2)) on (-1, 1); normalizes the compact bump.
_BUMP_UNIT_MASS = adaptive_gauss_legendre(
    lambda s: np.exp(-1.0 / np.maximum(1.0 - s * s, 1e-300)) * (np.abs(s) < 1.0),
    -1.0, 1.0)


@dataclass(frozen=True)
class Kernel:
    """Symmetric unimodal dispersal density with unit mass.

    max_rate is the kernel's contribution to the admissible rate window:
    the moment transform is finite exactly for 0 <= lam < max_rate.  It
    equals the decay rate for a two-sided exponential kernel and +inf for
    the Gaussian and any compactly supported kernel.
    """

    family: str
    params: tuple[float, ...]
    max_rate: float
    table_x: np.ndarray | None = None
    table_y: np.ndarray | None = None

    def density(self, x):
        """Evaluate the density at x (scalar or ndarray)."""
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            sigma = self.params[0]
            return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
        if self.family == "laplace":
            a = self.params[0]
            return 0.5 * a * np.exp(-a * np.abs(x))
        if self.family == "compact_bump":
            r = self.params[0]
            s = x / r
            inside = np.abs(s) < 1.0
            arg = np.where(inside, 1.0 - s * s, 1.0)
            return np.where(inside, np.exp(-1.0 / arg), 0.0) / (r * _BUMP_UNIT_MASS)
        # tabulated: linear interpolation, zero outside the table
        return np.interp(x, self.table_x, self.table_y, left=0.0, right=0.0)

    def support_radius(self) -> float:
        """Radius beyond which the density vanishes (inf if full support)."""
        if self.family == "compact_bump":
            return self.params[0]
        if self.family == "tabulated":
            return float(self.table_x[-1])
        return math.inf

    def tail_mass(self, x: float) -> float:
        """Mass outside [-x, x]."""
        if x <= 0.0:
            return 1.0
        if self.family == "gaussian":
            sigma = self.params[0]
            return math.erfc(x / (sigma * math.sqrt(2.0)))
        if self.family == "laplace":
            return _exp(-self.params[0] * x) if x > 0 else 1.0
        radius = self.support_radius()
        if x >= radius:
            return 0.0
        return 2.0 * adaptive_gauss_legendre(self.density, x, radius)


@dataclass(frozen=True)
class DiscreteKernel:
    """Renormalized convolution stencil on a uniform grid.

    weights[half_width + i] approximates dx * k(i * dx) and the weights
    sum to exactly 1.0, so the discrete dispersal operator annihilates
    constant fields.  truncation_error records |1 - sum| before
    renormalization.
    """

    dx: float
    half_width: int
    weights: np.ndarray
    truncation_error: float

    def __post_init__(self):
        self.weights.setflags(write=False)


def make_kernel(family: str, params) -> Kernel:
    """Build a kernel of the given family.

    params: [stddev] for gaussian, [rate] for laplace, [radius] for
    compact_bump, and a sequence of (position, density) pairs for
    tabulated (validated for symmetry and unimodality, then renormalized
    to unit mass).
    """
    if family not in FAMILIES:
        raise InvalidParam(f"unknown kernel family {family!r}")

    if family == "tabulated":
        return _make_tabulated(params)

    params = tuple(float(p) for p in params)
    if len(params) != 1 or not math.isfinite(params[0]) or params[0] <= 0.0:
        raise InvalidParam(f"{family} kernel needs one positive scale parameter")
    max_rate = params[0] if family == "laplace" else math.inf
    return Kernel(family=family, params=params, max_rate=max_rate)


def _make_tabulated(points) -> Kernel:
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 3:
        raise InvalidParam("tabulated kernel needs at least 3 points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(ys < 0.0):
        raise NonNormalizable("tabulated density has negative values")
    # symmetry: every sample must have a mirror sample with equal density
    lookup = {x: y for x, y in pts}
    for x, y in pts:
        mirror = lookup.get(-x)
        if mirror is None or abs(mirror - y) > 1e-12 * max(1.0, abs(y)):
            raise NonSymmetric(f"no symmetric sample for position {x}")
    # unimodality: nonincreasing along increasing |x|
    right = ys[xs >= 0.0]
    if np.any(np.diff(right) > 1e-12):
        raise NotUnimodal("tabulated density increases away from the origin")
    mass = float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))
    if not math.isfinite(mass) or mass <= 0.0:
        raise NonNormalizable("tabulated density has nonpositive mass")
    return Kernel(family="tabulated", params=(), max_rate=math.inf,
                  table_x=xs, table_y=ys / mass)


def mgf(kernel: Kernel, lam: float) -> float:
    """Exponential moment transform: integral of k(y) exp(lam y) dy.

    Closed form for gaussian (exp(lam^2 sigma^2 / 2)) and laplace
    (a^2 / (a^2 - lam^2)); adaptive quadrature otherwise.  Symmetry of k
    forces the result >= 1 for every admissible lam.
    """
    lam = float(lam)
    if lam < 0.0 or lam >= kernel.max_rate:
        raise RateOutOfRange(
            f"rate {lam} outside [0, {kernel.max_rate}) for {kernel.family}")
    if kernel.family == "gaussian":
        sigma = kernel.params[0]
        return _exp(0.5 * (lam * sigma) ** 2)
    if kernel.family == "laplace":
        a = kernel.params[0]
        return a * a / (a * a - lam * lam)
    radius = kernel.support_radius()
    # symmetric density: integrand 2 k(y) cosh(lam y) on [0, radius]
    value = 2.0 * adaptive_gauss_legendre(
        lambda y: kernel.density(y) * np.cosh(lam * y), 0.0, radius)
    return value


def discretize(kernel: Kernel, dx: float, tail_tol: float,
               max_half_width: int = 1_000_000,
               mass_tol: float = 1e-2) -> DiscreteKernel:
    """Sample the kernel on a grid of spacing dx and renormalize.

    The half width is the smallest H with tail mass beyond H*dx below
    tail_tol.  Weights are dx * k(i dx), mirrored exactly about the
    center, then scaled to unit sum; the residual ulp is folded into the
    center weight so the sum is exactly 1.0.  mass_tol guards against a
    dx too coarse to resolve the kernel at all.
    """
    if dx <= 0.0:
        raise InvalidParam("dx must be positive")
    if not 0.0 < tail_tol < 1.0:
        raise InvalidParam("tail_tol must lie in (0, 1)")

    radius = kernel.support_radius()
    if math.isfinite(radius):
        half = int(math.ceil(radius / dx - 1e-12))
    else:
        half = 1
        while kernel.tail_mass(half * dx) >= tail_tol:
            half *= 2
            if half > max_half_width:
                raise HalfWidthOverflow(
                    f"stencil exceeds {max_half_width} cells at dx={dx}")
        lo, hi = half // 2, half
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if kernel.tail_mass(mid * dx) < tail_tol:
                hi = mid
            else:
                lo = mid
        half = hi
    if half > max_half_width:
        raise HalfWidthOverflow(
            f"stencil exceeds {max_half_width} cells at dx={dx}")

    right = dx * kernel.density(dx * np.arange(half + 1))
    weights = np.concatenate([right[:0:-1], right])
    raw_sum = float(np.sum(weights))
    truncation_error = abs(1.0 - raw_sum)
    if truncation_error > mass_tol:
        raise InvalidParam(
            f"grid mass error {truncation_error:.3e} exceeds {mass_tol}; "
            f"dx={dx} too coarse for this kernel")
    weights = weights / raw_sum
    weights[half] += 1.0 - float(np.sum(weights))
    return DiscreteKernel(dx=dx, half_width=half, weights=weights,
                          truncation_error=truncation_error)
