"""Dispersion matrices, Perron eigenpairs, and speed-curve minimization.

For a cooperative model with diffusion coefficients d_j, kernels k_j and
linearization A = F'(0), the dispersion matrix at rate lam is

    K(lam) = diag(d_j * (mgf_j(lam) - 1)) + A.

Its Perron eigenvalue gamma(lam) is the growth rate of a mode decaying
like exp(-lam x), and c(lam) = gamma(lam) / lam is the speed at which
that mode translates.  The minimum c* = c(lam*) over the admissible rate
window is the compact-data spreading speed; for initial data decaying at
rate lam0 < lam* the selected speed is c(lam0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryMinimum,
    InvalidParam,
    NoConvergence,
    RateOutOfRange,
    Reducible,
)
from .kernels import Kernel, mgf

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SpeedMatrix:
    """Dispersion matrix K(lam); essentially nonnegative and irreducible."""

    lam: float
    entries: np.ndarray


@dataclass(frozen=True)
class PerronPair:
    """Dominant eigenvalue and strictly positive unit eigenvector."""

    gamma: float
    vector: np.ndarray


@dataclass(frozen=True)
class DispersionCurve:
    """Sampled lam -> (gamma, c, eigenvector) with the located minimum.

    convex_ok records whether the sampled speeds below lambda_star are
    strictly decreasing with nonnegative second differences, the shape
    the theory guarantees; a violation flags a model outside the
    cooperative-monostable assumptions rather than a solver failure.
    """

    lambdas: np.ndarray
    gammas: np.ndarray
    speeds: np.ndarray
    vectors: np.ndarray
    lambda_star: float
    c_star: float
    bracket: tuple[float, float]
    convex_ok: bool


@dataclass(frozen=True)
class ComponentOrder:
    """Cascade ordering of components along the coupling digraph.

    permutation[0] has the smallest decay rate; every later component is
    fed (positive coupling in F'(0)) by an earlier one, recorded in
    feeders (None for the first).  Indices are 0-based.
    """

    permutation: tuple[int, ...]
    feeders: tuple[int | None, ...]


def check_irreducible(jacobian0) -> bool:
    """True iff the digraph with edge i -> j when A[j, i] > 0 is strongly
    connected (self-loops ignored; trivially true for one component)."""
    a = np.asarray(jacobian0, dtype=float)
    m = a.shape[0]
    if m == 1:
        return True
    off = a > 0.0
    np.fill_diagonal(off, False)

    def reaches_all(adj) -> bool:
        # adj[j, i] True means edge i -> j
        seen = np.zeros(m, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.nonzero(adj[:, i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return bool(seen.all())

    return reaches_all(off) and reaches_all(off.T)


def build_speed_matrix(model, kernels: list[Kernel], lam: float) -> SpeedMatrix:
    """Assemble K(lam) = diag(d_j (mgf_j(lam) - 1)) + F'(0)."""
    lam = float(lam)
    rate_cap = min(k.max_rate for k in kernels)
    if not 0.0 < lam < rate_cap:
        raise RateOutOfRange(f"rate {lam} outside (0, {rate_cap})")
    entries = np.array(model.jacobian0, dtype=float, copy=True)
    for j in range(model.m):
        entries[j, j] += model.diffusion[j] * (mgf(kernels[j], lam) - 1.0)
    return SpeedMatrix(lam=lam, entries=entries)


def perron_eigenpair(matrix, tol: float = 1e-10,
                     max_iter: int = 200_000) -> PerronPair:
    """Dominant eigenpair of an irreducible essentially nonnegative matrix.

    Power iteration on the shifted matrix A + (1 + max|diag|) I, which is
    nonnegative with positive diagonal (hence primitive for irreducible
    A), so the iteration converges to the Perron vector from a positive
    start.  Stops when ||A v - gamma v|| <= tol.
    """
    a = np.asarray(getattr(matrix, "entries", matrix), dtype=float)
    m = a.shape[0]
    if m == 1:
        return PerronPair(gamma=float(a[0, 0]), vector=np.array([1.0]))
    off = a - np.diag(np.diag(a))
    if np.any(off < 0.0):
        raise InvalidParam("matrix is not essentially nonnegative")
    if not check_irreducible(a):
        raise Reducible("coupling digraph is not strongly connected")

    shift = 1.0 + float(np.max(np.abs(np.diag(a))))
    b = a + shift * np.eye(m)
    x = np.full(m, 1.0 / math.sqrt(m))
    gamma = 0.0
    # roundoff floor: residual of Av cannot beat eps * ||A||
    floor = max(tol, 64.0 * np.finfo(float).eps * float(np.abs(a).sum(axis=1).max()))
    for _ in range(max_iter):
        y = b @ x
        x = y / np.linalg.norm(y)
        gamma = float(x @ (a @ x))
        if np.linalg.norm(a @ x - gamma * x) <= floor:
            if np.any(x <= 0.0):
                raise NoConvergence("eigenvector not strictly positive")
            return PerronPair(gamma=gamma, vector=x)
    raise NoConvergence(f"power iteration residual above {floor} "
                        f"after {max_iter} iterations")


def wave_speed(model, kernels: list[Kernel], lam: float):
    """Speed c(lam) = gamma(lam) / lam and the Perron eigenvector V(lam).

    The pair satisfies c(lam) * lam * V(lam) = K(lam) V(lam) to the
    eigensolver residual.
    """
    pair = perron_eigenpair(build_speed_matrix(model, kernels, lam))
    return pair.gamma / lam, pair.vector


def scalar_speed(kernel: Kernel, d: float, growth: float, sigma: float,
                 sigma_star: float | None = None) -> float:
    """One-component speed law (d (mgf(sigma) - 1) + growth) / sigma.

    Valid as the selected spreading speed for sigma below the curve
    minimizer; pass sigma_star to enforce that bound, otherwise only the
    finite-moment window is checked.
    """
    sigma = float(sigma)
    cap = kernel.max_rate if sigma_star is None else min(kernel.max_rate, sigma_star)
    if not 0.0 < sigma < cap:
        raise RateOutOfRange(f"rate {sigma} outside (0, {cap})")
    return (d * (mgf(kernel, sigma) - 1.0) + growth) / sigma


def laplacian_speed_matrix(model, lam: float) -> SpeedMatrix:
    """Dispersion matrix diag(d_j lam^2) + F'(0) of the local-diffusion
    variant (second-derivative dispersal instead of convolution)."""
    lam = float(lam)
    if lam <= 0.0:
        raise RateOutOfRange(f"rate {lam} must be positive")
    entries = np.array(model.jacobian0, dtype=float, copy=True)
    entries[np.diag_indices(model.m)] += model.diffusion * lam * lam
    return SpeedMatrix(lam=lam, entries=entries)


def _golden_section(f, lo: float, hi: float, tol: float):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        # two overflowed probes mean the minimum lies left of both
        if fc < fd or (math.isinf(fc) and math.isinf(fd)):
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def minimize_speed(model, kernels: list[Kernel],
                   bracket: tuple[float, float] | None = None,
                   tol: float = 1e-8, samples: int = 200):
    """Locate (lambda_star, c_star) and sample the full dispersion curve.

    Golden-section search over the bracket, which defaults to
    [1e-3, 0.95 * min max_rate] capped at 50 for all-moments-finite
    kernels.  The speed curve is convex below its minimizer for models
    satisfying the cooperative-monostable assumptions, so the unimodal
    search is justified; a minimizer at the bracket edge is reported via
    BoundaryMinimum instead of silently accepted.
    """
    rate_cap = min(k.max_rate for k in kernels)
    if bracket is None:
        hi = 50.0 if math.isinf(rate_cap) else 0.95 * rate_cap
        bracket = (1e-3, hi)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0.0 < lo < hi <= rate_cap:
        raise InvalidParam(f"bracket {bracket} outside (0, {rate_cap}]")
    if hi == rate_cap and math.isfinite(rate_cap):
        hi = math.nextafter(hi, lo)
    if not check_irreducible(model.jacobian0):
        raise Reducible("model linearization is not irreducible")

    def speed(lam: float) -> float:
        sm = build_speed_matrix(model, kernels, lam)
        if not np.all(np.isfinite(sm.entries)):
            return math.inf
        try:
            return perron_eigenpair(sm).gamma / lam
        except NoConvergence:
            # eigenvector underflow from an astronomically dominant
            # diagonal; the speed there is far above the minimum anyway
            return math.inf

    lambda_star = _golden_section(speed, lo, hi, tol)
    margin = max(100.0 * tol, 1e-6 * (hi - lo))
    if lambda_star - lo <= margin or hi - lambda_star <= margin:
        raise BoundaryMinimum(
            f"speed minimizer {lambda_star:.6g} sits at the edge of "
            f"bracket ({lo:.6g}, {hi:.6g})")
    c_star = speed(lambda_star)

    lambdas = np.geomspace(lo, hi, samples)
    gammas = np.empty(samples)
    speeds = np.empty(samples)
    vectors = np.empty((samples, model.m))
    for i, lam in enumerate(lambdas):
        sm = build_speed_matrix(model, kernels, lam)
        try:
            if not np.all(np.isfinite(sm.entries)):
                raise NoConvergence("overflowed entries")
            pair = perron_eigenpair(sm)
        except NoConvergence:
            gammas[i] = math.inf
            speeds[i] = math.inf
            vectors[i] = np.nan
            continue
        gammas[i] = pair.gamma
        speeds[i] = pair.gamma / lam
        vectors[i] = pair.vector

    below = lambdas < lambda_star
    c_below = speeds[below]
    decreasing = bool(np.all(np.diff(c_below) < 0.0)) if c_below.size > 1 else True
    convex = bool(np.all(np.diff(c_below, 2) >= -1e-8)) if c_below.size > 2 else True
    curve = DispersionCurve(lambdas=lambdas, gammas=gammas, speeds=speeds,
                            vectors=vectors, lambda_star=lambda_star,
                            c_star=c_star, bracket=(lo, hi),
                            convex_ok=decreasing and convex)
    return lambda_star, c_star, curve


def reorder_components(jacobian0, decay_rates) -> ComponentOrder:
    """Greedy cascade order: start from the smallest decay rate, then
    repeatedly append the smallest-index component positively coupled to
    one already placed (its earliest-placed such neighbor is the feeder).

    Ties in the decay rates break to the smallest index; a chain that
    cannot be extended means the coupling digraph is reducible.
    """
    a = np.asarray(jacobian0, dtype=float)
    rates = np.asarray(decay_rates, dtype=float)
    m = a.shape[0]
    if rates.shape != (m,):
        raise InvalidParam("decay_rates length must match the matrix size")
    if not check_irreducible(a):
        raise Reducible("coupling digraph is not strongly connected")

    first = int(np.argmin(rates))
    placed = [first]
    feeders: list[int | None] = [None]
    remaining = [j for j in range(m) if j != first]
    while remaining:
        chosen = None
        for j in remaining:
            feeder = next((i for i in placed if a[j, i] > 0.0), None)
            if feeder is not None:
                chosen = (j, feeder)
                break
        if chosen is None:
            raise Reducible("no unplaced component is fed by the chain")
        placed.append(chosen[0])
        feeders.append(chosen[1])
        remaining.remove(chosen[0])
    return ComponentOrder(permutation=tuple(placed), feeders=tuple(feeders))
