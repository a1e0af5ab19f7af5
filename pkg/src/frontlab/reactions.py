"""Reaction models and sampled checks of the cooperative-KPP assumptions.

A model bundles the reaction vector field F (vectorized: it accepts an
(m,) state or an (m, n) batch of states), the diffusion coefficients,
the linearization F'(0), and the positive stable equilibrium P.  The
checkers sample F on [0, P]; they report violations with witnesses and
never claim more than a sampled verdict.

Checked properties:
  * equilibria        -- F(0) = F(P) = 0 and no interior zero of F
                         (coarse lattice scan, flagged heuristic);
  * cooperativity     -- off-diagonal partials of F nonnegative on [0, P];
  * instability       -- F'(0) irreducible with positive spectral bound;
  * linear_dominance  -- F(min(P, q V)) <= q F'(0) V along Perron
                         eigenvectors V, the growth-dominated-by-
                         linearization property;
  * growth_lower_bound-- F(U) >= F'(0) U - M U^(1+delta0) componentwise
                         for small U, the near-linear expansion floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParam
from .kernels import Kernel
from .spectral import build_speed_matrix, check_irreducible, perron_eigenpair

ASSUMPTIONS = ("equilibria", "cooperativity", "instability",
               "linear_dominance", "growth_lower_bound")

#: slack for sign checks done through central differences
_DERIV_TOL = 1e-8
_VALUE_TOL = 1e-10


@dataclass(frozen=True)
class ReactionModel:
    """Cooperative monostable reaction model.

    f maps an (m,) or (m, n) array to an array of the same shape and must
    be pure; jacobian0 is F'(0) and equilibrium the positive zero P.
    """

    name: str
    m: int
    diffusion: np.ndarray
    f: Callable[[np.ndarray], np.ndarray]
    jacobian0: np.ndarray
    equilibrium: np.ndarray

    def __post_init__(self):
        zero = self.f(np.zeros(self.m))
        if np.max(np.abs(zero)) > _VALUE_TOL:
            raise InvalidParam("F(0) must vanish")
        at_p = self.f(np.asarray(self.equilibrium, dtype=float))
        if np.max(np.abs(at_p)) > _VALUE_TOL:
            raise InvalidParam("F(P) must vanish")
        off = self.jacobian0 - np.diag(np.diag(self.jacobian0))
        if np.any(off < 0.0):
            raise InvalidParam("F'(0) off-diagonals must be nonnegative")
        spectral_bound = float(np.max(np.real(np.linalg.eigvals(self.jacobian0))))
        if spectral_bound <= 0.0:
            raise InvalidParam("the zero state must be linearly unstable")


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of one sampled assumption check.

    witnesses holds (state, violation magnitude) pairs; empty iff passed.
    params_used records (q0, delta0, M) for the growth lower bound.
    """

    assumption: str
    passed: bool
    witnesses: tuple[tuple[tuple[float, ...], float], ...]
    params_used: dict | None = None
    note: str = ""


def _as_diffusion(d, m: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(d, dtype=float), (m,)).copy()
    if np.any(arr <= 0.0):
        raise InvalidParam("diffusion coefficients must be positive")
    return arr


def _scalar_kpp(r: float = 1.0, p: float = 1.0, d: float = 1.0) -> ReactionModel:
    if r <= 0.0 or p <= 0.0:
        raise InvalidParam("scalar_kpp needs r > 0 and p > 0")

    def f(u):
        return r * u * (1.0 - u / p)

    return ReactionModel(name="scalar_kpp", m=1, diffusion=_as_diffusion(d, 1),
                         f=f, jacobian0=np.array([[r]]),
                         equilibrium=np.array([p]))


def _coupled_logistic(kappa: float, d=1.0) -> ReactionModel:
    if not 0.0 < kappa < 1.0:
        raise InvalidParam("coupled_logistic needs kappa in (0, 1)")

    def f(u):
        u1, u2 = u[0], u[1]
        return np.stack([u1 * (1.0 - u1) + kappa * (u2 - u1),
                         u2 * (1.0 - u2) + kappa * (u1 - u2)])

    jac = np.array([[1.0 - kappa, kappa], [kappa, 1.0 - kappa]])
    return ReactionModel(name="coupled_logistic", m=2,
                         diffusion=_as_diffusion(d, 2), f=f, jacobian0=jac,
                         equilibrium=np.ones(2))


def _chain(m: int, kappa: float, d=1.0) -> ReactionModel:
    m = int(m)
    if m < 1:
        raise InvalidParam("chain needs m >= 1")
    if not 0.0 < kappa < 1.0:
        raise InvalidParam("chain needs kappa in (0, 1)")

    def f(u):
        out = u * (1.0 - u)
        if m > 1:
            out = np.array(out, copy=True)
            out[0] += kappa * (u[1] - u[0])
            out[-1] += kappa * (u[-2] - u[-1])
            for j in range(1, m - 1):
                out[j] += kappa * (u[j - 1] + u[j + 1] - 2.0 * u[j])
        return out

    jac = np.eye(m)
    for j in range(m):
        degree = (j > 0) + (j < m - 1)
        jac[j, j] -= degree * kappa
        if j > 0:
            jac[j, j - 1] = kappa
        if j < m - 1:
            jac[j, j + 1] = kappa
    return ReactionModel(name="chain", m=m, diffusion=_as_diffusion(d, m),
                         f=f, jacobian0=jac, equilibrium=np.ones(m))


def _violator_noncooperative(kappa: float = 0.5) -> ReactionModel:
    # cross coupling kappa (1 - 2 u_j) u_i (1 - u_i): nonnegative at 0,
    # vanishing at 0 and P, but decreasing in u_i on part of [0, P]
    def f(u):
        u1, u2 = u[0], u[1]
        return np.stack([u1 * (1.0 - u1) + kappa * (1.0 - 2.0 * u1) * u2 * (1.0 - u2),
                         u2 * (1.0 - u2) + kappa * (1.0 - 2.0 * u2) * u1 * (1.0 - u1)])

    jac = np.array([[1.0, kappa], [kappa, 1.0]])
    return ReactionModel(name="violator_noncooperative", m=2,
                         diffusion=_as_diffusion(1.0, 2), f=f, jacobian0=jac,
                         equilibrium=np.ones(2))


def _violator_superlinear() -> ReactionModel:
    # f(u) = u + u^2 - 2 u^3 exceeds f'(0) u below the equilibrium, so
    # growth is not dominated by the linearization
    def f(u):
        return u + u * u - 2.0 * u ** 3

    return ReactionModel(name="violator_superlinear", m=1,
                         diffusion=_as_diffusion(1.0, 1), f=f,
                         jacobian0=np.array([[1.0]]),
                         equilibrium=np.array([1.0]))


_REGISTRY = {
    "scalar_kpp": _scalar_kpp,
    "coupled_logistic": _coupled_logistic,
    "chain": _chain,
    "violator_noncooperative": _violator_noncooperative,
    "violator_superlinear": _violator_superlinear,
}


def builtin_model(name: str, **params) -> ReactionModel:
    """Instantiate a registered model; see _REGISTRY for the names."""
    if name not in _REGISTRY:
        raise InvalidParam(f"unknown model {name!r}; "
                           f"known: {sorted(_REGISTRY)}")
    return _REGISTRY[name](**params)


def _sample_states(model: ReactionModel, sample_count: int, seed: int,
                   cap: np.ndarray | None = None) -> np.ndarray:
    """Lattice plus seeded random states in [0, cap], shape (k, m)."""
    cap = model.equilibrium if cap is None else cap
    per_axis = max(2, int(round(sample_count ** (1.0 / model.m))))
    per_axis = min(per_axis, 12)
    axes = [np.linspace(0.0, cap[j], per_axis) for j in range(model.m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([g.ravel() for g in mesh], axis=1)
    rng = np.random.default_rng(seed)
    random_states = rng.uniform(0.0, 1.0, size=(sample_count, model.m)) * cap
    return np.concatenate([lattice, random_states], axis=0)


def numeric_jacobian(model: ReactionModel, state: np.ndarray,
                     step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of F at a state."""
    state = np.asarray(state, dtype=float)
    if step is None:
        step = 1e-5 * (1.0 + float(np.linalg.norm(model.equilibrium)))
    jac = np.empty((model.m, model.m))
    for i in range(model.m):
        up = state.copy()
        down = state.copy()
        up[i] += step
        down[i] -= step
        jac[:, i] = (model.f(up) - model.f(down)) / (2.0 * step)
    return jac


def check_structure(model: ReactionModel, sample_count: int = 400,
                    seed: int = 0) -> list[AssumptionReport]:
    """Sampled equilibria / cooperativity / instability reports.

    Cooperativity is checked through central differences of the
    off-diagonal partials at lattice and random states.  The interior
    equilibrium scan is a coarse heuristic: it flags strictly interior
    lattice cells where ||F|| dips below the scale of its neighbors.
    """
    reports = []

    # equilibria: endpoint residuals plus the interior scan
    witnesses = []
    for state in (np.zeros(model.m), np.asarray(model.equilibrium, float)):
        magnitude = float(np.max(np.abs(model.f(state))))
        if magnitude > _VALUE_TOL:
            witnesses.append((tuple(state), magnitude))
    grid_n = 21 if model.m <= 2 else 9
    axes = [np.linspace(0.0, model.equilibrium[j], grid_n)
            for j in range(model.m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    states = np.stack([g.ravel() for g in mesh], axis=0)
    norms = np.linalg.norm(model.f(states), axis=0).reshape([grid_n] * model.m)
    spacing = float(np.max(model.equilibrium)) / (grid_n - 1)
    scale = float(np.max(norms))
    it = np.nditer(norms, flags=["multi_index"])
    for value in it:
        idx = it.multi_index
        if any(i == 0 or i == grid_n - 1 for i in idx):
            continue
        if float(value) < 1e-8 * max(scale, 1.0):
            state = tuple(axes[j][idx[j]] for j in range(model.m))
            witnesses.append((state, float(value)))
    reports.append(AssumptionReport(
        assumption="equilibria", passed=not witnesses,
        witnesses=tuple(witnesses),
        note=f"endpoint residuals exact; interior scan on a {grid_n}^"
             f"{model.m} lattice is heuristic, not a proof (spacing "
             f"{spacing:.3g})"))

    # cooperativity of the off-diagonal partials
    witnesses = []
    if model.m > 1:
        for state in _sample_states(model, sample_count, seed):
            jac = numeric_jacobian(model, state)
            off = jac - np.diag(np.diag(jac))
            worst = float(np.min(off))
            if worst < -_DERIV_TOL:
                witnesses.append((tuple(state), -worst))
    reports.append(AssumptionReport(
        assumption="cooperativity", passed=not witnesses,
        witnesses=tuple(witnesses[:20]),
        note="central differences at sampled states; sampled, not proved"))

    # instability: irreducible linearization with positive spectral bound
    witnesses = []
    if not check_irreducible(model.jacobian0):
        witnesses.append(((), math.nan))
    bound = float(np.max(np.real(np.linalg.eigvals(model.jacobian0))))
    if bound <= 0.0:
        witnesses.append(((), -bound))
    reports.append(AssumptionReport(
        assumption="instability", passed=not witnesses,
        witnesses=tuple(witnesses),
        note=f"spectral bound of F'(0) = {bound:.6g}"))
    return reports


def check_linear_dominance(model: ReactionModel, kernels: list[Kernel],
                           lambda_grid, q_grid) -> AssumptionReport:
    """Check F(min(P, q V(lam))) <= q F'(0) V(lam) on the given grids.

    V(lam) is the Perron eigenvector of the dispersion matrix, so the
    kernels enter through it.  Componentwise slack 1e-10.
    """
    p = np.asarray(model.equilibrium, dtype=float)
    witnesses = []
    for lam in lambda_grid:
        vec = perron_eigenpair(build_speed_matrix(model, kernels, lam)).vector
        for q in q_grid:
            state = np.minimum(p, q * vec)
            gap = model.f(state) - q * (model.jacobian0 @ vec)
            worst = float(np.max(gap))
            if worst > _VALUE_TOL:
                witnesses.append(((float(lam), float(q)), worst))
    return AssumptionReport(
        assumption="linear_dominance", passed=not witnesses,
        witnesses=tuple(witnesses[:20]),
        note="witnesses are (lambda, q) pairs; sampled, not proved")


def check_growth_lower_bound(model: ReactionModel, q0: float, delta0: float,
                             m_const: float, sample_count: int = 400,
                             seed: int = 0) -> AssumptionReport:
    """Check F(U) >= F'(0) U - M U^(1+delta0) for sampled ||U|| <= q0.

    The power acts componentwise.  Componentwise slack 1e-10.
    """
    if q0 <= 0.0 or not 0.0 < delta0 <= 1.0 or m_const <= 0.0:
        raise InvalidParam("need q0 > 0, delta0 in (0, 1], M > 0")
    p = np.asarray(model.equilibrium, dtype=float)
    cap = np.minimum(p, q0)
    witnesses = []
    for state in _sample_states(model, sample_count, seed, cap=cap):
        if np.linalg.norm(state) > q0:
            continue
        gap = (model.jacobian0 @ state - m_const * state ** (1.0 + delta0)
               - model.f(state))
        worst = float(np.max(gap))
        if worst > _VALUE_TOL:
            witnesses.append((tuple(state), worst))
    return AssumptionReport(
        assumption="growth_lower_bound", passed=not witnesses,
        witnesses=tuple(witnesses[:20]),
        params_used={"q0": q0, "delta0": delta0, "M": m_const},
        note="sampled, not proved")


def default_growth_params(model: ReactionModel, delta0: float = 1.0,
                          sample_count: int = 400, seed: int = 0):
    """Default (q0, delta0, M): q0 = half the smallest equilibrium entry
    and M the smallest power of two passing the sampled lower bound."""
    q0 = 0.5 * float(np.min(model.equilibrium))
    cap = np.minimum(np.asarray(model.equilibrium, float), q0)
    required = 0.0
    for state in _sample_states(model, sample_count, seed, cap=cap):
        if np.linalg.norm(state) > q0:
            continue
        deficit = model.jacobian0 @ state - model.f(state)
        power = state ** (1.0 + delta0)
        mask = power > 0.0
        if np.any(mask):
            required = max(required, float(np.max(deficit[mask] / power[mask])))
    # shave roundoff before the power-of-two ceiling so an exact fit
    # (required = 1 + ulp) does not double M
    m_const = 2.0 ** math.ceil(math.log2(max(required, 1e-6) * (1.0 - 1e-9)))
    return q0, delta0, m_const


def self_lipschitz(model: ReactionModel, sample_count: int = 300,
                   seed: int = 0) -> np.ndarray:
    """Sampled bound on |d f_j / d u_j| over [0, P], per component.

    This is the constant entering the monotone-step time bound: the
    explicit update stays order-preserving when
    dt <= 0.9 / max_j (d_j + Lip_j).
    """
    bounds = np.zeros(model.m)
    for state in _sample_states(model, sample_count, seed):
        jac = numeric_jacobian(model, state)
        bounds = np.maximum(bounds, np.abs(np.diag(jac)))
    return bounds


def jacobian_norm_bound(model: ReactionModel, sample_count: int = 300,
                        seed: int = 0) -> float:
    """Sampled bound on the max-row-sum norm of F' over [0, P]."""
    worst = 0.0
    for state in _sample_states(model, sample_count, seed):
        jac = numeric_jacobian(model, state)
        worst = max(worst, float(np.max(np.sum(np.abs(jac), axis=1))))
    return worst
