"""Analytic super/sub-solutions, cascade profiles, and sandwich checks.

Three explicit profiles certify simulated solutions:

  * upper:   min(P, Gamma exp(-lam z) V(lam)) with z = |x| - c(lam) t
             dominates any solution started below it;
  * lower:   max(0, gamma exp(-lam z) V(lam) - L exp(-mu z) V(mu)) with
             mu = lam (1 + delta) stays below any solution started above
             it and travels at the same speed c(lam), pinning the speed
             from below;
  * cascade: a staged profile M_i (exp(-beta_i u) - exp(-alpha u)) p(x),
             p(x) = exp(-lam0 |x|), that pushes positivity along the
             coupling chain one stage of tau = ln 2 per component, so
             that after T = 1 + (m - 1) tau every component exceeds
             M0 p(x).

`residual` evaluates the operator residual of a profile under the exact
discrete convolution actually simulated, so a sign check certifies the
profile for the scheme rather than for the continuum operator;
`sandwich_test` then verifies lower <= U <= upper on simulation
snapshots within a documented slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DominationImpossible, FrontlabError, InvalidParam, RateOutOfRange
from .kernels import DiscreteKernel, Kernel, mgf
from .reactions import ReactionModel, jacobian_norm_bound
from .simulate import (Compact, ExponentialDecay, FieldState, Grid,
                       HypothesisH, InitialData, SimulationOutput,
                       dispersal_delta)
from .spectral import ComponentOrder, minimize_speed, wave_speed

#: half-width (in cells) of the exclusion halo around profile kinks
KINK_HALO_CELLS = 2.0


def G_value(model: ReactionModel, kernels: list[Kernel], c: float,
            lam: float, j: int, eigvec: np.ndarray) -> float:
    """Component j of c lam V - K(lam) V for the given eigvec = V(lam).

    Vanishes when c = c(lam) and eigvec is the Perron eigenvector; it is
    strictly positive at the steeper companion rate mu with c = c(lam),
    which is the margin the lower solution construction spends.
    """
    if not 0 <= j < model.m:
        raise InvalidParam(f"component {j} outside 0..{model.m - 1}")
    d_j = float(model.diffusion[j])
    mgf_j = mgf(kernels[j], lam)
    coupling = float(model.jacobian0[j] @ eigvec)
    return (c * lam - d_j * mgf_j + d_j) * float(eigvec[j]) - coupling


@dataclass(frozen=True)
class AnalyticProfile:
    """Closed-form traveling envelope, evaluable at any (t, x).

    kind "upper": value_j = min(p_j, amplitude exp(-lam z) vec_lam_j).
    kind "lower": value_j = max(0, amplitude exp(-lam z) vec_lam_j
    - big_l exp(-mu z) vec_mu_j), which vanishes for z <= roots_j and
    peaks at z = peaks_j.  In both cases z = |x| - speed * (t -
    start_time); the profile bounds solutions only for t >= start_time.
    """

    kind: str
    lam: float
    speed: float
    amplitude: float
    vec_lam: np.ndarray
    equilibrium: np.ndarray
    start_time: float = 0.0
    mu: float | None = None
    delta: float | None = None
    big_l: float | None = None
    vec_mu: np.ndarray | None = None
    y0: float | None = None
    roots: np.ndarray | None = None
    peaks: np.ndarray | None = None

    def _z(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.abs(x) - self.speed * (t - self.start_time)

    def value(self, t: float, x) -> np.ndarray:
        """Profile values, shape (m, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = self._z(t, x)
        m = self.vec_lam.shape[0]
        out = np.empty((m, x.shape[0]))
        if self.kind == "upper":
            for j in range(m):
                level = self.amplitude * self.vec_lam[j]
                cap = math.log(self.equilibrium[j] / level)
                expo = np.minimum(-self.lam * z, cap + 1.0)
                out[j] = np.minimum(self.equilibrium[j], level * np.exp(expo))
            return out
        for j in range(m):
            zc = np.maximum(z, self.roots[j])
            raw = (self.amplitude * self.vec_lam[j] * np.exp(-self.lam * zc)
                   - self.big_l * self.vec_mu[j] * np.exp(-self.mu * zc))
            out[j] = np.where(z <= self.roots[j], 0.0, np.maximum(raw, 0.0))
        return out

    def time_derivative(self, t: float, x) -> np.ndarray:
        """Analytic d/dt of the profile (one-sided at the kinks)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = self._z(t, x)
        m = self.vec_lam.shape[0]
        out = np.zeros((m, x.shape[0]))
        if self.kind == "upper":
            values = self.value(t, x)
            for j in range(m):
                level = self.amplitude * self.vec_lam[j]
                cap = math.log(self.equilibrium[j] / level)
                unclamped = -self.lam * z < cap
                out[j] = np.where(unclamped,
                                  self.lam * self.speed * values[j], 0.0)
            return out
        for j in range(m):
            zc = np.maximum(z, self.roots[j])
            rate = self.speed * (
                self.lam * self.amplitude * self.vec_lam[j] * np.exp(-self.lam * zc)
                - self.mu * self.big_l * self.vec_mu[j] * np.exp(-self.mu * zc))
            out[j] = np.where(z <= self.roots[j], 0.0, rate)
        return out

    def kink_positions(self, t: float) -> tuple[float, ...]:
        """Nonnegative |x| loci where the profile is only piecewise smooth."""
        shift = self.speed * (t - self.start_time)
        kinks = []
        m = self.vec_lam.shape[0]
        if self.kind == "upper":
            for j in range(m):
                z_kink = math.log(self.amplitude * self.vec_lam[j]
                                  / self.equilibrium[j]) / self.lam
                locus = z_kink + shift
                if locus >= 0.0:
                    kinks.append(locus)
        else:
            for j in range(m):
                locus = float(self.roots[j]) + shift
                if locus >= 0.0:
                    kinks.append(locus)
        return tuple(kinks)


def build_upper(model: ReactionModel, kernels: list[Kernel], lam: float,
                data: InitialData, lambda_star: float | None = None,
                start_time: float = 0.0) -> AnalyticProfile:
    """Dominating envelope min(P, Gamma exp(-lam |x| + lam c t) V(lam)).

    Gamma is the smallest power-of-two multiple of max_j C_j / v_j(lam)
    that dominates the initial data everywhere (for plateau data the
    doubling covers the exp(lam radius) factor).  Initial data decaying
    slower than lam cannot be dominated and raises DominationImpossible.
    """
    if lambda_star is None:
        lambda_star = minimize_speed(model, kernels)[0]
    if not 0.0 < lam < lambda_star:
        raise RateOutOfRange(f"rate {lam} outside (0, {lambda_star})")
    c, vec = wave_speed(model, kernels, lam)

    if isinstance(data, ExponentialDecay):
        if min(data.rates) < lam - 1e-12:
            raise DominationImpossible(
                f"initial rate {min(data.rates)} below envelope rate {lam}")
        amps = np.asarray(data.amplitudes, dtype=float)
        required = float(np.max(amps / vec))
    elif isinstance(data, HypothesisH):
        if data.rate < lam - 1e-12:
            raise DominationImpossible(
                f"initial rate {data.rate} below envelope rate {lam}")
        amps = np.zeros(model.m)
        amps[data.j0] = data.amplitude
        if data.others is not None:
            others = np.asarray(data.others, dtype=float)
            amps = np.maximum(amps, others)
        required = float(np.max(amps / vec))
    elif isinstance(data, Compact):
        amps = np.asarray(data.heights, dtype=float)
        required = float(np.max(amps / vec)) * math.exp(lam * data.radius)
    else:
        raise InvalidParam(f"unknown initial data {type(data).__name__}")

    base = float(np.max(amps / vec))
    if base <= 0.0:
        raise DominationImpossible("initial data has no positive amplitude")
    gamma_big = base
    while gamma_big < required * (1.0 - 1e-15):
        gamma_big *= 2.0
    return AnalyticProfile(kind="upper", lam=lam, speed=c,
                           amplitude=gamma_big, vec_lam=vec,
                           equilibrium=np.asarray(model.equilibrium, float),
                           start_time=start_time)


def build_lower(model: ReactionModel, kernels: list[Kernel], lam: float,
                gamma_amp: float, y0: float, growth_params,
                lambda_star: float | None = None,
                start_time: float = 0.0) -> AnalyticProfile:
    """Two-exponential sub-solution travelling at c(lam).

    growth_params is the (q0, delta0, M) triple of the sampled growth
    lower bound.  The companion rate is mu = lam (1 + delta) with
    delta = min(delta0, (lambda_star/lam - 1)/2), so c(mu) < c(lam); the
    subtracted-term weight L is the exact maximum of the two constraints
    that make the profile both small enough (sup <= gamma exp(-lam y0)
    <= q0, after halving gamma if needed) and a sub-solution.
    """
    q0, delta0, m_const = growth_params
    if q0 <= 0.0 or not 0.0 < delta0 <= 1.0 or m_const <= 0.0:
        raise InvalidParam("need q0 > 0, delta0 in (0, 1], M > 0")
    if y0 <= 0.0 or gamma_amp <= 0.0:
        raise InvalidParam("need y0 > 0 and gamma_amp > 0")
    if lambda_star is None:
        lambda_star = minimize_speed(model, kernels)[0]
    if not 0.0 < lam < lambda_star:
        raise RateOutOfRange(f"rate {lam} outside (0, {lambda_star})")

    delta = min(delta0, 0.5 * (lambda_star / lam - 1.0))
    mu = lam * (1.0 + delta)
    c_lam, vec_lam = wave_speed(model, kernels, lam)
    c_mu, vec_mu = wave_speed(model, kernels, mu)
    if not c_mu < c_lam:
        raise FrontlabError(
            f"speed curve not decreasing: c({mu:.6g}) >= c({lam:.6g}); "
            "model outside the assumptions")

    gamma = float(gamma_amp)
    while gamma * math.exp(-lam * y0) > q0:
        gamma *= 0.5

    g_at_mu = np.array([G_value(model, kernels, c_lam, mu, j, vec_mu)
                        for j in range(model.m)])
    if np.any(g_at_mu <= 0.0):
        raise FrontlabError("companion-rate margin G(c(lam), mu; j) "
                            "not positive; model outside the assumptions")
    first = (gamma * math.exp(lam * delta * y0) / (1.0 + delta)
             * float(np.max(vec_lam / vec_mu)))
    second = (m_const * gamma ** (1.0 + delta)
              * float(np.max(vec_lam ** (1.0 + delta) / g_at_mu)))
    big_l = max(first, second)

    ratio = big_l * vec_mu / (gamma * vec_lam)
    roots = np.log(ratio) / (lam * delta)
    peaks = roots + math.log(1.0 + delta) / (lam * delta)
    return AnalyticProfile(kind="lower", lam=lam, speed=c_lam, amplitude=gamma,
                           vec_lam=vec_lam,
                           equilibrium=np.asarray(model.equilibrium, float),
                           start_time=start_time, mu=mu, delta=delta,
                           big_l=big_l, vec_mu=vec_mu, y0=float(y0),
                           roots=roots, peaks=peaks)


@dataclass(frozen=True)
class CascadeProfile:
    """Staged sub-solution spreading positivity along the coupling chain.

    Components are stored in cascade order: position 0 carries
    amps[0] * exp(-alpha (t - 1)) p(x) from the start time on, and
    position i ramps up as amps[i] (exp(-betas[i] u) - exp(-alpha u))
    p(x) with u = t - 1 - stages[i] tau, staying identically zero
    before its stage begins.  By construction every position exceeds
    amps[i] exp(-alpha (t - 1 - stages[i] tau)) p(x) one stage after its
    ramp starts, and all components exceed m0 p(x) at t = big_t.
    """

    order: ComponentOrder
    lambda0: float
    alpha: float
    tau: float
    betas: np.ndarray
    amps: np.ndarray
    stages: np.ndarray
    start_time: float
    big_t: float
    m0: float

    @property
    def m(self) -> int:
        return len(self.order.permutation)

    def _shape(self, t: float) -> np.ndarray:
        """Per-position time factors (no spatial part)."""
        factors = np.zeros(self.m)
        if t < self.start_time:
            return factors
        factors[0] = self.amps[0] * math.exp(-self.alpha * (t - self.start_time))
        for i in range(1, self.m):
            u = t - self.start_time - self.stages[i] * self.tau
            if u > 0.0:
                factors[i] = self.amps[i] * (math.exp(-self.betas[i] * u)
                                             - math.exp(-self.alpha * u))
        return factors

    def value(self, t: float, x) -> np.ndarray:
        """Profile values in original component indexing, shape (m, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.exp(-self.lambda0 * np.abs(x))
        out = np.zeros((self.m, x.shape[0]))
        factors = self._shape(t)
        for i, j in enumerate(self.order.permutation):
            out[j] = factors[i] * p
        return out

    def time_derivative(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.exp(-self.lambda0 * np.abs(x))
        out = np.zeros((self.m, x.shape[0]))
        if t < self.start_time:
            return out
        rates = np.zeros(self.m)
        rates[0] = (-self.alpha * self.amps[0]
                    * math.exp(-self.alpha * (t - self.start_time)))
        for i in range(1, self.m):
            u = t - self.start_time - self.stages[i] * self.tau
            if u > 0.0:
                rates[i] = self.amps[i] * (
                    -self.betas[i] * math.exp(-self.betas[i] * u)
                    + self.alpha * math.exp(-self.alpha * u))
        for i, j in enumerate(self.order.permutation):
            out[j] = rates[i] * p
        return out

    def kink_positions(self, t: float) -> tuple[float, ...]:
        return ()

    def envelope(self, t: float, x) -> np.ndarray:
        """Guaranteed floor amps[i] exp(-alpha (t-1-stages[i] tau)) p(x),
        zero before the floor becomes valid (one stage after the ramp)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.exp(-self.lambda0 * np.abs(x))
        out = np.zeros((self.m, x.shape[0]))
        for i, j in enumerate(self.order.permutation):
            ready = self.start_time + (self.stages[i] + (1 if i else 0)) * self.tau
            if t >= ready - 1e-12:
                shift = t - self.start_time - self.stages[i] * self.tau
                out[j] = self.amps[i] * math.exp(-self.alpha * shift) * p
        return out


def fit_cascade_margin(model: ReactionModel, sample_count: int = 400,
                       seed: int = 0) -> float:
    """Largest box height q3 (by halving from min P / 2) where sampled
    states satisfy f_j(U) >= (f_jj - 1) u_j + sum_{i != j} f_ji u_i / 2."""
    from .reactions import _sample_states

    jac = model.jacobian0
    half_coupling = 0.5 * (jac - np.diag(np.diag(jac)))
    floor_diag = np.diag(jac) - 1.0
    q3 = 0.5 * float(np.min(model.equilibrium))
    while q3 >= 1e-8:
        cap = np.full(model.m, q3)
        ok = True
        for state in _sample_states(model, sample_count, seed, cap=cap):
            floor = floor_diag * state + half_coupling @ state
            if np.any(model.f(state) < floor - 1e-12):
                ok = False
                break
        if ok:
            return q3
        q3 *= 0.5
    raise InvalidParam("no box satisfies the half-coupling floor; "
                       "model outside the assumptions")


def build_cascade(model: ReactionModel, kernels: list[Kernel],
                  order: ComponentOrder, lambda0: float, seed_amp: float,
                  q3: float, start_time: float = 1.0) -> CascadeProfile:
    """Assemble the staged sub-solution along the given component order.

    alpha = max_j (d_j + |f_jj|) + 2 and beta_i = d_i + |f_ii| + 1; the
    amplitude recursion follows the feeders, with the extra exp(alpha
    tau) attenuation whenever the feeder is itself a ramped component.
    The leading amplitude starts at min(seed_amp, q3) and is halved
    deterministically until every stage amplitude fits below q3.
    """
    lambda0 = float(lambda0)
    if lambda0 <= 0.0 or lambda0 >= min(k.max_rate for k in kernels):
        raise RateOutOfRange(f"rate {lambda0} outside the kernel window")
    if seed_amp <= 0.0 or q3 <= 0.0:
        raise InvalidParam("need seed_amp > 0 and q3 > 0")
    perm = order.permutation
    m = len(perm)
    jac = model.jacobian0
    diag = np.array([jac[j, j] for j in perm])
    diff = np.array([model.diffusion[j] for j in perm])
    alpha = float(np.max(model.diffusion
                         + np.abs(np.diag(jac)))) + 2.0
    tau = math.log(2.0)
    big_t = start_time + (m - 1) * tau

    positions = {j: i for i, j in enumerate(perm)}
    stages = np.zeros(m, dtype=int)
    betas = np.full(m, np.nan)
    couplings = np.zeros(m)
    for i in range(1, m):
        feeder_pos = positions[order.feeders[i]]
        stages[i] = 0 if feeder_pos == 0 else stages[feeder_pos] + 1
        betas[i] = diff[i] + abs(diag[i]) + 1.0
        couplings[i] = jac[perm[i], perm[feeder_pos]]

    def amplitudes(m1: float) -> np.ndarray:
        amps = np.zeros(m)
        amps[0] = m1
        for i in range(1, m):
            feeder_pos = positions[order.feeders[i]]
            attenuation = 1.0 if feeder_pos == 0 else math.exp(alpha * tau)
            amps[i] = (couplings[i] * amps[feeder_pos]
                       / (2.0 * attenuation * (alpha - diff[i] + diag[i] - 1.0)))
        return amps

    m1 = min(float(seed_amp), q3)
    amps = amplitudes(m1)
    while np.any(amps > q3):
        m1 *= 0.5
        amps = amplitudes(m1)

    floors = [amps[0] * math.exp(-alpha * (big_t - start_time))]
    for i in range(1, m):
        floors.append(amps[i] * math.exp(
            -alpha * (big_t - start_time - stages[i] * tau)))
    return CascadeProfile(order=order, lambda0=lambda0, alpha=alpha, tau=tau,
                          betas=betas, amps=amps, stages=stages,
                          start_time=start_time, big_t=big_t,
                          m0=float(min(floors)))


@dataclass
class ResidualReport:
    """Signed operator residuals of a profile under the discrete scheme.

    eps_disc = coefficient * dx is the documented discretization budget
    (coefficient = max_j d_j * sup|profile| * max(1, steepest rate)^2);
    an upper profile should keep min_residual >= -eps_disc and a lower
    or cascade profile max_residual <= +eps_disc away from the kinks.
    """

    times: list[float]
    min_by_time: list[np.ndarray]
    max_by_time: list[np.ndarray]
    min_residual: float
    max_residual: float
    eps_disc: float
    coefficient: float
    excluded_fraction: float


def _steepest_rate(profile) -> float:
    if isinstance(profile, CascadeProfile):
        return profile.lambda0
    if profile.kind == "lower":
        return profile.mu
    return profile.lam


def residual(profile, model: ReactionModel, dks: list[DiscreteKernel],
             grid: Grid, times) -> ResidualReport:
    """Evaluate dPhi/dt - D (k*Phi - Phi) - F(Phi) on the grid.

    The time derivative is analytic (closed form of the profile); the
    convolution is the exact discrete stencil used by the stepper, so
    sign conditions certify the profile for the simulated dynamics.
    Nodes within KINK_HALO_CELLS * dx of a kink locus are excluded.
    """
    times = [float(t) for t in times]
    ax = np.abs(grid.x)
    min_by_time, max_by_time = [], []
    excluded = 0
    total = 0
    amp_sup = 0.0
    for t in times:
        values = profile.value(t, grid.x)
        ddt = profile.time_derivative(t, grid.x)
        delta = np.empty_like(values)
        for j in range(model.m):
            delta[j] = dispersal_delta(values[j:j + 1], dks[j])[0]
        n_op = ddt - model.diffusion[:, None] * delta - model.f(values)
        keep = np.ones(grid.n, dtype=bool)
        for locus in profile.kink_positions(t):
            keep &= np.abs(ax - locus) > KINK_HALO_CELLS * grid.dx
        excluded += int(np.count_nonzero(~keep))
        total += grid.n
        amp_sup = max(amp_sup, float(np.max(values)))
        min_by_time.append(n_op[:, keep].min(axis=1))
        max_by_time.append(n_op[:, keep].max(axis=1))
    coefficient = (float(np.max(model.diffusion)) * amp_sup
                   * max(1.0, _steepest_rate(profile)) ** 2)
    eps_disc = max(coefficient * grid.dx, 1e-9)
    return ResidualReport(
        times=times, min_by_time=min_by_time, max_by_time=max_by_time,
        min_residual=float(np.min([v.min() for v in min_by_time])),
        max_residual=float(np.max([v.max() for v in max_by_time])),
        eps_disc=eps_disc, coefficient=coefficient,
        excluded_fraction=excluded / max(total, 1))


@dataclass
class SandwichReport:
    """Pointwise lower - slack <= U <= upper + slack over the snapshots."""

    violations: list[tuple[float, int, float, float, str]]
    max_violation: float
    checked_points: int
    slack_smooth: float
    slack_kink: float

    @property
    def passed(self) -> bool:
        return not self.violations


def sandwich_test(sim: SimulationOutput, lower, upper, grid: Grid,
                  model: ReactionModel, slack: float | None = None) -> SandwichReport:
    """Check every snapshot against the analytic envelopes.

    Away from profile kinks the slack is 1e-8; within KINK_HALO_CELLS
    grid cells of a kink it widens to `slack` (default 10 dx times the
    sampled bound on ||F'||), absorbing the local smearing of the
    discrete front against the piecewise profile.  Each profile is only
    consulted for snapshots at or after its start time.
    """
    slack_smooth = 1e-8
    slack_kink = slack if slack is not None else (
        10.0 * grid.dx * jacobian_norm_bound(model))
    ax = np.abs(grid.x)
    violations: list[tuple[float, int, float, float, str]] = []
    checked = 0
    max_violation = 0.0

    def check(state: FieldState, profile, side: str):
        nonlocal checked, max_violation
        if profile is None or state.time < profile.start_time - 1e-12:
            return
        bound = profile.value(state.time, grid.x)
        tol = np.full(grid.n, slack_smooth)
        for locus in profile.kink_positions(state.time):
            tol[np.abs(ax - locus) <= KINK_HALO_CELLS * grid.dx] = slack_kink
        gap = (state.components - bound) if side == "lower" \
            else (bound - state.components)
        checked += gap.size
        bad = gap < -tol[None, :]
        if np.any(bad):
            amounts = -gap[bad]
            max_violation = max(max_violation, float(np.max(amounts)))
            comps, nodes = np.nonzero(bad)
            for c, i, a in list(zip(comps, nodes, amounts))[:50]:
                violations.append((state.time, int(c), float(grid.x[i]),
                                   float(a), side))

    for state in sim.snapshots:
        check(state, lower, "lower")
        check(state, upper, "upper")
    return SandwichReport(violations=violations, max_violation=max_violation,
                          checked_points=checked, slack_smooth=slack_smooth,
                          slack_kink=slack_kink)


def fit_lower_envelope(state: FieldState, grid: Grid, vec: np.ndarray,
                       lam: float, y0: float) -> float:
    """Largest gamma with state >= gamma min(exp(-lam |x|), exp(-lam y0)) vec.

    Returns 0.0 when some component vanishes somewhere, in which case no
    positive envelope exists yet.
    """
    ax = np.abs(grid.x)
    envelope = np.minimum(np.exp(-lam * ax), math.exp(-lam * y0))
    gamma = math.inf
    for j in range(state.components.shape[0]):
        ratio = state.components[j] / (vec[j] * envelope)
        gamma = min(gamma, float(np.min(ratio)))
    return max(0.0, gamma * (1.0 - 1e-12))


def fit_seed_amplitude(state: FieldState, grid: Grid, component: int,
                       lam: float) -> float:
    """Largest C with state[component] >= C exp(-lam |x|) on the grid."""
    ax = np.abs(grid.x)
    ratio = state.components[component] * np.exp(lam * ax)
    return max(0.0, float(np.min(ratio)) * (1.0 - 1e-12))
