"""Analytic envelopes: identities, residual signs, cascade, sandwich."""

import math
import warnings

import numpy as np
import pytest

from frontlab.bounds import (AnalyticProfile, G_value, build_cascade,
                             build_lower, build_upper, fit_cascade_margin,
                             fit_lower_envelope, fit_seed_amplitude, residual,
                             sandwich_test)
from frontlab.errors import DominationImpossible, RateOutOfRange
from frontlab.kernels import discretize, make_kernel, mgf
from frontlab.reactions import builtin_model, default_growth_params
from frontlab.simulate import (Compact, ExponentialDecay, RunSetup,
                               make_grid, run)
from frontlab.spectral import minimize_speed, reorder_components, wave_speed

GAUSS = make_kernel("gaussian", [1.0])
GROWTH_SCALAR = (0.5, 1.0, 1.0)


@pytest.fixture(scope="module")
def scalar():
    model = builtin_model("scalar_kpp")
    lambda_star, c_star, _ = minimize_speed(model, [GAUSS])
    return model, [GAUSS], lambda_star


@pytest.fixture(scope="module")
def coupled():
    model = builtin_model("coupled_logistic", kappa=0.5)
    kernels = [GAUSS, GAUSS]
    lambda_star, c_star, _ = minimize_speed(model, kernels)
    return model, kernels, lambda_star


class TestGValue:
    def test_vanishes_at_the_dispersion_relation(self, coupled):
        model, kernels, lambda_star = coupled
        for lam in np.linspace(0.05, 0.95 * lambda_star, 20):
            c, vec = wave_speed(model, kernels, lam)
            for j in range(model.m):
                assert abs(G_value(model, kernels, c, lam, j, vec)) <= 1e-9

    def test_positive_at_companion_rate_with_oracle(self, coupled):
        # closed-form oracle: G(c(lam), mu; j) = mu (c(lam) - c(mu)) v_j(mu)
        model, kernels, lambda_star = coupled
        for lam in np.linspace(0.1, 0.9 * lambda_star, 10):
            c_lam, _ = wave_speed(model, kernels, lam)
            mu = lam * (1.0 + 0.5 * (lambda_star / lam - 1.0) / 2.0)
            c_mu, vec_mu = wave_speed(model, kernels, mu)
            for j in range(model.m):
                value = G_value(model, kernels, c_lam, mu, j, vec_mu)
                oracle = mu * (c_lam - c_mu) * vec_mu[j]
                assert value > 0.0
                assert value == pytest.approx(oracle, rel=1e-8)

    def test_scalar_specialization(self, scalar):
        model, kernels, _ = scalar
        lam, c = 0.5, 3.0
        expected = c * lam - (mgf(GAUSS, lam) - 1.0 + 1.0)
        assert G_value(model, kernels, c, lam, 0, np.array([1.0])) == \
            pytest.approx(expected, rel=1e-12)


class TestBuildUpper:
    def test_scalar_amplitude_is_one(self, scalar):
        model, kernels, lambda_star = scalar
        data = ExponentialDecay(rates=(0.5,), amplitudes=(1.0,))
        up = build_upper(model, kernels, 0.5, data, lambda_star=lambda_star)
        assert up.amplitude == 1.0
        assert up.speed == pytest.approx(2.2662969061336526, rel=1e-10)

    def test_clamps_to_equilibrium_behind_the_front(self, scalar):
        model, kernels, lambda_star = scalar
        data = ExponentialDecay(rates=(0.5,), amplitudes=(1.0,))
        up = build_upper(model, kernels, 0.5, data, lambda_star=lambda_star)
        values = up.value(30.0, np.array([0.0, 5.0]))
        assert np.all(values == 1.0)

    def test_dominates_initial_data_on_grid(self, coupled):
        model, kernels, lambda_star = coupled
        grid = make_grid(100.0, 0.1)
        data = ExponentialDecay(rates=(0.4, 1.5), amplitudes=(1.0, 1.0))
        from frontlab.simulate import init_state

        state = init_state(grid, model, data)
        up = build_upper(model, kernels, 0.4, data, lambda_star=lambda_star)
        assert np.all(up.value(0.0, grid.x) >= state.components - 1e-12)

    def test_compact_data_power_of_two_covers_radius(self, scalar):
        model, kernels, lambda_star = scalar
        data = Compact(radius=5.0, heights=(1.0,))
        up = build_upper(model, kernels, 0.5, data, lambda_star=lambda_star)
        # needs exp(0.5 * 5) ~ 12.18, so the doubling lands on 16
        assert up.amplitude == 16.0
        xs = np.linspace(-6.0, 6.0, 101)
        inside = np.abs(xs) <= 5.0
        assert np.all(up.value(0.0, xs)[0][inside] >= 1.0 - 1e-12)

    def test_domination_impossible(self, scalar):
        model, kernels, lambda_star = scalar
        data = ExponentialDecay(rates=(0.3,), amplitudes=(1.0,))
        with pytest.raises(DominationImpossible):
            build_upper(model, kernels, 0.5, data, lambda_star=lambda_star)

    def test_rate_must_be_below_minimizer(self, scalar):
        model, kernels, lambda_star = scalar
        data = ExponentialDecay(rates=(2.0,), amplitudes=(1.0,))
        with pytest.raises(RateOutOfRange):
            build_upper(model, kernels, 1.5, data, lambda_star=lambda_star)


class TestBuildLower:
    def test_geometry_of_roots_and_peaks(self, coupled):
        model, kernels, lambda_star = coupled
        low = build_lower(model, kernels, 0.4, 0.3, 5.0,
                          default_growth_params(model),
                          lambda_star=lambda_star)
        assert np.all(low.peaks > low.roots)
        assert np.all(low.peaks >= low.y0 - 1e-12)
        assert low.mu == pytest.approx(0.4 * (1.0 + low.delta))
        assert low.delta == pytest.approx(min(1.0, 0.5 * (lambda_star / 0.4 - 1.0)))

    def test_value_vanishes_at_and_left_of_root(self, coupled):
        model, kernels, lambda_star = coupled
        low = build_lower(model, kernels, 0.4, 0.3, 5.0,
                          default_growth_params(model),
                          lambda_star=lambda_star)
        for j in range(model.m):
            at_root = low.value(0.0, np.array([float(low.roots[j])]))
            assert at_root[j, 0] == 0.0
            left = low.value(0.0, np.array([float(low.roots[j]) - 1.0]))
            assert left[j, 0] == 0.0

    def test_sup_bounded_by_q0(self, coupled):
        model, kernels, lambda_star = coupled
        q0, delta0, m_const = default_growth_params(model)
        low = build_lower(model, kernels, 0.4, 0.3, 5.0, (q0, delta0, m_const),
                          lambda_star=lambda_star)
        xs = np.linspace(-200.0, 200.0, 20001)
        for t in (0.0, 3.0, 10.0):
            values = low.value(t, xs)
            cap = low.amplitude * math.exp(-low.lam * low.y0)
            assert np.all(values <= cap * low.vec_lam[:, None] + 1e-12)
            assert np.max(np.linalg.norm(values, axis=0)) <= q0 + 1e-12

    def test_gamma_halved_to_meet_q0(self, coupled):
        model, kernels, lambda_star = coupled
        low = build_lower(model, kernels, 0.4, 50.0, 5.0,
                          default_growth_params(model),
                          lambda_star=lambda_star)
        assert low.amplitude * math.exp(-0.4 * 5.0) <= 0.5


class TestResidual:
    def test_upper_scalar_sign(self, scalar):
        model, kernels, lambda_star = scalar
        grid = make_grid(100.0, 0.1)
        dk = discretize(GAUSS, grid.dx, 1e-10)
        data = ExponentialDecay(rates=(0.5,), amplitudes=(1.0,))
        up = build_upper(model, kernels, 0.5, data, lambda_star=lambda_star)
        report = residual(up, model, [dk], grid, [0.0, 5.0, 20.0])
        assert report.min_residual >= -report.eps_disc
        assert report.min_residual >= -1e-9  # far below the documented budget

    def test_lower_scalar_sign(self, scalar):
        model, kernels, lambda_star = scalar
        grid = make_grid(100.0, 0.1)
        dk = discretize(GAUSS, grid.dx, 1e-10)
        low = build_lower(model, kernels, 0.5, 0.5, 5.0, GROWTH_SCALAR,
                          lambda_star=lambda_star)
        report = residual(low, model, [dk], grid, [0.0, 5.0, 20.0])
        assert report.max_residual <= report.eps_disc
        assert report.max_residual <= 1e-9

    def test_lower_coupled_sign(self, coupled):
        model, kernels, lambda_star = coupled
        grid = make_grid(100.0, 0.1)
        dk = discretize(GAUSS, grid.dx, 1e-10)
        low = build_lower(model, kernels, 0.4, 0.3, 5.0,
                          default_growth_params(model),
                          lambda_star=lambda_star)
        report = residual(low, model, [dk, dk], grid, [0.0, 4.0, 12.0])
        assert report.max_residual <= report.eps_disc

    def test_equilibrium_profile_residual_exactly_zero(self, scalar):
        model, kernels, _ = scalar
        grid = make_grid(50.0, 0.1)
        dk = discretize(GAUSS, grid.dx, 1e-10)
        frozen = AnalyticProfile(kind="upper", lam=0.5, speed=2.0,
                                 amplitude=1e200, vec_lam=np.array([1.0]),
                                 equilibrium=np.array([1.0]))
        report = residual(frozen, model, [dk], grid, [0.0, 10.0])
        assert report.min_residual == 0.0
        assert report.max_residual == 0.0


class TestCascade:
    def test_coupled_logistic_constants(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        q3 = fit_cascade_margin(model)
        assert q3 == 0.5
        cascade = build_cascade(model, kernels, order, 0.4, 0.5, q3)
        assert cascade.alpha == pytest.approx(3.5)
        assert cascade.betas[1] == pytest.approx(2.5)
        assert cascade.amps[0] == 0.5
        assert cascade.amps[1] == pytest.approx(0.5 / 8.0)
        assert cascade.big_t == pytest.approx(1.0 + math.log(2.0))
        # floor at T: min(M1, M2) e^{-alpha (T-1)} with stage shift zero
        expected_m0 = 0.0625 * math.exp(-3.5 * math.log(2.0))
        assert cascade.m0 == pytest.approx(expected_m0, rel=1e-12)

    def test_single_component_degenerates(self, scalar):
        model, kernels, _ = scalar
        order = reorder_components(model.jacobian0, [0.5])
        cascade = build_cascade(model, kernels, order, 0.5, 0.25, 0.5)
        assert cascade.big_t == 1.0
        assert cascade.m0 == pytest.approx(0.25)

    def test_chain_three_stages(self):
        model = builtin_model("chain", m=3, kappa=0.25)
        kernels = [GAUSS] * 3
        order = reorder_components(model.jacobian0, [0.3, 1.0, 1.0])
        assert order.permutation == (0, 1, 2)
        assert order.feeders == (None, 0, 1)
        cascade = build_cascade(model, kernels, order, 0.3, 0.4,
                                fit_cascade_margin(model))
        assert list(cascade.stages) == [0, 0, 1]
        xs = np.linspace(-10.0, 10.0, 11)
        # third component silent through the first stage, alive after
        assert np.all(cascade.value(1.0 + 0.5 * cascade.tau, xs)[2] == 0.0)
        assert np.all(cascade.value(1.0 + 2 * cascade.tau, xs)[2] > 0.0)

    def test_ramp_components_start_at_zero(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        cascade = build_cascade(model, kernels, order, 0.4, 0.5, 0.5)
        xs = np.linspace(-20.0, 20.0, 41)
        assert np.all(cascade.value(1.0, xs)[1] == 0.0)
        assert np.all(cascade.value(1.0, xs)[0] > 0.0)

    def test_envelope_below_value_after_stage(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        cascade = build_cascade(model, kernels, order, 0.4, 0.5, 0.5)
        xs = np.linspace(-30.0, 30.0, 301)
        for t in (1.0 + cascade.tau, 1.5 + cascade.tau, 3.0):
            assert np.all(cascade.value(t, xs) >= cascade.envelope(t, xs) - 1e-15)

    def test_floor_at_final_time(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        cascade = build_cascade(model, kernels, order, 0.4, 0.5, 0.5)
        xs = np.linspace(-50.0, 50.0, 1001)
        floor = cascade.m0 * np.exp(-0.4 * np.abs(xs))
        assert np.all(cascade.value(cascade.big_t, xs) >= floor[None, :] - 1e-15)

    def test_amplitude_halving_respects_cap(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        cascade = build_cascade(model, kernels, order, 0.4, seed_amp=10.0,
                                q3=0.01)
        assert np.all(cascade.amps <= 0.01)

    def test_residual_sign(self, coupled):
        model, kernels, _ = coupled
        order = reorder_components(model.jacobian0, [0.4, math.inf])
        cascade = build_cascade(model, kernels, order, 0.4, 0.5, 0.5)
        grid = make_grid(60.0, 0.1)
        dk = discretize(GAUSS, grid.dx, 1e-10)
        report = residual(cascade, model, [dk, dk], grid, [1.1, 1.4, 1.69])
        assert report.max_residual <= report.eps_disc


@pytest.fixture(scope="module")
def coupled_run(coupled):
    model, kernels, lambda_star = coupled
    grid = make_grid(80.0, 0.1)
    dk = discretize(GAUSS, grid.dx, 1e-10)
    data = ExponentialDecay(rates=(0.4, 1.5), amplitudes=(1.0, 1.0))
    setup = RunSetup(model=model, kernels=kernels, dks=[dk, dk], grid=grid,
                     data=data, dt=0.01, t_final=6.0, snapshot_every=0.5,
                     trace_every=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sim = run(setup)
    return sim, grid, data, [dk, dk]


class TestSandwich:
    def test_upper_reflexive(self, coupled):
        # snapshots equal to the profile itself sit inside both envelopes
        from frontlab.simulate import FieldState, SimulationOutput

        model, kernels, lambda_star = coupled
        grid = make_grid(40.0, 0.1)
        data = ExponentialDecay(rates=(0.4, 1.5), amplitudes=(1.0, 1.0))
        up = build_upper(model, kernels, 0.4, data, lambda_star=lambda_star)
        snapshots = [FieldState(t, up.value(t, grid.x)) for t in (0.0, 2.0, 5.0)]
        synthetic = SimulationOutput(snapshots=snapshots, traces={}, meta={})
        report = sandwich_test(synthetic, up, up, grid, model)
        assert report.passed

    def test_simulation_between_envelopes(self, coupled, coupled_run):
        model, kernels, lambda_star = coupled
        sim, grid, data, _dks = coupled_run
        up = build_upper(model, kernels, 0.4, data, lambda_star=lambda_star)
        fit_state = next(s for s in sim.snapshots if s.time >= 1.69)
        _, vec0 = wave_speed(model, kernels, 0.4)
        gamma = fit_lower_envelope(fit_state, grid, vec0, 0.4, 5.0)
        assert gamma > 0.0
        low = build_lower(model, kernels, 0.4, gamma, 5.0,
                          default_growth_params(model),
                          lambda_star=lambda_star,
                          start_time=fit_state.time)
        report = sandwich_test(sim, low, up, grid, model)
        assert report.passed, report.violations[:5]

    def test_cascade_below_simulation(self, coupled, coupled_run):
        model, kernels, _ = coupled
        sim, grid, _data, _dks = coupled_run
        order = reorder_components(model.jacobian0, [0.4, 1.5])
        one_state = next(s for s in sim.snapshots if s.time >= 1.0)
        seed_amp = fit_seed_amplitude(one_state, grid, 0, 0.4)
        assert seed_amp > 0.0
        cascade = build_cascade(model, kernels, order, 0.4, seed_amp,
                                fit_cascade_margin(model),
                                start_time=one_state.time)
        report = sandwich_test(sim, cascade, None, grid, model)
        assert report.passed
        floor = cascade.m0 * np.exp(-0.4 * np.abs(grid.x))
        values = cascade.value(cascade.big_t, grid.x)
        assert np.all(values >= floor[None, :] - 1e-12)
