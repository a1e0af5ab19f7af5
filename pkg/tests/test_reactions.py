"""Builtin models and the sampled assumption checkers."""

import numpy as np
import pytest

from frontlab.errors import InvalidParam
from frontlab.kernels import make_kernel
from frontlab.reactions import (builtin_model, check_growth_lower_bound,
                                check_linear_dominance, check_structure,
                                default_growth_params, jacobian_norm_bound,
                                numeric_jacobian, self_lipschitz)
from frontlab.spectral import check_irreducible

GAUSS = make_kernel("gaussian", [1.0])
MAIN_MODELS = [
    ("scalar_kpp", {}),
    ("coupled_logistic", {"kappa": 0.5}),
    ("chain", {"m": 3, "kappa": 0.25}),
]


class TestBuiltins:
    def test_scalar_kpp_structure(self):
        model = builtin_model("scalar_kpp", r=1.0, p=1.0)
        assert model.m == 1
        assert model.jacobian0[0, 0] == 1.0
        assert model.equilibrium[0] == 1.0

    def test_coupled_logistic_linearization(self):
        model = builtin_model("coupled_logistic", kappa=0.5)
        assert np.allclose(model.jacobian0, [[0.5, 0.5], [0.5, 0.5]])
        assert np.max(np.real(np.linalg.eigvals(model.jacobian0))) == pytest.approx(1.0)

    def test_chain_tridiagonal_irreducible(self):
        model = builtin_model("chain", m=3, kappa=0.25)
        expected = np.array([[0.75, 0.25, 0.0],
                             [0.25, 0.5, 0.25],
                             [0.0, 0.25, 0.75]])
        assert np.allclose(model.jacobian0, expected)
        assert check_irreducible(model.jacobian0)

    def test_invalid_params(self):
        with pytest.raises(InvalidParam):
            builtin_model("coupled_logistic", kappa=1.5)
        with pytest.raises(InvalidParam):
            builtin_model("scalar_kpp", r=-1.0)
        with pytest.raises(InvalidParam):
            builtin_model("no_such_model")

    @pytest.mark.parametrize("name,params", MAIN_MODELS)
    def test_jacobian_matches_central_differences(self, name, params):
        model = builtin_model(name, **params)
        numeric = numeric_jacobian(model, np.zeros(model.m))
        assert np.max(np.abs(numeric - model.jacobian0)) <= 1e-6

    @pytest.mark.parametrize("name,params", MAIN_MODELS)
    def test_vectorized_over_space(self, name, params):
        model = builtin_model(name, **params)
        rng = np.random.default_rng(1)
        batch = rng.uniform(0.0, 1.0, size=(model.m, 17))
        out = model.f(batch)
        assert out.shape == batch.shape
        for col in range(batch.shape[1]):
            assert out[:, col] == pytest.approx(model.f(batch[:, col]))


class TestStructureChecks:
    @pytest.mark.parametrize("name,params", MAIN_MODELS)
    def test_main_models_pass(self, name, params):
        model = builtin_model(name, **params)
        reports = check_structure(model, seed=0)
        assert {r.assumption for r in reports} == {
            "equilibria", "cooperativity", "instability"}
        for report in reports:
            assert report.passed, (report.assumption, report.witnesses[:3])

    def test_noncooperative_violator_flagged(self):
        model = builtin_model("violator_noncooperative")
        reports = {r.assumption: r for r in check_structure(model, seed=0)}
        coop = reports["cooperativity"]
        assert not coop.passed
        assert coop.witnesses
        state, magnitude = coop.witnesses[0]
        assert magnitude > 0.0
        assert len(state) == 2

    def test_scalar_has_no_offdiagonals_to_check(self):
        model = builtin_model("scalar_kpp")
        reports = {r.assumption: r for r in check_structure(model, seed=0)}
        assert reports["cooperativity"].passed
        assert not reports["cooperativity"].witnesses


class TestLinearDominance:
    Q_GRID = np.geomspace(1e-2, 4.0, 9)

    def test_scalar_kpp_passes(self):
        model = builtin_model("scalar_kpp")
        report = check_linear_dominance(model, [GAUSS],
                                        np.linspace(0.2, 1.0, 5), self.Q_GRID)
        assert report.passed

    def test_coupled_logistic_passes(self):
        model = builtin_model("coupled_logistic", kappa=0.5)
        report = check_linear_dominance(model, [GAUSS, GAUSS],
                                        np.linspace(0.2, 1.0, 5), self.Q_GRID)
        assert report.passed

    def test_superlinear_violator_fails(self):
        model = builtin_model("violator_superlinear")
        report = check_linear_dominance(model, [GAUSS],
                                        np.linspace(0.2, 1.0, 3), self.Q_GRID)
        assert not report.passed
        (lam, q), magnitude = report.witnesses[0]
        assert magnitude > 0.0
        assert 0.0 < q < 0.5 or q >= 0.5  # witness carries the failing q


class TestGrowthLowerBound:
    def test_scalar_kpp_exact_equality(self):
        model = builtin_model("scalar_kpp")
        report = check_growth_lower_bound(model, 0.5, 1.0, 1.0, seed=0)
        assert report.passed
        assert report.params_used == {"q0": 0.5, "delta0": 1.0, "M": 1.0}

    def test_coupled_logistic_passes(self):
        model = builtin_model("coupled_logistic", kappa=0.5)
        report = check_growth_lower_bound(model, 0.5, 1.0, 1.0, seed=0)
        assert report.passed

    def test_m_too_small_fails_near_cap(self):
        model = builtin_model("scalar_kpp")
        report = check_growth_lower_bound(model, 0.5, 1.0, 0.01, seed=0)
        assert not report.passed
        states = np.array([w[0][0] for w in report.witnesses])
        assert np.max(states) > 0.25  # worst deficits sit near u = q0

    def test_invalid_params(self):
        model = builtin_model("scalar_kpp")
        with pytest.raises(InvalidParam):
            check_growth_lower_bound(model, -0.5, 1.0, 1.0)
        with pytest.raises(InvalidParam):
            check_growth_lower_bound(model, 0.5, 2.0, 1.0)

    @pytest.mark.parametrize("name,params", MAIN_MODELS)
    def test_defaults_pass_their_own_check(self, name, params):
        model = builtin_model(name, **params)
        q0, delta0, m_const = default_growth_params(model, seed=0)
        assert q0 == pytest.approx(0.5 * float(np.min(model.equilibrium)))
        report = check_growth_lower_bound(model, q0, delta0, m_const, seed=1)
        assert report.passed

    def test_default_m_is_minimal_power_of_two(self):
        model = builtin_model("scalar_kpp")
        _, _, m_const = default_growth_params(model, seed=0)
        assert m_const == 1.0


class TestSampledBounds:
    def test_scalar_lipschitz(self):
        model = builtin_model("scalar_kpp")
        # |f'(u)| = |1 - 2u| peaks at 1 on [0, 1]
        assert self_lipschitz(model)[0] == pytest.approx(1.0, abs=1e-4)

    def test_jacobian_norm_bound(self):
        model = builtin_model("coupled_logistic", kappa=0.5)
        # rows of F': |1 - 2u_j - kappa| + kappa <= 2
        assert jacobian_norm_bound(model) == pytest.approx(2.0, abs=1e-3)
