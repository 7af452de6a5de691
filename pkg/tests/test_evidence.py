import math

import numpy as np
import pytest
from scipy import integrate, stats

from devrate.errors import ValidationError
from devrate.evidence import (BridgeConfig, TemperatureLadder, analytic_evidence, bridge_evidence,
                              importance_evidence, power_posterior_evidence)
from devrate.hmc import HmcConfig, hmc_sample
from devrate.model import GaussianTarget, ModelSpec, NormalMeanModel
from devrate.obs_models import Dataset


class ConstantLikelihood(NormalMeanModel):
    """Normal prior on mu and a likelihood equal to exp(c) everywhere."""

    def __init__(self, c):
        super().__init__()
        self.c = c

    def pointwise_loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        return np.full(theta.shape[:-1] + (data.n,), self.c / data.n)

    def loglik_and_grad(self, theta, data):
        return self.c, np.zeros(1)


def whitened(n, d, seed=0):
    """Draws with sample mean exactly 0 and sample covariance exactly I."""
    z = np.random.default_rng(seed).standard_normal((n, d))
    z -= z.mean(axis=0)
    l = np.linalg.cholesky(np.atleast_2d(np.cov(z, rowvar=False)))
    return np.linalg.solve(l, z.T).T


@pytest.fixture(scope="module")
def conjugate():
    rng = np.random.default_rng(31)
    model = NormalMeanModel(1.0, 0.0, 1.0)
    data = Dataset(np.zeros(50), rng.normal(0.3, 1.0, 50))
    draws = hmc_sample(model, data, HmcConfig(500, 2500, 2, seed=3))
    return model, data, draws


class TestPowerPosterior:
    def test_constant_likelihood(self):
        model = ConstantLikelihood(-3.7)
        data = Dataset(np.zeros(5), np.zeros(5))
        ladder = TemperatureLadder.power(5, 5.0, HmcConfig(50, 100, 1, seed=0))
        est = power_posterior_evidence(model, data, ladder)
        assert est.log_z == pytest.approx(-3.7, abs=1e-12)
        assert est.se == pytest.approx(0.0, abs=1e-12)

    def test_conjugate(self, conjugate):
        model, data, _ = conjugate
        ladder = TemperatureLadder.power(20, 5.0, HmcConfig(300, 1000, 2, seed=1))
        est = power_posterior_evidence(model, data, ladder)
        assert ladder.n_rungs == 21
        assert abs(est.log_z - model.log_evidence(data)) <= max(3 * est.se, 0.05)
        m = est.diagnostics["rung_means"]
        se = est.diagnostics["rung_se"]
        assert np.all(np.diff(m) >= -3 * np.hypot(se[1:], se[:-1]))
        assert est.diagnostics["monotone"]

    def test_plain_trapezoid_rule(self, conjugate):
        model, data, _ = conjugate
        ladder = TemperatureLadder.power(4, 5.0, HmcConfig(200, 300, 1, seed=1))
        a = power_posterior_evidence(model, data, ladder)
        b = power_posterior_evidence(model, data, ladder, rule="corrected")
        assert a.log_z == pytest.approx(b.diagnostics["trapezoid"], rel=1e-14)
        assert b.log_z == pytest.approx(a.log_z - b.diagnostics["correction"], rel=1e-14)

    def test_standard_error_formula(self, conjugate):
        model, data, _ = conjugate
        ladder = TemperatureLadder.power(4, 5.0, HmcConfig(200, 300, 1, seed=1))
        est = power_posterior_evidence(model, data, ladder)
        dt = np.diff(est.diagnostics["t"])
        se = est.diagnostics["rung_se"]
        assert est.se == pytest.approx(math.sqrt(np.sum(se[:-1] ** 2 / 2 * dt**2)), rel=1e-14)
        # the prior rung enters through the first interval
        assert se[0] > 0

    def test_ladder_canonicalized(self, conjugate):
        model, data, _ = conjugate
        t = (np.arange(6) / 5.0) ** 3
        cfg = HmcConfig(100, 100, 1, seed=2)
        a = power_posterior_evidence(model, data, TemperatureLadder(t, cfg))
        b = power_posterior_evidence(model, data, TemperatureLadder(t[::-1], cfg))
        assert a.log_z == b.log_z

    @pytest.mark.parametrize("t", [[0.0, 0.5], [0.1, 1.0], [0.0, 0.5, 0.5, 1.0], [0.0]])
    def test_ladder_validation(self, t):
        with pytest.raises(ValidationError):
            TemperatureLadder(np.array(t))

    def test_prior_mass_with_undefined_likelihood(self):
        # Briere + InvGamma: the prior puts mass where r(T) <= 0 at some data temperature
        model = ModelSpec("briere", "invgamma")
        data = Dataset([15.0, 25.0, 30.0], [0.02, 0.07, 0.05])
        ladder = TemperatureLadder.power(3, 5.0, HmcConfig(100, 100, 1, seed=0))
        est = power_posterior_evidence(model, data, ladder, n_prior=4000)
        assert est.diagnostics["log_prior_mass_finite"] < 0


class TestImportance:
    def test_exact_proposal_zero_variance(self):
        m = 3.5
        x = whitened(500, 2)
        target = GaussianTarget(np.zeros(2), np.eye(2), log_norm=math.log(m))
        est = importance_evidence(target, None, x, blocks=[[0, 1]], n_is=2000, rng=np.random.default_rng(0))
        assert est.log_z == pytest.approx(math.log(m), abs=1e-10)
        assert est.se == pytest.approx(0.0, abs=1e-10)

    def test_conjugate(self, conjugate):
        model, data, draws = conjugate
        est = importance_evidence(model, data, draws, n_is=10000, rng=np.random.default_rng(5))
        assert abs(est.log_z - model.log_evidence(data)) <= max(3 * est.se, 0.1)
        assert est.diagnostics["max_normalized_weight"] < 0.1

    def test_gaussian_proposal(self, conjugate):
        model, data, draws = conjugate
        est = importance_evidence(model, data, draws, n_is=5000, rng=np.random.default_rng(6), proposal="gaussian")
        assert abs(est.log_z - model.log_evidence(data)) <= max(3 * est.se, 0.1)

    def test_reproducible(self, conjugate):
        model, data, draws = conjugate
        a = importance_evidence(model, data, draws, n_is=1000, rng=np.random.default_rng(9))
        b = importance_evidence(model, data, draws, n_is=1000, rng=np.random.default_rng(9))
        assert a.log_z == b.log_z and a.se == b.se

    def test_default_blocks_split_curve_and_observation(self):
        model = ModelSpec("lactin", "ziig")
        assert model.split_blocks() == [[0, 1, 2, 3], [4]]

    def test_blocks_must_partition(self, conjugate):
        model, data, draws = conjugate
        with pytest.raises(ValidationError):
            importance_evidence(model, data, draws, blocks=[[0], [0]])

    def test_light_tailed_proposal_warns(self):
        # draws three times narrower than the target leave its tails to a few huge weights
        x = 0.3 * np.random.default_rng(0).standard_normal((2000, 1))
        with pytest.warns(RuntimeWarning, match="proposal fits the posterior poorly"):
            est = importance_evidence(GaussianTarget(np.zeros(1), np.eye(1)), None, x, blocks=[[0]], n_is=1000,
                                      rng=np.random.default_rng(1))
        assert est.diagnostics["max_normalized_weight"] > 0.1

    def test_singular_block_ridge(self):
        z = np.random.default_rng(1).standard_normal(200)
        x = np.column_stack([z, z])
        with pytest.warns(RuntimeWarning, match="ridge"):
            importance_evidence(GaussianTarget(np.zeros(2), np.eye(2)), None, x, blocks=[[0, 1]], n_is=100,
                                rng=np.random.default_rng(0))


class TestBridge:
    def test_fixed_point_after_one_step(self):
        z = 0.02
        x = whitened(1000, 2, seed=4)
        target = GaussianTarget(np.zeros(2), np.eye(2), log_norm=math.log(z))
        # the first half fits the proposal, so it must carry exactly the target's moments
        draws = np.concatenate([whitened(500, 2, seed=5), x[:500]])[None]
        est = bridge_evidence(target, None, draws)
        assert est.log_z == pytest.approx(math.log(z), abs=1e-10)
        assert est.diagnostics["iterations"] <= 2

    def test_conjugate(self, conjugate):
        model, data, draws = conjugate
        est = bridge_evidence(model, data, draws, BridgeConfig(seed=4))
        assert abs(est.log_z - model.log_evidence(data)) <= max(3 * est.se, 0.05)
        assert est.diagnostics["converged"]

    def test_warp(self, conjugate):
        model, data, draws = conjugate
        est = bridge_evidence(model, data, draws, BridgeConfig(seed=4, warp=True))
        assert abs(est.log_z - model.log_evidence(data)) <= max(3 * est.se, 0.05)

    def test_iid_spectral_term(self, conjugate):
        model, data, _ = conjugate
        m, v = model.posterior_moments(data)
        # 40000 estimation draws put the +-0.1 band at about four standard deviations
        iid = np.random.default_rng(8).normal(m, math.sqrt(v), (4, 20000, 1))
        est = bridge_evidence(model, data, iid, BridgeConfig(seed=1))
        assert est.diagnostics["rho_f2"] == pytest.approx(1.0, abs=0.1)

    def test_monotone_convergence(self, conjugate):
        model, data, draws = conjugate
        trace = np.array(bridge_evidence(model, data, draws, BridgeConfig(seed=4)).diagnostics["trace"])
        steps = np.abs(np.diff(trace))[3:]
        steps = steps[steps > 1e-13]
        assert np.all(np.diff(steps) <= 0)

    def test_reproducible(self, conjugate):
        model, data, draws = conjugate
        a = bridge_evidence(model, data, draws, BridgeConfig(seed=11))
        b = bridge_evidence(model, data, draws, BridgeConfig(seed=11))
        assert a.log_z == b.log_z and a.se == b.se

    def test_too_few_draws(self):
        with pytest.raises(ValidationError):
            bridge_evidence(GaussianTarget(np.zeros(1), np.eye(1)), None, np.zeros((1, 3, 1)))


class TestAnalytic:
    def test_single_point(self):
        data = Dataset([0.0], [0.0])
        assert analytic_evidence(NormalMeanModel(1.0, 0.0, 1.0), data) == pytest.approx(-0.5 * math.log(4 * math.pi),
                                                                                        rel=1e-14)

    def test_two_points_quadrature(self):
        model = NormalMeanModel(0.7, 0.2, 1.5)
        y = np.array([0.4, -0.9])
        val, _ = integrate.quad(lambda mu: np.prod(stats.norm.pdf(y, mu, 0.7)) * stats.norm.pdf(mu, 0.2, 1.5),
                                -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
        assert analytic_evidence(model, Dataset(np.zeros(2), y)) == pytest.approx(math.log(val), rel=1e-10)

    def test_order_invariant(self):
        model = NormalMeanModel()
        y = np.array([0.1, 0.5, -0.3, 2.0])
        a = analytic_evidence(model, Dataset(np.zeros(4), y))
        b = analytic_evidence(model, Dataset(np.zeros(4), y[::-1]))
        assert a == pytest.approx(b, rel=1e-14)

    def test_rejects_other_models(self):
        with pytest.raises(ValidationError):
            analytic_evidence(ModelSpec("briere", "gaussian"), Dataset([20.0], [0.05]))
