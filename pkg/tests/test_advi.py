import math

import numpy as np
import pytest

from devrate.advi import (AdviConfig, FullRankFamily, MeanFieldFamily, advi_fit, elbo_estimate, elbo_fixed,
                          elbo_grad)
from devrate.errors import DegenerateElbo, ValidationError
from devrate.model import GaussianTarget, NormalMeanModel, Posterior
from devrate.obs_models import Dataset

COV = np.array([[1.0, 0.8], [0.8, 1.0]])
MEAN = np.array([1.0, -2.0])


@pytest.fixture(scope="module")
def correlated_fits():
    target = GaussianTarget(MEAN, COV)
    with pytest.warns(RuntimeWarning, match="did not converge"):
        # single-draw gradients keep the mean-field ELBO trace just above the 1e-4 tolerance
        mf = advi_fit(target, None, AdviConfig("meanfield", seed=2))
    fr = advi_fit(target, None, AdviConfig("fullrank", seed=2))
    return mf, fr


@pytest.fixture(scope="module")
def conjugate():
    rng = np.random.default_rng(12)
    model = NormalMeanModel(1.0, 0.0, 1.0)
    return model, Dataset(np.zeros(40), rng.normal(-0.3, 1.0, 40))


class TestElbo:
    def test_zero_when_q_equals_target(self):
        target = GaussianTarget(np.zeros(3), np.eye(3))
        est = elbo_estimate(MeanFieldFamily.init(np.zeros(3)), target, None, 4000, np.random.default_rng(0))
        assert abs(est.value) < 3 * est.se

    def test_exact_zero_with_fixed_draws(self):
        # with q equal to the target, log p(z) - log q(z) vanishes draw by draw
        target = Posterior(GaussianTarget(MEAN, COV), None)
        fam = FullRankFamily(MEAN, np.linalg.cholesky(COV))
        eta = np.random.default_rng(1).standard_normal((50, 2))
        z = fam.transform(eta)
        log_q = np.array([target.logp(zi) for zi in z])
        assert elbo_fixed(fam, target, None, eta) == pytest.approx(log_q.mean() + fam.entropy(), abs=1e-12)
        assert elbo_fixed(fam, target, None, eta) == pytest.approx(0.0, abs=0.5)

    def test_mean_field_entropy(self):
        omega = np.array([0.3, -1.0, 2.0])
        fam = MeanFieldFamily(np.zeros(3), omega)
        assert fam.entropy() == pytest.approx(np.sum(omega + 0.5 * math.log(2 * math.pi * math.e)), rel=1e-14)

    def test_full_rank_entropy_matches_determinant(self):
        l = np.array([[1.5, 0.0], [0.4, 0.2]])
        fam = FullRankFamily(np.zeros(2), l)
        expected = 0.5 * math.log(np.linalg.det(2 * math.pi * math.e * fam.cov()))
        assert fam.entropy() == pytest.approx(expected, rel=1e-12)

    def test_below_log_evidence(self, conjugate):
        model, data = conjugate
        m, v = model.posterior_moments(data)
        fam = MeanFieldFamily(np.array([m + 0.1]), np.array([0.5 * math.log(v) + 0.2]))
        est = elbo_estimate(fam, model, data, 2000, np.random.default_rng(2))
        assert est.value < model.log_evidence(data)

    def test_degenerate(self):
        post = Posterior(NormalMeanModel(), Dataset([0.0], [0.0]))
        post.logp = lambda u: -np.inf
        with pytest.raises(DegenerateElbo):
            elbo_estimate(MeanFieldFamily.init(np.zeros(1)), post, None, 10, np.random.default_rng(0))

    def test_n_mc_validated(self):
        with pytest.raises(ValidationError):
            elbo_estimate(MeanFieldFamily.init(np.zeros(1)), NormalMeanModel(), Dataset([0.0], [0.0]), 0,
                          np.random.default_rng(0))


class TestGradient:
    @pytest.mark.parametrize("family", [MeanFieldFamily(np.array([0.5, -1.0]), np.array([-0.3, 0.2])),
                                        FullRankFamily(np.array([0.5, -1.0]), np.array([[0.7, 0.0], [0.3, 1.2]]))])
    def test_matches_finite_differences(self, family):
        target = Posterior(GaussianTarget(MEAN, COV), None)
        eta = np.random.default_rng(3).standard_normal((10000, 2))
        x0 = family.pack()
        g = elbo_grad(family, target, None, eta)
        h = 1e-5
        for j in range(x0.size):
            e = np.zeros_like(x0)
            e[j] = h
            fd = (elbo_fixed(family.unpack(x0 + e), target, None, eta)
                  - elbo_fixed(family.unpack(x0 - e), target, None, eta)) / (2 * h)
            assert abs(g[j] - fd) <= 1e-3 * max(abs(fd), 1.0)

    @pytest.mark.parametrize("cls", [MeanFieldFamily, FullRankFamily])
    def test_pack_round_trip(self, cls):
        fam = cls.init(np.array([0.1, 0.2, 0.3]))
        x = fam.pack() + 0.1
        np.testing.assert_allclose(fam.unpack(x).pack(), x, rtol=1e-13)


class TestFit:
    def test_full_rank_recovers_target(self, correlated_fits):
        _, fr = correlated_fits
        assert np.max(np.abs(fr.mean - MEAN)) < 0.02
        assert np.linalg.norm(fr.cov - COV) / np.linalg.norm(COV) < 0.05

    def test_mean_field_underestimates_marginals(self, correlated_fits):
        mf, _ = correlated_fits
        var = np.diag(mf.cov)
        conditional = 1.0 / np.diag(np.linalg.inv(COV))
        assert np.all(var < np.diag(COV))
        np.testing.assert_allclose(var, conditional, rtol=0.15)
        assert np.max(np.abs(mf.mean - MEAN)) < 0.05

    def test_family_nesting(self, correlated_fits, conjugate):
        mf, fr = correlated_fits
        assert fr.elbo.value >= mf.elbo.value - math.hypot(mf.elbo.se, fr.elbo.se)
        model, data = conjugate
        a = advi_fit(model, data, AdviConfig("meanfield", seed=5))
        b = advi_fit(model, data, AdviConfig("fullrank", seed=5))
        assert b.elbo.value >= a.elbo.value - math.hypot(a.elbo.se, b.elbo.se)

    def test_elbo_bounded_by_evidence(self, conjugate):
        model, data = conjugate
        res = advi_fit(model, data, AdviConfig("fullrank", seed=6))
        assert res.elbo.value <= model.log_evidence(data) + 3 * res.elbo.se

    def test_deterministic(self, conjugate):
        model, data = conjugate
        a = advi_fit(model, data, AdviConfig("meanfield", seed=7, output_draws=100))
        b = advi_fit(model, data, AdviConfig("meanfield", seed=7, output_draws=100))
        np.testing.assert_array_equal(a.draws.constrained, b.draws.constrained)
        assert a.elbo.value == b.elbo.value

    def test_draw_count(self, correlated_fits):
        mf, _ = correlated_fits
        assert mf.draws.flat().shape == (4000, 2)

    def test_converges_on_conjugate(self, conjugate):
        model, data = conjugate
        res = advi_fit(model, data, AdviConfig("meanfield", seed=8))
        assert res.converged
        assert res.n_iter < res.trace[-1][0] + 100

    def test_non_convergence_warns(self, conjugate):
        model, data = conjugate
        with pytest.warns(RuntimeWarning, match="did not converge"):
            res = advi_fit(model, data, AdviConfig("meanfield", seed=1, max_iter=150, tol_rel_obj=1e-12))
        assert not res.converged

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            AdviConfig("flow")

    @pytest.mark.parametrize("cls", [MeanFieldFamily, FullRankFamily])
    def test_shrink_halves_scale(self, cls):
        fam = cls.init(np.array([0.5, -1.0]))
        small = fam.shrink()
        np.testing.assert_array_equal(small.mu, fam.mu)
        np.testing.assert_allclose(small.cov(), fam.cov() / 4, rtol=1e-14)

    def test_support_failures_bounded(self):
        post = Posterior(GaussianTarget(np.zeros(2), np.eye(2)), None)
        post.logp_and_grad = lambda u: (-np.inf, np.full(2, np.nan))
        with pytest.raises(DegenerateElbo, match="left the support"):
            advi_fit(post, None, AdviConfig("meanfield", seed=0, init=[0.0, 0.0], max_retries=5))
