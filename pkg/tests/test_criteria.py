import math

import numpy as np
import pytest
from scipy import stats

from devrate.criteria import (aic, bic, criteria_report, dic, log_mean_exp, loocv_exact, mle_fit, pointwise_matrix,
                              waic)
from devrate.errors import DegenerateDataset
from devrate.hmc import HmcConfig, hmc_sample
from devrate.model import Model, ModelSpec, NormalMeanModel
from devrate.obs_models import Dataset
from devrate.transforms import Bound, BoxTransform


class LinearGaussian(Model):
    """y = a + b T + N(0, sigma^2); likelihood only, for the optimizer."""

    name = "linear"
    param_names = ("a", "b", "sigma")

    def __init__(self):
        self.transform = BoxTransform(self.param_names, [Bound(), Bound(), Bound(0.0, None)])

    def pointwise_loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        a, b, s = (theta[..., j, None] if theta.ndim > 1 else theta[j] for j in range(3))
        return stats.norm.logpdf(data.rate, a + b * data.temperature, s)


def conjugate_data(n, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(np.zeros(n), rng.normal(0.3, 1.0, n))


@pytest.fixture(scope="module")
def conjugate_fit():
    model = NormalMeanModel(1.0, 0.0, 1.0)
    data = conjugate_data(50, 5)
    draws = hmc_sample(model, data, HmcConfig(500, 2000, 4, seed=2))
    return model, data, draws


class TestMle:
    def test_least_squares(self):
        rng = np.random.default_rng(1)
        t = np.linspace(10, 30, 40)
        data = Dataset(t, 0.5 + 0.02 * t + rng.normal(0, 0.05, t.size))
        x = np.column_stack([np.ones_like(t), t])
        coef, rss, *_ = np.linalg.lstsq(x, data.rate, rcond=None)
        sigma = math.sqrt(rss[0] / t.size)
        res = mle_fit(LinearGaussian(), data, init=[0.0, 0.0, 1.0])
        np.testing.assert_allclose(res.theta, [coef[0], coef[1], sigma], rtol=1e-6)
        assert res.improved

    def test_counts_observation_parameter(self, conjugate_fit):
        model, data, draws = conjugate_fit
        assert mle_fit(model, data, draws).n_params == 1
        assert ModelSpec("briere", "invgamma").dim == 4
        assert ModelSpec("analytis", "gaussian").dim == 6

    def test_at_least_best_draw(self, conjugate_fit):
        model, data, draws = conjugate_fit
        res = mle_fit(model, data, draws)
        assert res.loglik >= model.loglik(draws.flat(), data).max()
        assert res.theta[0] == pytest.approx(data.rate.mean(), abs=1e-6)

    def test_aic_bic_identity(self):
        for k, n in [(3, 10), (5, 105), (6, 280)]:
            assert aic(-100.0, k) - bic(-100.0, k, n) == pytest.approx(2 * k - k * math.log(n), abs=1e-12)

    def test_bic_duplicate_penalty(self):
        k, n, ll = 4, 30, -12.5
        assert bic(ll, k, n + 1) - bic(ll, k, n) == pytest.approx(k * (math.log(n + 1) - math.log(n)), abs=1e-12)


class TestDic:
    def test_point_mass(self, conjugate_fit):
        model, data, _ = conjugate_fit
        theta = np.full((100, 1), 0.25)
        for v in (1, 2):
            res = dic(theta, model, data, v)
            assert res.p_dic == pytest.approx(0.0, abs=1e-9)
            assert res.dic == pytest.approx(-2 * float(model.loglik(np.array([0.25]), data)), rel=1e-12)

    def test_conjugate_shrinkage(self, conjugate_fit):
        model, data, draws = conjugate_fit
        d1, d2 = dic(draws, model, data, 1), dic(draws, model, data, 2)
        target = model.shrinkage(data.n)
        assert abs(d1.p_dic - target) < 3 * d1.p_mcse + 0.02
        assert abs(d2.p_dic - target) < 3 * d2.p_mcse + 0.02
        assert abs(d1.p_dic - d2.p_dic) < 3 * math.hypot(d1.p_mcse, d2.p_mcse)


class TestWaic:
    def test_point_mass(self, conjugate_fit):
        model, data, _ = conjugate_fit
        theta = np.full((100, 1), 0.25)
        assert waic(theta, model, data, 1).p_waic == pytest.approx(0.0, abs=1e-12)
        assert waic(theta, model, data, 2).p_waic == pytest.approx(0.0, abs=1e-12)

    def test_variance_terms_nonnegative(self, conjugate_fit):
        model, data, draws = conjugate_fit
        ll = pointwise_matrix(model, data, draws).reshape(-1, data.n)
        terms = ll.var(axis=0, ddof=1)
        assert np.all(terms >= 0)
        assert waic(draws, model, data, 2).p_waic == pytest.approx(terms.sum(), rel=1e-12)

    def test_log_mean_exp_stable(self):
        x = np.array([[-1000.0], [-1001.0]])
        assert log_mean_exp(x)[0] == pytest.approx(-1000 + math.log((1 + math.exp(-1)) / 2), rel=1e-14)

    def test_permutation_invariant(self, conjugate_fit):
        model, data, draws = conjugate_fit
        perm = np.random.default_rng(0).permutation(data.n)
        shuffled = Dataset(data.temperature[perm], data.rate[perm])
        for v in (1, 2):
            assert waic(draws, model, shuffled, v).waic == pytest.approx(waic(draws, model, data, v).waic, rel=1e-12)
            assert dic(draws, model, shuffled, v).dic == pytest.approx(dic(draws, model, data, v).dic, rel=1e-12)

    def test_thinning_stable(self, conjugate_fit):
        model, data, draws = conjugate_fit
        full = waic(draws, model, data, 2)
        thin = waic(draws.constrained[:, ::2], model, data, 2)
        assert abs(thin.waic - full.waic) < 3 * thin.mcse


class TestLoocv:
    def test_rejects_tiny_dataset(self):
        with pytest.raises(DegenerateDataset):
            loocv_exact(NormalMeanModel(), Dataset([0.0, 0.0], [0.1, 0.2]))

    def test_matches_analytic_leave_one_out(self):
        model = NormalMeanModel(1.0, 0.0, 1.0)
        data = conjugate_data(20, 3)
        res = loocv_exact(model, data, HmcConfig(300, 1000, 2, seed=4))
        exact = np.empty(data.n)
        for j in range(data.n):
            m, v = model.posterior_moments(data, drop=j)
            exact[j] = stats.norm.logpdf(data.rate[j], m, math.sqrt(v + model.sigma**2))
        assert abs(-2 * res.elpd_loo.sum() - (-2 * exact.sum())) < 3 * res.mcse

    def test_beta_shrinks_with_n(self):
        model = NormalMeanModel(1.0, 0.0, 1.0)
        betas = [abs(loocv_exact(model, conjugate_data(n, 9), HmcConfig(200, 500, 2, seed=1)).beta)
                 for n in (20, 50, 100)]
        assert betas[0] > betas[2]


class TestReport:
    def test_fields(self, conjugate_fit):
        model, data, draws = conjugate_fit
        rep = criteria_report(model, data, draws)
        assert rep.k == 1
        assert math.isnan(rep.loocv)
        assert rep.p_waic_2 >= 0
        assert rep.per_observation.shape == (data.n,)
        assert rep.bic - rep.aic == pytest.approx(math.log(data.n) - 2, abs=1e-9)
        d = rep.as_dict()
        assert set(d) >= {"aic", "bic", "dic_1", "dic_2", "waic_1", "waic_2", "loocv", "beta_loocv", "mcse"}
