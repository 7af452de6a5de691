"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion summary
appears at the end of the terminal report.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.signal import lfilter

from devrate import (Analytis, Bieri, Briere, Dataset, GaussianTarget, HmcConfig, Lactin, ModelSpec,
                     NormalMeanModel, TemperatureLadder, advi_fit, analytic_evidence, bridge_evidence, dic, ess,
                     hmc_sample, ic_weights, importance_evidence, loocv_exact, power_posterior_evidence, waic)
from devrate.curves import LactinParams, golden_section_max
from devrate.diagnostics import mcse_mean, mcse_var, split_rhat
from devrate.evidence import BridgeConfig
from devrate.obs_models import zero_prob
from devrate.predictive import derived_draws
from devrate.rng import stream

# Briere + InvGamma truth used for recovery and zero-inflation checks
BRIERE_TRUTH = np.array([-math.log(1.2e-4), 9.0, 35.0, 10.0])
DESIGN_TEMPS = np.array([15.0, 17.5, 20.0, 22.5, 25.0, 27.5, 30.0, 32.5])


def design_temperatures(n_total=250):
    counts = np.full(DESIGN_TEMPS.size, n_total // DESIGN_TEMPS.size)
    counts[: n_total - counts.sum()] += 1
    return np.repeat(DESIGN_TEMPS, counts)


@pytest.fixture(scope="module")
def conjugate():
    rng = np.random.default_rng(5)
    y = rng.normal(0.3, 1.0, 50)
    return NormalMeanModel(1.0, 0.0, 1.0), Dataset(np.full(50, 20.0), y)


def finish(acceptance, number, title, ok, detail, elapsed, limit):
    within = elapsed < limit
    acceptance.record(number, title, ok and within, f"{detail}; {elapsed:.1f}s (limit {limit:g}s)")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f}s exceeds {limit}s"


class TestAcceptance:
    def test_01_bic_weights(self, acceptance):
        t0 = time.perf_counter()
        w = ic_weights([-1638.6, -1574.7, -1717.3, -1638.8], source="bic").weights
        expected = np.array([8.1e-18, 1.1e-31, 1.0, 9.0e-18])
        got = np.array([float(f"{x:.2g}") for x in w])
        ok = np.array_equal(got, expected)
        finish(acceptance, 1, "BIC-weight reproduction", ok, f"weights {np.array2string(w, precision=2)}",
               time.perf_counter() - t0, 1)

    def test_02_evidence_triangulation(self, acceptance, conjugate):
        t0 = time.perf_counter()
        model, data = conjugate
        exact = analytic_evidence(model, data)
        ladder = TemperatureLadder.power(20, 5.0, HmcConfig(n_warmup=500, n_draws=500, n_chains=4, seed=1))
        pp = power_posterior_evidence(model, data, ladder)
        fit = hmc_sample(model, data, HmcConfig(n_warmup=500, n_draws=2500, n_chains=4, seed=3))
        imp = importance_evidence(model, data, fit, n_is=10_000, rng=stream(0, "is"))
        br = bridge_evidence(model, data, fit, BridgeConfig(seed=4))
        ests = [pp, imp, br]
        own = [abs(e.log_z - exact) <= max(3 * e.se, 0.1) for e in ests]
        pair = [abs(a.log_z - b.log_z) <= 3 * math.hypot(a.se, b.se)
                for i, a in enumerate(ests) for b in ests[i + 1:]]
        detail = f"exact {exact:.4f}; " + ", ".join(f"{e.method} {e.log_z:.4f}±{e.se:.4f}" for e in ests)
        finish(acceptance, 2, "evidence triangulation", all(own) and all(pair), detail,
               time.perf_counter() - t0, 600)

    def test_03_sampler_correctness(self, acceptance):
        t0 = time.perf_counter()
        target = GaussianTarget(np.zeros(10), np.eye(10))
        fit = hmc_sample(target, None, HmcConfig(n_warmup=1000, n_draws=2000, n_chains=4, seed=1))
        x = fit.unconstrained
        z_mean = [abs(x[..., j].mean()) / mcse_mean(x[..., j]) for j in range(10)]
        z_var = [abs(x[..., j].var() - 1.0) / mcse_var(x[..., j]) for j in range(10)]
        rhat = max(split_rhat(x[..., j]) for j in range(10))
        div = fit.diagnostics["divergences"]
        ok = max(z_mean) < 3 and max(z_var) < 3 and rhat < 1.01 and div == 0
        detail = f"max|mean|/mcse {max(z_mean):.2f}, max|var-1|/mcse {max(z_var):.2f}, rhat {rhat:.4f}, div {div}"
        finish(acceptance, 3, "sampler correctness", ok, detail, time.perf_counter() - t0, 60)

    def test_04_gradient_suite(self, acceptance):
        # Richardson-extrapolated central differences from h = 1e-5 (1 + |x|)
        t0 = time.perf_counter()
        temps = np.repeat(DESIGN_TEMPS, 5)
        shape = 0.05 + 0.1 * np.sin((temps - 10.0) / 8.0)
        worst = {}
        for c in ("bieri", "briere", "analytis", "lactin"):
            for o in ("gaussian", "invgamma", "ziig"):
                model = ModelSpec(c, o)
                rng = stream(1, c, o)
                theta0 = model.initial_guess(Dataset(temps, shape), rng)
                data = Dataset(temps, np.abs(model.simulate(theta0, temps, rng)))
                post = model.posterior(data)
                u0 = model.unconstrain(theta0)
                errs = []
                for _ in range(5000):
                    if len(errs) == 100:
                        break
                    u = u0 + 0.3 * rng.standard_normal(u0.size)
                    lp, g = post.logp_and_grad(u)
                    if not np.isfinite(lp):
                        continue
                    fd = np.empty_like(u)
                    for j in range(u.size):
                        e = np.zeros_like(u)
                        e[j] = 1e-5 * (1 + abs(u[j]))
                        d1 = (post.logp(u + e) - post.logp(u - e)) / (2 * e[j])
                        d2 = (post.logp(u + e / 2) - post.logp(u - e / 2)) / e[j]
                        fd[j] = (4 * d2 - d1) / 3
                    errs.append(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
                worst[f"{c}-{o}"] = (len(errs), max(errs))
        ok = all(n == 100 and e <= 1e-5 for n, e in worst.values())
        name, (_, err) = max(worst.items(), key=lambda kv: kv[1][1])
        finish(acceptance, 4, "gradient suite", ok, f"12 models x 100 points, worst {err:.2e} ({name})",
               time.perf_counter() - t0, 120)

    def test_05_parameter_recovery(self, acceptance):
        t0 = time.perf_counter()
        model = ModelSpec("briere", "invgamma")
        temps = design_temperatures(250)
        data = Dataset(temps, model.simulate(BRIERE_TRUTH, temps, stream(7, "sim")))
        fit = hmc_sample(model, data, HmcConfig(n_warmup=1000, n_draws=1000, n_chains=4, seed=11))
        summ = fit.summary()
        covered = {k: summ[k]["q2.5"] <= v <= summ[k]["q97.5"]
                   for k, v in zip(("t_min", "t_max", "zeta"), BRIERE_TRUTH[1:])}
        t_opt_true = Briere().t_opt(BRIERE_TRUTH[:3])
        t_opt_post = float(np.nanmean(derived_draws(model, fit)["T_opt"]))
        ok = all(covered.values()) and abs(t_opt_post - t_opt_true) <= 0.5
        detail = (", ".join(f"{k} [{summ[k]['q2.5']:.2f}, {summ[k]['q97.5']:.2f}]" for k in covered)
                  + f"; T_opt {t_opt_post:.3f} vs {t_opt_true:.3f}")
        finish(acceptance, 5, "parameter recovery", ok, detail, time.perf_counter() - t0, 300)

    def test_06_zero_inflation_calibration(self, acceptance):
        t0 = time.perf_counter()
        model = ModelSpec("briere", "ziig")
        t_star = brentq(lambda t: model.rate(BRIERE_TRUTH, t) - model.obs.k, BRIERE_TRUTH[1] + 1e-9, 20.0)
        rng = stream(3, "ziig")
        y_star = model.simulate(BRIERE_TRUTH, np.full(1000, t_star), rng)
        frac = float(np.mean(y_star == 0))
        z = abs(frac - 0.5) / math.sqrt(0.25 / 1000)
        temps = design_temperatures(250)
        y = model.simulate(BRIERE_TRUTH, temps, rng)
        data = Dataset(np.concatenate([temps, np.full(1000, t_star)]), np.concatenate([y, y_star]))
        fit = hmc_sample(model, data, HmcConfig(n_warmup=500, n_draws=500, n_chains=4, seed=5))
        p = float(zero_prob(model.rate(fit.flat(), t_star), model.obs.c, model.obs.k).mean())
        ok = z <= 3 and abs(p - 0.5) <= 0.05
        detail = f"T* {t_star:.3f}, zero fraction {frac:.3f} ({z:.2f} SE), posterior mean p {p:.3f}"
        finish(acceptance, 6, "zero-inflation calibration", ok, detail, time.perf_counter() - t0, 180)

    def test_07_criteria_concordance(self, acceptance, conjugate):
        t0 = time.perf_counter()
        model, data = conjugate
        cfg = HmcConfig(n_warmup=500, n_draws=1000, n_chains=4, seed=2)
        fit = hmc_sample(model, data, cfg)
        loo = loocv_exact(model, data, cfg, fit)
        ws = [waic(fit, model, data, v) for v in (1, 2)]
        d1, d2 = dic(fit, model, data, 1), dic(fit, model, data, 2)
        shrink = model.shrinkage(data.n)
        waic_ok = all(abs(w.waic - loo.loocv) <= 3 * math.hypot(w.mcse, loo.mcse) for w in ws)
        dic_ok = abs(d1.p_dic - d2.p_dic) <= 3 * math.hypot(d1.p_mcse, d2.p_mcse)
        shrink_ok = all(abs(d.p_dic - shrink) <= 3 * d.p_mcse for d in (d1, d2))
        detail = (f"WAIC {ws[0].waic:.3f}/{ws[1].waic:.3f} vs LooCV {loo.loocv:.3f}±{loo.mcse:.3f}; "
                  f"pDIC {d1.p_dic:.3f}±{d1.p_mcse:.3f}/{d2.p_dic:.3f}±{d2.p_mcse:.3f} vs {shrink:.3f}")
        finish(acceptance, 7, "criteria concordance", waic_ok and dic_ok and shrink_ok, detail,
               time.perf_counter() - t0, 900)

    def test_08_optimum_formulas(self, acceptance):
        t0 = time.perf_counter()
        rng = stream(8, "optimum")
        worst = {}
        briere, analytis, lactin, bieri = Briere(), Analytis(), Lactin(), Bieri()
        errs = []
        for _ in range(200):
            lo = rng.uniform(0.0, 15.0)
            th = np.array([rng.uniform(5.0, 12.0), lo, lo + rng.uniform(10.0, 30.0)])
            errs.append(abs(briere.t_opt(th) - golden_section_max(lambda x: float(briere.rate(th, x)), th[1], th[2])))
        worst["briere"] = max(errs)
        errs = []
        for _ in range(200):
            lo = rng.uniform(4.0, 15.0)
            th = np.array([rng.uniform(2.0, 10.0), *rng.uniform(0.2, 5.0, 2), lo, lo + rng.uniform(10.0, 30.0)])
            errs.append(abs(analytis.t_opt(th) - golden_section_max(lambda x: float(analytis.rate(th, x)),
                                                                    th[3], th[4])))
        worst["analytis"] = max(errs)
        errs, sign_ok = [], True
        for _ in range(200):
            rho = rng.uniform(0.05, 0.2)
            th = LactinParams.from_natural(-rng.uniform(0.5, 1.5), rng.uniform(1.5, 0.9 / rho), rho,
                                           rng.uniform(30.0, 45.0)).to_array()
            t_opt = lactin.t_opt(th)
            errs.append(abs(t_opt - golden_section_max(lambda x: float(lactin.rate(th, x)), t_opt - 30, t_opt + 30)))
            t_inf, h = lactin.t_inflection(th), 1e-2
            f2 = [lactin.rate(th, t + h) - 2 * lactin.rate(th, t) + lactin.rate(th, t - h)
                  for t in (t_inf - 0.05, t_inf + 0.05)]
            sign_ok &= bool(f2[0] * f2[1] < 0)
        worst["lactin"] = max(errs)
        bieri_rows = []
        while len(bieri_rows) < 200:
            m1 = rng.uniform(0.0, 15.0)
            th = np.array([rng.uniform(0.005, 0.05), rng.uniform(1.05, 1.5), m1, m1 + rng.uniform(15.0, 40.0)])
            if bieri.rate(th, bieri.t_opt_derivative(th)) > 0:
                bieri_rows.append(bieri.t_opt_report(th))
        bieri_gap = max(abs(r["numeric"] - r["derivative_form"]) for r in bieri_rows)
        tmax_gap = float(np.median([abs(r["numeric"] - r["tmax_form"]) for r in bieri_rows]))
        ok = max(worst.values()) <= 1e-6 and sign_ok and bieri_gap <= 1e-6
        detail = (", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; Lactin T_inf sign change {sign_ok}; "
                  f"Bieri numeric vs derivative form {bieri_gap:.1e}, vs T_max-anchored form median {tmax_gap:.2f}")
        finish(acceptance, 8, "optimum-formula cross-check", ok, detail, time.perf_counter() - t0, 30)

    def test_09_ess_calibration(self, acceptance):
        t0 = time.perf_counter()
        rng = stream(9, "ess")
        n = 10_000
        e_iid = ess(rng.standard_normal(n))
        # the AR(1) estimate has ~14% sampling spread at 1e4 draws, so use 1e5
        phi, n_ar = 0.9, 100_000
        eps = rng.standard_normal(n_ar)
        eps[0] /= math.sqrt(1 - phi**2)
        e_ar = ess(lfilter([1.0], [1.0, -phi], eps))
        target = n_ar * (1 - phi) / (1 + phi)
        ok = abs(e_iid - n) <= 0.1 * n and abs(e_ar - target) <= 0.15 * target
        detail = f"iid {e_iid:.0f} of {n}; AR(1) {e_ar:.0f} vs {target:.0f}"
        finish(acceptance, 9, "ESS calibration", ok, detail, time.perf_counter() - t0, 10)

    def test_10_advi_sanity(self, acceptance, conjugate):
        t0 = time.perf_counter()
        mean = np.array([1.0, -2.0])
        cov = np.array([[1.0, 0.8], [0.8, 2.0]])
        fr = advi_fit(GaussianTarget(mean, cov), None, family="fullrank", grad_samples=10, seed=3)
        mean_err = float(np.max(np.abs(fr.mean - mean)))
        cov_err = float(np.linalg.norm(fr.cov - cov) / np.linalg.norm(cov))
        model, data = conjugate
        exact = analytic_evidence(model, data)
        conj_fr = advi_fit(model, data, family="fullrank", seed=4)
        conj_mf = advi_fit(model, data, family="meanfield", seed=4)
        bound_ok = conj_fr.elbo.value <= exact + 3 * conj_fr.elbo.se
        order_ok = conj_fr.elbo.value >= conj_mf.elbo.value - 3 * math.hypot(conj_fr.elbo.se, conj_mf.elbo.se)
        ok = mean_err < 0.02 and cov_err < 0.05 and bound_ok and order_ok
        detail = (f"mean err {mean_err:.4f}, cov err {cov_err:.3%}; ELBO fr {conj_fr.elbo.value:.3f}, "
                  f"mf {conj_mf.elbo.value:.3f}, log Z {exact:.3f}")
        finish(acceptance, 10, "ADVI sanity", ok, detail, time.perf_counter() - t0, 120)
