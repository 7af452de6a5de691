"""Recovering a Briere curve from simulated development rates.

We draw a synthetic experiment from a Briere curve with Inverse-Gamma noise,
fit it with HMC and with both ADVI families, and check how close the
posterior lands to the truth. The thermal landmarks (T_min, T_opt, T_max)
are read off every posterior draw, so their uncertainty comes for free.

Run with ``python demos/briere_recovery.py``; it takes about a minute.
"""

import numpy as np

from devrate import AdviConfig, BriereParams, HmcConfig, ModelSpec, advi_fit, hmc_sample, simulate_dataset
from devrate.diagnostics import split_rhat
from devrate.predictive import derived_draws, posterior_predictive, summarize

# the truth: development starts at 9 C, peaks near 29 C and stops at 35 C
model = ModelSpec("briere", "invgamma")
curve = BriereParams.from_alpha(1.2e-4, 9.0, 35.0)
truth = np.concatenate([curve.to_array(), [10.0]])
print("truth", {k: round(float(v), 3) for k, v in zip(model.param_names, truth)})
print("true landmarks", {k: round(float(v), 3) for k, v in model.curve.derived(truth[:3]).items()})

# eight constant-temperature chambers with 15 insects each
temps = np.arange(15.0, 33.0, 2.5)
data = simulate_dataset(model, truth, temps, 15, np.random.default_rng(2024))
print(f"\n{data.n} observations, rates in [{data.rate.min():.4f}, {data.rate.max():.4f}]")

# ---- HMC
fit = hmc_sample(model, data, HmcConfig(n_warmup=500, n_draws=1000, n_chains=2, seed=1))
print("\nHMC posterior (mean and 95% interval)")
for j, name in enumerate(model.param_names):
    s = summarize(fit.param(name))
    rhat = split_rhat(fit.constrained[:, :, j])
    print(f"  {name:8s} {s['mean']:9.3f}  [{s['q2.5']:8.3f}, {s['q97.5']:8.3f}]  truth {truth[j]:8.3f}"
          f"  rhat {rhat:.3f}")
print(f"  divergences: {fit.diagnostics['divergences']}")

landmarks = derived_draws(model, fit, max_draws=1000)
print("\nderived landmarks")
for k, v in landmarks.items():
    s = summarize(v)
    print(f"  {k:6s} {s['mean']:7.2f}  [{s['q2.5']:6.2f}, {s['q97.5']:6.2f}]")

# ---- ADVI: fast, but the mean-field family ignores posterior correlation
print("\nADVI")
for family in ("meanfield", "fullrank"):
    res = advi_fit(model, data, AdviConfig(family, seed=1))
    sd = np.sqrt(np.diag(np.cov(res.draws.flat(), rowvar=False)))
    print(f"  {family:9s} ELBO {res.elbo.value:8.2f} +- {res.elbo.se:.2f}  iterations {res.n_iter:5d}"
          f"  posterior sd {np.round(sd, 3)}")
print(f"  HMC       posterior sd {np.round(fit.flat().std(axis=0), 3)}")

# ---- predictive bands outside the design range show where the curve is extrapolated
bands = posterior_predictive(model, fit, [8.0, 12.0, 20.0, 29.0, 34.0], seed=1)
print("\nposterior predictive")
print("  T      r(T) mean   95% band            new observation")
for i, t in enumerate(bands["temperature"]):
    print(f"  {t:4.1f}   {bands['rate_mean'][i]:.4f}      [{bands['rate_q2.5'][i]:.4f}, {bands['rate_q97.5'][i]:.4f}]"
          f"    [{bands['pred_q2.5'][i]:.4f}, {bands['pred_q97.5'][i]:.4f}]")
