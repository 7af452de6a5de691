"""Information criteria on the deviance scale: AIC, BIC, DIC, WAIC and exact LooCV.

All criteria are ``-2 x`` a log predictive quantity, so smaller is better.
Effective-parameter counts are reported alongside each criterion, and the
Monte Carlo standard error (MCSE) of the draw-based criteria comes from the
ESS of a first-order influence function.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .diagnostics import mcse_from_influence
from .errors import DegenerateDataset, SamplingError, ValidationError
from .hmc import DrawsMatrix, HmcConfig, hmc_sample
from .model import Model


def _theta(draws) -> np.ndarray:
    """Constrained draws as ``(chains, draws, k)``."""
    if isinstance(draws, DrawsMatrix):
        return draws.constrained
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim == 2:
        x = x[None]
    if x.shape[1] == 0:
        raise ValidationError("no draws")
    return x


def pointwise_matrix(model: Model, data, draws) -> np.ndarray:
    """Log-likelihood per draw and observation, ``(chains, draws, N)``."""
    th = _theta(draws)
    c, s, k = th.shape
    ll = np.asarray(model.pointwise_loglik(th.reshape(c * s, k), data), dtype=float)
    return ll.reshape(c, s, -1)


def log_mean_exp(x, axis=0):
    x = np.asarray(x, dtype=float)
    return logsumexp(x, axis=axis) - math.log(x.shape[axis])


# --------------------------------------------------------------------------
# maximum likelihood


@dataclass
class MleResult:
    theta: np.ndarray
    loglik: float
    improved: bool
    n_params: int


def mle_fit(model: Model, data, draws=None, init=None, maxiter: int = 20000) -> MleResult:
    """Maximize the likelihood by Nelder-Mead on the unconstrained scale.

    Starts from ``init`` (constrained) or from the draw with the highest
    likelihood. If the optimizer does not beat the start point, the start is
    returned with ``improved=False``.
    """
    if init is None:
        if draws is None:
            raise ValidationError("need draws or an initial point")
        th = _theta(draws).reshape(-1, model.dim)
        ll = model.loglik(th, data)
        best = int(np.nanargmax(np.where(np.isfinite(ll), ll, -np.inf)))
        init = th[best]
    init = np.asarray(init, dtype=float)
    ll0 = float(model.loglik(init, data))
    if not np.isfinite(ll0):
        raise ValidationError("initial point has non-finite likelihood")
    u0 = model.unconstrain(init)

    def neg(u):
        v = model.loglik(model.constrain(u), data)
        return -float(v) if np.isfinite(v) else np.inf

    u, f = u0, -ll0
    # restart until a pass stops improving; Nelder-Mead stalls on ridges
    for _ in range(5):
        res = minimize(neg, u, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": maxiter, "maxfev": 2 * maxiter,
                                "adaptive": model.dim > 3})
        if not res.fun < f - 1e-12:
            break
        u, f = res.x, float(res.fun)
    improved = -f > ll0
    if not improved:
        warnings.warn("likelihood optimizer did not improve on the best draw", RuntimeWarning, stacklevel=2)
    theta = model.constrain(u) if improved else init
    return MleResult(np.asarray(theta), -f if improved else ll0, improved, model.dim)


def aic(max_loglik: float, k: int) -> float:
    return -2.0 * max_loglik + 2.0 * k


def bic(max_loglik: float, k: int, n: int) -> float:
    return -2.0 * max_loglik + k * math.log(n)


# --------------------------------------------------------------------------
# DIC


@dataclass
class DicResult:
    dic: float
    p_dic: float
    variant: int
    deviance_at_mean: float
    mcse: float

    @property
    def p_mcse(self) -> float:
        return 0.5 * self.mcse


def dic(draws, model: Model, data, variant: int = 1) -> DicResult:
    """Deviance at the posterior mean plus twice the effective parameter count.

    ``variant=1``: p = E[-2 log p(y|theta)] + 2 log p(y|theta_bar).
    ``variant=2``: p = 2 Var[log p(y|theta)], half the deviance variance, which
    matches variant 1 for a Gaussian posterior.
    theta_bar is the mean of the constrained draws.
    """
    if variant not in (1, 2):
        raise ValidationError("variant must be 1 or 2")
    th = _theta(draws)
    ll = np.sum(pointwise_matrix(model, data, th), axis=-1)
    mean = th.reshape(-1, th.shape[-1]).mean(axis=0)
    ll_bar = float(model.loglik(mean, data))
    if not np.isfinite(ll_bar):
        warnings.warn("log likelihood at the posterior mean is not finite", RuntimeWarning, stacklevel=2)
    d_bar = -2.0 * ll_bar
    if variant == 1:
        p = float(np.mean(-2.0 * ll) + 2.0 * ll_bar)
        mcse = 2.0 * mcse_from_influence(ll)
    else:
        v = float(ll.var(ddof=1))
        p = 2.0 * v
        mcse = 2.0 * mcse_from_influence((ll - ll.mean()) ** 2)
    if p < 0:
        warnings.warn(f"negative DIC effective parameter count ({p:.3g})", RuntimeWarning, stacklevel=2)
    return DicResult(d_bar + 2.0 * p, p, variant, d_bar, 2.0 * mcse)


# --------------------------------------------------------------------------
# WAIC


@dataclass
class WaicResult:
    waic: float
    p_waic: float
    lppd: float
    variant: int
    mcse: float
    pointwise: np.ndarray


def waic(draws, model: Model, data, variant: int = 2, loglik=None) -> WaicResult:
    """-2 (lppd - p_waic) with both effective-parameter forms.

    ``variant=1``: p = 2 sum_j [log E p(y_j|theta) - E log p(y_j|theta)].
    ``variant=2``: p = sum_j Var log p(y_j|theta).
    ``loglik`` may pass a precomputed ``(chains, draws, N)`` matrix.
    """
    if variant not in (1, 2):
        raise ValidationError("variant must be 1 or 2")
    ll = pointwise_matrix(model, data, draws) if loglik is None else np.asarray(loglik, dtype=float)
    c, s, n = ll.shape
    flat = ll.reshape(c * s, n)
    lme = log_mean_exp(flat, axis=0)
    mean_ll = flat.mean(axis=0)
    if variant == 1:
        p_j = 2.0 * (lme - mean_ll)
    else:
        p_j = flat.var(axis=0, ddof=1)
    lppd = float(lme.sum())
    p = float(p_j.sum())
    if p < 0:
        warnings.warn(f"negative WAIC effective parameter count ({p:.3g})", RuntimeWarning, stacklevel=2)
    # influence of each draw on the criterion, to first order
    w = np.exp(ll - lme)
    psi = -2.0 * np.sum(w - 1.0, axis=-1)
    if variant == 1:
        psi = psi + 2.0 * 2.0 * np.sum(w - 1.0, axis=-1) - 2.0 * 2.0 * np.sum(ll - mean_ll, axis=-1)
    else:
        psi = psi + 2.0 * np.sum((ll - mean_ll) ** 2 - p_j, axis=-1)
    pointwise = -2.0 * (lme - p_j)
    return WaicResult(-2.0 * (lppd - p), p, lppd, variant, mcse_from_influence(psi), pointwise)


# --------------------------------------------------------------------------
# exact leave-one-out


@dataclass
class LoocvResult:
    loocv: float
    beta: float
    elpd_loo: np.ndarray
    mcse: float
    refit_diagnostics: list = field(default_factory=list)


def _loo_job(args):
    model, data, j, cfg, inits, adaptation, n_warmup = args
    sub = data.drop(j)
    try:
        fit = hmc_sample(model, sub, cfg, inits=inits, adaptation=adaptation, n_warmup=n_warmup)
    except Exception as exc:  # re-raised with the failing index below
        return j, exc, None, None
    ll = pointwise_matrix(model, data, fit)
    return j, None, ll, {"divergences": fit.diagnostics["divergences"]}


def loocv_exact(model: Model, data, config: Optional[HmcConfig] = None, full_fit: Optional[DrawsMatrix] = None,
                cap: int = 500, n_jobs: int = 1) -> LoocvResult:
    """Exact leave-one-out by one HMC refit per observation, with the bias correction beta.

    ``LooCV = -2 sum_j log E_{-j} p(y_j) - 2 beta`` where
    ``beta = lppd - (1/N) sum_k sum_j log E_{-k} p(y_j)``. When ``full_fit`` is
    given, its adaptation warm-starts the refits and their warmup is halved.
    """
    n = data.n
    if n < 3:
        raise DegenerateDataset(f"leave-one-out needs at least 3 observations, got {n}")
    if n > cap:
        raise ValidationError(f"{n} observations exceed the refit cap of {cap}")
    cfg = config or HmcConfig()
    if full_fit is None:
        full_fit = hmc_sample(model, data, cfg)
    ll_full = pointwise_matrix(model, data, full_fit)
    lme_full = log_mean_exp(ll_full.reshape(-1, n), axis=0)
    lppd = float(lme_full.sum())
    var_lppd = mcse_from_influence(np.sum(np.exp(ll_full - lme_full), axis=-1)) ** 2
    inits = [full_fit.unconstrained[c, -1] for c in range(full_fit.n_chains)]
    n_warm = max(cfg.n_warmup // 2, 20)
    jobs = [(model, data, j, cfg, inits, full_fit.adaptation or None, n_warm) for j in range(n)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_loo_job, jobs))
    else:
        results = [_loo_job(job) for job in jobs]

    # lme[k, j] = log E_{-k} p(y_j)
    lme = np.empty((n, n))
    elpd = np.empty(n)
    var_terms = np.empty(n)
    var_rows = np.empty(n)
    diags = []
    for j, exc, ll, diag in results:
        if exc is not None:
            raise SamplingError(f"leave-one-out refit {j} failed: {exc}") from exc
        flat = ll.reshape(-1, n)
        lme[j] = log_mean_exp(flat, axis=0)
        elpd[j] = lme[j, j]
        w = np.exp(ll[..., j] - lme[j, j])
        var_terms[j] = mcse_from_influence(w) ** 2
        var_rows[j] = mcse_from_influence(np.sum(np.exp(ll - lme[j]), axis=-1)) ** 2
        diags.append(diag)
    beta = lppd - float(lme.sum()) / n
    loocv = -2.0 * float(elpd.sum()) - 2.0 * beta
    # first-order MC variance, treating the refits as independent of each other
    var_beta = var_lppd + var_rows.sum() / n**2
    return LoocvResult(loocv, beta, elpd, 2.0 * math.sqrt(var_terms.sum() + var_beta), diags)


# --------------------------------------------------------------------------


@dataclass
class CriteriaReport:
    aic: float
    bic: float
    dic_1: float
    dic_2: float
    waic_1: float
    waic_2: float
    loocv: float
    p_dic_1: float
    p_dic_2: float
    p_waic_1: float
    p_waic_2: float
    beta_loocv: float
    per_observation: np.ndarray
    k: int
    max_loglik: float
    mcse: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("per_observation", "mcse")}
        out["per_observation"] = [float(x) for x in self.per_observation]
        out["mcse"] = dict(self.mcse)
        return out


def criteria_report(model: Model, data, draws: DrawsMatrix, loocv: Optional[LoocvResult] = None) -> CriteriaReport:
    """All criteria for one fitted model; LooCV is NaN unless a result is passed in."""
    mle = mle_fit(model, data, draws)
    ll = pointwise_matrix(model, data, draws)
    w1, w2 = waic(draws, model, data, 1, ll), waic(draws, model, data, 2, ll)
    d1, d2 = dic(draws, model, data, 1), dic(draws, model, data, 2)
    return CriteriaReport(
        aic=aic(mle.loglik, mle.n_params),
        bic=bic(mle.loglik, mle.n_params, data.n),
        dic_1=d1.dic, dic_2=d2.dic,
        waic_1=w1.waic, waic_2=w2.waic,
        loocv=loocv.loocv if loocv else float("nan"),
        p_dic_1=d1.p_dic, p_dic_2=d2.p_dic,
        p_waic_1=w1.p_waic, p_waic_2=w2.p_waic,
        beta_loocv=loocv.beta if loocv else float("nan"),
        per_observation=log_mean_exp(ll.reshape(-1, data.n), axis=0),
        k=mle.n_params,
        max_loglik=mle.loglik,
        mcse={"dic_1": d1.mcse, "dic_2": d2.mcse, "waic_1": w1.mcse, "waic_2": w2.mcse,
              "loocv": loocv.mcse if loocv else float("nan")},
    )
