"""Marginal likelihood (evidence) estimators.

* power posterior: thermodynamic integration of E_t[log p(y|theta)] over a
  temperature ladder;
* importance sampling with a product of block-marginal posteriors as proposal;
* iterative bridge sampling with a moment-matched normal (or warped) proposal.

Everything is on the unconstrained scale, where the target density is
``exp(log_posterior_unnorm)`` and integrates to the evidence.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from .diagnostics import ess, mcse_mean
from .errors import BridgeDiverged, SamplingError, ValidationError
from .hmc import DrawsMatrix, HmcConfig, hmc_sample
from .model import Model
from .rng import stream


@dataclass
class EvidenceEstimate:
    log_z: float
    se: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.log_z):
            raise SamplingError(f"{self.method}: non-finite log evidence")
        if self.se < 0:
            raise ValidationError("standard error must be nonnegative")

    def as_dict(self) -> dict:
        return {"log_z": self.log_z, "se": self.se, "method": self.method,
                "diagnostics": _jsonable(self.diagnostics)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _log_target(model: Model, data, u) -> np.ndarray:
    """Unnormalized log posterior on the unconstrained scale, vectorized over rows of ``u``."""
    u = np.atleast_2d(u)
    theta, lj = model.transform.constrain(u)
    lp = model.log_prior(theta)
    ll = model.loglik(theta, data) if data is not None else np.zeros(u.shape[0])
    with np.errstate(invalid="ignore"):
        out = np.where(np.isfinite(ll), lp + ll + lj, -np.inf)
    return np.where(np.isnan(out), -np.inf, out)


# --------------------------------------------------------------------------
# power posterior


@dataclass
class TemperatureLadder:
    t_values: np.ndarray
    config: HmcConfig = field(default_factory=lambda: HmcConfig(n_warmup=500, n_draws=500))

    def __post_init__(self):
        t = np.sort(np.unique(np.asarray(self.t_values, dtype=float)))
        if t.size != np.asarray(self.t_values).size:
            raise ValidationError("temperatures must be distinct")
        if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0:
            raise ValidationError("ladder must start at 0 and end at 1")
        self.t_values = t

    @classmethod
    def power(cls, n: int = 20, exponent: float = 5.0, config: Optional[HmcConfig] = None) -> "TemperatureLadder":
        """``t_k = (k/n)^exponent`` for ``k = 0..n``."""
        t = (np.arange(n + 1) / n) ** exponent
        return cls(t, config) if config is not None else cls(t)

    @property
    def n_rungs(self) -> int:
        return self.t_values.size


def _rung_job(args):
    model, data, t, cfg, k = args
    try:
        fit = hmc_sample(model, data, cfg, temperature=t)
    except Exception as exc:
        return k, exc, None, None
    ll = model.loglik(fit.constrained.reshape(-1, model.dim), data).reshape(fit.n_chains, fit.n_draws)
    return k, None, ll, fit.diagnostics["divergences"]


def power_posterior_evidence(model: Model, data, ladder: Optional[TemperatureLadder] = None,
                             n_prior: Optional[int] = None, n_jobs: int = 1,
                             rule: str = "trapezoid") -> EvidenceEstimate:
    """Integral over ``t`` of the rung means of ``log p(y|theta)``.

    ``rule="trapezoid"`` (default) is the plain trapezoid rule.
    ``rule="corrected"`` subtracts ``dt^2 / 12 * (V_k - V_{k-1})`` per
    interval, with ``V_k`` the rung variance of ``log p(y|theta)``. That
    variance is the derivative of the rung mean in ``t``, so the correction
    removes the leading discretization error at no extra sampling cost. It is
    unreliable when the prior makes ``log p(y|theta)`` heavy tailed, because
    ``V_0`` is then dominated by a few extreme prior draws.

    The standard error is ``sqrt(sum_k se_k^2 / 2 * (t_{k+1} - t_k)^2)`` over
    the left endpoint of every interval, treating rungs as independent.

    The ``t = 0`` rung uses exact prior draws. Prior mass where the
    likelihood vanishes is accounted for by adding the log prior probability
    of a finite likelihood, which every tempered target implicitly excludes.
    """
    if rule not in ("trapezoid", "corrected"):
        raise ValidationError(f"unknown rule {rule!r}")
    ladder = ladder or TemperatureLadder.power()
    cfg = ladder.config
    t = ladder.t_values
    n0 = n_prior or cfg.n_draws * cfg.n_chains

    rng = stream(cfg.seed, "prior-rung")
    theta0 = model.sample_prior(rng, n0)
    ll0 = model.loglik(theta0, data)
    finite = np.isfinite(ll0)
    if not finite.any():
        raise SamplingError("rung 0: no prior draw has a finite likelihood")
    log_mass = math.log(finite.mean())
    means = np.empty(t.size)
    ses = np.empty(t.size)
    variances = np.empty(t.size)
    means[0] = ll0[finite].mean()
    variances[0] = ll0[finite].var(ddof=1)
    ses[0] = ll0[finite].std(ddof=1) / math.sqrt(finite.sum())

    jobs = [(model, data, float(t[k]), _rung_config(cfg, k), k) for k in range(1, t.size)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_rung_job, jobs))
    else:
        results = [_rung_job(j) for j in jobs]
    divergences = [0]
    for k, exc, ll, div in results:
        if exc is not None:
            raise SamplingError(f"rung {k} (t={t[k]:.6g}) failed: {exc}") from exc
        means[k] = ll.mean()
        variances[k] = ll.var(ddof=1)
        ses[k] = mcse_mean(ll)
        divergences.append(int(div))

    dt = np.diff(t)
    trapezoid = float(np.sum(dt * 0.5 * (means[1:] + means[:-1])))
    correction = float(np.sum(dt**2 / 12.0 * (variances[1:] - variances[:-1])))
    log_z = (trapezoid - correction if rule == "corrected" else trapezoid) + log_mass
    se = math.sqrt(float(np.sum(dt**2 / 2.0 * ses[:-1] ** 2)))
    return EvidenceEstimate(log_z, se, "power_posterior", {
        "t": t, "rung_means": means, "rung_se": ses, "rung_var": variances, "rule": rule,
        "trapezoid": trapezoid + log_mass, "correction": correction, "log_prior_mass_finite": log_mass,
        "divergences": divergences, "monotone": bool(np.all(np.diff(means) >= -3 * np.hypot(ses[1:], ses[:-1]))),
    })


def _rung_config(cfg: HmcConfig, k: int) -> HmcConfig:
    d = dict(cfg.__dict__)
    d["seed"] = int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0])
    return HmcConfig(**d)


# --------------------------------------------------------------------------
# importance sampling


class _BlockNormal:
    """Moment-matched normal on a block of unconstrained coordinates."""

    def __init__(self, x: np.ndarray):
        x = np.atleast_2d(x)
        self.mean = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False))
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            warnings.warn("singular block covariance; adding a 1e-8 ridge", RuntimeWarning, stacklevel=3)
            self.chol = np.linalg.cholesky(cov + 1e-8 * np.eye(cov.shape[0]))
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.dim = self.mean.size

    def logpdf(self, x) -> np.ndarray:
        z = np.linalg.solve(self.chol, (np.atleast_2d(x) - self.mean).T)
        return -0.5 * (np.sum(z * z, axis=0) + self.log_det + self.dim * math.log(2 * math.pi))

    def sample(self, rng, n) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.dim)) @ self.chol.T


def _blocks(model: Model, blocks) -> List[List[int]]:
    if blocks is None:
        blocks = model.split_blocks() if hasattr(model, "split_blocks") else [list(range(model.dim))]
    out = []
    for b in blocks:
        idx = [model.param_names.index(x) if isinstance(x, str) else int(x) for x in b]
        if idx:
            out.append(idx)
    if sorted(i for b in out for i in b) != list(range(model.dim)):
        raise ValidationError("blocks must partition the parameters")
    return out


def _unconstrained(draws) -> np.ndarray:
    if isinstance(draws, DrawsMatrix):
        return draws.flat(unconstrained=True)
    return np.atleast_2d(np.asarray(draws, dtype=float))


def importance_evidence(model: Model, data, draws, blocks=None, n_is: int = 10000,
                        rng: Optional[np.random.Generator] = None, proposal: str = "permute") -> EvidenceEstimate:
    """Importance sampling with a product of block-marginal posteriors.

    ``proposal="permute"`` draws each block independently from the posterior
    draws (with replacement), which breaks the dependence between blocks;
    ``"gaussian"`` draws from the fitted block normals instead. In both
    cases the proposal density is the product of the block normals.
    """
    rng = rng if rng is not None else stream(0, "importance")
    u = _unconstrained(draws)
    bl = _blocks(model, blocks)
    fits = [_BlockNormal(u[:, b]) for b in bl]
    prop = np.empty((n_is, model.dim))
    for b, f in zip(bl, fits):
        if proposal == "permute":
            prop[:, b] = u[rng.integers(0, u.shape[0], n_is)][:, b]
        elif proposal == "gaussian":
            prop[:, b] = f.sample(rng, n_is)
        else:
            raise ValidationError(f"unknown proposal {proposal!r}")
    log_g = sum(f.logpdf(prop[:, b]) for b, f in zip(bl, fits))
    log_w = _log_target(model, data, prop) - log_g
    log_z = float(logsumexp(log_w) - math.log(n_is))
    # per-draw sd of q/g, then the sd of the mean on the log scale
    rel = np.exp(log_w - log_z)
    sigma_rel = math.sqrt(float(np.mean((rel - 1.0) ** 2)))
    se = sigma_rel / math.sqrt(n_is)
    max_w = float(np.max(rel) / np.sum(rel))
    if max_w > 0.1:
        warnings.warn(f"one importance weight carries {max_w:.0%} of the total; the proposal fits the posterior "
                      "poorly and log_z is unreliable", RuntimeWarning, stacklevel=2)
    return EvidenceEstimate(log_z, se, "importance", {
        "n_is": n_is, "blocks": bl, "max_normalized_weight": max_w, "sigma_hat_relative": sigma_rel,
        "proposal": proposal,
    })


# --------------------------------------------------------------------------
# bridge sampling


@dataclass
class BridgeConfig:
    n_proposal: Optional[int] = None
    max_iter: int = 1000
    tol: float = 1e-10
    warp: bool = False
    seed: int = 0


def _split_halves(draws):
    """(first half, second half as (chains, draws, k)) of the unconstrained draws."""
    if isinstance(draws, DrawsMatrix):
        x = draws.unconstrained
    else:
        x = np.asarray(draws, dtype=float)
        if x.ndim == 2:
            x = x[None]
    h = x.shape[1] // 2
    if h < 2:
        raise ValidationError("bridge sampling needs at least 4 draws per chain")
    return x[:, :h].reshape(-1, x.shape[-1]), x[:, h: 2 * h]


def bridge_evidence(model: Model, data, draws, config: Optional[BridgeConfig] = None) -> EvidenceEstimate:
    """Iterative bridge sampling with the optimal bridge function.

    The first half of each chain fits the proposal and the second half enters
    the estimator. The relative mean-square error uses the spectral density
    at zero of ``f2`` over the posterior draws.
    """
    cfg = config or BridgeConfig()
    fit_part, est = _split_halves(draws)
    n_chains, n_per, d = est.shape
    post = est.reshape(-1, d)
    n1 = post.shape[0]
    n2 = cfg.n_proposal or n1
    rng = stream(cfg.seed, "bridge")

    if cfg.warp:
        center = np.median(fit_part, axis=0)
        chol = np.linalg.cholesky(np.atleast_2d(np.cov(fit_part, rowvar=False)) + 1e-12 * np.eye(d))
        log_det = float(np.sum(np.log(np.diag(chol))))

        def log_q(eta):
            a = _log_target(model, data, center + eta @ chol.T)
            b = _log_target(model, data, center - eta @ chol.T)
            return np.logaddexp(a, b) - math.log(2.0) + log_det

        def log_g(eta):
            return -0.5 * np.sum(eta * eta, axis=1) - 0.5 * d * math.log(2 * math.pi)

        post_eval = np.linalg.solve(chol, (post - center).T).T
        prop = rng.standard_normal((n2, d))
    else:
        g = _BlockNormal(fit_part)

        def log_q(x):
            return _log_target(model, data, x)

        log_g = g.logpdf
        post_eval = post
        prop = g.sample(rng, n2)

    l1 = log_q(post_eval) - log_g(post_eval)
    l2 = log_q(prop) - log_g(prop)
    if not np.all(np.isfinite(l1)):
        raise BridgeDiverged("posterior draws with zero target density", [])
    l2 = np.where(np.isfinite(l2), l2, -np.inf)
    s1 = n1 / (n1 + n2)
    s2 = n2 / (n1 + n2)
    shift = float(np.median(l1))
    e1 = l1 - shift
    e2 = l2 - shift

    log_r = 0.0
    trace = [log_r]
    converged = False
    for it in range(cfg.max_iter):
        # numerator over proposal draws, denominator over posterior draws
        num = logsumexp(e2 - np.logaddexp(math.log(s1) + e2, math.log(s2) + log_r)) - math.log(n2)
        den = logsumexp(-np.logaddexp(math.log(s1) + e1, math.log(s2) + log_r)) - math.log(n1)
        new = float(num - den)
        if not np.isfinite(new):
            raise BridgeDiverged(f"bridge iteration {it} produced a non-finite estimate", trace)
        trace.append(new)
        if abs(math.expm1(new - log_r)) < cfg.tol:
            log_r = new
            converged = True
            break
        log_r = new
    if not converged:
        warnings.warn("bridge iteration hit the iteration limit", RuntimeWarning, stacklevel=2)

    f1 = np.exp(e2 - np.logaddexp(math.log(s1) + e2, math.log(s2) + log_r))
    f2 = np.exp(-np.logaddexp(math.log(s1) + e1, math.log(s2) + log_r))
    f2_chains = f2.reshape(n_chains, n_per)
    rho = 1.0
    if np.ptp(f2) > 0:
        rho = f2.size / ess(f2_chains) if (n_chains > 1 or n_per >= 100) else 1.0
    re2 = (f1.var() / f1.mean() ** 2) / n2 + rho * (f2.var() / f2.mean() ** 2) / n1
    re = math.sqrt(re2)
    return EvidenceEstimate(log_r + shift, re, "bridge", {
        "iterations": len(trace) - 1, "converged": converged, "re2": re2, "rho_f2": rho,
        "trace": trace, "n1": n1, "n2": n2, "warp": cfg.warp,
    })


# --------------------------------------------------------------------------


def analytic_evidence(model, data) -> float:
    """Closed-form log evidence; only for models that provide one (the conjugate test model)."""
    if not hasattr(model, "log_evidence"):
        raise ValidationError(f"no closed-form evidence for {getattr(model, 'name', model)!r}")
    return float(model.log_evidence(data))
