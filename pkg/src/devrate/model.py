"""Models over an unconstrained parameter space.

A :class:`Model` bundles a transform, priors and a pointwise likelihood.
:class:`Posterior` binds a model to data (and optionally a likelihood
temperature) and exposes the log density and gradient that the samplers and
the variational fits consume.
"""

from __future__ import annotations

import math
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .curves import Curve, get_curve
from .errors import NoGradient, ValidationError
from .obs_models import (
    Dataset,
    Normal,
    ObsModel,
    PriorSet,
    default_priors,
    get_obs,
)
from .transforms import Bound, BoxTransform


class Model:
    """Interface shared by the curve models and the analytic test models."""

    name: str = "model"
    param_names: Tuple[str, ...] = ()
    transform: BoxTransform

    @property
    def dim(self) -> int:
        return len(self.param_names)

    def constrain(self, u):
        return self.transform.constrain(u)[0]

    def unconstrain(self, theta):
        return self.transform.unconstrain(theta)[0]

    def log_prior(self, theta):
        raise NotImplementedError

    def log_prior_and_grad(self, theta):
        raise NotImplementedError

    def pointwise_loglik(self, theta, data) -> np.ndarray:
        """Log-likelihood per observation; ``theta`` may be ``(S, k)``."""
        raise NotImplementedError

    def loglik_and_grad(self, theta, data):
        raise NotImplementedError

    def loglik(self, theta, data):
        return np.sum(self.pointwise_loglik(theta, data), axis=-1)

    def sample_prior(self, rng, size: int) -> np.ndarray:
        raise NotImplementedError

    def posterior(self, data, temperature: float = 1.0) -> "Posterior":
        return Posterior(self, data, temperature)


# --------------------------------------------------------------------------
# truncated independent priors


def _mass_between(dist, lo, hi) -> float:
    lo = -np.inf if lo is None else lo
    hi = np.inf if hi is None else hi
    return float(dist.cdf(hi) - dist.cdf(lo)) if np.isfinite(hi) else float(dist.sf(lo))


def _ordered_mass(first, first_lo, first_hi, second, second_lo, second_hi, second_above=True) -> float:
    """P(first in (lo, hi), second in its interval and second > first (or < first))."""
    d1 = first.dist
    u_lo = float(d1.cdf(first_lo)) if first_lo is not None else 0.0
    u_hi = float(d1.cdf(first_hi)) if first_hi is not None else 1.0
    d2 = second.dist
    s_lo = -np.inf if second_lo is None else second_lo
    s_hi = np.inf if second_hi is None else second_hi

    def inner(u):
        x = float(d1.ppf(u))
        if second_above:
            a, b = max(x, s_lo), s_hi
        else:
            a, b = s_lo, min(x, s_hi)
        if not a < b:
            return 0.0
        return float(d2.cdf(b) - d2.cdf(a)) if np.isfinite(b) else float(d2.sf(a))

    val, _ = integrate.quad(inner, u_lo, u_hi, limit=400, epsabs=1e-13, epsrel=1e-10)
    return val


class IndependentPriorModel(Model):
    """Independent priors restricted (and renormalized) to the transform's support."""

    priors: PriorSet

    @cached_property
    def _prior_list(self):
        return [self.priors[n] for n in self.param_names]

    @cached_property
    def log_prior_mass(self) -> float:
        """log P(theta in support) under the untruncated independent priors."""
        bounds = self.transform.bounds
        names = self.param_names
        idx = {n: i for i, n in enumerate(names)}
        dependents = {}
        for j, b in enumerate(bounds):
            for side, lim in (("lower", b.lower), ("upper", b.upper)):
                if isinstance(lim, str):
                    dependents.setdefault(idx[lim], []).append((j, side))
        handled = set()
        total = 0.0

        def const(lim):
            return None if isinstance(lim, str) else lim

        for i, deps in dependents.items():
            if len(deps) != 1 or i in dependents.get(deps[0][0], []):
                raise NotImplementedError("only single pairwise ordering constraints are supported")
            j, side = deps[0]
            bi, bj = bounds[i], bounds[j]
            m = _ordered_mass(
                self._prior_list[i], const(bi.lower), const(bi.upper),
                self._prior_list[j], const(bj.lower), const(bj.upper),
                second_above=(side == "lower"),
            )
            total += math.log(m)
            handled.update((i, j))
        for j, b in enumerate(bounds):
            if j not in handled:
                total += math.log(_mass_between(self._prior_list[j].dist, b.lower, b.upper))
        return total

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape[:-1])
        for j, p in enumerate(self._prior_list):
            out = out + p.logpdf(theta[..., j])
        out = np.where(self.transform.in_support(theta), out, -np.inf)
        return out - self.log_prior_mass

    def log_prior_and_grad(self, theta):
        lp = -self.log_prior_mass
        g = np.empty(len(self._prior_list))
        for j, p in enumerate(self._prior_list):
            v, g[j] = p.logpdf_grad1(float(theta[j]))
            lp += v
        if not (np.isfinite(lp) and self.transform.in_support(theta)):
            return -np.inf, g
        return lp, g

    def sample_prior(self, rng, size: int) -> np.ndarray:
        """Exact draws from the truncated prior (inverse CDF plus rejection)."""
        out = []
        n_have = 0
        bounds = self.transform.bounds
        tries = 0
        while n_have < size:
            tries += 1
            if tries > 1000:
                raise ValidationError("prior support has too little mass to sample")
            batch = max(2 * (size - n_have), 256)
            cols = []
            for j, p in enumerate(self._prior_list):
                b = bounds[j]
                lo = b.lower if not isinstance(b.lower, str) else None
                hi = b.upper if not isinstance(b.upper, str) else None
                d = p.dist
                u_lo = float(d.cdf(lo)) if lo is not None else 0.0
                u_hi = float(d.cdf(hi)) if hi is not None else 1.0
                x = d.ppf(rng.uniform(u_lo, u_hi, batch))
                if lo is not None:
                    x = np.maximum(x, np.nextafter(lo, np.inf))
                if hi is not None:
                    x = np.minimum(x, np.nextafter(hi, -np.inf))
                cols.append(x)
            th = np.column_stack(cols)
            th = th[self.transform.in_support(th)]
            out.append(th)
            n_have += th.shape[0]
        return np.concatenate(out)[:size]


# --------------------------------------------------------------------------
# curve x observation models


class ModelSpec(IndependentPriorModel):
    """A curve family, an observation family and a prior set."""

    def __init__(self, curve, obs, priors: Optional[PriorSet] = None):
        self.curve: Curve = get_curve(curve)
        self.obs: ObsModel = get_obs(obs)
        self.priors = priors if priors is not None else default_priors(self.curve.name, self.obs.name)
        self.param_names = self.curve.param_names + self.obs.param_names
        missing = set(self.param_names) - set(self.priors.names())
        if missing:
            raise ValidationError(f"no prior given for {sorted(missing)}")
        self.transform = BoxTransform(self.param_names, self.curve.bounds() + self.obs.bounds())
        self._kc = self.curve.dim

    @property
    def name(self) -> str:
        return f"{self.curve.name}-{self.obs.name}"

    def __repr__(self):
        return f"ModelSpec({self.curve!r}, {self.obs!r})"

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_prior_list", None)
        return state

    @property
    def curve_names(self):
        return self.curve.param_names

    @property
    def obs_names(self):
        return self.obs.param_names

    def rate(self, theta, t):
        theta = np.asarray(theta, dtype=float)
        return self.curve.rate(theta[..., : self._kc], t)

    def _phi(self, theta):
        theta = np.asarray(theta, dtype=float)
        return [theta[..., j, None] if theta.ndim > 1 else theta[j] for j in range(self._kc, self.dim)]

    def pointwise_loglik(self, theta, data: Dataset):
        theta = np.asarray(theta, dtype=float)
        r = self.rate(theta, data.temperature)
        return self.obs.pointwise(r, data.rate, *self._phi(theta))

    def loglik_and_grad(self, theta, data: Dataset):
        theta = np.asarray(theta, dtype=float)
        r, dr = self.curve.rate_and_grad(theta[: self._kc], data.temperature)
        ll, dl_dr, dl_dphi = self.obs.pointwise_and_grad(r, data.rate, *theta[self._kc:])
        total = float(np.sum(ll))
        if not np.isfinite(total):
            return total, np.full(self.dim, np.nan)
        g = np.empty(self.dim)
        g[: self._kc] = dl_dr @ dr
        for j, d in enumerate(dl_dphi):
            g[self._kc + j] = np.sum(d)
        return total, g

    def simulate(self, theta, temperatures, rng):
        theta = np.asarray(theta, dtype=float)
        r = self.rate(theta, temperatures)
        return self.obs.simulate(r, rng, *self._phi(theta))

    def initial_guess(self, data: Dataset, rng) -> np.ndarray:
        """Randomized data-informed starting point (constrained scale)."""
        phi_c = self.curve.initial_guess(data.temperature, data.rate, rng)
        r = self.curve.rate(phi_c, data.temperature)
        return np.concatenate([phi_c, self.obs.initial_guess(r, data.rate, rng)])

    def split_blocks(self):
        """Index blocks (curve parameters, observation parameters)."""
        k = self._kc
        return [list(range(k)), list(range(k, self.dim))]


# --------------------------------------------------------------------------
# analytic test models


class NormalMeanModel(IndependentPriorModel):
    """y_i ~ N(mu, sigma^2) with known sigma and prior mu ~ N(m0, tau^2).

    Temperatures are ignored; the rates column holds the observations.
    """

    name = "normal-mean"
    param_names = ("mu",)

    def __init__(self, sigma: float = 1.0, prior_mean: float = 0.0, prior_sd: float = 1.0):
        self.sigma = float(sigma)
        self.prior_mean = float(prior_mean)
        self.prior_sd = float(prior_sd)
        self.priors = PriorSet({"mu": Normal(self.prior_mean, self.prior_sd)})
        self.transform = BoxTransform(self.param_names, [Bound()])

    def pointwise_loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        mu = theta[..., 0, None] if theta.ndim > 1 else theta[0]
        z = (data.rate - mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def loglik_and_grad(self, theta, data):
        ll = self.pointwise_loglik(theta, data)
        return float(np.sum(ll)), np.array([np.sum(data.rate - theta[0]) / self.sigma**2])

    def posterior_moments(self, data, drop: Optional[int] = None):
        y = data.rate if drop is None else np.delete(data.rate, drop)
        prec = 1.0 / self.prior_sd**2 + y.size / self.sigma**2
        mean = (self.prior_mean / self.prior_sd**2 + y.sum() / self.sigma**2) / prec
        return mean, 1.0 / prec

    def log_evidence(self, data) -> float:
        """Exact log marginal likelihood (multivariate normal with compound symmetry)."""
        y = np.asarray(data.rate, dtype=float) - self.prior_mean
        n = y.size
        s2, t2 = self.sigma**2, self.prior_sd**2
        # Sigma = s2 I + t2 11^T ; det = s2^(n-1) (s2 + n t2)
        logdet = (n - 1) * math.log(s2) + math.log(s2 + n * t2)
        quad = (y @ y) / s2 - t2 * y.sum() ** 2 / (s2 * (s2 + n * t2))
        return -0.5 * (n * math.log(2 * math.pi) + logdet + quad)

    def shrinkage(self, n: int) -> float:
        return n / (n + self.sigma**2 / self.prior_sd**2)


class GaussianTarget(Model):
    """Multivariate normal target with no data, scaled by ``exp(log_norm)``.

    Its "prior" is the target itself so that samplers, variational fits and
    evidence estimators can be run against a known answer.
    """

    name = "gaussian-target"

    def __init__(self, mean, cov, log_norm: float = 0.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.log_norm = float(log_norm)
        d = self.mean.size
        self.param_names = tuple(f"x{i}" for i in range(d))
        self.transform = BoxTransform(self.param_names, [Bound()] * d)
        self._chol = np.linalg.cholesky(self.cov)
        self._prec = np.linalg.inv(self.cov)
        self._const = -0.5 * d * math.log(2 * math.pi) - np.sum(np.log(np.diag(self._chol)))

    def log_prior(self, theta):
        x = np.asarray(theta, dtype=float) - self.mean
        q = np.einsum("...i,ij,...j->...", x, self._prec, x)
        return self._const - 0.5 * q + self.log_norm

    def log_prior_and_grad(self, theta):
        x = np.asarray(theta, dtype=float)
        return float(self.log_prior(x)), -self._prec @ (x - self.mean)

    def pointwise_loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        return np.zeros(theta.shape[:-1] + (0,))

    def loglik_and_grad(self, theta, data):
        return 0.0, np.zeros(self.dim)

    def sample_prior(self, rng, size):
        return self.mean + rng.standard_normal((size, self.dim)) @ self._chol.T


# --------------------------------------------------------------------------


class Posterior:
    """log prior + temperature * log likelihood + log|Jacobian| on unconstrained space.

    Any point where the likelihood is undefined has log density -inf for every
    temperature, including zero.
    """

    def __init__(self, model: Model, data: Optional[Dataset], temperature: float = 1.0):
        if not 0.0 <= temperature <= 1.0:
            raise ValidationError("temperature must lie in [0, 1]")
        self.model = model
        self.data = data
        self.temperature = float(temperature)

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def param_names(self) -> Sequence[str]:
        return self.model.param_names

    def constrain(self, u):
        return self.model.constrain(u)

    def parts(self, u):
        """(log prior + log|J|, log likelihood) at ``u``."""
        theta, lj = self.model.transform.constrain(u)
        lp = self.model.log_prior(theta)
        ll = self.model.loglik(theta, self.data) if self.data is not None else np.zeros_like(lp)
        return lp + lj, ll

    def logp(self, u) -> float:
        base, ll = self.parts(np.asarray(u, dtype=float))
        return _combine(base, ll, self.temperature)

    def loglik(self, u) -> float:
        theta = self.model.constrain(u)
        return float(self.model.loglik(theta, self.data)) if self.data is not None else 0.0

    def logp_and_grad(self, u):
        u = np.asarray(u, dtype=float)
        theta, lj, jac, glj = self.model.transform.constrain(u, with_grad=True)
        lp, glp = self.model.log_prior_and_grad(theta)
        if not np.isfinite(lp):
            return -np.inf, np.full(u.size, np.nan)
        if self.data is not None:
            ll, gll = self.model.loglik_and_grad(theta, self.data)
        else:
            ll, gll = 0.0, np.zeros(u.size)
        if not np.isfinite(ll):
            return -np.inf, np.full(u.size, np.nan)
        t = self.temperature
        val = lp + t * ll + float(lj)
        # far out on a log scale the chain rule can form inf * 0; callers treat a non-finite gradient as off-support
        with np.errstate(invalid="ignore", over="ignore"):
            grad = jac.T @ (glp + t * gll) + glj
        if not np.isfinite(val):
            return -np.inf, np.full(u.size, np.nan)
        return val, grad

    def grad(self, u) -> np.ndarray:
        val, g = self.logp_and_grad(u)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            raise NoGradient(f"log posterior is not finite at {np.asarray(u)}")
        return g


def _combine(base, ll, t):
    base = np.asarray(base, dtype=float)
    ll = np.asarray(ll, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isfinite(ll), base + t * ll, -np.inf)
    out = np.where(np.isnan(out), -np.inf, out)
    return float(out) if out.ndim == 0 else out


def log_posterior_unnorm(model: Model, dataset, u) -> float:
    """log likelihood + log prior + log|Jacobian| at an unconstrained vector."""
    return Posterior(model, dataset).logp(u)


def grad_log_posterior(model: Model, dataset, u) -> np.ndarray:
    return Posterior(model, dataset).grad(u)
