"""Gaussian variational approximations on the unconstrained scale.

Both families are fitted by stochastic gradient ascent on the evidence lower
bound using reparametrized draws ``z = mu + S eta`` with ``eta ~ N(0, I)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateElbo, ValidationError
from .hmc import DrawsMatrix, find_initial_point
from .model import Posterior
from .rng import stream

_HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass
class MeanFieldFamily:
    mu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.mu.shape != self.omega.shape or not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.omega))):
            raise ValidationError("mu and omega must be finite vectors of equal length")

    kind = "meanfield"

    @property
    def dim(self) -> int:
        return self.mu.size

    @classmethod
    def init(cls, mu) -> "MeanFieldFamily":
        mu = np.asarray(mu, dtype=float)
        return cls(mu.copy(), np.zeros_like(mu))

    def entropy(self) -> float:
        return float(np.sum(self.omega) + self.dim * _HALF_LOG_2PI_E)

    def transform(self, eta):
        return self.mu + np.exp(self.omega) * eta

    def cov(self) -> np.ndarray:
        return np.diag(np.exp(2.0 * self.omega))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.mu, self.omega])

    def unpack(self, x) -> "MeanFieldFamily":
        d = self.dim
        return MeanFieldFamily(x[:d], x[d:])

    def param_grad(self, eta, g):
        """ELBO gradient for one reparametrized draw, given ``g = grad log p(z)``."""
        return np.concatenate([g, g * eta * np.exp(self.omega) + 1.0])

    def shrink(self, factor: float = 0.5) -> "MeanFieldFamily":
        return MeanFieldFamily(self.mu.copy(), self.omega + math.log(factor))


@dataclass
class FullRankFamily:
    mu: np.ndarray
    l_factor: np.ndarray

    kind = "fullrank"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.l_factor = np.tril(np.asarray(self.l_factor, dtype=float))
        d = self.mu.size
        if self.l_factor.shape != (d, d) or np.any(np.diag(self.l_factor) <= 0):
            raise ValidationError("l_factor must be lower triangular with a positive diagonal")

    @property
    def dim(self) -> int:
        return self.mu.size

    @classmethod
    def init(cls, mu) -> "FullRankFamily":
        mu = np.asarray(mu, dtype=float)
        return cls(mu.copy(), np.eye(mu.size))

    def entropy(self) -> float:
        return float(np.sum(np.log(np.diag(self.l_factor))) + self.dim * _HALF_LOG_2PI_E)

    def transform(self, eta):
        return self.mu + eta @ self.l_factor.T

    def cov(self) -> np.ndarray:
        return self.l_factor @ self.l_factor.T

    # the diagonal of L is optimized on the log scale
    def pack(self) -> np.ndarray:
        d = self.dim
        l = self.l_factor.copy()
        l[np.diag_indices(d)] = np.log(np.diag(l))
        return np.concatenate([self.mu, l[np.tril_indices(d)]])

    def unpack(self, x) -> "FullRankFamily":
        d = self.dim
        l = np.zeros((d, d))
        l[np.tril_indices(d)] = x[d:]
        l[np.diag_indices(d)] = np.exp(np.diag(l))
        return FullRankFamily(x[:d], l)

    def param_grad(self, eta, g):
        d = self.dim
        gl = np.tril(np.outer(g, eta))
        gl[np.diag_indices(d)] = gl[np.diag_indices(d)] * np.diag(self.l_factor) + 1.0
        return np.concatenate([g, gl[np.tril_indices(d)]])

    def shrink(self, factor: float = 0.5) -> "FullRankFamily":
        return FullRankFamily(self.mu.copy(), factor * self.l_factor)


FAMILIES = {"meanfield": MeanFieldFamily, "fullrank": FullRankFamily}


@dataclass
class ElboEstimate:
    value: float
    se: float
    n_mc: int


def _target(model, data):
    return model if isinstance(model, Posterior) else Posterior(model, data)


def elbo_estimate(family, model, data, n_mc: int, rng: np.random.Generator) -> ElboEstimate:
    """Monte Carlo ELBO with closed-form entropy.

    Draws landing where the log density is ``-inf`` make the ELBO ``-inf``; if
    all of them do, :class:`DegenerateElbo` is raised.
    """
    if n_mc < 1:
        raise ValidationError("n_mc must be at least 1")
    target = _target(model, data)
    z = family.transform(rng.standard_normal((n_mc, family.dim)))
    lp = np.array([target.logp(zi) for zi in z])
    finite = np.isfinite(lp)
    if not finite.any():
        raise DegenerateElbo("every variational draw has zero posterior density")
    if not finite.all():
        return ElboEstimate(-np.inf, np.inf, n_mc)
    se = float(lp.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else float("nan")
    return ElboEstimate(float(lp.mean() + family.entropy()), se, n_mc)


def elbo_grad(family, model, data, eta) -> np.ndarray:
    """Reparametrization gradient of the ELBO in packed coordinates, averaged over ``eta``."""
    target = _target(model, data)
    eta = np.atleast_2d(eta)
    z = family.transform(eta)
    total = np.zeros(family.pack().size)
    for zi, ei in zip(z, eta):
        lp, g = target.logp_and_grad(zi)
        if not np.isfinite(lp):
            raise DegenerateElbo("variational draw outside the support")
        total += family.param_grad(ei, g)
    return total / eta.shape[0]


def elbo_fixed(family, model, data, eta) -> float:
    """ELBO with fixed standard-normal draws ``eta`` (common random numbers)."""
    target = _target(model, data)
    z = family.transform(np.atleast_2d(eta))
    return float(np.mean([target.logp(zi) for zi in z]) + family.entropy())


@dataclass
class AdviConfig:
    family: str = "meanfield"
    grad_samples: int = 1
    elbo_samples: int = 100
    eval_every: int = 100
    tol_rel_obj: float = 1e-4
    max_iter: int = 10000
    output_draws: int = 4000
    eta: Optional[float] = None
    probe_iter: int = 50
    patience: int = 2
    max_retries: int = 50
    seed: int = 0
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}")
        if self.grad_samples < 1 or self.elbo_samples < 2:
            raise ValidationError("grad_samples >= 1 and elbo_samples >= 2 required")


@dataclass
class AdviResult:
    family: object
    draws: DrawsMatrix
    elbo: ElboEstimate
    converged: bool
    n_iter: int
    eta: float
    trace: list = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.family.mu

    @property
    def cov(self) -> np.ndarray:
        return self.family.cov()


class _StepSize:
    """Per-coordinate step eta * k^(-1/2) / (1 + sqrt(s)), s an EMA of squared gradients.

    The scale uses ``s`` from before the current gradient so that the step is
    independent of it, which keeps the stochastic iteration unbiased.
    """

    def __init__(self, eta: float):
        self.eta = eta
        self.s = None
        self.k = 0

    def __call__(self, g):
        self.k += 1
        s_prev = g * g if self.s is None else self.s
        self.s = g * g if self.s is None else 0.1 * g * g + 0.9 * self.s
        return self.eta * self.k ** -0.5 / (1.0 + np.sqrt(s_prev)) * g


def _sgd(family, target, rng, eta, n_iter, cfg: AdviConfig, on_eval=None):
    """Run up to ``n_iter`` iterations; returns (last family, averaged family, iterations, stopped).

    The averaged family is the mean of the iterates over the second half of
    the evaluation windows seen so far.
    """
    x = family.pack()
    good = x.copy()
    failures = 0
    step = _StepSize(eta)
    acc = np.zeros_like(x)
    n_acc = 0
    windows = []

    def averaged():
        if not windows:
            return family.unpack(acc / n_acc) if n_acc else family
        return family.unpack(np.mean(windows[len(windows) // 2:], axis=0))

    for it in range(1, n_iter + 1):
        eta_draw = rng.standard_normal((cfg.grad_samples, family.dim))
        try:
            # overflowing draws are caught below as non-finite gradients
            with np.errstate(over="ignore", invalid="ignore"):
                g = elbo_grad(family, target, None, eta_draw)
        except DegenerateElbo:
            g = None
        if g is None or not np.all(np.isfinite(g)):
            # a draw fell outside the support: go back to the last good iterate, halve its scale, retry
            failures += 1
            if failures > cfg.max_retries:
                raise DegenerateElbo(f"variational draws left the support {failures} times in a row")
            family = family.unpack(good).shrink()
            x = family.pack()
            good = x.copy()
            continue
        failures = 0
        good = x.copy()
        x = x + step(g)
        if not np.all(np.isfinite(x)):
            raise DegenerateElbo("variational parameters diverged")
        family = family.unpack(x)
        acc += x
        n_acc += 1
        if it % cfg.eval_every == 0 and n_acc:
            windows.append(acc / n_acc)
            acc = np.zeros_like(x)
            n_acc = 0
            if on_eval is not None and on_eval(it, family, averaged()):
                return family, averaged(), it, True
    return family, averaged(), n_iter, False


def _safe_elbo(family, target, rng, n):
    try:
        return elbo_estimate(family, target, None, n, rng)
    except DegenerateElbo:
        return ElboEstimate(-np.inf, np.inf, n)


def _elbo_crn(family, target, eta) -> ElboEstimate:
    lp = np.array([target.logp(zi) for zi in family.transform(eta)])
    if not np.all(np.isfinite(lp)):
        return ElboEstimate(-np.inf, np.inf, eta.shape[0])
    return ElboEstimate(float(lp.mean() + family.entropy()), float(lp.std(ddof=1) / math.sqrt(lp.size)), lp.size)


def advi_fit(model, data=None, config: Optional[AdviConfig] = None, **kwargs) -> AdviResult:
    """Fit a mean-field or full-rank Gaussian approximation to the posterior.

    ``kwargs`` override fields of ``config``. When the relative ELBO change over
    an evaluation window never falls below ``tol_rel_obj`` the best iterate so
    far is returned and ``converged`` is False (with a warning).
    """
    cfg = config or AdviConfig()
    if kwargs:
        cfg = AdviConfig(**{**cfg.__dict__, **kwargs})
    target = _target(model, data)
    rng = stream(cfg.seed, "advi", cfg.family)
    cls = FAMILIES[cfg.family]

    if cfg.init is not None:
        mu0 = np.asarray(cfg.init, dtype=float)
    else:
        mu0, _, _ = find_initial_point(target, stream(cfg.seed, "advi-init"))

    # choose the base rate by a short probe from the same starting point
    if cfg.eta is not None:
        eta = float(cfg.eta)
    else:
        best = (-np.inf, 1.0)
        for cand in (1.0, 0.1, 0.01):
            try:
                fam, _, _, _ = _sgd(cls.init(mu0), target, stream(cfg.seed, "advi-probe", str(cand)), cand,
                                    cfg.probe_iter, cfg)
            except DegenerateElbo:
                continue
            val = _safe_elbo(fam, target, stream(cfg.seed, "advi-probe-elbo"), cfg.elbo_samples).value
            if val > best[0]:
                best = (val, cand)
        eta = best[1]

    trace = []
    state = {"prev": None, "calm": 0}
    # common random numbers, so successive ELBO values differ only through the parameters
    crn = stream(cfg.seed, "advi-elbo").standard_normal((cfg.elbo_samples, target.dim))

    def on_eval(it, fam, mean_fam):
        est = _elbo_crn(mean_fam, target, crn)
        trace.append((it, est.value))
        prev = state["prev"]
        state["prev"] = est.value
        if prev is None or not np.isfinite(est.value) or not np.isfinite(prev):
            return False
        rel = abs(est.value - prev) / max(abs(est.value), 1.0)
        state["calm"] = state["calm"] + 1 if rel < cfg.tol_rel_obj else 0
        return state["calm"] >= cfg.patience

    family, mean_family, n_iter, converged = _sgd(cls.init(mu0), target, rng, eta, cfg.max_iter, cfg, on_eval)
    if not converged:
        # the tail average is a better estimate than the argmax of a noisy ELBO trace
        warnings.warn("ADVI did not converge; returning the averaged final iterates", RuntimeWarning,
                      stacklevel=2)
    final = mean_family
    elbo = _safe_elbo(final, target, stream(cfg.seed, "advi-final"), max(cfg.elbo_samples, 1000))
    z = final.transform(stream(cfg.seed, "advi-draws").standard_normal((cfg.output_draws, final.dim)))
    theta = target.model.transform.constrain(z)[0]
    lp = np.array([target.logp(zi) for zi in z])
    draws = DrawsMatrix(tuple(target.param_names), theta[None], z[None], lp[None],
                        {"method": f"advi-{cfg.family}"})
    return AdviResult(final, draws, elbo, converged, n_iter, eta, trace)
