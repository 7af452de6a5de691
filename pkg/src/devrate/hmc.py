"""Static-trajectory Hamiltonian Monte Carlo with warmup adaptation.

Each iteration draws a Gaussian momentum, integrates ``L`` leapfrog steps
with ``L`` uniform on ``[1, L_max]`` and ``L_max * step ~ trajectory_length``
(in metric units), then applies a Metropolis correction. Warmup runs dual
averaging of the step size and estimates a diagonal inverse metric in
doubling windows.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .diagnostics import ess, mcse_mean, split_rhat
from .errors import DomainError, InitializationError, SamplingError, ValidationError
from .model import Model, Posterior
from .rng import stream


@dataclass
class HmcConfig:
    n_warmup: int = 1000
    n_draws: int = 1000
    n_chains: int = 4
    target_accept: float = 0.8
    max_leapfrog: int = 1024
    seed: int = 0
    trajectory_length: float = 1.5
    init_radius: float = 2.0
    init_tries: int = 100
    divergence_threshold: float = 1000.0
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("n_warmup", "n_draws", "n_chains", "max_leapfrog", "init_tries"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValidationError("target_accept must lie in (0, 1)")


@dataclass
class Adaptation:
    """Tuned step size and diagonal inverse metric of one chain."""

    step_size: float
    inv_metric: np.ndarray


@dataclass
class DrawsMatrix:
    """Post-warmup draws, ``(n_chains, n_draws, k)`` per representation."""

    names: tuple
    constrained: np.ndarray
    unconstrained: np.ndarray
    lp: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    adaptation: List[Adaptation] = field(default_factory=list)

    @property
    def n_chains(self) -> int:
        return self.constrained.shape[0]

    @property
    def n_draws(self) -> int:
        return self.constrained.shape[1]

    @property
    def values(self) -> np.ndarray:
        """``(n_draws, n_chains, k + 1)``: constrained parameters then log posterior."""
        v = np.concatenate([self.constrained, self.lp[..., None]], axis=-1)
        return np.swapaxes(v, 0, 1)

    def param(self, name: str) -> np.ndarray:
        return self.constrained[..., self.names.index(name)]

    def flat(self, unconstrained: bool = False) -> np.ndarray:
        x = self.unconstrained if unconstrained else self.constrained
        return x.reshape(-1, x.shape[-1])

    def flat_lp(self) -> np.ndarray:
        return self.lp.reshape(-1)

    def summary(self) -> dict:
        out = {}
        for j, n in enumerate(self.names):
            x = self.constrained[..., j]
            out[n] = {
                "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)),
                "q2.5": float(np.quantile(x, 0.025)),
                "q50": float(np.quantile(x, 0.5)),
                "q97.5": float(np.quantile(x, 0.975)),
                "ess": ess(x),
                "rhat": split_rhat(x),
                "mcse": mcse_mean(x),
            }
        return out

    def save(self, path) -> None:
        np.savez(
            path,
            names=np.array(self.names),
            constrained=self.constrained,
            unconstrained=self.unconstrained,
            lp=self.lp,
            step_size=np.array([a.step_size for a in self.adaptation]),
            inv_metric=np.array([a.inv_metric for a in self.adaptation]),
        )

    @classmethod
    def load(cls, path) -> "DrawsMatrix":
        with np.load(path) as f:
            adapt = [Adaptation(float(s), m) for s, m in zip(f["step_size"], f["inv_metric"])]
            return cls(tuple(str(n) for n in f["names"]), f["constrained"], f["unconstrained"], f["lp"],
                       {}, adapt)

    @classmethod
    def from_constrained(cls, model: Model, theta, n_chains: int = 1) -> "DrawsMatrix":
        """Wrap independent constrained draws (e.g. variational) as a draw matrix."""
        theta = np.asarray(theta, dtype=float)
        u, _ = model.transform.unconstrain(theta)
        s = theta.shape[0] // n_chains
        theta = theta[: s * n_chains].reshape(n_chains, s, -1)
        u = u[: s * n_chains].reshape(n_chains, s, -1)
        return cls(tuple(model.param_names), theta, u, np.full((n_chains, s), np.nan))


# --------------------------------------------------------------------------


def leapfrog(target, q, p, step, n_steps, inv_metric, grad=None):
    """Integrate ``n_steps`` leapfrog steps; returns ``(q, p, logp, grad)``.

    Stops early with ``logp = -inf`` when the trajectory leaves the support.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    if grad is None:
        lp, grad = target.logp_and_grad(q)
    for _ in range(n_steps):
        p = p + 0.5 * step * grad
        q = q + step * inv_metric * p
        lp, grad = target.logp_and_grad(q)
        if not np.isfinite(lp) or not np.all(np.isfinite(grad)):
            return q, p, -np.inf, grad
        p = p + 0.5 * step * grad
    return q, p, lp, grad


def hamiltonian(lp, p, inv_metric) -> float:
    return -lp + 0.5 * float(np.sum(p * p * inv_metric))


class _DualAveraging:
    def __init__(self, step, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_bar = 0.0
        self.m = 0

    def update(self, accept: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept)
        log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        mk = m ** (-self.kappa)
        self.log_bar = mk * log_step + (1.0 - mk) * self.log_bar
        return math.exp(log_step)

    @property
    def final(self) -> float:
        return math.exp(self.log_bar)


def _reasonable_step(target, q, lp, grad, inv_metric, rng, step=1.0):
    """Double or halve the step until one leapfrog step crosses acceptance 1/2."""
    p = rng.standard_normal(q.size) / np.sqrt(inv_metric)
    h0 = hamiltonian(lp, p, inv_metric)

    def log_accept(s):
        _, p1, lp1, _ = leapfrog(target, q, p, s, 1, inv_metric, grad)
        if not np.isfinite(lp1):
            return -np.inf
        return h0 - hamiltonian(lp1, p1, inv_metric)

    a = log_accept(step)
    direction = 1.0 if a > math.log(0.5) else -1.0
    for _ in range(100):
        new = step * (2.0 ** direction)
        a = log_accept(new)
        if direction > 0 and not a > math.log(0.5):
            break
        step = new
        if direction < 0 and a > math.log(0.5):
            break
    return min(max(step, 1e-10), 1e3)


def _windows(n_warmup: int):
    """(fast end, list of slow-window ends, total) for 15% / 75% / 10% splits."""
    if n_warmup < 20:
        return n_warmup, [], n_warmup
    init = max(1, int(round(0.15 * n_warmup)))
    term = max(1, int(round(0.10 * n_warmup)))
    slow = n_warmup - init - term
    base = max(5, slow // 31)
    ends = []
    start, width = init, base
    while start < init + slow:
        end = start + width
        if end + 2 * width > init + slow:
            end = init + slow
        ends.append(end)
        start = end
        width *= 2
    return init, ends, n_warmup


def _admissible(target, q):
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        return None
    lp, g = target.logp_and_grad(q)
    if np.isfinite(lp) and np.all(np.isfinite(g)):
        return q, lp, g
    return None


def _polish(target, q, lp, g, maxiter: int = 200):
    """A few quasi-Newton steps uphill; keeps the start if they do not help."""

    def f(u):
        val, grad = target.logp_and_grad(u)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(u)
        return -val, -grad

    with np.errstate(all="ignore"):
        res = minimize(f, q, jac=True, method="BFGS", options={"maxiter": maxiter})
    found = _admissible(target, res.x)
    if found is not None and found[1] > lp:
        return found
    return q, lp, g


def find_initial_point(target, rng, tries: int = 100, radius: float = 2.0, prior_tries: int = 4000):
    """A point with finite log density and gradient on the unconstrained scale.

    Curve models with data start from a randomized data-informed guess
    (thresholds just outside the observed temperatures, scale matched to the
    largest rate) moved a short way uphill by BFGS. Otherwise, or if that fails, ``uniform(-radius, radius)``
    points are tried, then exact prior draws.
    """
    model = getattr(target, "model", None)
    data = getattr(target, "data", None)
    if data is not None and hasattr(model, "initial_guess"):
        for _ in range(10):
            try:
                found = _admissible(target, model.unconstrain(model.initial_guess(data, rng)))
            except (DomainError, ValueError, FloatingPointError):
                found = None
            if found is not None:
                return _polish(target, *found)
    for _ in range(tries):
        found = _admissible(target, rng.uniform(-radius, radius, target.dim))
        if found is not None:
            return found
    if model is not None and hasattr(model, "sample_prior"):
        try:
            theta = model.sample_prior(rng, prior_tries)
        except ValidationError:
            theta = np.empty((0, target.dim))
        for th in theta:
            found = _admissible(target, model.unconstrain(th))
            if found is not None:
                return found
    raise InitializationError(
        f"no finite log density in {tries} uniform(-{radius}, {radius}) tries or {prior_tries} prior draws"
    )


def _initial_point(target, cfg: HmcConfig, rng, init=None):
    if init is not None:
        q = np.asarray(init, dtype=float)
        lp, g = target.logp_and_grad(q)
        if np.isfinite(lp) and np.all(np.isfinite(g)):
            return q, lp, g
    return find_initial_point(target, rng, cfg.init_tries, cfg.init_radius)


def _run_chain(target, cfg: HmcConfig, chain: int, init=None, adaptation: Optional[Adaptation] = None,
               n_warmup: Optional[int] = None):
    rng = stream(cfg.seed, "chain", chain)
    q, lp, grad = _initial_point(target, cfg, rng, init)
    d = target.dim
    n_warmup = cfg.n_warmup if n_warmup is None else n_warmup
    if adaptation is not None:
        inv_metric = np.array(adaptation.inv_metric, dtype=float)
        step = float(adaptation.step_size)
    else:
        inv_metric = np.ones(d)
        step = _reasonable_step(target, q, lp, grad, inv_metric, rng)
    da = _DualAveraging(step, cfg.target_accept)
    fast_end, slow_ends, _ = _windows(n_warmup)
    window_draws: list = []

    n_total = n_warmup + cfg.n_draws
    draws_u = np.empty((cfg.n_draws, d))
    lps = np.empty(cfg.n_draws)
    accept_stats = np.empty(cfg.n_draws)
    n_steps_used = np.empty(cfg.n_draws, dtype=int)
    div_warm = 0
    div_samp = 0
    for it in range(n_total):
        warm = it < n_warmup
        l_max = int(min(cfg.max_leapfrog, max(1, math.ceil(cfg.trajectory_length / step))))
        n_steps = int(rng.integers(1, l_max + 1))
        p0 = rng.standard_normal(d) / np.sqrt(inv_metric)
        h0 = hamiltonian(lp, p0, inv_metric)
        q1, p1, lp1, g1 = leapfrog(target, q, p0, step, n_steps, inv_metric, grad)
        if np.isfinite(lp1):
            dh = hamiltonian(lp1, p1, inv_metric) - h0
        else:
            dh = np.inf
        divergent = not (dh <= cfg.divergence_threshold)
        accept = 0.0 if divergent else min(1.0, math.exp(min(0.0, -dh)))
        if not divergent and rng.random() < accept:
            q, lp, grad = q1, lp1, g1
        if warm:
            div_warm += divergent
            step = da.update(accept)
            if slow_ends and fast_end <= it < slow_ends[-1]:
                window_draws.append(q.copy())
                if it + 1 in slow_ends:
                    x = np.array(window_draws)
                    n = x.shape[0]
                    if n > 2:
                        var = x.var(axis=0, ddof=1)
                        inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                    window_draws = []
                    step = _reasonable_step(target, q, lp, grad, inv_metric, rng, step)
                    da = _DualAveraging(step, cfg.target_accept)
            if it == n_warmup - 1:
                step = da.final
        else:
            k = it - n_warmup
            draws_u[k] = q
            lps[k] = lp
            accept_stats[k] = accept
            n_steps_used[k] = n_steps
            div_samp += divergent
    if n_warmup > 0 and div_warm == n_warmup:
        raise SamplingError(f"chain {chain}: every warmup transition diverged")
    info = {
        "divergences": int(div_samp),
        "warmup_divergences": int(div_warm),
        "step_size": float(step),
        "accept_stat": float(accept_stats.mean()),
        "mean_leapfrog": float(n_steps_used.mean()),
    }
    return draws_u, lps, Adaptation(step, inv_metric), info


def _chain_job(args):
    target, cfg, chain, init, adaptation, n_warmup = args
    return _run_chain(target, cfg, chain, init, adaptation, n_warmup)


def hmc_sample(model, data=None, config: Optional[HmcConfig] = None, *, temperature: float = 1.0,
               inits: Optional[Sequence] = None, adaptation: Optional[Sequence[Adaptation]] = None,
               n_warmup: Optional[int] = None) -> DrawsMatrix:
    """Run ``config.n_chains`` independent chains on ``model``'s posterior.

    ``model`` may also be a ready :class:`Posterior`. ``inits`` and
    ``adaptation`` (one per chain) warm-start the chains, e.g. for refits.
    """
    cfg = config or HmcConfig()
    target = model if isinstance(model, Posterior) else Posterior(model, data, temperature)
    jobs = [
        (target, cfg, c,
         None if inits is None else inits[c % len(inits)],
         None if adaptation is None else adaptation[c % len(adaptation)],
         n_warmup)
        for c in range(cfg.n_chains)
    ]
    if cfg.n_jobs > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            results = list(ex.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    u = np.stack([r[0] for r in results])
    lp = np.stack([r[1] for r in results])
    theta = target.model.transform.constrain(u)[0]
    infos = [r[3] for r in results]
    diagnostics = {
        "divergences": int(sum(i["divergences"] for i in infos)),
        "warmup_divergences": int(sum(i["warmup_divergences"] for i in infos)),
        "step_size": [i["step_size"] for i in infos],
        "accept_stat": [i["accept_stat"] for i in infos],
        "mean_leapfrog": [i["mean_leapfrog"] for i in infos],
        "config": asdict(cfg),
        "temperature": target.temperature,
    }
    names = tuple(target.param_names)
    if "zeta" in names and target.temperature == 1.0:
        low = float(np.mean(theta[..., names.index("zeta")] <= 2.0))
        diagnostics["zeta_infinite_variance_fraction"] = low
        if low > 0.025:
            warnings.warn(f"{low:.0%} of the zeta draws are at most 2, where the Inverse-Gamma variance is infinite",
                          RuntimeWarning, stacklevel=2)
    return DrawsMatrix(names, theta, u, lp, diagnostics, [r[2] for r in results])


def deviance_summary(model: Model, data, draws) -> dict:
    """Posterior mean and central 95% interval of ``-2 log p(y | theta)``."""
    theta = draws.flat() if isinstance(draws, DrawsMatrix) else np.atleast_2d(np.asarray(draws, dtype=float))
    if theta.shape[0] == 0:
        raise ValidationError("no draws")
    dev = -2.0 * model.loglik(theta, data)
    return {
        "mean": float(dev.mean()),
        "q2.5": float(np.quantile(dev, 0.025)),
        "q97.5": float(np.quantile(dev, 0.975)),
        "draws": dev,
    }
