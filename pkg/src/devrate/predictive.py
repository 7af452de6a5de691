"""Per-draw thermal landmarks and posterior predictive bands."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .curves import Bieri
from .hmc import DrawsMatrix
from .obs_models import ZeroInflatedInvGamma, zero_prob
from .rng import stream

QUANTITIES = ("T_min", "T_opt", "T_max")


def _flat(model, draws) -> np.ndarray:
    if isinstance(draws, DrawsMatrix):
        return draws.flat()
    return np.atleast_2d(np.asarray(draws, dtype=float))


def derived_draws(model, draws, max_draws: Optional[int] = None) -> dict:
    """T_min, T_opt, T_max (and T_inf for Lactin) for every posterior draw.

    Landmarks that do not exist for a draw are NaN. ``max_draws`` thins the
    draws evenly to bound the cost of root finding.
    """
    theta = _flat(model, draws)
    if max_draws is not None and theta.shape[0] > max_draws:
        theta = theta[np.linspace(0, theta.shape[0] - 1, max_draws).round().astype(int)]
    curve = model.curve
    kc = curve.dim
    rows = [curve.derived(th[:kc]) for th in theta]
    out = {k: np.array([r[k] for r in rows], dtype=float) for k in rows[0]}
    if isinstance(curve, Bieri):
        out["T_opt_derivative"] = np.array([curve.t_opt_derivative(th[:kc]) for th in theta])
    return out


def summarize(x) -> dict:
    """Mean and central 95% interval, or NA when the quantity is missing."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return {"mean": None, "q2.5": None, "q97.5": None, "n": 0}
    return {"mean": float(x.mean()), "q2.5": float(np.quantile(x, 0.025)),
            "q97.5": float(np.quantile(x, 0.975)), "n": int(x.size)}


def posterior_predictive(model, draws, grid, seed: int = 0, max_draws: int = 4000) -> dict:
    """Rate-curve and predictive bands on a temperature grid.

    Returns per-temperature posterior mean and 95% band of ``r(T)``, the 95%
    predictive interval of a new observation and, for the zero-inflated
    model, the posterior mean probability of non-zero development ``1 - p``.
    """
    theta = _flat(model, draws)
    if theta.shape[0] > max_draws:
        theta = theta[np.linspace(0, theta.shape[0] - 1, max_draws).round().astype(int)]
    grid = np.asarray(grid, dtype=float)
    r = np.asarray(model.rate(theta, grid), dtype=float)  # (S, G)
    rng = stream(seed, "ppc")
    y = np.stack([model.simulate(th, grid, rng) for th in theta])
    out = {
        "temperature": grid,
        "rate_mean": r.mean(axis=0),
        "rate_q2.5": np.quantile(r, 0.025, axis=0),
        "rate_q97.5": np.quantile(r, 0.975, axis=0),
        "pred_q2.5": np.quantile(y, 0.025, axis=0),
        "pred_q97.5": np.quantile(y, 0.975, axis=0),
    }
    if isinstance(model.obs, ZeroInflatedInvGamma):
        out["prob_nonzero"] = (1.0 - zero_prob(r, model.obs.c, model.obs.k)).mean(axis=0)
    return out
