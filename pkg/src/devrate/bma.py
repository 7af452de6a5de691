"""Model weights and model-averaged summaries.

Weights come from information criteria (softmax of ``-score / 2``) or from
log evidences combined with a prior over models. ELBO-based weights can be
built the same way but are for diagnostics only: the ELBO is a lower bound,
not an estimate of the evidence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MissingQuantity, ValidationError
from .rng import stream

SOURCES = ("aic", "bic", "dic", "waic", "loocv", "evidence", "elbo_mf", "elbo_fr")
DIAGNOSTIC_ONLY = ("elbo_mf", "elbo_fr")


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    source: str
    names: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be nonnegative and sum to one")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown weight source {self.source!r}")
        object.__setattr__(self, "weights", w)

    @property
    def diagnostic_only(self) -> bool:
        return self.source in DIAGNOSTIC_ONLY

    def as_dict(self) -> dict:
        names = self.names or tuple(str(i) for i in range(self.weights.size))
        return dict(zip(names, self.weights.tolist()))


def _normalize(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max())
    w = w / w.sum()
    # exact renormalization to keep the sum within one ulp-scale of 1
    return w / np.sum(w)


def ic_weights(scores: Sequence[float], source: str = "bic", names: Sequence[str] = ()) -> WeightVector:
    """``w_i`` proportional to ``exp(-0.5 * score_i)``, computed after subtracting the minimum."""
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        raise ValidationError("need at least two models")
    if not np.all(np.isfinite(s)):
        raise ValidationError(f"non-finite criterion values: {s}")
    return WeightVector(_normalize(-0.5 * (s - s.min())), source, tuple(names))


def evidence_weights(log_z: Sequence[float], prior: Optional[Sequence[float]] = None, names: Sequence[str] = (),
                     source: str = "evidence") -> WeightVector:
    """Posterior model probabilities from log evidences and a prior over models (uniform by default)."""
    lz = np.asarray(log_z, dtype=float)
    if not np.all(np.isfinite(lz)):
        raise ValidationError(f"non-finite log evidence: {lz}")
    if prior is None:
        log_prior = np.zeros_like(lz)
    else:
        p = np.asarray(prior, dtype=float)
        if p.shape != lz.shape or np.any(p < 0) or not p.sum() > 0:
            raise ValidationError("model prior must be nonnegative, one entry per model")
        with np.errstate(divide="ignore"):
            log_prior = np.log(p / p.sum())
    if source in DIAGNOSTIC_ONLY:
        warnings.warn("ELBO weights are diagnostic only", UserWarning, stacklevel=2)
    return WeightVector(_normalize(lz + log_prior), source, tuple(names))


def _allocate(w: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder split of ``n`` draws according to weights ``w``."""
    raw = w * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    if short > 0:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return counts


def bma_summary(weights, per_model: Sequence[Mapping[str, np.ndarray]], quantities: Sequence[str] = None,
                names: Sequence[str] = (), n_out: Optional[int] = None, seed: int = 0, min_draws: int = 1000,
                threshold: float = 1e-6) -> dict:
    """Mixture summary of each quantity across models.

    Each model contributes ``round(w_i * n_out)`` draws resampled from its own
    draws (largest-remainder rounding). Models with weight at most
    ``threshold`` are ignored; if a single model remains its draws are used
    unchanged. Returns mean and 2.5% / 97.5% quantiles per quantity.
    """
    w = np.asarray(weights.weights if isinstance(weights, WeightVector) else weights, dtype=float)
    if w.size != len(per_model):
        raise ValidationError("one weight per model required")
    names = tuple(names) or (weights.names if isinstance(weights, WeightVector) and weights.names else
                             tuple(f"model{i}" for i in range(w.size)))
    if quantities is None:
        quantities = sorted(set().union(*[set(m) for m in per_model]))
    active = np.flatnonzero(w > threshold)
    rng = stream(seed, "bma")
    out = {}
    for q in quantities:
        pools = []
        for i in active:
            x = per_model[i].get(q)
            x = None if x is None else np.asarray(x, dtype=float).ravel()
            if x is None or not np.any(np.isfinite(x)):
                raise MissingQuantity(names[i], q)
            if np.any(~np.isfinite(x)):
                warnings.warn(f"{names[i]}: dropping {np.sum(~np.isfinite(x))} non-finite {q} draws",
                              RuntimeWarning, stacklevel=2)
                x = x[np.isfinite(x)]
            if x.size < min_draws:
                raise ValidationError(f"{names[i]} supplies {x.size} draws of {q}; at least {min_draws} needed")
            pools.append(x)
        if len(pools) == 1:
            mix = pools[0]
        else:
            wa = w[active] / w[active].sum()
            n = n_out or max(p.size for p in pools)
            counts = _allocate(wa, n)
            mix = np.concatenate([p[rng.integers(0, p.size, c)] for p, c in zip(pools, counts)])
        out[q] = {"mean": float(mix.mean()), "q2.5": float(np.quantile(mix, 0.025)),
                  "q97.5": float(np.quantile(mix, 0.975)), "n": int(mix.size)}
    return out
