"""Observation likelihoods, prior distributions and synthetic data.

The three observation families share one calling convention: the mean
curve ``r`` and observations ``y`` are arrays broadcast against each other,
observation parameters are passed as separate (broadcastable) arrays.

Gamma priors are shape-rate, as in the usual probabilistic-programming
convention ``Gamma(shape, rate)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Mapping, Tuple

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln, log_expit, psi

from .errors import DomainError, InvalidScale, UnsupportedZero, ValidationError
from .transforms import Bound

# --------------------------------------------------------------------------
# prior distributions


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError(f"Uniform needs lo < hi, got ({self.lo}, {self.hi})")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > self.lo) & (x < self.hi), -math.log(self.hi - self.lo), -np.inf)

    def dlogpdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def logpdf_grad1(self, x: float):
        if self.lo < x < self.hi:
            return -math.log(self.hi - self.lo), 0.0
        return -math.inf, 0.0

    @property
    def dist(self):
        return stats.uniform(self.lo, self.hi - self.lo)


@dataclass(frozen=True)
class Gamma:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValidationError(f"Gamma hyperparameters must be positive, got {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * math.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x
        return np.where(x > 0, out, -np.inf)

    def dlogpdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.shape - 1.0) / x - self.rate

    def logpdf_grad1(self, x: float):
        if not x > 0:
            return -math.inf, 0.0
        a, b = self.shape, self.rate
        return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x, (a - 1.0) / x - b

    @property
    def dist(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValidationError(f"InverseGamma hyperparameters must be positive, got {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * math.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x
        return np.where(x > 0, out, -np.inf)

    def dlogpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -(self.shape + 1.0) / x + self.scale / (x * x)

    def logpdf_grad1(self, x: float):
        if not x > 0:
            return -math.inf, 0.0
        a, b = self.shape, self.scale
        return (a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x,
                -(a + 1.0) / x + b / (x * x))

    @property
    def dist(self):
        return stats.invgamma(self.shape, scale=self.scale)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def dlogpdf(self, x):
        return -(np.asarray(x, dtype=float) - self.mean) / self.sd**2

    def logpdf_grad1(self, x: float):
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi), -z / self.sd

    @property
    def dist(self):
        return stats.norm(self.mean, self.sd)


Prior = Uniform | Gamma | InverseGamma | Normal


def parse_prior(text: str) -> Prior:
    """``"gamma(0.1, 0.01)"``, ``"uniform(0,1)"``, ``"invgamma(1e-3,1e-3)"``, ``"normal(0,1)"``."""
    name, _, rest = text.strip().partition("(")
    if not rest.endswith(")"):
        raise ValidationError(f"cannot parse prior {text!r}")
    try:
        args = [float(v) for v in rest[:-1].split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse prior {text!r}") from None
    kinds = {"uniform": Uniform, "gamma": Gamma, "invgamma": InverseGamma,
             "inversegamma": InverseGamma, "normal": Normal}
    try:
        return kinds[name.strip().lower()](*args)
    except (KeyError, TypeError):
        raise ValidationError(f"cannot parse prior {text!r}") from None


def format_prior(p: Prior) -> str:
    label = {Uniform: "uniform", Gamma: "gamma", InverseGamma: "invgamma", Normal: "normal"}[type(p)]
    return f"{label}({', '.join(repr(float(getattr(p, f))) for f in p.__dataclass_fields__)})"


# Table of default priors, keyed by parameter name.
CURVE_PRIORS: Dict[str, Dict[str, Prior]] = {
    "bieri": {"alpha": Uniform(0, 1), "beta": Gamma(0.2, 0.1), "t_m1": Gamma(0.1, 0.01), "t_m2": Gamma(0.1, 0.01)},
    "briere": {"a_tilde": Gamma(0.1, 0.01), "t_min": Gamma(0.01, 0.01), "t_max": Gamma(0.01, 0.001)},
    "analytis": {"a_tilde": Gamma(0.1, 0.01), "n": Gamma(0.1, 0.1), "m": Gamma(0.1, 0.1),
                 "t_min": Gamma(0.01, 0.01), "t_max": Gamma(0.01, 0.001)},
    "lactin": {"l": Gamma(0.1, 0.1), "del": Uniform(0, 1), "a": Gamma(0.01, 0.001), "rho": Uniform(0, 1)},
}
OBS_PRIORS: Dict[str, Prior] = {"sigma": InverseGamma(1e-3, 1e-3), "zeta": Gamma(0.1, 0.01)}


@dataclass(frozen=True)
class PriorSet:
    priors: Mapping[str, Prior]

    def __getitem__(self, name):
        return self.priors[name]

    def names(self):
        return tuple(self.priors)

    def with_overrides(self, overrides: Mapping[str, Prior]) -> "PriorSet":
        unknown = set(overrides) - set(self.priors)
        if unknown:
            raise ValidationError(f"prior overrides for unknown parameters: {sorted(unknown)}")
        return PriorSet({**self.priors, **overrides})


def default_priors(curve_name: str, obs_name: str) -> PriorSet:
    obs = OBS_FAMILIES[obs_name]
    p = dict(CURVE_PRIORS[curve_name])
    for name in obs.param_names:
        p[name] = OBS_PRIORS[name]
    return PriorSet(p)


# --------------------------------------------------------------------------
# observation families


def zero_prob(r, c: float = 100.0, k: float = 0.005):
    """Probability of an exact zero, ``1 / (exp(c (r - k)) + 1)``."""
    return expit(-c * (np.asarray(r, dtype=float) - k))


def _invgamma_terms(r, y, zeta):
    """Inverse-gamma log density with mean ``r``; -inf where the scale is not positive."""
    beta = (zeta - 1.0) * r
    ok = (beta > 0) & (y > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lb = np.log(np.where(ok, beta, 1.0))
        ly = np.log(np.where(y > 0, y, 1.0))
        out = zeta * lb - gammaln(zeta) - (zeta + 1.0) * ly - beta / np.where(y > 0, y, 1.0)
    return np.where(ok, out, -np.inf)


def _zeta_guess(r, y, rng):
    """Shape from the squared coefficient of variation of ``y / r`` over positive pairs."""
    r, y = np.asarray(r, dtype=float), np.asarray(y, dtype=float)
    ok = (r > 0) & (y > 0)
    v = float(np.mean((y[ok] / r[ok] - 1.0) ** 2)) if np.any(ok) else 1.0
    return float(np.clip(2.0 + 1.0 / max(v, 1e-6), 2.5, 1e4)) * rng.uniform(0.8, 1.25)


class ObsModel:
    name: ClassVar[str]
    param_names: ClassVar[Tuple[str, ...]]
    allows_zero: ClassVar[bool]

    def bounds(self):
        raise NotImplementedError

    def initial_guess(self, r, y, rng) -> np.ndarray:
        """Rough observation parameters given curve values ``r`` at the data."""
        raise NotImplementedError

    def pointwise(self, r, y, *phi):
        raise NotImplementedError

    def pointwise_and_grad(self, r, y, *phi):
        """Pointwise log-likelihood, its derivative in ``r`` and in each obs parameter."""
        raise NotImplementedError

    def simulate(self, r, rng, *phi):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


@dataclass(frozen=True, repr=False)
class Gaussian(ObsModel):
    name: ClassVar[str] = "gaussian"
    param_names: ClassVar[Tuple[str, ...]] = ("sigma",)
    allows_zero: ClassVar[bool] = True

    def bounds(self):
        return [Bound(0.0, None)]

    def initial_guess(self, r, y, rng):
        rms = float(np.sqrt(np.mean((np.asarray(y) - np.asarray(r)) ** 2)))
        return np.array([max(rms, 1e-3) * rng.uniform(0.8, 1.25)])

    def pointwise(self, r, y, sigma):
        z = (y - r) / sigma
        return -0.5 * z * z - np.log(sigma) - 0.5 * math.log(2 * math.pi)

    def pointwise_and_grad(self, r, y, sigma):
        res = y - r
        s2 = sigma * sigma
        ll = -0.5 * res * res / s2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)
        return ll, res / s2, [(-1.0 + res * res / s2) / sigma]

    def simulate(self, r, rng, sigma):
        r = np.asarray(r, dtype=float)
        return r + sigma * rng.standard_normal(r.shape)


@dataclass(frozen=True, repr=False)
class InvGamma(ObsModel):
    name: ClassVar[str] = "invgamma"
    param_names: ClassVar[Tuple[str, ...]] = ("zeta",)
    allows_zero: ClassVar[bool] = False

    def bounds(self):
        return [Bound(1.0, None)]

    def initial_guess(self, r, y, rng):
        return np.array([_zeta_guess(r, y, rng)])

    def pointwise(self, r, y, zeta):
        return _invgamma_terms(r, y, zeta)

    def pointwise_and_grad(self, r, y, zeta):
        ll = _invgamma_terms(r, y, zeta)
        beta = (zeta - 1.0) * r
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = zeta / r - (zeta - 1.0) / y
            dz = np.log(beta) + zeta / (zeta - 1.0) - psi(zeta) - np.log(y) - r / y
        return ll, dr, [dz]

    def simulate(self, r, rng, zeta):
        r = np.asarray(r, dtype=float)
        beta = np.broadcast_to((zeta - 1.0) * r, r.shape)
        g = rng.standard_gamma(np.broadcast_to(zeta, r.shape))
        # a vanishing scale is the point mass at zero
        return np.where(beta > 0, np.maximum(beta, 0.0) / g, 0.0)


@dataclass(frozen=True, repr=False)
class ZeroInflatedInvGamma(ObsModel):
    """Zero with probability ``zero_prob(r, c, k)``, inverse-gamma otherwise."""

    name: ClassVar[str] = "ziig"
    param_names: ClassVar[Tuple[str, ...]] = ("zeta",)
    allows_zero: ClassVar[bool] = True
    c: float = 100.0
    k: float = 0.005

    def __post_init__(self):
        if not (self.c > 0 and self.k > 0):
            raise ValidationError("link constants c and k must be positive")

    def bounds(self):
        return [Bound(1.0, None)]

    def initial_guess(self, r, y, rng):
        return np.array([_zeta_guess(r, y, rng)])

    def pointwise(self, r, y, zeta):
        s = self.c * (r - self.k)
        zero = y == 0
        return np.where(zero, log_expit(-s), log_expit(s) + _invgamma_terms(r, y, zeta))

    def pointwise_and_grad(self, r, y, zeta):
        s = self.c * (r - self.k)
        zero = y == 0
        ig = _invgamma_terms(r, y, zeta)
        ll = np.where(zero, log_expit(-s), log_expit(s) + ig)
        p = expit(-s)
        beta = (zeta - 1.0) * r
        ys = np.where(zero, 1.0, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr_ig = zeta / r - (zeta - 1.0) / ys
            dz_ig = np.log(beta) + zeta / (zeta - 1.0) - psi(zeta) - np.log(ys) - r / ys
        dr = np.where(zero, -self.c * (1.0 - p), self.c * p + dr_ig)
        dz = np.where(zero, 0.0, dz_ig)
        return ll, dr, [dz]

    def simulate(self, r, rng, zeta):
        r = np.asarray(r, dtype=float)
        nonzero = rng.random(r.shape) >= zero_prob(r, self.c, self.k)
        y = InvGamma().simulate(r, rng, zeta)
        return np.where(nonzero, y, 0.0)


OBS_FAMILIES = {"gaussian": Gaussian, "invgamma": InvGamma, "ziig": ZeroInflatedInvGamma}


def get_obs(obs, **kwargs) -> ObsModel:
    if isinstance(obs, ObsModel):
        return obs
    try:
        return OBS_FAMILIES[str(obs).lower()](**kwargs)
    except KeyError:
        raise ValidationError(f"unknown observation family {obs!r}; choose from {sorted(OBS_FAMILIES)}") from None


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    """Paired temperatures (deg C) and developmental rates (day^-1)."""

    temperature: np.ndarray
    rate: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.temperature, dtype=float).ravel()
        y = np.array(self.rate, dtype=float).ravel()
        if t.shape != y.shape:
            raise ValidationError("temperature and rate must have the same length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValidationError("temperatures and rates must be finite")
        t.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "temperature", t)
        object.__setattr__(self, "rate", y)

    def __len__(self):
        return self.temperature.size

    @property
    def n(self) -> int:
        return self.temperature.size

    def subset(self, mask) -> "Dataset":
        return Dataset(self.temperature[mask], self.rate[mask])

    def drop(self, index: int) -> "Dataset":
        keep = np.ones(self.n, dtype=bool)
        keep[index] = False
        return self.subset(keep)

    def check_range(self) -> None:
        bad = (self.rate < 0) | (self.rate > 1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"rate {self.rate[i]} at T = {self.temperature[i]} lies outside [0, 1]")

    @property
    def zeros(self) -> dict:
        z = self.rate == 0
        return {"count": int(z.sum()), "temperatures": sorted(set(self.temperature[z].tolist()))}


def log_likelihood(obs, curve, curve_params, dataset: Dataset, obs_params) -> float:
    """Total log-likelihood (nats) with strict validation.

    ``obs_params`` is a sequence or mapping holding sigma or zeta.
    """
    from .curves import _as_array, get_curve

    obs = get_obs(obs)
    c = get_curve(curve)
    theta = _as_array(c, curve_params)
    if isinstance(obs_params, Mapping):
        phi = [float(obs_params[n]) for n in obs.param_names]
    else:
        phi = [float(v) for v in np.atleast_1d(obs_params)]
    if len(phi) != len(obs.param_names):
        raise ValidationError(f"{obs.name} needs parameters {obs.param_names}")
    lo = obs.bounds()[0].lower
    if not phi[0] > lo:
        raise DomainError(f"{obs.param_names[0]} must exceed {lo}")
    y = dataset.rate
    r = c.rate(theta, dataset.temperature)
    if obs.name in ("invgamma", "ziig"):
        zero = y == 0
        if obs.name == "invgamma" and np.any(zero):
            raise UnsupportedZero(dataset.temperature[zero])
        scale = (phi[0] - 1.0) * r
        bad = (~zero) & ~(scale > 0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InvalidScale(dataset.temperature[i], scale[i])
    return float(np.sum(obs.pointwise(r, y, *phi)))


def simulate_dataset(model, true_params, temperatures, n_per_temp, rng) -> Dataset:
    """Draw rates from the observation model at each temperature.

    ``true_params`` is the full constrained vector (curve params, then obs params).
    """
    theta = np.asarray(true_params, dtype=float)
    temps = np.repeat(np.asarray(temperatures, dtype=float), n_per_temp)
    y = model.simulate(theta, temps, rng)
    return Dataset(temps, y)
