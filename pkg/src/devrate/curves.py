"""Developmental-rate curves r(T; theta) and their thermal landmarks.

Parameters are always handled in the coordinates the priors are placed on:

========  ==========================================
Bieri     alpha, beta, t_m1, t_m2
Briere    a_tilde (= -log alpha), t_min, t_max
Analytis  a_tilde, n, m, t_min, t_max
Lactin    l (= -lambda), del (= 1/Delta), a, rho
========  ==========================================

For Lactin, ``a = exp((rho - del) * T_m)``, which turns the rate into
``-l + exp(rho*T) - a*exp(del*T)``.

Every :class:`Curve` works on plain arrays of shape ``(..., k)`` so that
whole draw matrices can be evaluated at once; the typed ``*Params`` classes
are a validated front door for single parameter sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import ClassVar, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoRoot
from .transforms import Bound, BoxTransform

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ROOT_XTOL = 1e-12
ROOT_MAXITER = 200
DEFAULT_BRACKET = (-50.0, 80.0)
LACTIN_SERIES_TOL = 1e-8


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-10, maxiter: int = 500) -> float:
    """Argmax of a unimodal ``f`` on ``[lo, hi]`` by golden-section search."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def _log_ratio(x):
    """log(x) / (x - 1), continuous at x = 1."""
    x = float(x)
    dx = x - 1.0
    if abs(dx) < LACTIN_SERIES_TOL:
        return 1.0 - dx / 2.0 + dx * dx / 3.0
    return math.log(x) / dx


def _columns(theta, t):
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    cols = [theta[..., j, None] for j in range(theta.shape[-1])]
    return cols, np.atleast_1d(t), t.ndim == 0


def _find_root(f, lo, hi, step, grow_lo, grow_hi, max_expand=40):
    """Brent root of ``f`` with ``f(lo) < 0 < f(hi)`` or the reverse.

    ``grow_lo``/``grow_hi`` allow the corresponding end to move outward (by a
    doubling step) until the sign changes; the caller guarantees monotone
    tails in that direction.
    """
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    width = step
    for _ in range(max_expand):
        if np.sign(fa) != np.sign(fb) or fa == 0 or fb == 0:
            break
        if grow_lo:
            a -= width
            fa = f(a)
        elif grow_hi:
            b += width
            fb = f(b)
        else:
            break
        width *= 2.0
    if not (np.isfinite(fa) and np.isfinite(fb)) or (np.sign(fa) == np.sign(fb) and fa != 0 and fb != 0):
        raise NoRoot((a, b))
    if fa == 0:
        return a
    if fb == 0:
        return b
    return brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=ROOT_MAXITER)


def _support_span(t, y, rng):
    """Randomized thresholds just outside the temperatures with positive rates."""
    t = np.asarray(t, dtype=float)
    tp = t[np.asarray(y) > 0] if np.any(np.asarray(y) > 0) else t
    lo, hi = float(tp.min()), float(tp.max())
    width = max(hi - lo, 1.0)
    return lo - width * rng.uniform(0.05, 0.5), hi + width * rng.uniform(0.02, 0.3)


def _peak(t, y):
    y = np.asarray(y, dtype=float)
    return float(np.asarray(t, dtype=float)[np.argmax(y)]), max(float(y.max()), 1e-6)


class Curve:
    """Base class; subclasses define the rate function and its landmarks."""

    name: ClassVar[str]
    param_names: ClassVar[Tuple[str, ...]]

    @property
    def dim(self) -> int:
        return len(self.param_names)

    def bounds(self) -> list[Bound]:
        raise NotImplementedError

    @property
    def transform(self) -> BoxTransform:
        return BoxTransform(self.param_names, self.bounds())

    def rate(self, theta, t):
        raise NotImplementedError

    def rate_and_grad(self, theta, t):
        """Rate at temperatures ``t`` and its gradient, shape ``(n, k)``."""
        raise NotImplementedError

    def t_opt(self, theta) -> float:
        raise NotImplementedError

    def initial_guess(self, t, y, rng) -> np.ndarray:
        """A rough, randomized parameter set whose curve is positive wherever ``y > 0``."""
        raise NotImplementedError

    def thresholds(self, theta, bracket=None) -> Tuple[Optional[float], float]:
        raise NotImplementedError

    def t_opt_numeric(self, theta, bracket=None) -> float:
        raise NotImplementedError

    def valid(self, theta) -> bool:
        return bool(self.transform.in_support(theta))

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DomainError(f"{self.name} expects {self.dim} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"non-finite {self.name} parameters: {theta}")
        return theta

    def derived(self, theta, bracket=None) -> dict:
        """T_min, T_opt, T_max (NaN where a landmark does not exist)."""
        try:
            t_min, t_max = self.thresholds(theta, bracket)
        except NoRoot:
            return {"T_min": np.nan, "T_opt": np.nan, "T_max": np.nan}
        return {
            "T_min": np.nan if t_min is None else t_min,
            "T_opt": self.t_opt(theta),
            "T_max": t_max,
        }

    def __repr__(self):
        return f"{type(self).__name__}()"


@dataclass(frozen=True, repr=False)
class Bieri(Curve):
    name: ClassVar[str] = "bieri"
    param_names: ClassVar[Tuple[str, ...]] = ("alpha", "beta", "t_m1", "t_m2")

    def bounds(self):
        return [Bound(0.0, 1.0), Bound(1.0, None), Bound(0.0, None), Bound("t_m1", None)]

    def initial_guess(self, t, y, rng):
        # the decay term must be negligible below the peak, so try steeper bases
        lo, hi = _support_span(t, y, rng)
        lo = max(lo, 0.0)
        t = np.asarray(t, dtype=float)
        tp = t[np.asarray(y) > 0] if np.any(np.asarray(y) > 0) else t
        t_pk, y_pk = _peak(t, y)
        alpha = min(y_pk / max(t_pk - lo, 1.0) * rng.uniform(1.0, 1.5), 0.99)
        theta = None
        for beta in 1.0 + np.geomspace(0.05, 20.0, 40) * rng.uniform(0.9, 1.1):
            m2 = hi - math.log(max(alpha * (hi - lo), 1e-12)) / math.log(beta)
            theta = np.array([alpha, beta, lo, max(m2, lo + 1e-3)])
            if np.all(self.rate(theta, tp) > 0):
                break
        return theta

    def rate(self, theta, t):
        (alpha, beta, m1, m2), t, scalar = _columns(theta, t)
        with np.errstate(over="ignore"):
            r = alpha * (t - m1) - np.exp((t - m2) * np.log(beta))
        return r[..., 0] if scalar else r

    def rate_and_grad(self, theta, t):
        alpha, beta, m1, m2 = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        lb = math.log(beta)
        with np.errstate(over="ignore"):
            p = np.exp((t - m2) * lb)
        r = alpha * (t - m1) - p
        g = np.empty((t.size, 4))
        g[:, 0] = t - m1
        g[:, 1] = -(t - m2) * p / beta
        g[:, 2] = -alpha
        g[:, 3] = p * lb
        return r, g

    def t_opt_derivative(self, theta) -> float:
        """Stationary point of the rate: t_m2 + log(alpha / log beta) / log beta."""
        alpha, beta, _, m2 = theta
        lb = math.log(beta)
        return m2 + math.log(alpha / lb) / lb

    def t_opt_tmax_form(self, theta, t_max: Optional[float] = None) -> float:
        """Closed form anchored at T_max instead of t_m2."""
        alpha, beta = theta[0], theta[1]
        if t_max is None:
            t_max = self.thresholds(theta)[1]
        lb = math.log(beta)
        return t_max + (math.log(alpha) - math.log(lb)) / lb

    def t_opt_numeric(self, theta, bracket=None) -> float:
        theta = np.asarray(theta, dtype=float)
        lo, hi = bracket if bracket is not None else (theta[2] - 100.0, theta[3] + 100.0)
        return golden_section_max(lambda x: float(self.rate(theta, x)), lo, hi)

    def t_opt(self, theta) -> float:
        # numeric argmax is authoritative; the rate is concave so any bracket works
        theta = np.asarray(theta, dtype=float)
        t_star = self.t_opt_derivative(theta)
        half = max(1.0, abs(theta[3] - theta[2]))
        return self.t_opt_numeric(theta, (t_star - half, t_star + half))

    def t_opt_report(self, theta) -> dict:
        t_min, t_max = self.thresholds(theta)
        return {
            "numeric": self.t_opt(theta),
            "derivative_form": self.t_opt_derivative(theta),
            "tmax_form": self.t_opt_tmax_form(theta, t_max),
        }

    def thresholds(self, theta, bracket=None):
        theta = np.asarray(theta, dtype=float)
        lo, hi = bracket if bracket is not None else (theta[2], theta[3])
        f = lambda x: float(self.rate(theta, x))  # noqa: E731
        peak = self.t_opt_derivative(theta)
        if not (f(peak) > 0):
            raise NoRoot((lo, hi), "rate never positive")
        lo = min(lo, peak)
        hi = max(hi, peak)
        t_min = _find_root(f, lo, peak, 10.0, grow_lo=True, grow_hi=False)
        t_max = _find_root(f, peak, hi, 10.0, grow_lo=False, grow_hi=True)
        return t_min, t_max


@dataclass(frozen=True, repr=False)
class Briere(Curve):
    name: ClassVar[str] = "briere"
    param_names: ClassVar[Tuple[str, ...]] = ("a_tilde", "t_min", "t_max")

    def bounds(self):
        return [Bound(0.0, None), Bound(0.0, None), Bound("t_min", None)]

    def initial_guess(self, t, y, rng):
        lo, hi = _support_span(t, y, rng)
        lo = max(lo, 0.0)
        _, y_pk = _peak(t, y)
        grid = np.linspace(lo, hi, 64)
        r1 = float(np.max(self.rate(np.array([0.0, lo, hi]), grid)))
        return np.array([max(math.log(r1 / y_pk), 1e-3), lo, hi])

    def rate(self, theta, t):
        (at, tmin, tmax), t, scalar = _columns(theta, t)
        inside = (t > tmin) & (t < tmax)
        with np.errstate(invalid="ignore"):
            r = np.where(inside, np.exp(-at) * t * (t - tmin) * np.sqrt(np.where(inside, tmax - t, 0.0)), 0.0)
        return r[..., 0] if scalar else r

    def rate_and_grad(self, theta, t):
        at, tmin, tmax = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        inside = (t > tmin) & (t < tmax)
        alpha = math.exp(-at)
        root = np.sqrt(np.where(inside, tmax - t, 1.0))
        r = np.where(inside, alpha * t * (t - tmin) * root, 0.0)
        g = np.zeros((t.size, 3))
        g[:, 0] = -r
        g[:, 1] = np.where(inside, -alpha * t * root, 0.0)
        g[:, 2] = np.where(inside, alpha * t * (t - tmin) / (2.0 * root), 0.0)
        return r, g

    def t_opt(self, theta) -> float:
        _, a, b = np.asarray(theta, dtype=float)
        s = 4.0 * b + 3.0 * a
        return (s + math.sqrt(s * s - 40.0 * a * b)) / 10.0

    def t_opt_numeric(self, theta, bracket=None) -> float:
        _, a, b = np.asarray(theta, dtype=float)
        lo, hi = bracket if bracket is not None else (a, b)

        def shape(x):
            if not (a < x < b) or x <= 0:
                return -np.inf
            return math.log(x) + math.log(x - a) + 0.5 * math.log(b - x)

        return golden_section_max(shape, lo, hi)

    def thresholds(self, theta, bracket=None):
        theta = np.asarray(theta, dtype=float)
        return float(theta[1]), float(theta[2])


@dataclass(frozen=True, repr=False)
class Analytis(Curve):
    """Analytis curve; ``exponent_cap`` bounds n and m, ``t_min_floor`` bounds T_min.

    Either restriction is switched off by passing ``None``.
    """

    name: ClassVar[str] = "analytis"
    param_names: ClassVar[Tuple[str, ...]] = ("a_tilde", "n", "m", "t_min", "t_max")
    exponent_cap: Optional[float] = 10.0
    t_min_floor: Optional[float] = 4.0

    def bounds(self):
        cap = self.exponent_cap
        floor = 0.0 if self.t_min_floor is None else self.t_min_floor
        return [Bound(0.0, None), Bound(0.0, cap), Bound(0.0, cap), Bound(floor, None), Bound("t_min", None)]

    def initial_guess(self, t, y, rng):
        lo, hi = _support_span(t, y, rng)
        floor = 0.0 if self.t_min_floor is None else self.t_min_floor
        lo = max(lo, floor)
        cap = 10.0 if self.exponent_cap is None else self.exponent_cap
        n, m = rng.uniform(0.5, min(2.0, cap), 2)
        _, y_pk = _peak(t, y)
        grid = np.linspace(lo, hi, 64)
        r1 = float(np.max(self.rate(np.array([0.0, n, m, lo, hi]), grid)))
        return np.array([max(math.log(r1 / y_pk), 1e-3), n, m, lo, hi])

    def rate(self, theta, t):
        (at, n, m, tmin, tmax), t, scalar = _columns(theta, t)
        inside = (t > tmin) & (t < tmax)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = -at + n * np.log(np.where(inside, t - tmin, 1.0)) + m * np.log(np.where(inside, tmax - t, 1.0))
        r = np.where(inside, np.exp(lr), 0.0)
        return r[..., 0] if scalar else r

    def rate_and_grad(self, theta, t):
        at, n, m, tmin, tmax = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        inside = (t > tmin) & (t < tmax)
        lo = np.where(inside, t - tmin, 1.0)
        hi = np.where(inside, tmax - t, 1.0)
        llo, lhi = np.log(lo), np.log(hi)
        r = np.where(inside, np.exp(-at + n * llo + m * lhi), 0.0)
        g = np.empty((t.size, 5))
        g[:, 0] = -r
        g[:, 1] = r * llo
        g[:, 2] = r * lhi
        g[:, 3] = -r * n / lo
        g[:, 4] = r * m / hi
        return r, g

    def t_opt(self, theta) -> float:
        _, n, m, a, b = np.asarray(theta, dtype=float)
        return (n * b + m * a) / (n + m)

    def t_opt_numeric(self, theta, bracket=None) -> float:
        _, n, m, a, b = np.asarray(theta, dtype=float)
        lo, hi = bracket if bracket is not None else (a, b)

        def shape(x):
            if not (a < x < b):
                return -np.inf
            return n * math.log(x - a) + m * math.log(b - x)

        return golden_section_max(shape, lo, hi)

    def thresholds(self, theta, bracket=None):
        theta = np.asarray(theta, dtype=float)
        return float(theta[3]), float(theta[4])


@dataclass(frozen=True, repr=False)
class Lactin(Curve):
    name: ClassVar[str] = "lactin"
    param_names: ClassVar[Tuple[str, ...]] = ("l", "del", "a", "rho")

    def bounds(self):
        return [Bound(0.0, None), Bound(0.0, 1.0), Bound(0.0, None), Bound(0.0, "del")]

    def initial_guess(self, t, y, rng):
        # pick rho so that the curve through both thresholds peaks near max(y)
        lo, hi = _support_span(t, y, rng)
        _, y_pk = _peak(t, y)
        ratio = rng.uniform(1.5, 4.0)
        grid = np.linspace(lo, hi, 64)
        best, best_err = None, np.inf
        for rho in np.geomspace(1e-3, 0.5, 80):
            d = min(rho * ratio, 0.999)
            if not rho < d:
                continue
            a = (math.exp(rho * hi) - math.exp(rho * lo)) / (math.exp(d * hi) - math.exp(d * lo))
            l = math.exp(rho * lo) - a * math.exp(d * lo)
            if not (a > 0 and l > 0):
                continue
            theta = np.array([l, d, a, rho])
            err = abs(math.log(max(float(np.max(self.rate(theta, grid))), 1e-300) / y_pk))
            if err < best_err:
                best, best_err = theta, err
        if best is None:
            raise DomainError("no Lactin curve through the observed temperature range")
        return best

    def rate(self, theta, t):
        (l, d, a, rho), t, scalar = _columns(theta, t)
        with np.errstate(over="ignore", invalid="ignore"):
            r = -l + np.exp(rho * t) - a * np.exp(d * t)
        return r[..., 0] if scalar else r

    def rate_and_grad(self, theta, t):
        l, d, a, rho = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        er = np.exp(rho * t)
        ed = np.exp(d * t)
        r = -l + er - a * ed
        g = np.empty((t.size, 4))
        g[:, 0] = -1.0
        g[:, 1] = -a * t * ed
        g[:, 2] = -ed
        g[:, 3] = t * er
        return r, g

    @staticmethod
    def natural(theta) -> dict:
        """lambda, Delta, rho, T_m from the stored coordinates."""
        l, d, a, rho = (float(x) for x in theta)
        return {"lambda": -l, "delta": 1.0 / d, "rho": rho, "t_m": math.log(a) / (rho - d)}

    def _shift(self, theta) -> float:
        # Delta * log(rho*Delta) / (rho*Delta - 1)
        _, d, _, rho = (float(x) for x in theta)
        return _log_ratio(rho / d) / d

    def t_opt(self, theta) -> float:
        _, d, a, rho = (float(x) for x in theta)
        t_m = math.log(a) / (rho - d)
        return t_m - self._shift(theta)

    def t_inflection(self, theta) -> float:
        return self.t_opt(theta) - self._shift(theta)

    def t_opt_numeric(self, theta, bracket=None) -> float:
        theta = np.asarray(theta, dtype=float)
        if bracket is None:
            t0 = self.t_opt(theta)
            bracket = (t0 - 50.0, t0 + 50.0)
        return golden_section_max(lambda x: float(self.rate(theta, x)), *bracket)

    def thresholds(self, theta, bracket=None):
        theta = np.asarray(theta, dtype=float)
        lo, hi = bracket if bracket is not None else DEFAULT_BRACKET
        f = lambda x: float(self.rate(theta, x))  # noqa: E731
        peak = self.t_opt(theta)
        if not (f(peak) > 0):
            raise NoRoot((lo, hi), "rate never positive")
        t_max = _find_root(f, peak, max(hi, peak), 20.0, grow_lo=False, grow_hi=True)
        if theta[0] <= 0:
            # lambda >= 0: the rate never drops below zero on the cold side
            return None, t_max
        t_min = _find_root(f, min(lo, peak), peak, 50.0, grow_lo=True, grow_hi=False)
        return t_min, t_max

    def derived(self, theta, bracket=None) -> dict:
        out = super().derived(theta, bracket)
        out["T_inf"] = self.t_inflection(theta)
        return out


CURVES = {"bieri": Bieri, "briere": Briere, "analytis": Analytis, "lactin": Lactin}


def get_curve(curve) -> Curve:
    if isinstance(curve, Curve):
        return curve
    if isinstance(curve, CurveParams):
        return curve.curve()
    try:
        return CURVES[str(curve).lower()]()
    except KeyError:
        raise DomainError(f"unknown curve family {curve!r}; choose from {sorted(CURVES)}") from None


# --------------------------------------------------------------------------
# typed parameter sets


@dataclass(frozen=True)
class CurveParams:
    family: ClassVar[str]

    def __post_init__(self):
        vals = self.to_array()
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"non-finite {self.family} parameters: {vals}")
        self._validate()

    def _validate(self):
        pass

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def curve(self) -> Curve:
        return CURVES[self.family]()


@dataclass(frozen=True)
class BieriParams(CurveParams):
    family: ClassVar[str] = "bieri"
    alpha: float
    beta: float
    t_m1: float
    t_m2: float

    def _validate(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta > 1:
            raise DomainError(f"beta must exceed 1, got {self.beta}")
        if not self.t_m1 < self.t_m2:
            raise DomainError("t_m1 must be below t_m2")


@dataclass(frozen=True)
class BriereParams(CurveParams):
    family: ClassVar[str] = "briere"
    a_tilde: float
    t_min: float
    t_max: float

    @classmethod
    def from_alpha(cls, alpha: float, t_min: float, t_max: float) -> "BriereParams":
        return cls(-math.log(alpha), t_min, t_max)

    @property
    def alpha(self) -> float:
        return math.exp(-self.a_tilde)

    def _validate(self):
        if not self.a_tilde > 0:
            raise DomainError(f"a_tilde must be positive (alpha < 1), got {self.a_tilde}")
        if not 0 <= self.t_min < self.t_max:
            raise DomainError("need 0 <= t_min < t_max")


@dataclass(frozen=True)
class AnalytisParams(CurveParams):
    family: ClassVar[str] = "analytis"
    a_tilde: float
    n: float
    m: float
    t_min: float
    t_max: float

    @classmethod
    def from_alpha(cls, alpha, n, m, t_min, t_max) -> "AnalytisParams":
        return cls(-math.log(alpha), n, m, t_min, t_max)

    @property
    def alpha(self) -> float:
        return math.exp(-self.a_tilde)

    def _validate(self):
        if not self.a_tilde > 0:
            raise DomainError(f"a_tilde must be positive, got {self.a_tilde}")
        if not (self.n > 0 and self.m > 0):
            raise DomainError("exponents n and m must be positive")
        if not self.t_min < self.t_max:
            raise DomainError("need t_min < t_max")

    def check_restrictions(self, curve: Analytis) -> None:
        cap, floor = curve.exponent_cap, curve.t_min_floor
        if cap is not None and not (self.n < cap and self.m < cap):
            raise DomainError(f"exponents must stay below the cap {cap}")
        if floor is not None and self.t_min < floor:
            raise DomainError(f"t_min must be at least {floor} C")


@dataclass(frozen=True)
class LactinParams(CurveParams):
    family: ClassVar[str] = "lactin"
    l: float  # noqa: E741
    del_: float
    a: float
    rho: float

    @classmethod
    def from_natural(cls, lam: float, delta: float, rho: float, t_m: float) -> "LactinParams":
        d = 1.0 / delta
        return cls(-lam, d, math.exp((rho - d) * t_m), rho)

    @property
    def lam(self) -> float:
        return -self.l

    @property
    def delta(self) -> float:
        return 1.0 / self.del_

    @property
    def t_m(self) -> float:
        return math.log(self.a) / (self.rho - self.del_)

    def _validate(self):
        if not 0 < self.del_ < 1:
            raise DomainError(f"del = 1/Delta must lie in (0, 1), got {self.del_}")
        if not 0 < self.rho < self.del_:
            raise DomainError("rho must lie in (0, 1/Delta)")
        if not self.a > 0:
            raise DomainError("a must be positive")


# --------------------------------------------------------------------------
# functional front door


def _as_array(curve: Curve, params) -> np.ndarray:
    if isinstance(params, CurveParams):
        if params.family != curve.name:
            raise DomainError(f"{params.family} parameters passed to the {curve.name} curve")
        if isinstance(params, AnalytisParams) and isinstance(curve, Analytis):
            params.check_restrictions(curve)
        return params.to_array()
    return curve.check(params)


def rate(curve, params, t):
    """Developmental rate (day^-1) at temperature(s) ``t`` (deg C)."""
    c = get_curve(curve if curve is not None else params)
    theta = _as_array(c, params)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("temperatures must be finite")
    return c.rate(theta, t_arr)


def t_opt(curve, params) -> float:
    c = get_curve(curve if curve is not None else params)
    return c.t_opt(_as_array(c, params))


def thermal_thresholds(curve, params, bracket=None):
    c = get_curve(curve if curve is not None else params)
    return c.thresholds(_as_array(c, params), bracket)


def t_inflection(params) -> float:
    c = Lactin()
    return c.t_inflection(_as_array(c, params))


def to_unconstrained(params, curve=None):
    """``(u, log|det d theta/du|)`` for a parameter set."""
    c = get_curve(curve if curve is not None else params)
    theta = _as_array(c, params)
    if not c.transform.in_support(theta):
        raise DomainError(f"{c.name} parameters outside the sampling support: {theta}")
    return c.transform.unconstrain(theta)


def from_unconstrained(curve, u):
    """Constrained parameter array and log-Jacobian for an unconstrained vector."""
    c = get_curve(curve)
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DomainError("unconstrained vector must be finite")
    return c.transform.constrain(u)
