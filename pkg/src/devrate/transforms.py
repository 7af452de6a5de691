"""Bounded-parameter transforms between constrained and unconstrained space.

Each parameter is mapped through ``lower + exp(u)``, ``lower + (upper - lower)
* logistic(u)`` or the identity, where ``lower``/``upper`` may be constants or
the name of an *earlier* parameter (e.g. ``t_max > t_min``). The transform is
therefore lower-triangular and its log-Jacobian is a sum of diagonal terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import expit, log_expit

Limit = Union[float, str, None]


@dataclass(frozen=True)
class Bound:
    """Support of one parameter; string limits refer to earlier parameters."""

    lower: Limit = None
    upper: Limit = None


class BoxTransform:
    def __init__(self, names: Sequence[str], bounds: Sequence[Bound]):
        if len(names) != len(bounds):
            raise ValueError("names and bounds differ in length")
        self.names = tuple(names)
        self.bounds = tuple(bounds)
        self._index = {n: i for i, n in enumerate(self.names)}
        for j, b in enumerate(self.bounds):
            for lim in (b.lower, b.upper):
                if isinstance(lim, str) and self._index.get(lim, j) >= j:
                    raise ValueError(f"{self.names[j]}: limit {lim!r} must name an earlier parameter")

    @property
    def dim(self) -> int:
        return len(self.names)

    def _limit(self, lim: Limit, theta: np.ndarray):
        if isinstance(lim, str):
            return theta[..., self._index[lim]], self._index[lim]
        return lim, None

    def constrain(self, u, with_grad: bool = False):
        """Map ``u`` (..., k) to constrained values.

        Returns ``(theta, logjac)``; with ``with_grad`` (1-d ``u`` only) also
        the Jacobian ``d theta / d u`` and the gradient of ``logjac``.
        """
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {u.shape[-1]}")
        if with_grad and u.ndim != 1:
            raise ValueError("gradients are only available for a single vector")
        theta = np.empty_like(u)
        logjac = np.zeros(u.shape[:-1])
        k = self.dim
        jac = np.zeros((k, k)) if with_grad else None
        glj = np.zeros(k) if with_grad else None
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            for j, b in enumerate(self.bounds):
                uj = u[..., j]
                lo, ilo = self._limit(b.lower, theta)
                hi, ihi = self._limit(b.upper, theta)
                if lo is None and hi is None:
                    theta[..., j] = uj
                    if with_grad:
                        jac[j, j] = 1.0
                elif hi is None:
                    e = np.exp(uj)
                    theta[..., j] = lo + e
                    logjac = logjac + uj
                    if with_grad:
                        jac[j, j] = e
                        glj[j] += 1.0
                        if ilo is not None:
                            jac[j] += jac[ilo]
                elif lo is None:
                    e = np.exp(uj)
                    theta[..., j] = hi - e
                    logjac = logjac + uj
                    if with_grad:
                        jac[j, j] = -e
                        glj[j] += 1.0
                        if ihi is not None:
                            jac[j] += jac[ihi]
                else:
                    s = expit(uj)
                    width = hi - lo
                    theta[..., j] = lo + width * s
                    logjac = logjac + np.log(width) + log_expit(uj) + log_expit(-uj)
                    if with_grad:
                        jac[j, j] = width * s * (1.0 - s)
                        glj[j] += 1.0 - 2.0 * s
                        if ilo is not None:
                            jac[j] += (1.0 - s) * jac[ilo]
                            glj += -jac[ilo] / width
                        if ihi is not None:
                            jac[j] += s * jac[ihi]
                            glj += jac[ihi] / width
        if with_grad:
            return theta, logjac, jac, glj
        return theta, logjac

    def unconstrain(self, theta):
        """Inverse of :meth:`constrain`; returns ``(u, logjac)``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} values, got {theta.shape[-1]}")
        u = np.empty_like(theta)
        logjac = np.zeros(theta.shape[:-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            for j, b in enumerate(self.bounds):
                x = theta[..., j]
                lo, _ = self._limit(b.lower, theta)
                hi, _ = self._limit(b.upper, theta)
                if lo is None and hi is None:
                    u[..., j] = x
                elif hi is None:
                    u[..., j] = np.log(x - lo)
                    logjac = logjac + u[..., j]
                elif lo is None:
                    u[..., j] = np.log(hi - x)
                    logjac = logjac + u[..., j]
                else:
                    width = hi - lo
                    z = (x - lo) / width
                    u[..., j] = np.log(z) - np.log1p(-z)
                    logjac = logjac + np.log(width) + np.log(z) + np.log1p(-z)
        return u, logjac

    def in_support(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        ok = np.all(np.isfinite(theta), axis=-1)
        for j, b in enumerate(self.bounds):
            x = theta[..., j]
            lo, _ = self._limit(b.lower, theta)
            hi, _ = self._limit(b.upper, theta)
            if lo is not None:
                ok &= x > lo
            if hi is not None:
                ok &= x < hi
        return ok
