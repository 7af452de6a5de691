"""Effective sample size, split R-hat and Monte Carlo standard errors.

Draw arrays are ``(n_chains, n_draws)``; a 1-d array is one chain.
"""

from __future__ import annotations

import warnings

import numpy as np


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected (chains, draws) or (draws,)")
    return x


def split_chains(x) -> np.ndarray:
    x = _as_chains(x)
    n = x.shape[1]
    if n < 4:
        return x
    half = n // 2
    return np.concatenate([x[:, :half], x[:, n - half:]], axis=0)


def autocovariance(x) -> np.ndarray:
    """Biased autocovariance of a 1-d series at all lags, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x - x.mean(), m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n]
    return acov / n


def ess(x) -> float:
    """Effective sample size with Geyer's initial monotone sequence on split chains."""
    x = _as_chains(x)
    if x.shape[0] < 2 and x.shape[1] < 100:
        raise ValueError("ESS needs at least 2 chains or 100 draws")
    chains = split_chains(x)
    m, n = chains.shape
    if n < 2:
        return float(m * n)
    acov = np.stack([autocovariance(c) for c in chains])
    chain_mean = chains.mean(axis=1)
    w = acov[:, 0].mean() * n / (n - 1.0)
    b = n * chain_mean.var(ddof=1) if m > 1 else 0.0
    var_plus = w * (n - 1.0) / n + b / n
    if not var_plus > 0 or not np.isfinite(var_plus):
        warnings.warn("constant series: effective sample size set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first non-positive pair, then made monotone
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    pos = np.flatnonzero(pairs <= 0)
    k = pos[0] if pos.size else n_pairs
    pairs = np.minimum.accumulate(pairs[:k]) if k > 0 else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    total = m * n
    tau = max(tau, 1.0 / np.log10(max(total, 10)))
    return float(total / tau)


def split_rhat(x) -> float:
    chains = split_chains(x)
    m, n = chains.shape
    w = chains.var(axis=1, ddof=1).mean()
    b = n * chains.mean(axis=1).var(ddof=1)
    if not w > 0:
        return float("nan")
    var_plus = (n - 1.0) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def mcse_mean(x) -> float:
    x = _as_chains(x)
    e = ess(x)
    return float(x.std(ddof=1) / np.sqrt(e)) if e > 0 else 0.0


def mcse_var(x) -> float:
    x = _as_chains(x)
    sq = (x - x.mean()) ** 2
    e = ess(sq)
    return float(sq.std(ddof=1) / np.sqrt(e)) if e > 0 else 0.0


def mcse_from_influence(psi) -> float:
    """MCSE of an estimator that is, to first order, the mean of ``psi`` over draws."""
    psi = _as_chains(psi)
    if np.ptp(psi) == 0:
        return 0.0
    e = ess(psi)
    return float(psi.std(ddof=1) / np.sqrt(e)) if e > 0 else 0.0


def spectral_density_zero(x) -> float:
    """Normalized spectral density at frequency 0, i.e. the integrated autocorrelation time."""
    x = _as_chains(x)
    if np.ptp(x) == 0:
        return 1.0
    return float(x.size / ess(x))
