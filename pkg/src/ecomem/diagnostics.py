"""Convergence diagnostics, posterior summaries and memory-function extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .sampler import ChainSet


class InsufficientDraws(ValueError):
    pass


class TermNotFound(KeyError):
    pass


def _as_chains(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (n_chains, n_draws)")
    return x


def split_rhat(draws) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is cut in half (a middle draw is dropped for odd lengths) and
    the classic between/within variance ratio is computed over the halves.
    Returns NaN when the within-chain variance is zero.
    """
    x = _as_chains(draws)
    n_chains, n = x.shape
    if n_chains < 2 or n < 4:
        raise InsufficientDraws("split R-hat needs >= 2 chains with >= 4 draws")
    half = n // 2
    halves = np.concatenate([x[:, :half], x[:, n - half :]], axis=0)
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    if not W > 0:
        return float("nan")
    B = half * means.var(ddof=1)
    var_plus = (half - 1) / half * W + B / half
    return float(np.sqrt(var_plus / W))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x - x.mean(), n=m)
    acov = np.fft.irfft(f * np.conj(f), n=m)[:n]
    return acov / n


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial positive (monotone) sequence.

    ``draws`` is ``(n_chains, n_draws)`` or a single chain. NaN for constant
    draws.
    """
    x = _as_chains(draws)
    n_chains, n = x.shape
    if n < 4:
        raise InsufficientDraws("ESS needs >= 4 draws per chain")
    acov = np.array([_autocovariance(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    if not W > 0:
        return float("nan")
    var_plus = W * (n - 1) / n
    if n_chains > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # sum consecutive pairs while positive, enforcing monotonicity
    total = 0.0
    prev = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = max(-1.0 + 2.0 * total, 1.0 / np.log10(n_chains * n))
    return float(n_chains * n / tau)


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    sd: float
    median: float
    lower: float
    upper: float
    rhat: float
    ess: float
    level: float


@dataclass(frozen=True)
class MemoryFunction:
    var: str
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    threshold: float

    @property
    def lags(self) -> np.ndarray:
        return np.arange(len(self.mean))

    @property
    def memory_lags(self) -> list[int]:
        return memory_lags(self.mean, self.threshold)

    @property
    def memory_length(self) -> int:
        return len(self.memory_lags)


def memory_lags(mean_weights, threshold: float = 0.01) -> list[int]:
    """Lags whose posterior-mean weight exceeds ``threshold``."""
    return [int(i) for i in np.flatnonzero(np.asarray(mean_weights) > threshold)]


def interval(x: np.ndarray, level: float) -> tuple[float, float]:
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [a, 1.0 - a])
    return float(lo), float(hi)


def _safe(fn, x) -> float:
    try:
        return fn(x)
    except InsufficientDraws:
        return float("nan")


def summarize_parameter(chains: ChainSet, name: str, level: float = 0.95) -> ParameterSummary:
    x = chains.param(name)
    pooled = x.reshape(-1)
    lo, hi = interval(pooled, level)
    return ParameterSummary(
        name=name,
        mean=float(pooled.mean()),
        sd=float(pooled.std(ddof=1)) if pooled.size > 1 else float("nan"),
        median=float(np.median(pooled)),
        lower=lo,
        upper=hi,
        rhat=_safe(split_rhat, x),
        ess=_safe(effective_sample_size, x),
        level=level,
    )


def memory_function(
    chains: ChainSet, var: str, level: float = 0.95, threshold: float = 0.01
) -> MemoryFunction:
    w = chains.weights(var).reshape(-1, len(chains.weight_names(var)))
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(w, [a, 1.0 - a], axis=0)
    return MemoryFunction(var, w.mean(axis=0), lo, hi, level, threshold)


def summarize(
    chains: ChainSet, cred: float = 0.95, threshold: float = 0.01
) -> tuple[list[ParameterSummary], list[MemoryFunction]]:
    """Per-parameter summaries and one memory function per memory covariate."""
    if chains.n_draws == 0:
        raise ValueError("no retained draws")
    params = [summarize_parameter(chains, n, cred) for n in chains.names]
    mems = [memory_function(chains, v, cred, threshold) for v in chains.memory_vars()]
    return params, mems


@dataclass(frozen=True)
class EffectComparison:
    term: str
    memory: np.ndarray
    baseline: np.ndarray

    def grid(self, n: int = 256) -> np.ndarray:
        both = np.concatenate([self.memory, self.baseline])
        lo, hi = both.min(), both.max()
        pad = 0.1 * (hi - lo) if hi > lo else 1.0
        return np.linspace(lo - pad, hi + pad, n)

    def densities(self, grid: np.ndarray | None = None):
        """Gaussian-KDE densities of both samples on a shared grid."""
        if grid is None:
            grid = self.grid()
        return grid, _kde(self.memory, grid), _kde(self.baseline, grid)


def _kde(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if np.ptp(x) == 0:
        out = np.zeros_like(grid)
        out[np.argmin(np.abs(grid - x[0]))] = 1.0 / (grid[1] - grid[0])
        return out
    return gaussian_kde(x)(grid)


def effect_comparison(chains: ChainSet, baseline: ChainSet, term: str) -> EffectComparison:
    """Paired marginal posteriors of ``beta.<term>`` from a memory fit and a baseline fit."""
    name = f"beta.{term}"
    for cs, label in ((chains, "memory"), (baseline, "baseline")):
        if name not in cs.names:
            raise TermNotFound(f"{term!r} not in {label} fit")
    return EffectComparison(term, chains.pooled(name), baseline.pooled(name))
