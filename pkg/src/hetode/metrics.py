"""Posterior comparison and summary tools: squared MMD, predictive bands, KDE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .bayes import Chain


class DegenerateSamples(Exception):
    """Samples carry no spread (identical points or zero variance)."""


@dataclass(frozen=True)
class MmdResult:
    mmd2: float
    bandwidth: float
    n: int
    m: int


@dataclass(frozen=True)
class PredictiveBand:
    times: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    level: float

    def __post_init__(self):
        if np.any(self.lower > self.median) or np.any(self.median > self.upper):
            raise ValueError("band quantiles must be ordered")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _as_2d(samples: np.ndarray) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def median_heuristic(x_samples: np.ndarray, z_samples: np.ndarray) -> float:
    """Median Euclidean distance over all distinct pairs of the pooled samples."""
    pooled = np.vstack([_as_2d(x_samples), _as_2d(z_samples)])
    if pooled.shape[0] < 2:
        raise ValueError("need at least two pooled samples")
    dists = _kernels.pairwise_distances(pooled)
    med = float(np.median(dists))
    if med <= 0.0:
        raise DegenerateSamples("all pooled samples identical; median distance is zero")
    return med


def mmd_squared(x_samples: np.ndarray, z_samples: np.ndarray, lam: float) -> MmdResult:
    """Biased (V-statistic) squared MMD with RBF kernel exp(-|x-z|^2 / (2 lam^2)).

    The double sums include the i = j diagonal terms; negative round-off is
    clamped to zero.
    """
    if not (lam > 0):
        raise ValueError("bandwidth must be positive")
    x = _as_2d(x_samples)
    z = _as_2d(z_samples)
    if x.shape[0] < 1 or z.shape[0] < 1:
        raise ValueError("need at least one sample on each side")
    if x.shape[1] != z.shape[1]:
        raise ValueError("sample dimensions differ")
    n, m = x.shape[0], z.shape[0]
    # canonical argument order makes mmd2(X, Z) == mmd2(Z, X) bit-exact
    # (the cross sum is accumulated once, in one order)
    if (m, z.tobytes()) < (n, x.tobytes()):
        kzz, kxx, kxz = _kernels.mmd_sums(z, x, lam)
    else:
        kxx, kzz, kxz = _kernels.mmd_sums(x, z, lam)
    mmd2 = kxx / n**2 + kzz / m**2 - 2.0 * kxz / (n * m)
    return MmdResult(mmd2=max(mmd2, 0.0), bandwidth=float(lam), n=n, m=m)


def predictive_band(
    chain: Chain,
    simulate: Callable[[dict[str, float], np.ndarray], np.ndarray],
    sigma2_of: Callable[[dict[str, float], np.ndarray], np.ndarray],
    times: np.ndarray,
    level: float = 0.95,
    draws_per_sample: int = 1,
    seed: int = 0,
    max_draws: int | None = None,
) -> PredictiveBand:
    """Pointwise posterior predictive interval for new observations.

    For each retained posterior draw the trajectory is simulated and
    Gaussian observation noise with the supplied variance profile is added;
    band endpoints are the empirical (1 +/- level)/2 quantiles.
    """
    if not (0.0 <= level < 1.0):
        raise ValueError("level must lie in [0, 1)")
    if chain.draws.shape[0] == 0:
        raise ValueError("chain is empty")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    rng = np.random.default_rng(seed)

    draws = chain.draws
    if max_draws is not None and draws.shape[0] > max_draws:
        stride = int(np.ceil(draws.shape[0] / max_draws))
        draws = draws[::stride]

    sims = np.empty((draws.shape[0] * draws_per_sample, times.shape[0]))
    row = 0
    for k in range(draws.shape[0]):
        theta = dict(zip(chain.param_names, draws[k]))
        mu = simulate(theta, times)
        sd = np.sqrt(sigma2_of(theta, times))
        for _ in range(draws_per_sample):
            sims[row] = mu + rng.standard_normal(times.shape[0]) * sd
            row += 1

    lo, mid, hi = np.quantile(
        sims, [(1.0 - level) / 2.0, 0.5, (1.0 + level) / 2.0], axis=0
    )
    return PredictiveBand(times=times, lower=lo, median=mid, upper=hi, level=level)


def silverman_bandwidth(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=float)
    sd = float(np.std(samples, ddof=1))
    if sd <= 0.0:
        raise DegenerateSamples("zero sample standard deviation")
    return 1.06 * sd * samples.shape[0] ** (-0.2)


def kde_1d(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density with the Silverman rule bandwidth."""
    samples = np.asarray(samples, dtype=float)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.unique(samples).shape[0] < 2:
        raise DegenerateSamples("need at least two distinct samples")
    bw = silverman_bandwidth(samples)
    u = (grid[:, None] - samples[None, :]) / bw
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (samples.shape[0] * bw * np.sqrt(2.0 * np.pi))
    return dens


def kde_grid(samples: np.ndarray, points: int = 401) -> np.ndarray:
    """Evaluation grid spanning the sample range plus four bandwidths each side."""
    bw = silverman_bandwidth(samples)
    lo = float(np.min(samples)) - 4.0 * bw
    hi = float(np.max(samples)) + 4.0 * bw
    return np.linspace(lo, hi, points)
