"""Gaussian-process regression on a 1-D time axis.

Squared-exponential kernel only, zero prior mean.  Values are centered
(and internally scaled) before hyperparameter learning so the zero-mean
prior is reasonable; fitted objects carry the centering constant and
report predictions in original units.  Hyperparameters are learned by
maximising the log marginal likelihood with multi-start Nelder-Mead in
log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from . import _kernels

LOG_2PI = math.log(2.0 * math.pi)

# Relative jitter ladder: always start at 1e-10 * mean(diag), escalate x10.
_JITTER_LEVELS = tuple(1e-10 * 10.0**k for k in range(7))  # up to 1e-4


class CholeskyFailure(Exception):
    """Covariance matrix not positive definite even at maximum jitter."""


class OptimizationFailure(Exception):
    """No hyperparameter start produced a usable likelihood."""


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters: k(t,t') = signal_variance * exp(-(t-t')^2 / (2 lengthscale^2))."""

    lengthscale: float
    signal_variance: float

    def __post_init__(self):
        if not (self.lengthscale > 0.0):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (self.signal_variance > 0.0):
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")


@dataclass(frozen=True)
class TimeSeries:
    """Ordered (time, value) observation pairs.

    Times must be nondecreasing; repeated times are allowed and represent
    replicate observations at the same instant.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if times.ndim != 1 or values.ndim != 1:
            raise ValueError("times and values must be 1-D")
        if times.shape != values.shape:
            raise ValueError(f"length mismatch: {times.shape[0]} times, {values.shape[0]} values")
        if times.shape[0] < 1:
            raise ValueError("need at least one observation")
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be nondecreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.times) > 0))


@dataclass(frozen=True)
class GPFit:
    """Fitted GP state: hyperparameters plus precomputed Cholesky solves.

    ``alpha`` solves K_y against the centered observations, and
    ``log_marginal`` is the zero-mean log marginal likelihood of the
    centered values at (params, noise_variances).
    """

    params: KernelParams
    noise_variances: np.ndarray
    train: TimeSeries
    center: float
    chol_ky: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    log_marginal: float


def rbf_kernel(t: float, t2: float, params: KernelParams) -> float:
    """Squared-exponential kernel value between two scalar times."""
    d = t - t2
    return params.signal_variance * math.exp(-(d * d) / (2.0 * params.lengthscale**2))


def _covariance_cholesky(
    times: np.ndarray, params: KernelParams, noise_variances: np.ndarray, clean: bool = True
):
    """Assemble K = K_rbf + diag(noise) + jitter*I and factor it.

    Returns (K_jittered, L).  With clean=False the factor is the raw
    cho_factor output (upper triangle holds garbage): valid for cho_solve
    and for reading the diagonal, and skips a tril copy on hot paths.
    Raises CholeskyFailure after the jitter ladder is exhausted.
    """
    n = times.shape[0]
    k = _kernels.rbf_covariance(times, params.lengthscale, params.signal_variance)
    k.flat[:: n + 1] += noise_variances
    mean_diag = float(k.flat[:: n + 1].mean())
    for level in _JITTER_LEVELS:
        kj = k.copy()
        kj.flat[:: n + 1] += level * mean_diag
        try:
            c, _ = cho_factor(kj, lower=True, overwrite_a=False, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        return kj, (np.tril(c) if clean else c)
    raise CholeskyFailure(
        f"covariance not positive definite at jitter {_JITTER_LEVELS[-1]:g} * mean diagonal"
    )


def build_covariance(
    times: np.ndarray, params: KernelParams, noise_variances: np.ndarray
) -> np.ndarray:
    """Observation covariance K_rbf + diag(noise_variances) + jitter*I."""
    times = np.asarray(times, dtype=float)
    noise_variances = np.asarray(noise_variances, dtype=float)
    if times.shape != noise_variances.shape:
        raise ValueError("times and noise_variances must have equal length")
    kj, _ = _covariance_cholesky(times, params, noise_variances)
    return kj


def _log_marginal_from_chol(values: np.ndarray, chol: np.ndarray) -> tuple[float, np.ndarray]:
    alpha = cho_solve((chol, True), values)
    n = values.shape[0]
    lml = (
        -0.5 * float(values @ alpha)
        - float(np.sum(np.log(np.diag(chol))))
        - 0.5 * n * LOG_2PI
    )
    return lml, alpha


def log_marginal_likelihood(
    data: TimeSeries, params: KernelParams, noise_variances: np.ndarray
) -> float:
    """Zero-mean log marginal likelihood, computed through the Cholesky factor."""
    noise_variances = np.asarray(noise_variances, dtype=float)
    _, chol = _covariance_cholesky(data.times, params, noise_variances)
    lml, _ = _log_marginal_from_chol(data.values, chol)
    return lml


def fit_at(
    data: TimeSeries,
    params: KernelParams,
    noise_variances: np.ndarray,
    center: float | None = None,
) -> GPFit:
    """Construct a GPFit at fixed hyperparameters.

    ``center`` defaults to the mean of the values; pass 0.0 for a plain
    zero-mean fit.
    """
    noise_variances = np.asarray(noise_variances, dtype=float)
    if noise_variances.shape != data.times.shape:
        raise ValueError("noise_variances length must match data")
    if center is None:
        center = float(np.mean(data.values))
    _, chol = _covariance_cholesky(data.times, params, noise_variances)
    lml, alpha = _log_marginal_from_chol(data.values - center, chol)
    return GPFit(
        params=params,
        noise_variances=noise_variances,
        train=data,
        center=center,
        chol_ky=chol,
        alpha=alpha,
        log_marginal=lml,
    )


def lengthscale_starts(span: float, n_starts: int = 5) -> np.ndarray:
    """Deterministic multi-start grid, span/50 up to the full span."""
    if span <= 0.0:
        span = 1.0
    return np.geomspace(span / 50.0, span, n_starts)


def lengthscale_floor(span: float) -> float:
    """Smallest admissible lengthscale, 1% of the input span.

    Sub-spacing lengthscales make the kernel indistinguishable from extra
    white noise; bounding them out keeps the signal/noise split identified
    (reference GP implementations place comparable data-driven bounds).
    """
    if span <= 0.0:
        span = 1.0
    return span / 100.0


# stop on simplex diameter alone (or the iteration cap); fatol disabled
_NM_OPTIONS = {"xatol": 1e-6, "fatol": np.inf, "maxiter": 500}

# large finite value for failed objective evaluations; keeps Nelder-Mead's
# simplex arithmetic free of inf/nan
_FAILED_OBJECTIVE = 1e12

# log-space box for hyperparameter searches; warm starts are clipped back
# inside after unit conversions so a wall-pinned previous fit stays usable
_LOG_BOX = 100.0
_START_CLIP = 95.0


def _minimize_multistart(objective, starts):
    best = None
    for x0 in starts:
        x0 = np.clip(np.asarray(x0, dtype=float), -_START_CLIP, _START_CLIP)
        res = minimize(objective, x0, method="Nelder-Mead", options=_NM_OPTIONS)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= _FAILED_OBJECTIVE / 10.0:
        raise OptimizationFailure("all hyperparameter starts failed")
    return best


def _standardize(data: TimeSeries):
    center = float(np.mean(data.values))
    yc = data.values - center
    scale = float(np.std(yc))
    if scale < 1e-300:
        scale = 1.0
    return center, scale, yc / scale


def fit_gp(
    data: TimeSeries,
    noise_variances: np.ndarray,
    initial: KernelParams | None = None,
) -> GPFit:
    """Learn (lengthscale, signal_variance) for fixed per-point noise.

    Optimizes in (log lengthscale, log signal_variance) over 5 deterministic
    starts, or a single start when ``initial`` is given (warm restarts).
    """
    if data.n < 2:
        raise ValueError("fit_gp needs at least 2 observations")
    noise_variances = np.asarray(noise_variances, dtype=float)
    if noise_variances.shape != data.times.shape:
        raise ValueError("noise_variances length must match data")
    if np.any(noise_variances < 0):
        raise ValueError("noise variances must be nonnegative")

    center, scale, y_std = _standardize(data)
    noise_std = noise_variances / scale**2
    times = data.times
    span = float(times[-1] - times[0])
    floor = lengthscale_floor(span)

    def objective(x):
        if not np.all(np.abs(x) < _LOG_BOX):
            return _FAILED_OBJECTIVE
        params = KernelParams(floor + math.exp(x[0]), math.exp(x[1]))
        try:
            _, chol = _covariance_cholesky(times, params, noise_std, clean=False)
        except CholeskyFailure:
            return _FAILED_OBJECTIVE
        lml, _ = _log_marginal_from_chol(y_std, chol)
        return -lml

    if initial is not None:
        ell0 = max(initial.lengthscale - floor, 1e-3 * floor)
        starts = [(math.log(ell0), math.log(initial.signal_variance / scale**2))]
    else:
        starts = [(math.log(l0 - floor), 0.0) for l0 in lengthscale_starts(span)]

    best = _minimize_multistart(objective, starts)
    params = KernelParams(floor + math.exp(best.x[0]), math.exp(best.x[1]) * scale**2)
    return fit_at(data, params, noise_variances, center=center)


def fit_gp_const_noise(
    data: TimeSeries,
    initial: tuple[KernelParams, float] | None = None,
    noise_floor: float = 0.0,
) -> GPFit:
    """Learn kernel hyperparameters and a single noise variance jointly.

    Used both for the homoscedastic alternative in model comparison and as
    the nugget-carrying fit of noisy log-residuals; ``noise_floor`` bounds
    the fitted noise variance from below when the observation noise has a
    known minimum (the nugget is parametrized as floor + exp(x)).
    """
    if data.n < 2:
        raise ValueError("fit_gp_const_noise needs at least 2 observations")

    center, scale, y_std = _standardize(data)
    times = data.times
    ones = np.ones(data.n)
    span = float(times[-1] - times[0])
    ell_floor = lengthscale_floor(span)
    noise_floor_std = noise_floor / scale**2

    def objective(x):
        if not np.all(np.abs(x) < _LOG_BOX):
            return _FAILED_OBJECTIVE
        params = KernelParams(ell_floor + math.exp(x[0]), math.exp(x[1]))
        noise = (noise_floor_std + math.exp(x[2])) * ones
        try:
            _, chol = _covariance_cholesky(times, params, noise, clean=False)
        except CholeskyFailure:
            return _FAILED_OBJECTIVE
        lml, _ = _log_marginal_from_chol(y_std, chol)
        return -lml

    if initial is not None:
        init_params, init_noise = initial
        ell0 = max(init_params.lengthscale - ell_floor, 1e-3 * ell_floor)
        excess = max(init_noise / scale**2 - noise_floor_std, 1e-8)
        starts = [
            (
                math.log(ell0),
                math.log(init_params.signal_variance / scale**2),
                math.log(excess),
            )
        ]
    else:
        starts = [
            (math.log(l0 - ell_floor), math.log(0.5), math.log(0.5))
            for l0 in lengthscale_starts(span)
        ]

    best = _minimize_multistart(objective, starts)
    params = KernelParams(ell_floor + math.exp(best.x[0]), math.exp(best.x[1]) * scale**2)
    noise = (noise_floor_std + math.exp(best.x[2])) * scale**2
    return fit_at(data, params, noise * np.ones(data.n), center=center)


def predict(fit: GPFit, t_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance at new times.

    Observation noise is NOT included in the returned variance; add the
    relevant noise variance when predicting new observations.
    """
    t_star = np.atleast_1d(np.asarray(t_star, dtype=float))
    k_star = _kernels.rbf_cross(
        fit.train.times, t_star, fit.params.lengthscale, fit.params.signal_variance
    )
    mean = fit.center + k_star.T @ fit.alpha
    v = solve_triangular(fit.chol_ky, k_star, lower=True)
    var = fit.params.signal_variance - np.sum(v * v, axis=0)
    np.maximum(var, 0.0, out=var)
    return mean, var
