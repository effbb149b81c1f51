"""Time-varying observation-variance estimation with two coupled GPs.

A mean GP is fit under the current per-point variances, squared residuals
against its posterior mean become noisy observations of the log-variance,
a second GP (with its own homoscedastic nugget) smooths those, and the
exponentiated posterior mean feeds the next round.  Alternation stops when
hyperparameters and variance estimates all move less than the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp import GPFit, KernelParams, TimeSeries, fit_at, fit_gp, fit_gp_const_noise, predict

# -E[log chi-square_1] = -(digamma(1/2) + log 2).  Raw log squared residuals
# sit this far below the log variance on average; adding the constant keeps
# exp(posterior mean) on the right scale.  Disable to reproduce the raw
# log-residual update.
LOG_RESIDUAL_OFFSET = 1.2703628454614782

# Var[log chi-square_1] = pi^2 / 2: the observation noise of log squared
# residuals under Gaussian errors.  The variance GP's nugget is bounded
# below by this so it cannot chase individual residuals.
LOG_RESIDUAL_NOISE_VAR = math.pi**2 / 2.0


class InsufficientData(Exception):
    """Too few observations to fit the coupled mean/variance GPs."""


@dataclass(frozen=True)
class HetGPConfig:
    tolerance: float = 1e-4
    max_iterations: int = 20
    initial_variance: float | None = None  # None: 0.1 * Var(values)
    check_hom: bool = False
    debias_log_residuals: bool = True
    residual_floor_factor: float = 1e-12
    # structured-variance margin in nats: the fitted variance GP must beat a
    # structureless (nugget-only) fit of the log-residuals by this much or
    # the variance field stays constant; 0 forces the fitted GP (the forced
    # heteroscedastic fit).  Measured spurious gains on iid data stay below
    # ~0.5 nats while genuine trends give several nats, so 2.0 separates.
    parsimony_nats: float = 2.0

    def __post_init__(self):
        if not (self.tolerance > 0.0):
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.initial_variance is not None and not (self.initial_variance > 0.0):
            raise ValueError("initial_variance must be positive")
        if self.parsimony_nats < 0.0:
            raise ValueError("parsimony_nats must be nonnegative")


@dataclass(frozen=True)
class HetGPFit:
    """Coupled fit: mean GP, log-variance GP, and per-point variance estimates."""

    mean_fit: GPFit
    var_fit: GPFit
    sigma2_hat: np.ndarray
    iterations: int
    converged: bool
    marginal_loglik: float

    def sigma2_at(self, times: np.ndarray) -> np.ndarray:
        """Variance estimate between observation times: exp of the log-variance posterior mean."""
        mu, _ = predict(self.var_fit, times)
        return np.exp(mu)


@dataclass(frozen=True)
class ModelChoice:
    selected: str  # "heteroscedastic" | "homoscedastic"
    het_loglik: float
    hom_loglik: float
    hom_fit: GPFit = field(repr=False)


def squared_residuals(data: TimeSeries, mean_fit: GPFit) -> np.ndarray:
    """(value - posterior mean)^2 at the training times."""
    f_hat, _ = predict(mean_fit, data.times)
    r = data.values - f_hat
    return r * r


def _nugget_only_fit(zser: TimeSeries, noise_floor: float) -> GPFit:
    """Structureless alternative for the log-residual series.

    Signal variance pinned to a negligible value, noise at its closed-form
    optimum (respecting the floor); the posterior mean is then essentially
    the constant mean(z).
    """
    z = zser.values
    center = float(np.mean(z))
    v = max(float(np.mean((z - center) ** 2)), noise_floor)
    span = float(zser.times[-1] - zser.times[0])
    tiny_signal = max(1e-12 * v, 1e-300)
    params = KernelParams(span if span > 0 else 1.0, tiny_signal)
    return fit_at(zser, params, np.full(zser.n, v), center=center)


def _log_param_change(a: GPFit, b: GPFit, with_noise: bool) -> float:
    deltas = [
        abs(math.log(a.params.lengthscale) - math.log(b.params.lengthscale)),
        abs(math.log(a.params.signal_variance) - math.log(b.params.signal_variance)),
    ]
    if with_noise:
        deltas.append(
            abs(math.log(a.noise_variances[0]) - math.log(b.noise_variances[0]))
        )
    return max(deltas)


def fit_hetgp(data: TimeSeries, config: HetGPConfig | None = None) -> HetGPFit:
    """Alternating maximisation of the coupled mean / log-variance likelihoods.

    Each round: (a) refit the mean GP under the current variances, (b) form
    squared residuals, (c) refit the variance GP on their (offset) logs,
    (d) set sigma2 to exp of its posterior mean.  Convergence compares
    hyperparameters componentwise in log space and variances on the
    original scale; on the first round only the variance move is defined
    (there are no previous fitted hyperparameters under multi-start).
    """
    if config is None:
        config = HetGPConfig()
    if data.n < 4:
        raise InsufficientData(f"need at least 4 observations, got {data.n}")

    var_y = float(np.var(data.values))
    sigma0 = config.initial_variance
    if sigma0 is None:
        sigma0 = 0.1 * var_y if var_y > 0 else 1e-6
    floor = max(config.residual_floor_factor * var_y, 1e-300)
    offset = LOG_RESIDUAL_OFFSET if config.debias_log_residuals else 0.0

    parsimony = config.parsimony_nats
    sigma2 = np.full(data.n, sigma0)
    mean_fit = var_fit = None
    var_snapped = False
    converged = False
    iterations = 0

    for j in range(1, config.max_iterations + 1):
        iterations = j
        prev_mean, prev_var = mean_fit, var_fit

        mean_fit = fit_gp(
            data, sigma2, initial=None if prev_mean is None else prev_mean.params
        )
        r = squared_residuals(data, mean_fit)
        z = np.log(np.maximum(r, floor)) + offset
        zser = TimeSeries(data.times, z)
        warm = None if (prev_var is None or var_snapped) else (
            prev_var.params, prev_var.noise_variances[0]
        )
        var_fit = fit_gp_const_noise(zser, initial=warm, noise_floor=LOG_RESIDUAL_NOISE_VAR)
        if parsimony > 0.0:
            flat = _nugget_only_fit(zser, LOG_RESIDUAL_NOISE_VAR)
            var_snapped = var_fit.log_marginal - flat.log_marginal < parsimony
            if var_snapped:
                var_fit = flat
        mu_sigma, _ = predict(var_fit, data.times)
        sigma2_new = np.exp(mu_sigma)

        moves = [float(np.max(np.abs(sigma2_new - sigma2)))]
        if prev_mean is not None:
            moves.append(_log_param_change(mean_fit, prev_mean, with_noise=False))
            moves.append(_log_param_change(var_fit, prev_var, with_noise=True))
        sigma2 = sigma2_new

        if max(moves) < config.tolerance:
            converged = True
            break

    return HetGPFit(
        mean_fit=mean_fit,
        var_fit=var_fit,
        sigma2_hat=sigma2,
        iterations=iterations,
        converged=converged,
        marginal_loglik=mean_fit.log_marginal,
    )


def check_homoscedastic(data: TimeSeries, het: HetGPFit) -> ModelChoice:
    """Compare against a single-variance GP; keep whichever marginal likelihood wins.

    The homoscedastic alternative optimizes its noise variance jointly with
    the kernel hyperparameters and is returned only on a strictly higher
    marginal log-likelihood.
    """
    hom = fit_gp_const_noise(data)
    selected = "homoscedastic" if hom.log_marginal > het.marginal_loglik else "heteroscedastic"
    return ModelChoice(
        selected=selected,
        het_loglik=het.marginal_loglik,
        hom_loglik=hom.log_marginal,
        hom_fit=hom,
    )
