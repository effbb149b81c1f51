"""Priors with transforms, observation likelihoods, and random-walk MH sampling.

Sampling happens on an unconstrained scale: bounded parameters are logit
transformed, positive ones log transformed, and the change-of-variables
term is included so the stated priors hold on the original scale.  A
Gaussian prior paired with the log transform is read as a prior placed
directly on the transformed coordinate (no extra Jacobian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, log_expit

from .gp import TimeSeries
from .ode import OdeModel, SolverError, solve

LOG_2PI = math.log(2.0 * math.pi)

_ALLOWED_PAIRINGS = {
    "uniform": ("logit",),
    "exponential": ("log",),
    "gaussian": ("log", "identity"),
}


class DegenerateChains(Exception):
    """Chains carry no usable variance for the requested diagnostic."""


@dataclass(frozen=True)
class ParamPrior:
    """One parameter's prior distribution and its sampling-scale transform.

    dist/args: ("uniform", (a, b)) | ("exponential", (rate,)) |
    ("gaussian", (mean, variance)).  A gaussian paired with "log" is a
    prior on log(theta) itself.
    """

    name: str
    dist: str
    args: tuple
    transform: str

    def __post_init__(self):
        if self.dist not in _ALLOWED_PAIRINGS:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.transform not in _ALLOWED_PAIRINGS[self.dist]:
            raise ValueError(f"{self.dist} prior cannot pair with {self.transform} transform")
        if self.dist == "uniform":
            a, b = self.args
            if not (a < b):
                raise ValueError(f"uniform bounds must satisfy a < b, got ({a}, {b})")
        elif self.dist == "exponential":
            (rate,) = self.args
            if not (rate > 0):
                raise ValueError("exponential rate must be positive")
        else:
            _, var = self.args
            if not (var > 0):
                raise ValueError("gaussian variance must be positive")

    @property
    def on_transformed_scale(self) -> bool:
        return self.dist == "gaussian" and self.transform == "log"

    def to_original(self, x: float) -> float:
        if self.transform == "logit":
            a, b = self.args
            return a + (b - a) * float(expit(x))
        if self.transform == "log":
            # exp overflow maps to inf; the posterior rejects it downstream
            return math.exp(x) if x < 709.0 else math.inf
        return x

    def to_unconstrained(self, theta: float) -> float:
        if self.transform == "logit":
            a, b = self.args
            if not (a < theta < b):
                raise ValueError(f"{self.name}={theta} outside ({a}, {b})")
            return math.log(theta - a) - math.log(b - theta)
        if self.transform == "log":
            if not (theta > 0):
                raise ValueError(f"{self.name}={theta} must be positive")
            return math.log(theta)
        return theta

    def log_prior(self, x: float) -> float:
        """Log prior density of theta(x), evaluated on whichever scale it is defined."""
        if self.dist == "uniform":
            a, b = self.args
            return -math.log(b - a)  # support guaranteed by the logit inverse
        if self.dist == "exponential":
            (rate,) = self.args
            if x >= 709.0:
                return -math.inf
            return math.log(rate) - rate * math.exp(x)
        # gaussian: with "log" the prior lives on x itself, with "identity" x IS theta
        mean, var = self.args
        return -0.5 * (LOG_2PI + math.log(var)) - (x - mean) ** 2 / (2.0 * var)

    def log_jacobian(self, x: float) -> float:
        """log |d theta / d x| of the inverse transform; zero for priors on the sampling scale."""
        if self.on_transformed_scale or self.transform == "identity":
            return 0.0
        if self.transform == "logit":
            a, b = self.args
            return math.log(b - a) + float(log_expit(x)) + float(log_expit(-x))
        return x  # log transform: d e^x / dx = e^x

    def start_point(self) -> float:
        """Deterministic chain start on the unconstrained scale (prior midpoint/median)."""
        if self.dist == "uniform":
            return 0.0
        if self.dist == "exponential":
            (rate,) = self.args
            return math.log(math.log(2.0) / rate)
        mean, _ = self.args
        return mean


class PriorSpec:
    """Ordered collection of per-parameter priors with vector transforms."""

    def __init__(self, entries: list[ParamPrior]):
        if not entries:
            raise ValueError("need at least one parameter")
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.entries = list(entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def dim(self) -> int:
        return len(self.entries)

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return np.array([e.to_original(xi) for e, xi in zip(self.entries, x)])

    def to_original_dict(self, x: np.ndarray) -> dict[str, float]:
        return {e.name: e.to_original(xi) for e, xi in zip(self.entries, x)}

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        return np.array([e.to_unconstrained(ti) for e, ti in zip(self.entries, theta)])

    def log_prior_with_jacobian(self, x: np.ndarray) -> float:
        total = 0.0
        for e, xi in zip(self.entries, x):
            if not np.isfinite(xi):
                return -np.inf
            total += e.log_prior(xi) + e.log_jacobian(xi)
        return total

    def start_point(self) -> np.ndarray:
        return np.array([e.start_point() for e in self.entries])


@dataclass(frozen=True)
class SigmaField:
    """Per-observation variance estimates plus an interpolating predictor."""

    at_obs: np.ndarray
    predictor: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        at_obs = np.asarray(self.at_obs, dtype=float)
        if np.any(at_obs <= 0):
            raise ValueError("variance field must be strictly positive")
        object.__setattr__(self, "at_obs", at_obs)

    @classmethod
    def constant(cls, sigma2: float, n: int) -> "SigmaField":
        if not (sigma2 > 0):
            raise ValueError("variance must be positive")
        return cls(np.full(n, sigma2), lambda t: np.full(np.shape(t), sigma2))

    @classmethod
    def from_hetgp(cls, het) -> "SigmaField":
        return cls(het.sigma2_hat, het.sigma2_at)


def gaussian_loglik(residuals: np.ndarray, sig2: np.ndarray) -> float:
    """-1/2 sum[ log(2 pi sig2_i) + r_i^2 / sig2_i ]; shared by both noise models."""
    return -0.5 * float(np.sum(np.log(2.0 * math.pi * sig2) + residuals * residuals / sig2))


def hetero_log_likelihood(data: TimeSeries, model: OdeModel, sigma: SigmaField) -> float:
    """Gaussian likelihood with per-time variances from the fitted field."""
    traj = solve(model, data.times)
    if sigma.at_obs.shape[0] == data.n:
        sig2 = sigma.at_obs
    else:
        sig2 = sigma.predictor(data.times)
    return gaussian_loglik(data.values - traj.observed, sig2)


def homo_log_likelihood(data: TimeSeries, model: OdeModel, sigma2: float) -> float:
    """Gaussian likelihood with a single constant variance."""
    if not (sigma2 > 0):
        raise ValueError("sigma2 must be positive")
    traj = solve(model, data.times)
    return gaussian_loglik(data.values - traj.observed, np.full(data.n, sigma2))


def log_posterior(
    theta_transformed: np.ndarray,
    priors: PriorSpec,
    loglik: Callable[[dict[str, float]], float],
) -> float:
    """Unnormalised log posterior on the unconstrained scale.

    Returns -inf (a rejectable value) outside the prior support, on solver
    failure, or when the model parameters are invalid.
    """
    x = np.asarray(theta_transformed, dtype=float)
    lp = priors.log_prior_with_jacobian(x)
    if not np.isfinite(lp):
        return -np.inf
    theta = priors.to_original_dict(x)
    if not all(np.isfinite(v) for v in theta.values()):
        return -np.inf
    try:
        ll = loglik(theta)
    except (SolverError, ValueError):
        return -np.inf
    if not np.isfinite(ll):
        return -np.inf
    return ll + lp


def make_log_posterior(priors: PriorSpec, loglik: Callable[[dict[str, float]], float]):
    return lambda x: log_posterior(x, priors, loglik)


@dataclass(frozen=True)
class Chain:
    """Post-burn-in MCMC output; draws are stored on the original scale."""

    draws: np.ndarray
    draws_transformed: np.ndarray
    accepted: int
    total: int
    burn_in: int
    seed: int
    param_names: tuple[str, ...]

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.total

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.param_names.index(name)]


def mh_sample(
    log_post: Callable[[np.ndarray], float],
    theta0: np.ndarray,
    proposal_cov: np.ndarray,
    iterations: int,
    burn_in: int,
    seed: int,
    to_original: Callable[[np.ndarray], np.ndarray] | None = None,
    param_names: tuple[str, ...] | None = None,
) -> Chain:
    """Gaussian random-walk Metropolis-Hastings on the unconstrained scale.

    The proposal is symmetric, so a move is accepted with probability
    min(1, exp(log_post(prop) - log_post(current))).  The first ``burn_in``
    iterations are discarded.
    """
    x = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    d = x.shape[0]
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=float))
    if cov.shape != (d, d):
        raise ValueError(f"proposal covariance must be {d}x{d}")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("proposal covariance must be positive definite") from exc
    if not (iterations > burn_in >= 0):
        raise ValueError("need iterations > burn_in >= 0")

    rng = np.random.default_rng(seed)
    lp = log_post(x)
    if not np.isfinite(lp):
        raise ValueError("log posterior is not finite at the starting point")

    kept = iterations - burn_in
    draws_t = np.empty((kept, d))
    accepted = 0
    for i in range(iterations):
        prop = x + chol @ rng.standard_normal(d)
        lp_prop = log_post(prop)
        u = rng.uniform()
        delta = lp_prop - lp
        if delta >= 0.0 or math.log(u) < delta:
            x = prop
            lp = lp_prop
            accepted += 1
        if i >= burn_in:
            draws_t[i - burn_in] = x

    if to_original is None:
        draws = draws_t.copy()
    else:
        draws = np.apply_along_axis(to_original, 1, draws_t)
    if param_names is None:
        param_names = tuple(f"p{j}" for j in range(d))
    return Chain(
        draws=draws,
        draws_transformed=draws_t,
        accepted=accepted,
        total=iterations,
        burn_in=burn_in,
        seed=seed,
        param_names=tuple(param_names),
    )


def gelman_rubin(chains: list[Chain], parameter: int) -> float:
    """Potential scale reduction factor from between/within-chain variances."""
    if len(chains) < 2:
        raise ValueError("need at least two chains")
    lengths = {c.draws.shape[0] for c in chains}
    if len(lengths) != 1:
        raise ValueError("chains must have equal post-burn-in lengths")
    n = lengths.pop()
    if n < 10:
        raise ValueError("chains too short for a stable diagnostic")
    series = np.stack([c.draws[:, parameter] for c in chains])
    within = float(np.mean(np.var(series, axis=1, ddof=1)))
    if within <= 0.0:
        raise DegenerateChains("within-chain variance is zero")
    between_over_n = float(np.var(np.mean(series, axis=1), ddof=1))
    var_hat = (n - 1) / n * within + between_over_n
    return math.sqrt(var_hat / within)


def adapt_proposal(pilot: Chain) -> np.ndarray:
    """Scaled empirical covariance of the pilot draws: (2.38^2/d) Cov + 1e-10 I."""
    draws = pilot.draws_transformed
    if draws.shape[0] < 100:
        raise ValueError("pilot needs at least 100 post-burn-in draws")
    d = draws.shape[1]
    cov = np.atleast_2d(np.cov(draws.T, ddof=1))
    if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0.0):
        raise DegenerateChains("pilot covariance is degenerate")
    return (2.38**2 / d) * cov + 1e-10 * np.eye(d)


def r0_posterior(chain: Chain, delta: float = 7.0 / 5.0) -> np.ndarray:
    """Per-draw basic reproduction number beta (s0 + i0) / delta."""
    beta = chain.column("beta")
    s0 = chain.column("s0")
    i0 = chain.column("i0")
    return beta * (s0 + i0) / delta
