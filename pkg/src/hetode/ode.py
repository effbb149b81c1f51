"""Forward models: logistic and Richards growth in closed form, SIR by RK4.

All evaluators are pure functions of (parameters, times); the SIR system is
integrated at a fixed internal step with linear interpolation onto the
requested times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SIR_DEFAULT_STEP = 0.01  # weeks
SIR_DEFAULT_DELTA = 7.0 / 5.0  # recovery in 5 days, weekly time unit


class SolverError(Exception):
    """Forward model evaluation failed."""


class StepTooLarge(SolverError):
    """State went negative during integration; reduce the step."""


_MODEL_PARAMS = {
    "logistic": ("r", "K", "C0"),
    "richards": ("alpha", "gamma", "K", "C0"),
    "sir": ("beta", "s0", "i0", "delta"),
}


@dataclass(frozen=True)
class OdeModel:
    """A named dynamical system with its parameter vector.

    kind: "logistic", "richards" or "sir".  ``theta`` holds the named
    parameters; for "sir" a missing ``delta`` defaults to 7/5 and ``step``
    is the internal integration step in time units.
    """

    kind: str
    theta: dict[str, float]
    step: float = SIR_DEFAULT_STEP

    def __post_init__(self):
        if self.kind not in _MODEL_PARAMS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        theta = dict(self.theta)
        if self.kind == "sir":
            theta.setdefault("delta", SIR_DEFAULT_DELTA)
        missing = [p for p in _MODEL_PARAMS[self.kind] if p not in theta]
        if missing:
            raise ValueError(f"{self.kind} model missing parameters: {missing}")
        for p in _MODEL_PARAMS[self.kind]:
            if not (theta[p] > 0.0):
                raise ValueError(f"{self.kind} parameter {p} must be positive, got {theta[p]}")
        if self.kind == "richards":
            if not (theta["K"] <= 100.0):
                raise ValueError("richards K must lie in (0, 100]")
            if not (theta["C0"] < theta["K"]):
                raise ValueError("richards requires 0 < C0 < K")
        if not (self.step > 0.0):
            raise ValueError("step must be positive")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # one row per time
    observed: np.ndarray

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states row count must match times")
        if not np.all(np.isfinite(self.observed)):
            raise SolverError("non-finite trajectory values")


def logistic_solution(theta: dict[str, float], times: np.ndarray) -> Trajectory:
    """C(t) = K C0 / ((K - C0) e^{-r t} + C0)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    r, big_k, c0 = theta["r"], theta["K"], theta["C0"]
    c = big_k * c0 / ((big_k - c0) * np.exp(-r * times) + c0)
    return Trajectory(times=times, states=c[:, None], observed=c)


def richards_solution(theta: dict[str, float], times: np.ndarray) -> Trajectory:
    """C(t) = K [1 + ((K/C0)^gamma - 1) e^{-alpha t}]^{-1/gamma}.

    Evaluated in log space so large gamma cannot overflow (K/C0)^gamma.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    alpha, gamma, big_k, c0 = theta["alpha"], theta["gamma"], theta["K"], theta["C0"]
    # (K/C0)^gamma e^{-alpha t} - e^{-alpha t} + 1, all through logaddexp
    u = gamma * np.log(big_k / c0) - alpha * times
    with np.errstate(divide="ignore"):
        log_b = np.logaddexp(np.log1p(-np.exp(-alpha * times)), u)
    c = big_k * np.exp(-log_b / gamma)
    c = np.where(times == 0.0, c0, c)
    return Trajectory(times=times, states=c[:, None], observed=c)


def sir_solve(theta: dict[str, float], times: np.ndarray, step: float = SIR_DEFAULT_STEP) -> Trajectory:
    """Integrate dS/dt = -beta S I, dI/dt = beta S I - delta I; observe I.

    Classical RK4 at fixed internal step from times[0], with a final
    shortened step landing on times[-1]; dense output is linearly
    interpolated onto the requested times.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    beta, delta = theta["beta"], theta.get("delta", SIR_DEFAULT_DELTA)
    s0, i0 = theta["s0"], theta["i0"]
    t0 = float(times[0])
    span = float(times[-1] - t0)
    grid, states, status = _kernels.sir_rk4(beta, delta, s0, i0, span, step)
    if status == _kernels.SIR_NEGATIVE:
        raise StepTooLarge(f"state went below -1e-9 at step {step}")
    if status == _kernels.SIR_NONFINITE:
        raise SolverError("SIR integration produced non-finite state")
    rel = times - t0
    s = np.maximum(np.interp(rel, grid, states[:, 0]), 0.0)
    i = np.maximum(np.interp(rel, grid, states[:, 1]), 0.0)
    return Trajectory(times=times, states=np.column_stack([s, i]), observed=i)


def solve(model: OdeModel, times: np.ndarray) -> Trajectory:
    """Evaluate the model trajectory: closed form where available, RK4 otherwise."""
    if model.kind == "logistic":
        return logistic_solution(model.theta, times)
    if model.kind == "richards":
        return richards_solution(model.theta, times)
    return sir_solve(model.theta, times, step=model.step)
