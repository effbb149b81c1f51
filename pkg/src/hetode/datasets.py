"""Dataset generation, ingestion, and CSV round-tripping.

Three headered CSV layouts are understood: plain observations ``t,y``,
per-time summaries ``t,mean,sd`` (used to reconstruct replicate-level
observations), and replicated observations ``t,y,rep``.  Floats are
written with shortest round-trip repr so emitted files re-ingest exactly.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gp import TimeSeries
from .ode import OdeModel, solve

LOGISTIC_TRUTH = {"r": 0.0025, "K": 80.0, "C0": 0.7}
TRUE_SIGMA = 2.3
SIGMA_TIME_SCALE = 100.0
LOGISTIC_T_MAX = 4000.0


class TruncationStall(Exception):
    """Positive-truncation rejection sampling is accepting almost nothing."""


@dataclass
class DatasetBundle:
    """Observations plus whatever side information the source provides."""

    observations: TimeSeries
    truth: dict | None = None  # generator parameters and noise law, when known
    sd: np.ndarray | None = None  # per-time sd column (summary format)
    reps: np.ndarray | None = None  # replicate index per row (replicated format)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sd is not None:
            self.sd = np.asarray(self.sd, dtype=float)
            if self.sd.shape != self.observations.times.shape:
                raise ValueError("sd column length must match observations")
            if np.any(self.sd <= 0):
                raise ValueError("sd column must be strictly positive")


def true_sigma_profile(times: np.ndarray, sigma: float = TRUE_SIGMA) -> np.ndarray:
    """Generator noise law: sd grows as sigma * sqrt(t / 100)."""
    return sigma * np.sqrt(np.asarray(times, dtype=float) / SIGMA_TIME_SCALE)


def generate_logistic_dataset(n: int, seed: int, t_max: float = LOGISTIC_T_MAX) -> DatasetBundle:
    """Equally spaced logistic-growth observations with increasing noise.

    The grid starts at t=1 rather than 0 so the first observation has a
    nonzero noise variance.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    times = np.linspace(1.0, t_max, n)
    model = OdeModel("logistic", LOGISTIC_TRUTH)
    curve = solve(model, times).observed
    sd = true_sigma_profile(times)
    rng = np.random.default_rng(seed)
    values = curve + rng.standard_normal(n) * sd
    return DatasetBundle(
        observations=TimeSeries(times, values),
        truth={
            "model": "logistic",
            "theta": dict(LOGISTIC_TRUTH),
            "sigma": TRUE_SIGMA,
            "sigma_time_scale": SIGMA_TIME_SCALE,
        },
        metadata={"format": "plain", "source": f"logistic generator n={n} seed={seed}"},
    )


def reconstruct_coral_observations(
    summary: DatasetBundle, j: int = 5, seed: int = 0
) -> DatasetBundle:
    """Draw j positive observations per time from N(mean, sd), truncated at zero.

    Rejection sampling; raises TruncationStall when the acceptance rate
    drops below roughly 1e-3 (mean many sds below zero).
    """
    if summary.sd is None:
        raise ValueError("summary bundle must carry an sd column")
    if j < 1:
        raise ValueError("need j >= 1")
    rng = np.random.default_rng(seed)
    times_out = []
    values_out = []
    reps_out = []
    attempt_limit = int(j / 1e-3) + 1000
    for t, mean, sd in zip(summary.observations.times, summary.observations.values, summary.sd):
        accepted: list[float] = []
        attempts = 0
        while len(accepted) < j:
            batch = rng.normal(mean, sd, size=max(2 * j, 16))
            attempts += batch.shape[0]
            accepted.extend(batch[batch > 0.0][: j - len(accepted)])
            if attempts > attempt_limit:
                raise TruncationStall(
                    f"acceptance below 1e-3 at t={t} (mean={mean}, sd={sd})"
                )
        times_out.extend([t] * j)
        values_out.extend(accepted)
        reps_out.extend(range(j))
    return DatasetBundle(
        observations=TimeSeries(np.array(times_out), np.array(values_out)),
        reps=np.array(reps_out, dtype=int),
        metadata={**summary.metadata, "format": "replicated", "replicates": j, "seed": seed},
    )


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(bundle: DatasetBundle, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    obs = bundle.observations
    if bundle.sd is not None:
        lines.append("t,mean,sd")
        for t, m, s in zip(obs.times, obs.values, bundle.sd):
            lines.append(f"{_fmt(t)},{_fmt(m)},{_fmt(s)}")
    elif bundle.reps is not None:
        lines.append("t,y,rep")
        for t, y, r in zip(obs.times, obs.values, bundle.reps):
            lines.append(f"{_fmt(t)},{_fmt(y)},{int(r)}")
    else:
        lines.append("t,y")
        for t, y in zip(obs.times, obs.values):
            lines.append(f"{_fmt(t)},{_fmt(y)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_dataset(path: str | Path) -> DatasetBundle:
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        raise ValueError(f"{path}: empty dataset file")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    header = [h.strip().lower() for h in lines[0].split(",")]
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = list(zip(*rows))
    if header == ["t", "y"]:
        return DatasetBundle(
            observations=TimeSeries(
                np.array([float(v) for v in cols[0]]), np.array([float(v) for v in cols[1]])
            ),
            metadata={"format": "plain", "source": str(path)},
        )
    if header == ["t", "mean", "sd"]:
        return DatasetBundle(
            observations=TimeSeries(
                np.array([float(v) for v in cols[0]]), np.array([float(v) for v in cols[1]])
            ),
            sd=np.array([float(v) for v in cols[2]]),
            metadata={"format": "summary", "source": str(path)},
        )
    if header == ["t", "y", "rep"]:
        return DatasetBundle(
            observations=TimeSeries(
                np.array([float(v) for v in cols[0]]), np.array([float(v) for v in cols[1]])
            ),
            reps=np.array([int(v) for v in cols[2]]),
            metadata={"format": "replicated", "source": str(path)},
        )
    raise ValueError(f"{path}: unrecognized header {header}; expected t,y | t,mean,sd | t,y,rep")


def bundled_path(name: str) -> Path:
    """Path to a CSV shipped with the package (see data/README.md for provenance)."""
    ref = importlib.resources.files("hetode").joinpath("data", name)
    return Path(str(ref))


def coral_summary() -> DatasetBundle:
    return load_dataset(bundled_path("coral_cover_summary.csv"))


def measles_weekly() -> DatasetBundle:
    return load_dataset(bundled_path("measles_weekly.csv"))
