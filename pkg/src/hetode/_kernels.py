"""Hot numeric kernels: covariance assembly, SIR integration, MMD sums.

Each kernel exists in two functionally identical flavours: a numba
``@njit`` build and a pure-numpy fallback.  The active flavour is chosen
at import time; set ``HETODE_DISABLE_NUMBA=1`` to force the numpy path
(it is also selected automatically when numba is not installed).
``benchmarks/bench_kernels.py`` times the two side by side.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.getenv("HETODE_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on minimal installs
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def _decorator(fn):
            return fn

        return _decorator


USING_NUMBA = HAVE_NUMBA and not _DISABLE

# SIR integrator status codes (numba kernels cannot raise rich exceptions)
SIR_OK = 0
SIR_NEGATIVE = 1
SIR_NONFINITE = 2


# ---------------------------------------------------------------------------
# Squared-exponential covariance
# ---------------------------------------------------------------------------


def rbf_covariance_numpy(t: np.ndarray, lengthscale: float, signal_variance: float) -> np.ndarray:
    d = t[:, None] - t[None, :]
    return signal_variance * np.exp(-(d * d) / (2.0 * lengthscale * lengthscale))


def rbf_cross_numpy(a: np.ndarray, b: np.ndarray, lengthscale: float, signal_variance: float) -> np.ndarray:
    d = a[:, None] - b[None, :]
    return signal_variance * np.exp(-(d * d) / (2.0 * lengthscale * lengthscale))


@njit(cache=True)
def _rbf_covariance_numba(t, lengthscale, signal_variance):
    n = t.shape[0]
    k = np.empty((n, n))
    inv = 1.0 / (2.0 * lengthscale * lengthscale)
    for i in range(n):
        k[i, i] = signal_variance
        for j in range(i + 1, n):
            d = t[i] - t[j]
            v = signal_variance * np.exp(-(d * d) * inv)
            k[i, j] = v
            k[j, i] = v
    return k


@njit(cache=True)
def _rbf_cross_numba(a, b, lengthscale, signal_variance):
    n = a.shape[0]
    m = b.shape[0]
    k = np.empty((n, m))
    inv = 1.0 / (2.0 * lengthscale * lengthscale)
    for i in range(n):
        for j in range(m):
            d = a[i] - b[j]
            k[i, j] = signal_variance * np.exp(-(d * d) * inv)
    return k


# ---------------------------------------------------------------------------
# SIR forward integration (classical RK4, fixed step)
# ---------------------------------------------------------------------------


def sir_rk4_numpy(beta: float, delta: float, s0: float, i0: float, span: float, step: float):
    """Integrate dS/dt = -beta*S*I, dI/dt = beta*S*I - delta*I over [0, span].

    Returns (grid, states, status) where grid has one node per full step
    plus a final shortened step landing exactly on span, states is
    (len(grid), 2), and status is one of the SIR_* codes.
    """
    n_full = int(np.floor(span / step + 1e-12))
    remainder = span - n_full * step
    has_tail = remainder > 1e-12 * step
    n_nodes = n_full + 1 + (1 if has_tail else 0)
    grid = np.empty(n_nodes)
    states = np.empty((n_nodes, 2))
    s = s0
    i = i0
    grid[0] = 0.0
    states[0, 0] = s
    states[0, 1] = i
    status = SIR_OK
    for k in range(1, n_nodes):
        h = step if k <= n_full else remainder
        ds1 = -beta * s * i
        di1 = beta * s * i - delta * i
        s2 = s + 0.5 * h * ds1
        i2 = i + 0.5 * h * di1
        ds2 = -beta * s2 * i2
        di2 = beta * s2 * i2 - delta * i2
        s3 = s + 0.5 * h * ds2
        i3 = i + 0.5 * h * di2
        ds3 = -beta * s3 * i3
        di3 = beta * s3 * i3 - delta * i3
        s4 = s + h * ds3
        i4 = i + h * di3
        ds4 = -beta * s4 * i4
        di4 = beta * s4 * i4 - delta * i4
        s = s + (h / 6.0) * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4)
        i = i + (h / 6.0) * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
        if not (np.isfinite(s) and np.isfinite(i)):
            return grid, states, SIR_NONFINITE
        if s < -1e-9 or i < -1e-9:
            return grid, states, SIR_NEGATIVE
        grid[k] = k * step if k <= n_full else span
        states[k, 0] = s
        states[k, 1] = i
    return grid, states, status


@njit(cache=True)
def _sir_rk4_numba(beta, delta, s0, i0, span, step):
    n_full = int(np.floor(span / step + 1e-12))
    remainder = span - n_full * step
    has_tail = remainder > 1e-12 * step
    n_nodes = n_full + 1 + (1 if has_tail else 0)
    grid = np.empty(n_nodes)
    states = np.empty((n_nodes, 2))
    s = s0
    i = i0
    grid[0] = 0.0
    states[0, 0] = s
    states[0, 1] = i
    status = SIR_OK
    for k in range(1, n_nodes):
        h = step if k <= n_full else remainder
        ds1 = -beta * s * i
        di1 = beta * s * i - delta * i
        s2 = s + 0.5 * h * ds1
        i2 = i + 0.5 * h * di1
        ds2 = -beta * s2 * i2
        di2 = beta * s2 * i2 - delta * i2
        s3 = s + 0.5 * h * ds2
        i3 = i + 0.5 * h * di2
        ds3 = -beta * s3 * i3
        di3 = beta * s3 * i3 - delta * i3
        s4 = s + h * ds3
        i4 = i + h * di3
        ds4 = -beta * s4 * i4
        di4 = beta * s4 * i4 - delta * i4
        s = s + (h / 6.0) * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4)
        i = i + (h / 6.0) * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
        if not (np.isfinite(s) and np.isfinite(i)):
            return grid, states, SIR_NONFINITE
        if s < -1e-9 or i < -1e-9:
            return grid, states, SIR_NEGATIVE
        grid[k] = k * step if k <= n_full else span
        states[k, 0] = s
        states[k, 1] = i
    return grid, states, status


# ---------------------------------------------------------------------------
# MMD double sums and pooled pairwise distances
# ---------------------------------------------------------------------------


def mmd_sums_numpy(x: np.ndarray, z: np.ndarray, lam: float):
    """Full V-statistic sums (diagonal included) of the RBF kernel.

    x: (n, d), z: (m, d).  Returns (sum k(x,x'), sum k(z,z'), sum k(x,z)).
    """
    inv = 1.0 / (2.0 * lam * lam)
    dxx = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    dzz = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    dxz = ((x[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    return (
        float(np.exp(-dxx * inv).sum()),
        float(np.exp(-dzz * inv).sum()),
        float(np.exp(-dxz * inv).sum()),
    )


@njit(cache=True)
def _mmd_sums_numba(x, z, lam):
    n, d = x.shape
    m = z.shape[0]
    inv = 1.0 / (2.0 * lam * lam)
    kxx = 0.0
    for i in range(n):
        kxx += 1.0  # diagonal term of the V-statistic
        for j in range(i + 1, n):
            sq = 0.0
            for c in range(d):
                dd = x[i, c] - x[j, c]
                sq += dd * dd
            kxx += 2.0 * np.exp(-sq * inv)
    kzz = 0.0
    for i in range(m):
        kzz += 1.0
        for j in range(i + 1, m):
            sq = 0.0
            for c in range(d):
                dd = z[i, c] - z[j, c]
                sq += dd * dd
            kzz += 2.0 * np.exp(-sq * inv)
    kxz = 0.0
    for i in range(n):
        for j in range(m):
            sq = 0.0
            for c in range(d):
                dd = x[i, c] - z[j, c]
                sq += dd * dd
            kxz += np.exp(-sq * inv)
    return kxx, kzz, kxz


def pairwise_distances_numpy(pooled: np.ndarray) -> np.ndarray:
    """Condensed vector of Euclidean distances over all distinct pairs."""
    n = pooled.shape[0]
    out = np.empty(n * (n - 1) // 2)
    pos = 0
    for i in range(n - 1):
        diff = pooled[i + 1 :] - pooled[i]
        out[pos : pos + n - 1 - i] = np.sqrt((diff * diff).sum(axis=1))
        pos += n - 1 - i
    return out


@njit(cache=True)
def _pairwise_distances_numba(pooled):
    n, d = pooled.shape
    out = np.empty(n * (n - 1) // 2)
    pos = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            sq = 0.0
            for c in range(d):
                dd = pooled[i, c] - pooled[j, c]
                sq += dd * dd
            out[pos] = np.sqrt(sq)
            pos += 1
    return out


if USING_NUMBA:
    rbf_covariance = _rbf_covariance_numba
    rbf_cross = _rbf_cross_numba
    sir_rk4 = _sir_rk4_numba
    mmd_sums = _mmd_sums_numba
    pairwise_distances = _pairwise_distances_numba
else:
    rbf_covariance = rbf_covariance_numpy
    rbf_cross = rbf_cross_numpy
    sir_rk4 = sir_rk4_numpy
    mmd_sums = mmd_sums_numpy
    pairwise_distances = pairwise_distances_numpy
