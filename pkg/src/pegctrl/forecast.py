"""Deterministic surrogate of the stochastic flows over a planning horizon.

Conditional-mean intensities of the two streams follow linear ODEs obtained
by taking expectations of the jump dynamics; the expected net redemption flow
and outstanding-supply path follow from the mean intensities and the mean
transaction sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ForecastError
from .hawkes import HawkesParams, PegFeedback


@dataclass(frozen=True)
class MeanIntensityPath:
    """Mean intensities of both streams on the planning grid."""

    grid: np.ndarray          # hours from horizon start, uniform spacing
    lambda_r_hat: np.ndarray  # events/hour
    lambda_m_hat: np.ndarray  # events/hour


@dataclass(frozen=True)
class FlowForecast:
    """Expected net redemption flow and outstanding supply on the grid."""

    grid: np.ndarray
    q_hat: np.ndarray      # dollars/hour, positive = net redemptions
    s_out_hat: np.ndarray  # dollars


@njit(cache=True)
def _moment_rk4(lam_r0, lam_m0, l0r, kr, thr, l0m, km, thm, zeta, dp, dt, n):
    """RK4 for the coupled mean-intensity ODEs; dp holds the peg plan per grid point."""
    lr = np.empty(n + 1)
    lm = np.empty(n + 1)
    lr[0] = lam_r0
    lm[0] = lam_m0
    for i in range(n):
        f0 = zeta * dp[i] * dp[i]
        dmid = 0.5 * (dp[i] + dp[i + 1])
        fm = zeta * dmid * dmid
        f1 = zeta * dp[i + 1] * dp[i + 1]

        x = lr[i]
        k1 = -thr * (x - l0r) + kr * x + f0
        y = x + 0.5 * dt * k1
        k2 = -thr * (y - l0r) + kr * y + fm
        y = x + 0.5 * dt * k2
        k3 = -thr * (y - l0r) + kr * y + fm
        y = x + dt * k3
        k4 = -thr * (y - l0r) + kr * y + f1
        lr[i + 1] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        x = lm[i]
        k1 = -thm * (x - l0m) + km * x
        y = x + 0.5 * dt * k1
        k2 = -thm * (y - l0m) + km * y
        y = x + 0.5 * dt * k2
        k3 = -thm * (y - l0m) + km * y
        y = x + dt * k3
        k4 = -thm * (y - l0m) + km * y
        lm[i + 1] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return lr, lm


def propagate_moments(
    init_r: float,
    init_m: float,
    params_r: HawkesParams,
    params_m: HawkesParams,
    feedback: PegFeedback,
    peg_plan,
    horizon: float,
    dt: float = 0.1,
) -> MeanIntensityPath:
    """Integrate the mean-intensity ODEs over [0, horizon].

    peg_plan maps time (hours from horizon start) to planned peg deviation;
    it feeds the redemption stream through the quadratic feedback term.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} must be a positive multiple of dt {dt}")
    if init_r < 0 or init_m < 0:
        raise ValueError("initial intensities must be >= 0")

    grid = np.arange(n + 1) * dt
    if callable(peg_plan):
        dp = np.array([float(peg_plan(t)) for t in grid])
    else:
        dp = np.asarray(peg_plan, dtype=float)
        if dp.shape != grid.shape:
            raise ValueError(f"peg plan array must have {n + 1} points, got {dp.shape}")
    if not np.all(np.isfinite(dp)):
        raise ForecastError("peg plan contains non-finite values")

    lr, lm = _moment_rk4(
        float(init_r), float(init_m),
        params_r.lambda0, params_r.kappa, params_r.theta,
        params_m.lambda0, params_m.kappa, params_m.theta,
        feedback.zeta, dp, dt, n,
    )
    if not (np.all(np.isfinite(lr)) and np.all(np.isfinite(lm))):
        raise ForecastError("mean-intensity integration produced non-finite values")
    return MeanIntensityPath(grid=grid, lambda_r_hat=lr, lambda_m_hat=lm)


def expected_net_flow(
    path: MeanIntensityPath,
    mark_mean_r: float,
    mark_mean_m: float,
    s_out0: float,
) -> FlowForecast:
    """Expected net redemption flow and the supply path it implies.

    Supply falls when net redemptions are positive: dS/dt = -q_hat.
    """
    if path.grid.size == 0:
        raise ValueError("empty intensity path")
    q = mark_mean_r * path.lambda_r_hat - mark_mean_m * path.lambda_m_hat
    dt = np.diff(path.grid)
    s = np.empty_like(q)
    s[0] = s_out0
    s[1:] = s_out0 - np.cumsum(0.5 * (q[:-1] + q[1:]) * dt)
    if np.any(s <= 0.0):
        raise ForecastError("forecast supply exhausted (s_out_hat <= 0) within horizon")
    return FlowForecast(grid=path.grid, q_hat=q, s_out_hat=s)
