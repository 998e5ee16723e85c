"""Forward-backward costate sweep for one MPC roll.

Each roll integrates the deterministic surrogate forward, the three shadow
prices backward, and updates the per-window controls through the explicit
soft-threshold law, iterating the loop to a damped fixed point.  The peg path
produced by one iterate feeds the intensity feedback of the next iterate's
flow forecast.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .control import ControlAction, window_fee, window_reallocation
from .dynamics import PegParams, RateEnvironment, ReserveState
from .errors import ForecastError, SolverDivergenceError
from .forecast import expected_net_flow, propagate_moments
from .hawkes import HawkesParams, PegFeedback


@dataclass(frozen=True)
class CostTerms:
    """Stage-cost weights.

    c_peg:        dollars per squared peg unit per hour
    c_fee:        dollars per squared fee unit per hour
    lambda_omega: dollars per dollar reallocated (linear trading friction)
    rho_omega:    dollar-hours per squared dollar rate (quadratic impact)
    """

    c_peg: float
    c_fee: float
    lambda_omega: float
    rho_omega: float

    def __post_init__(self):
        if self.c_peg <= 0 or self.c_fee <= 0:
            raise ValueError("c_peg and c_fee must be > 0")
        if self.lambda_omega < 0 or self.rho_omega < 0:
            raise ValueError("trading-cost weights must be >= 0")


@dataclass(frozen=True)
class SurrogatePath:
    """Deterministic surrogate state trajectory on the planning grid."""

    grid: np.ndarray
    r_liq: np.ndarray
    r_bill: np.ndarray
    delta_p: np.ndarray
    s_out: np.ndarray


@dataclass(frozen=True)
class CostateTrajectory:
    """Shadow prices of cash, bills, and peg deviation on the planning grid."""

    grid: np.ndarray
    p_liq: np.ndarray
    p_bill: np.ndarray
    p_dp: np.ndarray


@dataclass
class RollPlan:
    """Converged (or best-effort) plan for one MPC roll."""

    windows: list            # (start_hours, end_hours, ControlAction)
    state_path: SurrogatePath
    costates: CostateTrajectory
    converged: bool
    iterations: int
    objective: float         # discounted surrogate stage cost over the horizon
    switching: np.ndarray    # S_j per window


def stage_cost(state: ReserveState, control: ControlAction,
               rates: RateEnvironment, costs: CostTerms) -> float:
    """Instantaneous cost rate: peg and fee penalties, trading friction, minus carry."""
    return (
        costs.c_peg * state.delta_p ** 2
        + costs.c_fee * control.delta ** 2
        + costs.lambda_omega * abs(control.omega)
        + 0.5 * costs.rho_omega * control.omega ** 2
        - rates.r_bill * state.r_bill
    )


@njit(cache=True)
def _forward_surrogate(rl0, rb0, dp0, q, s, omega_g, delta_g,
                       r_cash, r_bill, eta, gamma, window_hours, dt, n):
    """RK4 of the surrogate reserve/peg dynamics under per-step controls.

    The peg drift uses the rate-form shortfall [q - r_liq/window]_+ / s.
    States are clamped to their feasible ranges after each step.
    """
    rl = np.empty(n + 1)
    rb = np.empty(n + 1)
    dpp = np.empty(n + 1)
    rl[0], rb[0], dpp[0] = rl0, rb0, dp0
    for i in range(n):
        w = omega_g[i]
        de = delta_g[i]
        q0, q1 = q[i], q[i + 1]
        s0, s1 = s[i], s[i + 1]
        qm = 0.5 * (q0 + q1)
        sm = 0.5 * (s0 + s1)

        x_rl, x_rb, x_dp = rl[i], rb[i], dpp[i]

        k1_rl = r_cash * x_rl - q0 - w
        k1_rb = r_bill * x_rb + w
        k1_dp = eta * max(q0 - x_rl / window_hours, 0.0) / s0 - gamma * de

        y_rl = x_rl + 0.5 * dt * k1_rl
        y_rb = x_rb + 0.5 * dt * k1_rb
        k2_rl = r_cash * y_rl - qm - w
        k2_rb = r_bill * y_rb + w
        k2_dp = eta * max(qm - y_rl / window_hours, 0.0) / sm - gamma * de

        y_rl = x_rl + 0.5 * dt * k2_rl
        y_rb = x_rb + 0.5 * dt * k2_rb
        k3_rl = r_cash * y_rl - qm - w
        k3_rb = r_bill * y_rb + w
        k3_dp = eta * max(qm - y_rl / window_hours, 0.0) / sm - gamma * de

        y_rl = x_rl + dt * k3_rl
        y_rb = x_rb + dt * k3_rb
        k4_rl = r_cash * y_rl - q1 - w
        k4_rb = r_bill * y_rb + w
        k4_dp = eta * max(q1 - y_rl / window_hours, 0.0) / s1 - gamma * de

        rl[i + 1] = max(x_rl + dt / 6.0 * (k1_rl + 2 * k2_rl + 2 * k3_rl + k4_rl), 0.0)
        rb[i + 1] = max(x_rb + dt / 6.0 * (k1_rb + 2 * k2_rb + 2 * k3_rb + k4_rb), 0.0)
        d = x_dp + dt / 6.0 * (k1_dp + 2 * k2_dp + 2 * k3_dp + k4_dp)
        dpp[i + 1] = min(max(d, -1.0), 1.0)
    return rl, rb, dpp


@njit(cache=True)
def _indicator(x, width):
    if width <= 0.0:
        return 1.0 if x > 0.0 else 0.0
    z = x / width
    if z > 40.0:
        return 1.0
    if z < -40.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-z))


@njit(cache=True)
def _backward_costates(rl, q, s, dpp, r_cash, r_bill, rho, eta, c_peg,
                       window_hours, width, pl_t, pb_t, pd_t, dt, n):
    """Backward RK4 of the costate ODEs from the terminal condition."""
    pl = np.empty(n + 1)
    pb = np.empty(n + 1)
    pd = np.empty(n + 1)
    pl[n], pb[n], pd[n] = pl_t, pb_t, pd_t
    h = -dt
    for i in range(n, 0, -1):
        # grid values at the right node, midpoint, and left node of the step
        rl1, rl0 = rl[i], rl[i - 1]
        q1, q0 = q[i], q[i - 1]
        s1, s0 = s[i], s[i - 1]
        d1, d0 = dpp[i], dpp[i - 1]
        rlm, qm, sm, dm = 0.5 * (rl1 + rl0), 0.5 * (q1 + q0), 0.5 * (s1 + s0), 0.5 * (d1 + d0)

        ind1 = _indicator(q1 - rl1 / window_hours, width)
        indm = _indicator(qm - rlm / window_hours, width)
        ind0 = _indicator(q0 - rl0 / window_hours, width)

        x_pl, x_pb, x_pd = pl[i], pb[i], pd[i]

        k1_pl = (rho - r_cash) * x_pl + eta * ind1 * x_pd / s1
        k1_pb = (rho - r_bill) * x_pb + r_bill
        k1_pd = rho * x_pd - 2.0 * c_peg * d1

        y_pl = x_pl + 0.5 * h * k1_pl
        y_pb = x_pb + 0.5 * h * k1_pb
        y_pd = x_pd + 0.5 * h * k1_pd
        k2_pl = (rho - r_cash) * y_pl + eta * indm * y_pd / sm
        k2_pb = (rho - r_bill) * y_pb + r_bill
        k2_pd = rho * y_pd - 2.0 * c_peg * dm

        y_pl = x_pl + 0.5 * h * k2_pl
        y_pb = x_pb + 0.5 * h * k2_pb
        y_pd = x_pd + 0.5 * h * k2_pd
        k3_pl = (rho - r_cash) * y_pl + eta * indm * y_pd / sm
        k3_pb = (rho - r_bill) * y_pb + r_bill
        k3_pd = rho * y_pd - 2.0 * c_peg * dm

        y_pl = x_pl + h * k3_pl
        y_pb = x_pb + h * k3_pb
        y_pd = x_pd + h * k3_pd
        k4_pl = (rho - r_cash) * y_pl + eta * ind0 * y_pd / s0
        k4_pb = (rho - r_bill) * y_pb + r_bill
        k4_pd = rho * y_pd - 2.0 * c_peg * d0

        pl[i - 1] = x_pl + h / 6.0 * (k1_pl + 2 * k2_pl + 2 * k3_pl + k4_pl)
        pb[i - 1] = x_pb + h / 6.0 * (k1_pb + 2 * k2_pb + 2 * k3_pb + k4_pb)
        pd[i - 1] = x_pd + h / 6.0 * (k1_pd + 2 * k2_pd + 2 * k3_pd + k4_pd)
    return pl, pb, pd


def integrate_costates(
    state_path: SurrogatePath,
    q_hat_path: np.ndarray,
    rates: RateEnvironment,
    costs: CostTerms,
    peg: PegParams,
    terminal: tuple[float, float, float],
    dt: float,
    window_hours: float,
    indicator_width: float = 0.0,
) -> CostateTrajectory:
    """Integrate the costate ODEs backward from the terminal triple.

    The shortfall indicator compares the forecast flow against the cash stock
    spread over one settlement window; indicator_width > 0 replaces the hard
    indicator by a logistic of that width in the p_liq forcing.
    """
    n = state_path.grid.size - 1
    if q_hat_path.shape != state_path.grid.shape:
        raise ValueError("q_hat_path and state_path must share one grid")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    pl, pb, pd = _backward_costates(
        state_path.r_liq, np.asarray(q_hat_path, dtype=float),
        state_path.s_out, state_path.delta_p,
        rates.r_cash, rates.r_bill, rates.rho, peg.eta, costs.c_peg,
        window_hours, indicator_width,
        float(terminal[0]), float(terminal[1]), float(terminal[2]), dt, n,
    )
    if not (np.all(np.isfinite(pl)) and np.all(np.isfinite(pb)) and np.all(np.isfinite(pd))):
        raise SolverDivergenceError("costate integration produced non-finite values")
    return CostateTrajectory(grid=state_path.grid, p_liq=pl, p_bill=pb, p_dp=pd)


def switching_integral(costates: CostateTrajectory, window: tuple[float, float]) -> float:
    """Trapezoidal integral of (p_bill - p_liq) over one window."""
    start, end = window
    grid = costates.grid
    if start < grid[0] - 1e-9 or end > grid[-1] + 1e-9 or start >= end:
        raise ValueError(f"window {window} not inside costate grid")
    diff = costates.p_bill - costates.p_liq
    i0 = int(round((start - grid[0]) / (grid[1] - grid[0])))
    i1 = int(round((end - grid[0]) / (grid[1] - grid[0])))
    return float(np.trapezoid(diff[i0:i1 + 1], grid[i0:i1 + 1]))


@dataclass
class RollProblem:
    """Bundle of everything one MPC roll needs besides the measured state."""

    params_r: HawkesParams
    params_m: HawkesParams
    feedback: PegFeedback
    rates: RateEnvironment
    costs: CostTerms
    peg: PegParams
    horizon: float            # hours
    window_hours: float
    omega_max: float
    delta_max: float
    dt: float = 0.1
    tol: float = 1e-6         # on controls scaled by omega_max
    max_iter: int = 50
    damping: float = 0.5
    indicator_width: float | None = None  # $/hour; default 1e-4 * s_out / window
    terminal: tuple[float, float, float] = (0.0, 0.0, 0.0)


def _discounted_objective(grid, rl, rb, dpp, omega_g, delta_g, rates, costs):
    dt = grid[1] - grid[0]
    omega_full = np.append(omega_g, omega_g[-1])
    delta_full = np.append(delta_g, delta_g[-1])
    ell = (costs.c_peg * dpp ** 2 + costs.c_fee * delta_full ** 2
           + costs.lambda_omega * np.abs(omega_full)
           + 0.5 * costs.rho_omega * omega_full ** 2
           - rates.r_bill * rb)
    disc = np.exp(-rates.rho * grid)
    return float(np.trapezoid(disc * ell, dx=dt))


def solve_mpc_roll(
    measured: ReserveState,
    lambda_r0: float,
    lambda_m0: float,
    problem: RollProblem,
) -> RollPlan:
    """Run the damped forward-backward sweep to a fixed point.

    lambda_r0/lambda_m0 are the filtered intensities at the roll time (the
    redemption value including any active peg feedback).  Raises
    SolverDivergenceError when the control update grows for five consecutive
    iterations; propagates ForecastError when even the first forecast
    exhausts supply.
    """
    p = problem
    steps_per_window = round(p.window_hours / p.dt)
    if abs(steps_per_window * p.dt - p.window_hours) > 1e-9:
        raise ValueError("window_hours must be a multiple of dt")
    n_windows = round(p.horizon / p.window_hours)
    if n_windows < 1 or abs(n_windows * p.window_hours - p.horizon) > 1e-9:
        raise ValueError("horizon must be a positive multiple of window_hours")
    if p.tol <= 0:
        raise ValueError("tol must be > 0")
    n = n_windows * steps_per_window
    grid = np.arange(n + 1) * p.dt
    width = (p.indicator_width if p.indicator_width is not None
             else 1e-4 * measured.s_out / p.window_hours)

    omega = np.zeros(n_windows)
    delta = np.zeros(n_windows)
    dp_plan = np.full(n + 1, measured.delta_p)

    window_slices = [(j * steps_per_window, (j + 1) * steps_per_window) for j in range(n_windows)]
    windows_hours = [(j * p.window_hours, (j + 1) * p.window_hours) for j in range(n_windows)]

    converged = False
    prev_change = np.inf
    grow_streak = 0
    state_path = costates = None
    s_j = np.zeros(n_windows)
    iterations = 0

    # Per-window under-relaxation.  The threshold law is discontinuous, so a
    # fixed damping factor can cycle between the box extremes; halving a
    # window's step whenever its update direction flips makes the iterate
    # settle onto the interior (singular-arc) balance point instead.
    step_w = np.full(n_windows, p.damping)
    step_d = np.full(n_windows, p.damping)
    prev_dir_w = np.zeros(n_windows)
    prev_dir_d = np.zeros(n_windows)

    for it in range(1, p.max_iter + 1):
        iterations = it
        path = propagate_moments(lambda_r0, lambda_m0, p.params_r, p.params_m,
                                 p.feedback, dp_plan, p.horizon, p.dt)
        flow = expected_net_flow(path, p.params_r.mark_mean, p.params_m.mark_mean,
                                 measured.s_out)

        omega_g = np.repeat(omega, steps_per_window)
        delta_g = np.repeat(delta, steps_per_window)
        rl, rb, dpp = _forward_surrogate(
            measured.r_liq, measured.r_bill, measured.delta_p,
            flow.q_hat, flow.s_out_hat, omega_g, delta_g,
            p.rates.r_cash, p.rates.r_bill, p.peg.eta, p.peg.gamma,
            p.window_hours, p.dt, n,
        )
        state_path = SurrogatePath(grid=grid, r_liq=rl, r_bill=rb,
                                   delta_p=dpp, s_out=flow.s_out_hat)
        costates = integrate_costates(state_path, flow.q_hat, p.rates, p.costs,
                                      p.peg, p.terminal, p.dt, p.window_hours,
                                      indicator_width=width)

        omega_new = np.empty(n_windows)
        delta_new = np.empty(n_windows)
        for j, (w_lo, w_hi) in enumerate(windows_hours):
            s_j[j] = switching_integral(costates, (w_lo, w_hi))
            target_w = window_reallocation(s_j[j], p.window_hours, p.costs, p.omega_max)
            i0, i1 = window_slices[j]
            p_dp_avg = float(np.trapezoid(costates.p_dp[i0:i1 + 1],
                                          grid[i0:i1 + 1])) / p.window_hours
            target_d = window_fee(p_dp_avg, p.peg.gamma, p.costs.c_fee, p.delta_max)
            dir_w = target_w - omega[j]
            dir_d = target_d - delta[j]
            if dir_w * prev_dir_w[j] < 0.0:
                step_w[j] *= 0.5
            if dir_d * prev_dir_d[j] < 0.0:
                step_d[j] *= 0.5
            prev_dir_w[j], prev_dir_d[j] = dir_w, dir_d
            omega_new[j] = omega[j] + step_w[j] * dir_w
            delta_new[j] = delta[j] + step_d[j] * dir_d

        change = max(
            float(np.max(np.abs(omega_new - omega))) / max(p.omega_max, 1e-300),
            float(np.max(np.abs(delta_new - delta))) / max(p.delta_max, 1.0),
        )
        omega, delta = omega_new, delta_new
        dp_plan = dpp

        if change < p.tol:
            converged = True
            break
        if change > prev_change:
            grow_streak += 1
            if grow_streak >= 5:
                raise SolverDivergenceError(
                    "control update grew for 5 consecutive sweep iterations",
                    diagnostics={"iteration": it, "change": change,
                                 "switching": s_j.copy()},
                )
        else:
            grow_streak = 0
        prev_change = change

    objective = _discounted_objective(grid, state_path.r_liq, state_path.r_bill,
                                      state_path.delta_p,
                                      np.repeat(omega, steps_per_window),
                                      np.repeat(delta, steps_per_window),
                                      p.rates, p.costs)
    windows = [(lo, hi, ControlAction(omega=float(omega[j]), delta=float(delta[j])))
               for j, (lo, hi) in enumerate(windows_hours)]
    return RollPlan(windows=windows, state_path=state_path, costates=costates,
                    converged=converged, iterations=iterations,
                    objective=objective, switching=s_j.copy())
