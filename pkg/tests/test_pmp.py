"""Costate-sweep tests: closed-form shadow prices, comparison properties,
and fixed-point behavior of the roll solver."""

import numpy as np
import pytest

from pegctrl import (ControlAction, ForecastError, HawkesParams, PegFeedback,
                     PegParams, RateEnvironment, ReserveState)
from pegctrl.control import window_reallocation
from pegctrl.pmp import (CostTerms, RollProblem, SurrogatePath,
                         integrate_costates, solve_mpc_roll, stage_cost,
                         switching_integral)

RATES = RateEnvironment(r_cash=0.0, r_bill=4.93e-5 / 8.0, rho=7.31e-5 / 8.0)
COSTS = CostTerms(c_peg=1.5e8, c_fee=6.0e8, lambda_omega=1e-4, rho_omega=1e-15)
PEG = PegParams(eta=10.0, gamma=5.0)
WINDOW = 8.0


def _flat_path(n, rl=1e9, rb=9e9, dp=0.0, s=1e10, dt=0.1):
    grid = np.arange(n + 1) * dt
    return SurrogatePath(grid=grid, r_liq=np.full(n + 1, rl),
                         r_bill=np.full(n + 1, rb),
                         delta_p=np.full(n + 1, dp), s_out=np.full(n + 1, s))


def test_stage_cost_peg_example():
    """A 10bp peg deviation costs c_peg * 1e-6 = 150 dollars per hour."""
    state = ReserveState(r_liq=0.0, r_bill=0.0, delta_p=0.001, s_out=1e10)
    c = stage_cost(state, ControlAction(0.0, 0.0), RATES, COSTS)
    assert c == pytest.approx(150.0)


def test_stage_cost_carry_sign():
    state = ReserveState(r_liq=0.0, r_bill=9e9, delta_p=0.0, s_out=1e10)
    c = stage_cost(state, ControlAction(0.0, 0.0), RATES, COSTS)
    assert c == pytest.approx(-RATES.r_bill * 9e9)
    assert c < 0.0


def test_stage_cost_trading_terms():
    state = ReserveState(r_liq=0.0, r_bill=0.0, delta_p=0.0, s_out=1e10)
    c = stage_cost(state, ControlAction(1e6, 0.0), RATES, COSTS)
    assert c == pytest.approx(1e-4 * 1e6 + 0.5 * 1e-15 * 1e12)


def test_cost_terms_validation():
    with pytest.raises(ValueError):
        CostTerms(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        CostTerms(1.0, 1.0, -1.0, 1.0)


def test_p_bill_closed_form():
    """Bill shadow price over 9 windows vs the scalar linear-ODE solution."""
    n = round(9 * WINDOW / 0.1)
    path = _flat_path(n)
    q = np.full(n + 1, -1e12)  # indicator never fires
    cost = integrate_costates(path, q, RATES, COSTS, PEG,
                              (0.0, 0.0, 0.0), 0.1, WINDOW)
    a = RATES.rho - RATES.r_bill
    T = 9 * WINDOW
    closed = RATES.r_bill / a * (np.exp(a * (path.grid - T)) - 1.0)
    rel = np.max(np.abs(cost.p_bill - closed)) / np.max(np.abs(closed))
    assert rel <= 1e-8
    assert cost.p_bill[0] < 0.0  # bills are valuable: negative marginal cost


def test_p_liq_zero_when_indicator_silent():
    n = 720
    path = _flat_path(n)
    q = np.full(n + 1, -1.0)
    cost = integrate_costates(path, q, RATES, COSTS, PEG,
                              (0.0, 0.0, 0.0), 0.1, WINDOW)
    assert np.all(cost.p_liq == 0.0)


def test_p_dp_nonnegative_random_paths():
    """Backward integration from zero keeps p_dp >= 0 whenever dP >= 0."""
    rng = np.random.default_rng(5)
    n = 100
    grid = np.arange(n + 1) * 0.1
    for _ in range(1000):
        dp = rng.uniform(0.0, 1.0, n + 1)
        path = SurrogatePath(grid=grid, r_liq=rng.uniform(0, 1e9, n + 1),
                             r_bill=np.full(n + 1, 5e9),
                             delta_p=dp, s_out=np.full(n + 1, 1e10))
        q = rng.uniform(-1e6, 1e6, n + 1)
        cost = integrate_costates(path, q, RATES, COSTS, PEG,
                                  (0.0, 0.0, 0.0), 0.1, WINDOW)
        assert np.all(cost.p_dp >= -1e-9 * np.max(np.abs(cost.p_dp)))


def test_p_bill_independent_of_flows():
    n = 240
    path = _flat_path(n)
    a = integrate_costates(path, np.full(n + 1, -1e9), RATES, COSTS, PEG,
                           (0.0, 0.0, 0.0), 0.1, WINDOW)
    b = integrate_costates(path, np.full(n + 1, 5e7), RATES, COSTS, PEG,
                           (0.0, 0.0, 0.0), 0.1, WINDOW)
    assert np.array_equal(a.p_bill, b.p_bill)


def test_comparison_under_flow_ordering():
    """Pointwise larger forecast outflows make cash more valuable.

    For two surrogate instances with q2 >= q1, cash path rl2 <= rl1, and peg
    path dp2 >= dp1 (all pointwise), the adjoint sweep gives p_liq2 <= p_liq1,
    hence larger switching values and weakly smaller reallocation rates.
    """
    n = 720
    dt = 0.1
    grid = np.arange(n + 1) * dt
    s = np.full(n + 1, 1e10)
    rl0 = 2e8

    def instance(alpha):
        q = np.full(n + 1, alpha * 5e6)
        rl = np.maximum(rl0 - np.cumsum(np.append(0.0, q[:-1])) * dt, 0.0)
        drift = PEG.eta * np.maximum(q - rl / WINDOW, 0.0) / s
        dp = np.minimum(np.cumsum(np.append(0.0, drift[:-1])) * dt, 1.0)
        path = SurrogatePath(grid=grid, r_liq=rl, r_bill=np.full(n + 1, 9e9),
                             delta_p=dp, s_out=s)
        return q, integrate_costates(path, q, RATES, COSTS, PEG,
                                     (0.0, 0.0, 0.0), dt, WINDOW)

    _, c1 = instance(1.0)
    _, c2 = instance(2.0)
    assert np.all(c2.p_liq <= c1.p_liq + 1e-12)
    for j in range(9):
        win = (j * WINDOW, (j + 1) * WINDOW)
        s1 = switching_integral(c1, win)
        s2 = switching_integral(c2, win)
        assert s2 >= s1 - 1e-12
        w1 = window_reallocation(s1, WINDOW, COSTS, 1e8)
        w2 = window_reallocation(s2, WINDOW, COSTS, 1e8)
        assert w2 <= w1 + 1e-9


def test_switching_integral_validation():
    n = 80
    path = _flat_path(n)
    cost = integrate_costates(path, np.zeros(n + 1), RATES, COSTS, PEG,
                              (0.0, 0.0, 0.0), 0.1, WINDOW)
    with pytest.raises(ValueError):
        switching_integral(cost, (0.0, 100.0))
    with pytest.raises(ValueError):
        switching_integral(cost, (4.0, 2.0))


def test_costate_grid_mismatch():
    path = _flat_path(80)
    with pytest.raises(ValueError):
        integrate_costates(path, np.zeros(5), RATES, COSTS, PEG,
                           (0.0, 0.0, 0.0), 0.1, WINDOW)


def _roll_problem(**kw):
    base = dict(
        params_r=HawkesParams(100.0, 0.8, 2.0, 250e3),
        params_m=HawkesParams(80.0, 0.6, 1.5, 300e3),
        feedback=PegFeedback(100.0), rates=RATES, costs=COSTS, peg=PEG,
        horizon=72.0, window_hours=WINDOW, omega_max=1.25e8, delta_max=0.0,
    )
    base.update(kw)
    return RollProblem(**base)


def test_zero_flow_roll_buys_until_dead_zone():
    """With no expected flows the plan buys at the box in every window whose
    switching value clears the trading-cost dead zone, and never sells."""
    prob = _roll_problem(
        params_r=HawkesParams(0.0, 0.1, 1.0, 250e3),
        params_m=HawkesParams(0.0, 0.1, 1.0, 300e3),
        feedback=PegFeedback(0.0), omega_max=1e6)
    state = ReserveState(r_liq=1e9, r_bill=9e9, delta_p=0.0, s_out=1e10)
    plan = solve_mpc_roll(state, 0.0, 0.0, prob)
    assert plan.converged
    omegas = np.array([w[2].omega for w in plan.windows])
    assert np.all(omegas >= 0.0)
    assert omegas[0] == pytest.approx(1e6, rel=1e-3)
    # terminal windows sit inside the dead zone: |S_j| < lambda_omega * window
    for j, (lo, hi, act) in enumerate(plan.windows):
        target = window_reallocation(plan.switching[j], WINDOW, COSTS, 1e6)
        assert act.omega == pytest.approx(target, abs=1e-3 * 1e6)
    assert plan.windows[-1][2].omega == 0.0


def test_calm_roll_earns_carry():
    """Realistic calm instance: the solver returns a negative-cost plan that
    keeps buying while planned cash stays above the coverage floor."""
    prob = _roll_problem(horizon=24.0)
    state = ReserveState(r_liq=1e9, r_bill=9e9, delta_p=0.0, s_out=1e10)
    plan = solve_mpc_roll(state, 100.0 / 0.6, 80.0 / 0.6, prob)
    assert plan.objective < 0.0
    assert plan.windows[0][2].omega > 0.0
    assert np.all(plan.state_path.delta_p < 1e-3)


def test_roll_forecast_exhaustion_raises():
    prob = _roll_problem()
    state = ReserveState(r_liq=5e7, r_bill=5e7, delta_p=0.0, s_out=1e8)
    with pytest.raises(ForecastError):
        solve_mpc_roll(state, 100.0 / 0.6, 80.0 / 0.6, prob)


def test_roll_problem_validation():
    state = ReserveState(r_liq=1e9, r_bill=9e9, delta_p=0.0, s_out=1e10)
    with pytest.raises(ValueError):
        solve_mpc_roll(state, 100.0, 80.0, _roll_problem(horizon=70.0))
    with pytest.raises(ValueError):
        solve_mpc_roll(state, 100.0, 80.0, _roll_problem(tol=0.0))
    with pytest.raises(ValueError):
        solve_mpc_roll(state, 100.0, 80.0, _roll_problem(window_hours=8.03))
