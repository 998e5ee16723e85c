"""Metric tests on synthetic run records: decomposition, depeg, responsiveness."""

import numpy as np
import pytest

from pegctrl.metrics import (RunRecord, cumulative_bill_sales, depeg_indicator,
                             responsiveness_days, revenue_breakdown,
                             total_revenue)


def _record(n_win=12, n_sub=120, **kw):
    base = dict(
        scenario_id="false_alarm", policy_tag="max_liquidity", seed=0, chi=1.0,
        window_start_hours=np.arange(n_win) * 8.0,
        omega=np.zeros(n_win), delta=np.zeros(n_win),
        omega_max=np.full(n_win, 1.25e8),
        r_liq=np.full(n_win, 1e9), r_bill=np.full(n_win, 9e9),
        delta_p=np.zeros(n_win), s_out=np.full(n_win, 1e10),
        lambda_r=np.full(n_win, 166.7), lambda_m=np.full(n_win, 133.3),
        substep_hours=np.arange(n_sub) * 0.1,
        cost_peg=np.zeros(n_sub), cost_fee=np.zeros(n_sub),
        cost_trade=np.zeros(n_sub), carry=np.zeros(n_sub),
        shortfall=np.zeros(n_sub),
    )
    base.update(kw)
    return RunRecord(**base)


def test_zero_record_revenue():
    rec = _record()
    bd = revenue_breakdown(rec, 7.31e-5 / 8.0)
    assert bd.total == 0.0
    assert bd.undiscounted_total == 0.0
    assert depeg_indicator(rec) == 0


def test_decomposition_identity():
    rng = np.random.default_rng(1)
    n = 200
    rec = _record(n_sub=n,
                  cost_peg=rng.uniform(0, 1e5, n),
                  cost_fee=rng.uniform(0, 1e4, n),
                  cost_trade=rng.uniform(0, 1e4, n),
                  carry=rng.uniform(0, 1e5, n))
    rho = 7.31e-5 / 8.0
    bd = revenue_breakdown(rec, rho)
    assert bd.total == pytest.approx(
        bd.carry - bd.peg_penalty - bd.fee_penalty - bd.trade_penalty,
        rel=1e-12)
    assert total_revenue(rec, rho) == bd.total
    # discounting shrinks positive components relative to the flat sum
    assert bd.carry < np.sum(rec.carry) * 0.1
    assert bd.carry > np.sum(rec.carry) * 0.1 * np.exp(-rho * 20.0)


def test_single_substep_discount():
    rec = _record(n_sub=1, carry=np.array([100.0]), cost_peg=np.array([40.0]))
    bd = revenue_breakdown(rec, 0.5)
    # the single substep starts at t = 0: discount factor 1, width 0.1h
    assert bd.total == pytest.approx((100.0 - 40.0) * 0.1)


def test_empty_substeps():
    rec = _record(n_sub=0)
    assert revenue_breakdown(rec, 1e-5).total == 0.0


def test_depeg_flag_consistency():
    rec = _record(depegged=True, depeg_time=400.0)
    assert depeg_indicator(rec) == 1
    with pytest.raises(ValueError):
        _record(depegged=True)  # missing depeg_time
    with pytest.raises(ValueError):
        _record(depeg_time=10.0)  # missing flag


def test_window_array_length_validation():
    with pytest.raises(ValueError):
        _record(omega=np.zeros(5))


def test_responsiveness_simple():
    omega = np.zeros(12)
    omega[6] = -2e7  # window starting at hour 48 = day 2 after onset at day 0
    rec = _record(omega=omega)
    assert responsiveness_days(rec, 0.0) == pytest.approx(2.0)
    assert responsiveness_days(_record(), 0.0) is None


def test_responsiveness_needs_decisive_move():
    """Small sells below 5% of the box do not count as a response."""
    omega = np.zeros(12)
    omega[6] = -1e6  # under 0.05 * 1.25e8
    rec = _record(omega=omega)
    assert responsiveness_days(rec, 0.0) is None


def test_responsiveness_relative_to_pre_onset_baseline():
    """A controller that was already selling must at least double its rate."""
    omega = np.full(12, -2e7)
    rec = _record(omega=omega)
    assert responsiveness_days(rec, 2.0) is None  # never doubles the baseline
    omega2 = np.full(12, -2e7)
    omega2[9:] = -5e7
    rec2 = _record(omega=omega2)
    assert responsiveness_days(rec2, 2.0) == pytest.approx(1.0)  # window at 72h


def test_cumulative_bill_sales():
    omega = np.zeros(12)
    omega[3] = -1e6   # hour 24, inside [1, 2) days
    omega[4] = 2e6    # buys are ignored
    omega[5] = -3e6   # hour 40, inside [1, 2) days
    rec = _record(omega=omega)
    assert cumulative_bill_sales(rec, 1.0, 2.0) == pytest.approx(4e6 * 8.0)
    assert cumulative_bill_sales(rec, 2.0, 3.0) == 0.0
