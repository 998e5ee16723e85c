"""Revenue, depeg, and responsiveness metrics computed from run records.

Revenue is the negative of the realized discounted cost functional; accrual
stops at a complete depeg (or early termination), after which the run is
economically over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HOURS_PER_DAY = 24.0


@dataclass
class RunRecord:
    """Full log of one simulated replica.

    Window-level arrays have one entry per settlement window (the control in
    force and the state at the window start); substep-level arrays carry the
    realized stage-cost components on the 0.1h grid so revenue can be
    decomposed exactly.
    """

    scenario_id: str
    policy_tag: str
    seed: int
    chi: float

    # per-window logs
    window_start_hours: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    omega_max: np.ndarray
    r_liq: np.ndarray
    r_bill: np.ndarray
    delta_p: np.ndarray
    s_out: np.ndarray
    lambda_r: np.ndarray
    lambda_m: np.ndarray

    # per-substep logs (length = substeps completed before truncation)
    substep_hours: np.ndarray
    cost_peg: np.ndarray       # dollars/hour
    cost_fee: np.ndarray
    cost_trade: np.ndarray
    carry: np.ndarray          # dollars/hour, enters revenue positively
    shortfall: np.ndarray      # dollars per substep
    substep_dt: float = 0.1

    depegged: bool = False
    depeg_time: float | None = None      # hours
    terminated_early: bool = False       # supply exhaustion before horizon end
    termination_time: float | None = None
    max_conservation_residual: float = 0.0
    failed: bool = False
    failure_reason: str | None = None

    def __post_init__(self):
        if self.depegged != (self.depeg_time is not None):
            raise ValueError("depegged flag must match presence of depeg_time")
        n = self.window_start_hours.size
        for name in ("omega", "delta", "omega_max", "r_liq", "r_bill",
                     "delta_p", "s_out", "lambda_r", "lambda_m"):
            if getattr(self, name).size != n:
                raise ValueError(f"window array {name!r} length mismatch")


@dataclass(frozen=True)
class RevenueBreakdown:
    """Discounted revenue and its additive components (all in dollars)."""

    total: float
    carry: float
    peg_penalty: float
    fee_penalty: float
    trade_penalty: float
    undiscounted_total: float


def revenue_breakdown(record: RunRecord, rho: float) -> RevenueBreakdown:
    """Decompose realized revenue into carry minus the three penalties.

    rho is the per-hour discount rate.  Uses left-Riemann accumulation on the
    substep grid, matching the simulator's piecewise-constant accrual.
    """
    t = record.substep_hours
    if t.size == 0:
        return RevenueBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    disc = np.exp(-rho * t)
    dt = record.substep_dt
    carry = float(np.sum(disc * record.carry) * dt)
    peg = float(np.sum(disc * record.cost_peg) * dt)
    fee = float(np.sum(disc * record.cost_fee) * dt)
    trade = float(np.sum(disc * record.cost_trade) * dt)
    undisc = float(np.sum(record.carry - record.cost_peg - record.cost_fee
                          - record.cost_trade) * dt)
    return RevenueBreakdown(
        total=carry - peg - fee - trade,
        carry=carry, peg_penalty=peg, fee_penalty=fee, trade_penalty=trade,
        undiscounted_total=undisc,
    )


def total_revenue(record: RunRecord, rho: float) -> float:
    """Discounted realized revenue: negative of the discounted cost integral."""
    return revenue_breakdown(record, rho).total


def depeg_indicator(record: RunRecord) -> int:
    """1 iff the peg deviation reached the absorbing bound during the run."""
    return 1 if record.depegged else 0


def responsiveness_days(record: RunRecord, shock_onset_days: float) -> float | None:
    """Days from shock onset until the controller starts buying cash hard.

    Triggers at the first window on/after onset where omega is below
    -0.05 * omega_max for that window and at least twice as negative as the
    mean omega over the ten windows before onset (zero if that mean is
    positive).  Returns None if never triggered.
    """
    onset_h = shock_onset_days * HOURS_PER_DAY
    starts = record.window_start_hours
    pre = record.omega[starts < onset_h][-10:]
    baseline = min(float(np.mean(pre)), 0.0) if pre.size else 0.0
    for j in range(starts.size):
        if starts[j] < onset_h:
            continue
        w = record.omega[j]
        if w < -0.05 * record.omega_max[j] and w <= 2.0 * baseline:
            return float((starts[j] - onset_h) / HOURS_PER_DAY)
    return None


def cumulative_bill_sales(record: RunRecord, start_days: float, end_days: float) -> float:
    """Total dollars moved bills -> cash over [start, end) days (window controls)."""
    lo, hi = start_days * HOURS_PER_DAY, end_days * HOURS_PER_DAY
    total = 0.0
    starts = record.window_start_hours
    widths = np.diff(np.append(starts, starts[-1] * 2 - starts[-2] if starts.size > 1
                               else starts[-1] + 8.0))
    for j in range(starts.size):
        if lo <= starts[j] < hi and record.omega[j] < 0.0:
            total += -record.omega[j] * widths[j]
    return total
