"""True reserve-state evolution under realized events and applied controls.

Cash and bills accrue interest and exchange value through the reallocation
rate; the peg deviation moves with unmet redemption demand relative to
outstanding supply and is clamped to [-1, 1] with +1 absorbing (complete
depeg).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DynamicsError, SupplyExhaustedError
from .hawkes import MarkedEvent


@dataclass(frozen=True)
class ReserveState:
    """Issuer balance sheet and peg state at one instant (dollars, hours)."""

    r_liq: float
    r_bill: float
    delta_p: float
    s_out: float
    t: float = 0.0


@dataclass(frozen=True)
class RateEnvironment:
    """Per-hour cash rate, bill rate, and discount rate."""

    r_cash: float
    r_bill: float
    rho: float


@dataclass(frozen=True)
class PegParams:
    """Peg sensitivity to shortfalls (eta) and fee effectiveness (gamma)."""

    eta: float
    gamma: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


def _step_core(r_liq, r_bill, delta_p, s_out, d_r, d_m,
               omega, delta, r_cash, r_bill_rate, eta, gamma, dt):
    """One substep of the reserve dynamics on raw floats.

    Returns (r_liq, r_bill, delta_p, s_out, shortfall, omega_applied).
    The caller is responsible for rejecting s_out <= 0 afterwards.
    """
    if delta_p >= 1.0:
        # Complete depeg is absorbing: no flows, interest, or fees accrue.
        return r_liq, r_bill, 1.0, s_out, 0.0, 0.0

    rl = r_liq * (1.0 + r_cash * dt)
    rb = r_bill * (1.0 + r_bill_rate * dt)

    # Clip the reallocation so neither account can be driven negative.
    w = omega
    if w > 0.0:
        avail = rl + d_m - d_r
        w = min(w, max(avail, 0.0) / dt)
    elif w < 0.0:
        w = -min(-w, rb / dt)

    rl_new = rl + d_m - d_r - w * dt
    shortfall = max(-rl_new, 0.0)
    rl_new = max(rl_new, 0.0)
    # the sell clip computes w = -rb/dt, so rb + w*dt can round below zero
    rb_new = max(rb + w * dt, 0.0)

    dp_new = delta_p + eta * shortfall / s_out - gamma * delta * dt
    dp_new = min(max(dp_new, -1.0), 1.0)

    s_new = s_out + d_m - d_r
    return rl_new, rb_new, dp_new, s_new, shortfall, w


def step_state(
    state: ReserveState,
    events: Iterable[MarkedEvent],
    control,
    rates: RateEnvironment,
    peg: PegParams,
    dt: float,
) -> tuple[ReserveState, float]:
    """Advance the reserve state by dt, applying the events inside [t, t+dt).

    Returns the new state and the unmet redemption amount (shortfall) of the
    step.  Raises SupplyExhaustedError when outstanding supply reaches zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    d_r = sum(e.size for e in events if e.kind == "redemption")
    d_m = sum(e.size for e in events if e.kind == "mint")

    rl, rb, dp, s, shortfall, _ = _step_core(
        state.r_liq, state.r_bill, state.delta_p, state.s_out,
        d_r, d_m, control.omega, control.delta,
        rates.r_cash, rates.r_bill, peg.eta, peg.gamma, dt,
    )
    if not all(np.isfinite(v) for v in (rl, rb, dp, s)):
        raise DynamicsError(f"non-finite state after step at t={state.t}")
    new = ReserveState(r_liq=rl, r_bill=rb, delta_p=dp, s_out=s, t=state.t + dt)
    if s <= 0.0:
        raise SupplyExhaustedError(f"outstanding supply exhausted at t={new.t:.2f}h")
    return new, shortfall


def peg_drift_rate(q: float, r_liq: float, s_out: float,
                   delta: float, peg: PegParams, window: float) -> float:
    """Deterministic peg drift used by the MPC surrogate (per hour).

    The cash stock is converted to a per-window coverage rate, so deviation
    grows only when the forecast flow cannot be covered within the window.
    """
    if s_out <= 0:
        raise ValueError(f"s_out must be > 0, got {s_out}")
    if window <= 0:
        raise ValueError(f"window must be > 0, got {window}")
    return peg.eta * max(q - r_liq / window, 0.0) / s_out - peg.gamma * delta
