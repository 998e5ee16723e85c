"""Closed-form window control laws and the two benchmark policies.

The reallocation law is a soft-thresholded (shrunk) and box-projected
function of the window-integrated switching value S_j = int(p_bill - p_liq);
the L1 trading cost opens a no-trade dead zone of half-width
lambda_omega * window around zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class ControlAction:
    """Reallocation rate (dollars/hour, positive = cash to bills) and fee spread."""

    omega: float
    delta: float = 0.0


#: Valid policy tags.
POLICY_TAGS = ("optimal_window", "max_yield", "max_liquidity")


@dataclass(frozen=True)
class PolicyKind:
    tag: str

    def __post_init__(self):
        if self.tag not in POLICY_TAGS:
            raise ValueError(f"unknown policy tag {self.tag!r}; expected one of {POLICY_TAGS}")


def shrink(z: float, lam: float) -> float:
    """Soft-thresholding: sign(z) * max(|z| - lam, 0)."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _project(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def window_reallocation(s_j: float, delta_j: float, costs, omega_max: float) -> float:
    """Optimal piecewise-constant reallocation rate for one settlement window.

    Minimizes lambda_omega*Delta*|w| + 0.5*rho_omega*Delta*w^2 + S_j*w over
    the box [-omega_max, omega_max].
    """
    if delta_j <= 0:
        raise ValueError(f"delta_j must be > 0, got {delta_j}")
    if costs.rho_omega <= 0:
        raise ConfigurationError(
            "window_reallocation requires rho_omega > 0 (strict convexity)"
        )
    raw = -shrink(s_j, costs.lambda_omega * delta_j) / (costs.rho_omega * delta_j)
    return _project(raw, -omega_max, omega_max)


def window_fee(p_dp_avg: float, gamma: float, c_fee: float, delta_max: float) -> float:
    """Linear fee feedback on the window-averaged peg costate, box-projected."""
    if c_fee <= 0:
        raise ValueError(f"c_fee must be > 0, got {c_fee}")
    return _project(gamma / (2.0 * c_fee) * p_dp_avg, -delta_max, delta_max)


def max_yield_policy(state, next_window_outflow_estimate: float,
                     omega_max: float, delta_j: float) -> ControlAction:
    """Myopic yield maximizer: hold only the cash the next window seems to need.

    Sells bills to cover the estimated deficit; otherwise sweeps the cash in
    excess of the estimate into bills.
    """
    cash = state.r_liq
    if cash < next_window_outflow_estimate:
        omega = -min(omega_max, (next_window_outflow_estimate - cash) / delta_j)
    else:
        omega = min(omega_max, (cash - next_window_outflow_estimate) / delta_j)
    return ControlAction(omega=omega, delta=0.0)


def max_liquidity_policy() -> ControlAction:
    """All-cash benchmark: never reallocates, never charges a fee."""
    return ControlAction(omega=0.0, delta=0.0)
