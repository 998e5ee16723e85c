"""Stress-scenario schedules: time-varying stream parameters for experiments.

Three canonical schedules are built in:

* ``single_shock``      -- a redemption-baseline shock with random magnitude
                           chi ~ U[2, 4] during days 30-45, decaying back
                           exponentially (10-day scale) afterwards.
* ``prolonged_clustering`` -- both streams run near-critical (branching ratio
                           0.85) during days 30-70.
* ``false_alarm``       -- a benign mint surge (baseline x3, days 30-32)
                           followed by a mild redemption uptick (x1.5,
                           days 32-35).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .hawkes import HawkesParams

HOURS_PER_DAY = 24.0

#: Valid scenario identifiers.
SCENARIO_IDS = ("single_shock", "prolonged_clustering", "false_alarm")


@dataclass(frozen=True)
class ScenarioSchedule:
    """A named stress scenario with its sampled shock magnitude.

    onset_days marks when the stress begins (used by responsiveness metrics);
    chi is the sampled redemption-shock multiplier (1.0 when the scenario
    has no random magnitude).
    """

    scenario_id: str
    chi: float = 1.0
    onset_days: float = 30.0

    def __post_init__(self):
        if self.scenario_id not in SCENARIO_IDS:
            raise ConfigurationError(
                f"unknown scenario {self.scenario_id!r}; expected one of {SCENARIO_IDS}"
            )


def build_schedule(scenario_id: str, rng: np.random.Generator) -> ScenarioSchedule:
    """Sample a schedule for one replica (draws chi for the shock scenario)."""
    if scenario_id == "single_shock":
        chi = float(rng.uniform(2.0, 4.0))
        return ScenarioSchedule(scenario_id=scenario_id, chi=chi, onset_days=30.0)
    return ScenarioSchedule(scenario_id=scenario_id, chi=1.0, onset_days=30.0)


def params_at(
    schedule: ScenarioSchedule,
    t_days: float,
    base_r: HawkesParams,
    base_m: HawkesParams,
) -> tuple[HawkesParams, HawkesParams]:
    """Stream parameters in force at t_days under the schedule.

    Scenario pieces are half-open [start, end) in days; the single-shock
    recovery multiplier 1 + (chi - 1) * exp(-(t - 45) / 10) is continuous at
    the shock's trailing edge.
    """
    sid = schedule.scenario_id
    if sid == "single_shock":
        if 30.0 <= t_days < 45.0:
            return replace(base_r, lambda0=base_r.lambda0 * schedule.chi), base_m
        if t_days >= 45.0:
            mult = 1.0 + (schedule.chi - 1.0) * np.exp(-(t_days - 45.0) / 10.0)
            return replace(base_r, lambda0=base_r.lambda0 * mult), base_m
        return base_r, base_m

    if sid == "prolonged_clustering":
        if 30.0 <= t_days < 70.0:
            return (
                replace(base_r, kappa=0.85 * base_r.theta),
                replace(base_m, kappa=0.85 * base_m.theta),
            )
        return base_r, base_m

    # false_alarm
    if 30.0 <= t_days < 32.0:
        return base_r, replace(base_m, lambda0=base_m.lambda0 * 3.0)
    if 32.0 <= t_days < 35.0:
        return replace(base_r, lambda0=base_r.lambda0 * 1.5), base_m
    return base_r, base_m
