"""pegctrl: reserve-management simulator and window controller for pegged tokens.

Self-exciting mint/redemption streams drive an issuer balance sheet; a
receding-horizon controller derived from a forward-backward costate sweep
reallocates reserves between cash and bills under trading frictions, and is
benchmarked against maximum-yield and maximum-liquidity policies across
seeded stress scenarios.
"""

__version__ = "0.1.0"

from .control import (ControlAction, POLICY_TAGS, PolicyKind,
                      max_liquidity_policy, max_yield_policy, shrink,
                      window_fee, window_reallocation)
from .dynamics import (PegParams, RateEnvironment, ReserveState,
                       peg_drift_rate, step_state)
from .errors import (ConfigurationError, DynamicsError, ForecastError,
                     PegctrlError, SimulationError, SolverDivergenceError,
                     SupplyExhaustedError)
from .forecast import (FlowForecast, MeanIntensityPath, expected_net_flow,
                       propagate_moments)
from .harness import (CellSummary, ExperimentConfig, ExperimentReport,
                      emit_reports, run_experiment, run_replica)
from .hawkes import (HawkesParams, IntensityState, MarkedEvent, PegFeedback,
                     StreamRNG, apply_event_jump, branching_ratio,
                     decay_intensity, sample_mark, simulate_stream_segment)
from .metrics import (RevenueBreakdown, RunRecord, cumulative_bill_sales,
                      depeg_indicator, responsiveness_days, revenue_breakdown,
                      total_revenue)
from .pmp import (CostTerms, CostateTrajectory, RollPlan, RollProblem,
                  SurrogatePath, integrate_costates, solve_mpc_roll,
                  stage_cost, switching_integral)
from .scenarios import (SCENARIO_IDS, ScenarioSchedule, build_schedule,
                        params_at)
