"""Experiment configuration, Monte Carlo orchestration, and report emission.

A replica is one 92-day market path for one (scenario, policy) cell.  Event
streams run on a 0.1-hour substep grid; the policy is queried once per
settlement window.  Replicas execute in a process pool and are reproducible
from the master seed alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from multiprocessing import Pool

import numpy as np

from . import __version__
from .control import (POLICY_TAGS, ControlAction, max_liquidity_policy,
                      max_yield_policy)
from .dynamics import PegParams, RateEnvironment, ReserveState, _step_core
from .errors import ConfigurationError, ForecastError, SolverDivergenceError
from .forecast import expected_net_flow, propagate_moments
from .hawkes import EXPLOSION_GUARD, HawkesParams, PegFeedback, StreamRNG, _stream_piece
from .metrics import (RunRecord, depeg_indicator, responsiveness_days,
                      revenue_breakdown)
from .pmp import CostTerms, RollProblem, solve_mpc_roll
from .scenarios import SCENARIO_IDS, ScenarioSchedule, build_schedule, params_at


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every calibrated constant is overridable.

    Rates named *_window are per settlement window and converted to per-hour
    internally.  rho_omega defaults to 1e-5 / s_out0 when left as None.
    """

    scenarios: tuple = SCENARIO_IDS
    policies: tuple = POLICY_TAGS
    replicas: int = 20
    master_seed: int = 20260823
    out_dir: str = "reports"

    # stream calibration (events/hour, 1/hour, dollars)
    lambda0_r: float = 100.0
    kappa_r: float = 0.8
    theta_r: float = 2.0
    mark_mean_r: float = 250e3
    lambda0_m: float = 80.0
    kappa_m: float = 0.6
    theta_m: float = 1.5
    mark_mean_m: float = 300e3
    zeta: float = 100.0

    # peg and cost weights
    eta: float = 10.0
    gamma: float = 5.0
    c_peg: float = 1.5e8
    c_fee: float = 6.0e8
    lambda_omega: float = 1e-4
    rho_omega: float | None = None

    # rates (per window) and grid
    r_cash_window: float = 0.0
    r_bill_window: float = 4.93e-5
    rho_window: float = 7.31e-5
    window_hours: float = 8.0
    horizon_days: float = 92.0
    substep_hours: float = 0.1
    mpc_horizon_hours: float = 72.0

    # initial balance sheet
    s_out0: float = 1e10
    r_liq0: float = 1e9
    r_bill0: float = 9e9
    delta_max: float = 0.0
    omega_max_frac: float = 0.1

    # MPC solver knobs
    mpc_tol: float = 1e-6
    mpc_max_iter: int = 50
    mpc_damping: float = 0.5

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigurationError("replicas must be >= 1")
        if self.window_hours <= 0:
            raise ConfigurationError("window_hours must be > 0")
        for s in self.scenarios:
            if s not in SCENARIO_IDS:
                raise ConfigurationError(f"unknown scenario {s!r}")
        for p in self.policies:
            if p not in POLICY_TAGS:
                raise ConfigurationError(f"unknown policy {p!r}")

    # -- derived pieces ----------------------------------------------------
    @property
    def rho_omega_resolved(self) -> float:
        return self.rho_omega if self.rho_omega is not None else 1e-5 / self.s_out0

    def base_params_r(self) -> HawkesParams:
        return HawkesParams(self.lambda0_r, self.kappa_r, self.theta_r, self.mark_mean_r)

    def base_params_m(self) -> HawkesParams:
        return HawkesParams(self.lambda0_m, self.kappa_m, self.theta_m, self.mark_mean_m)

    def rates(self) -> RateEnvironment:
        h = self.window_hours
        return RateEnvironment(r_cash=self.r_cash_window / h,
                               r_bill=self.r_bill_window / h,
                               rho=self.rho_window / h)

    def costs(self) -> CostTerms:
        return CostTerms(self.c_peg, self.c_fee, self.lambda_omega,
                         self.rho_omega_resolved)

    def peg(self) -> PegParams:
        return PegParams(eta=self.eta, gamma=self.gamma)

    def n_windows(self) -> int:
        return round(self.horizon_days * 24.0 / self.window_hours)

    def steps_per_window(self) -> int:
        return round(self.window_hours / self.substep_hours)

    # -- (de)serialization --------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        d["policies"] = list(self.policies)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("scenarios", "policies"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _child_seeds(master: int, scenario_id: str, policy_tag: str, replica: int):
    """Deterministic (chi seed, event seed) pair; chi is policy-independent."""
    scen_idx = SCENARIO_IDS.index(scenario_id)
    pol_idx = POLICY_TAGS.index(policy_tag)
    chi_ss = np.random.SeedSequence(master, spawn_key=(1000 + scen_idx, replica))
    event_ss = np.random.SeedSequence(master, spawn_key=(scen_idx, pol_idx, replica))
    return chi_ss, event_ss


def _mpc_control(cfg: ExperimentConfig, state: ReserveState, lam_r: float,
                 lam_m: float, pr: HawkesParams, pm: HawkesParams,
                 remaining_hours: float, omega_max: float) -> ControlAction:
    """One receding-horizon roll; shrinks the horizon if the forecast exhausts supply."""
    nw = int(min(round(cfg.mpc_horizon_hours / cfg.window_hours),
                 round(remaining_hours / cfg.window_hours)))
    nw = max(nw, 1)
    liquidate = ControlAction(omega=-omega_max, delta=0.0)

    # Solvency guard.  The sale-capacity box shrinks with outstanding supply,
    # so the cash that can still be raised before a forecast supply exhaustion
    # is bounded by (omega_max_frac / window) * s^2 / (2 * mean outflow).  If
    # the bill book exceeds that bound, waiting strands bills: liquidate now.
    n_steps = round(nw * cfg.window_hours / cfg.substep_hours)
    try:
        path = propagate_moments(lam_r, lam_m, pr, pm, PegFeedback(cfg.zeta),
                                 np.full(n_steps + 1, state.delta_p),
                                 nw * cfg.window_hours, cfg.substep_hours)
        flow = expected_net_flow(path, cfg.mark_mean_r, cfg.mark_mean_m,
                                 state.s_out)
    except ForecastError:
        return liquidate
    q_bar = float(np.mean(flow.q_hat))
    if q_bar > 0.0:
        sellable = (cfg.omega_max_frac / cfg.window_hours
                    * state.s_out ** 2 / (2.0 * q_bar))
        if state.r_bill >= sellable:
            return liquidate

    problem = RollProblem(
        params_r=pr, params_m=pm, feedback=PegFeedback(cfg.zeta),
        rates=cfg.rates(), costs=cfg.costs(), peg=cfg.peg(),
        horizon=nw * cfg.window_hours, window_hours=cfg.window_hours,
        omega_max=omega_max, delta_max=cfg.delta_max,
        dt=cfg.substep_hours, tol=cfg.mpc_tol,
        max_iter=cfg.mpc_max_iter, damping=cfg.mpc_damping,
    )
    try:
        plan = solve_mpc_roll(state, lam_r, lam_m, problem)
        return plan.windows[0][2]
    except ForecastError:
        return liquidate


def run_replica(cfg: ExperimentConfig, scenario_id: str, policy_tag: str,
                replica: int) -> RunRecord:
    """Simulate one replica and return its full record."""
    chi_ss, event_ss = _child_seeds(cfg.master_seed, scenario_id, policy_tag, replica)
    schedule = build_schedule(scenario_id, np.random.default_rng(chi_ss))
    rng = StreamRNG(event_ss)
    base_r, base_m = cfg.base_params_r(), cfg.base_params_m()
    rates, peg, costs = cfg.rates(), cfg.peg(), cfg.costs()

    if policy_tag == "max_liquidity":
        state = ReserveState(r_liq=cfg.s_out0, r_bill=0.0, delta_p=0.0,
                             s_out=cfg.s_out0, t=0.0)
    else:
        state = ReserveState(r_liq=cfg.r_liq0, r_bill=cfg.r_bill0, delta_p=0.0,
                             s_out=cfg.s_out0, t=0.0)

    n_win = cfg.n_windows()
    spw = cfg.steps_per_window()
    dt = cfg.substep_hours
    n_sub_total = n_win * spw

    # window logs
    w_start = np.arange(n_win) * cfg.window_hours
    w_omega = np.zeros(n_win)
    w_delta = np.zeros(n_win)
    w_omax = np.zeros(n_win)
    w_rl = np.zeros(n_win)
    w_rb = np.zeros(n_win)
    w_dp = np.zeros(n_win)
    w_s = np.zeros(n_win)
    w_lr = np.zeros(n_win)
    w_lm = np.zeros(n_win)

    # substep logs
    s_t = np.empty(n_sub_total)
    s_peg = np.empty(n_sub_total)
    s_fee = np.empty(n_sub_total)
    s_trade = np.empty(n_sub_total)
    s_carry = np.empty(n_sub_total)
    s_short = np.empty(n_sub_total)
    n_sub = 0

    exc_r = exc_m = 0.0
    e_rem_r = e_rem_m = -1.0
    frozen = False
    depegged = False
    depeg_time = None
    terminated = False
    term_time = None
    failed = False
    failure_reason = None
    max_resid = 0.0
    horizon_hours = n_win * cfg.window_hours

    for j in range(n_win):
        t_k = w_start[j]
        pr, pm = params_at(schedule, t_k / 24.0, base_r, base_m)
        dp = state.delta_p
        lam_r = pr.lambda0 + exc_r + cfg.zeta * dp * dp
        lam_m = pm.lambda0 + exc_m
        omega_max = cfg.omega_max_frac * state.s_out / cfg.window_hours

        w_rl[j], w_rb[j], w_dp[j], w_s[j] = state.r_liq, state.r_bill, dp, state.s_out
        w_lr[j], w_lm[j] = lam_r, lam_m
        w_omax[j] = omega_max

        if frozen:
            continue

        if policy_tag == "max_liquidity":
            control = max_liquidity_policy()
        elif policy_tag == "max_yield":
            # Myopic benchmark: covers one window of stationary baseline
            # gross redemption outflow, with no forecasting or stress model.
            stat_r = base_r.lambda0 / (1.0 - base_r.kappa / base_r.theta)
            outflow = cfg.mark_mean_r * stat_r * cfg.window_hours
            control = max_yield_policy(state, outflow, omega_max, cfg.window_hours)
        else:
            try:
                control = _mpc_control(cfg, state, lam_r, lam_m, pr, pm,
                                       horizon_hours - t_k, omega_max)
            except SolverDivergenceError as exc:
                failed = True
                failure_reason = str(exc)
                frozen = True
                continue
        w_omega[j], w_delta[j] = control.omega, control.delta

        for i in range(spw):
            t = t_k + i * dt
            pr, pm = params_at(schedule, t / 24.0, base_r, base_m)
            dp = state.delta_p
            b_r = pr.lambda0 + cfg.zeta * dp * dp
            _, z_r, exc_r, e_rem_r, st_r = _stream_piece(
                b_r, pr.kappa, pr.theta, pr.mark_mean, exc_r, e_rem_r,
                t, t + dt, EXPLOSION_GUARD, rng.redemption_times, rng.redemption_marks)
            _, z_m, exc_m, e_rem_m, st_m = _stream_piece(
                pm.lambda0, pm.kappa, pm.theta, pm.mark_mean, exc_m, e_rem_m,
                t, t + dt, EXPLOSION_GUARD, rng.mint_times, rng.mint_marks)
            if st_r or st_m:
                failed = True
                failure_reason = f"intensity explosion at t={t:.2f}h"
                frozen = True
                break
            d_r = float(np.sum(z_r))
            d_m = float(np.sum(z_m))
            # Redemptions cannot burn more coins than are outstanding; the
            # excess of the final batch is truncated and the run terminates.
            d_r = min(d_r, state.s_out + d_m)

            rl0, rb0 = state.r_liq, state.r_bill
            rl, rb, dp_new, s_new, shortfall, w_app = _step_core(
                rl0, rb0, dp, state.s_out, d_r, d_m,
                control.omega, control.delta,
                rates.r_cash, rates.r_bill, peg.eta, peg.gamma, dt)

            resid = abs((rl + rb) - (rl0 * (1.0 + rates.r_cash * dt)
                                     + rb0 * (1.0 + rates.r_bill * dt)
                                     + d_m - d_r + shortfall))
            max_resid = max(max_resid, resid / max(rl0 + rb0, 1.0))

            s_t[n_sub] = t
            s_peg[n_sub] = costs.c_peg * dp * dp
            s_fee[n_sub] = costs.c_fee * control.delta ** 2
            s_trade[n_sub] = (costs.lambda_omega * abs(w_app)
                              + 0.5 * costs.rho_omega * w_app * w_app)
            s_carry[n_sub] = rates.r_bill * rb0
            s_short[n_sub] = shortfall
            n_sub += 1

            state = ReserveState(r_liq=rl, r_bill=rb, delta_p=dp_new,
                                 s_out=s_new, t=t + dt)
            if dp_new >= 1.0:
                depegged, depeg_time, frozen = True, t + dt, True
                break
            if s_new <= 0.0:
                terminated, term_time, frozen = True, t + dt, True
                break

    return RunRecord(
        scenario_id=scenario_id, policy_tag=policy_tag,
        seed=cfg.master_seed, chi=schedule.chi,
        window_start_hours=w_start, omega=w_omega, delta=w_delta,
        omega_max=w_omax, r_liq=w_rl, r_bill=w_rb, delta_p=w_dp, s_out=w_s,
        lambda_r=w_lr, lambda_m=w_lm,
        substep_hours=s_t[:n_sub].copy(), cost_peg=s_peg[:n_sub].copy(),
        cost_fee=s_fee[:n_sub].copy(), cost_trade=s_trade[:n_sub].copy(),
        carry=s_carry[:n_sub].copy(), shortfall=s_short[:n_sub].copy(),
        substep_dt=dt,
        depegged=depegged, depeg_time=depeg_time,
        terminated_early=terminated, termination_time=term_time,
        max_conservation_residual=max_resid,
        failed=failed, failure_reason=failure_reason,
    )


@dataclass
class CellSummary:
    """Aggregate metrics for one (scenario, policy) cell."""

    scenario_id: str
    policy_tag: str
    replicas: int
    failed: int
    mean_revenue: float
    depeg_frequency: float
    mean_responsiveness_days: float | None


@dataclass
class ExperimentReport:
    """All replica records plus per-cell aggregates."""

    config: ExperimentConfig
    cells: list          # CellSummary, in (scenario, policy) iteration order
    records: list        # RunRecord, grouped by cell then replica index


def _run_one(args):
    cfg, scenario, policy, replica = args
    return run_replica(cfg, scenario, policy, replica)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Run the full scenario x policy x replica grid and aggregate.

    Worker count comes from the PEGCTRL_WORKERS environment variable when not
    passed explicitly (default 1).
    """
    if workers is None:
        workers = int(os.environ.get("PEGCTRL_WORKERS", "1"))
    tasks = [(cfg, sc, po, r)
             for sc in cfg.scenarios for po in cfg.policies
             for r in range(cfg.replicas)]
    if workers > 1:
        with Pool(workers) as pool:
            records = pool.map(_run_one, tasks)
    else:
        records = [_run_one(t) for t in tasks]

    rho_h = cfg.rates().rho
    cells = []
    for c, sc in enumerate(cfg.scenarios):
        for p, po in enumerate(cfg.policies):
            base = (c * len(cfg.policies) + p) * cfg.replicas
            cell_recs = records[base:base + cfg.replicas]
            ok = [r for r in cell_recs if not r.failed]
            revs = [revenue_breakdown(r, rho_h).total for r in ok]
            deps = [depeg_indicator(r) for r in ok]
            resp = [responsiveness_days(r, 30.0) for r in ok]
            resp = [x for x in resp if x is not None]
            cells.append(CellSummary(
                scenario_id=sc, policy_tag=po, replicas=len(ok),
                failed=len(cell_recs) - len(ok),
                mean_revenue=float(np.mean(revs)) if revs else float("nan"),
                depeg_frequency=float(np.mean(deps)) if deps else float("nan"),
                mean_responsiveness_days=float(np.mean(resp)) if resp else None,
            ))
    return ExperimentReport(config=cfg, cells=cells, records=records)


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def emit_reports(report: ExperimentReport, directory: str) -> list:
    """Write summary.csv, per-cell trajectory CSVs, and the run manifest.

    Returns the list of paths written.  Output is byte-deterministic for a
    fixed config and master seed.
    """
    os.makedirs(directory, exist_ok=True)
    written = []

    path = os.path.join(directory, "summary.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario,policy,replicas,failed,mean_revenue,"
                 "depeg_frequency,mean_responsiveness_days\n")
        for cell in report.cells:
            fh.write(f"{cell.scenario_id},{cell.policy_tag},{cell.replicas},"
                     f"{cell.failed},{_fmt(cell.mean_revenue)},"
                     f"{_fmt(cell.depeg_frequency)},"
                     f"{_fmt(cell.mean_responsiveness_days)}\n")
    written.append(path)

    cfg = report.config
    for c, sc in enumerate(cfg.scenarios):
        for p, po in enumerate(cfg.policies):
            base = (c * len(cfg.policies) + p) * cfg.replicas
            path = os.path.join(directory, f"trajectories_{sc}_{po}.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("replica,time_hours,policy,omega,delta,r_liq,r_bill,"
                         "delta_p,lambda_R,lambda_M\n")
                for r in range(cfg.replicas):
                    rec = report.records[base + r]
                    for j in range(rec.window_start_hours.size):
                        fh.write(
                            f"{r},{_fmt(rec.window_start_hours[j])},{po},"
                            f"{_fmt(rec.omega[j])},{_fmt(rec.delta[j])},"
                            f"{_fmt(rec.r_liq[j])},{_fmt(rec.r_bill[j])},"
                            f"{_fmt(rec.delta_p[j])},{_fmt(rec.lambda_r[j])},"
                            f"{_fmt(rec.lambda_m[j])}\n")
            written.append(path)

    manifest = {
        "version": __version__,
        "config": report.config.to_dict(),
        "replica_chi": {
            f"{rec.scenario_id}/{rec.policy_tag}/{i % cfg.replicas}": rec.chi
            for i, rec in enumerate(report.records)
        },
        "cells": [asdict(c) for c in report.cells],
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(path)
    return written
