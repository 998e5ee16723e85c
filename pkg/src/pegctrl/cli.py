"""Command-line entry points: `run` an experiment, or check the test `oracle`s."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .control import POLICY_TAGS, window_reallocation
from .harness import ExperimentConfig, emit_reports, run_experiment
from .pmp import CostTerms
from .scenarios import SCENARIO_IDS


def _cmd_run(args) -> int:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if args.scenario != "all":
        overrides["scenarios"] = (args.scenario,)
    if args.policy != "all":
        overrides["policies"] = (args.policy,)
    if args.replicas is not None:
        overrides["replicas"] = args.replicas
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})

    report = run_experiment(cfg)
    paths = emit_reports(report, cfg.out_dir)
    failed = sum(c.failed for c in report.cells)
    for cell in report.cells:
        print(f"{cell.scenario_id:>22s} {cell.policy_tag:>15s}  "
              f"revenue={cell.mean_revenue:.4e}  depeg={cell.depeg_frequency:.2f}  "
              f"failed={cell.failed}")
    print(f"wrote {len(paths)} files to {cfg.out_dir}")
    return 1 if failed else 0


def _oracle_moment_closed_form() -> bool:
    """Mean mint intensity after 1h vs its scalar closed form (no feedback)."""
    from .forecast import propagate_moments
    from .hawkes import HawkesParams, PegFeedback

    pm = HawkesParams(80.0, 0.6, 1.5, 300e3)
    pr = HawkesParams(100.0, 0.8, 2.0, 250e3)
    path = propagate_moments(100.0, 80.0, pr, pm, PegFeedback(0.0),
                             np.zeros(1001), 1.0, 0.001)
    closed = 133.33333333333334 - 53.33333333333334 * np.exp(-0.9)
    rel = abs(path.lambda_m_hat[-1] - closed) / closed
    print(f"moment closed form: rel error {rel:.3e} "
          f"{'PASS' if rel <= 1e-6 else 'FAIL'}")
    return rel <= 1e-6


def _oracle_threshold_grid(n: int = 2000, seed: int = 0) -> bool:
    """Soft-threshold law vs brute-force grid search of the window objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        s = rng.uniform(-20.0, 20.0)
        lam = rng.uniform(0.0, 5.0)
        rho = rng.uniform(0.1, 5.0)
        omax = rng.uniform(0.5, 10.0)
        dj = rng.uniform(1.0, 16.0)
        costs = CostTerms(c_peg=1.0, c_fee=1.0, lambda_omega=lam, rho_omega=rho)
        w = window_reallocation(s, dj, costs, omax)
        grid = np.linspace(-omax, omax, 20001)
        obj = lam * dj * np.abs(grid) + 0.5 * rho * dj * grid ** 2 + s * grid
        w_star = grid[np.argmin(obj)]
        worst = max(worst, abs(w - w_star) / (grid[1] - grid[0]))
    ok = worst <= 1.0
    print(f"threshold law vs grid: worst error {worst:.3f} cells "
          f"{'PASS' if ok else 'FAIL'}")
    return ok


def _cmd_oracle(_args) -> int:
    ok = _oracle_moment_closed_form() & _oracle_threshold_grid()
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pegctrl",
        description="Reserve-management stress simulator and window controller.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo experiment")
    p_run.add_argument("--config", help="flat JSON config file")
    p_run.add_argument("--scenario", default="all",
                       choices=("all",) + SCENARIO_IDS)
    p_run.add_argument("--policy", default="all", choices=("all",) + POLICY_TAGS)
    p_run.add_argument("--replicas", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_or = sub.add_parser("oracle", help="run the brute-force solver oracles")
    p_or.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
