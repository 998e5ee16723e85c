"""Shared fixtures: baseline calibration objects and the desk-scale experiment.

The desk-scale experiment (3 scenarios x 3 policies x 20 replicas) is run once
per session on 4 workers and shared by all acceptance tests that need it; its
wall-clock time is recorded for the runtime criterion.
"""

import time

import pytest

from pegctrl import (ExperimentConfig, HawkesParams, PegFeedback, PegParams,
                     RateEnvironment, run_experiment)
from pegctrl.pmp import CostTerms


@pytest.fixture
def params_r():
    return HawkesParams(lambda0=100.0, kappa=0.8, theta=2.0, mark_mean=250e3)


@pytest.fixture
def params_m():
    return HawkesParams(lambda0=80.0, kappa=0.6, theta=1.5, mark_mean=300e3)


@pytest.fixture
def no_feedback():
    return PegFeedback(0.0)


@pytest.fixture
def peg_params():
    return PegParams(eta=10.0, gamma=5.0)


@pytest.fixture
def rates():
    # per-hour rates: per-window values spread over the 8-hour window
    return RateEnvironment(r_cash=0.0, r_bill=4.93e-5 / 8.0, rho=7.31e-5 / 8.0)


@pytest.fixture
def cost_terms():
    return CostTerms(c_peg=1.5e8, c_fee=6.0e8, lambda_omega=1e-4, rho_omega=1e-15)


@pytest.fixture(scope="session")
def desk_experiment():
    """Full desk-scale run: default config, 20 replicas per cell, 4 workers."""
    cfg = ExperimentConfig()
    t0 = time.time()
    report = run_experiment(cfg, workers=4)
    elapsed = time.time() - t0
    return cfg, report, elapsed


def cell_records(cfg, report, scenario, policy):
    """Slice one cell's replica records out of a report."""
    c = cfg.scenarios.index(scenario)
    p = cfg.policies.index(policy)
    base = (c * len(cfg.policies) + p) * cfg.replicas
    return report.records[base:base + cfg.replicas]
