"""Session fixtures for the full-budget replication runs.

Everything below is expensive (hours of single-core compute at the default
budgets), so each study is a session-scoped fixture that is only built when
a test asking for it runs. The quick suite skips all of it:

    pytest -m "not slow"

Slow tests are pushed to the end of the collection so the fast results land
first in the log.
"""

import os

import numpy as np
import pytest
from joblib import Parallel, delayed

from subgroup_debias._streams import derive_seed
from subgroup_debias.calibrate import (
    BootstrapConfig,
    bootstrap_draws,
    calibrated_statistics,
    calibration_terms,
    draw_standard_errors,
)
from subgroup_debias.lasso import full_data_residuals
from subgroup_debias.rsplit import run_rsplit
from subgroup_debias.simulate import (
    run_bias_demo,
    run_monte_carlo,
    run_power_curve,
    gaussian_design,
)
from subgroup_debias.tuning import default_candidates, select_r

N_JOBS = os.cpu_count() or 1


def pytest_collection_modifyitems(items):
    items.sort(key=lambda it: it.get_closest_marker("slow") is not None)


@pytest.fixture(scope="session")
def mc_het():
    """Heterogeneous coverage study at the full budget (about 30 min)."""
    return run_monte_carlo(case="heterogeneous", n=2000, p1=4, p2=150,
                           replicates=300, b1=100, b2=500, r=0.15,
                           seed=1729, n_jobs=N_JOBS, keep_replicates=True)


@pytest.fixture(scope="session")
def mc_spur():
    """Spurious-effect coverage study at the full budget (about 30 min)."""
    return run_monte_carlo(case="spurious", n=2000, p1=4, p2=150,
                           replicates=300, b1=100, b2=500, r=0.15,
                           seed=1730, n_jobs=N_JOBS, keep_replicates=True)


@pytest.fixture(scope="session")
def power_fix():
    """Power curve over the default grid, 300 replicates per point (about 1 h)."""
    return run_power_curve(grid=(0.0, 0.25, 0.5, 0.75, 1.0), replicates=300,
                           n=1000, p=200, b1=100, b2=500, r=0.15,
                           seed=1731, n_jobs=N_JOBS)


@pytest.fixture(scope="session")
def bias_fix():
    """Selection-bias demonstration, 200 replicates (a few minutes)."""
    return run_bias_demo(replicates=200, n=1000, p=200, seed=1732,
                         n_jobs=N_JOBS)


def _consistency_rep(rep):
    # one heterogeneous dataset, estimated with twice the usual split budget
    seed = 1733
    design, _ = gaussian_design(n=2000, p1=4, p2=150, case="heterogeneous",
                                 seed=derive_seed(seed, "mc-data", rep))
    run_seed = derive_seed(seed, "mc-run", rep)
    est = run_rsplit(design, n_splits=200, seed=derive_seed(run_seed, "splits"))
    res = full_data_residuals(None, design, seed=derive_seed(run_seed, "residuals"))
    cfg = BootstrapConfig(n_draws=500, r=0.15, seed=derive_seed(run_seed, "boot"))
    draws = bootstrap_draws(est, design, res.residuals, cfg)
    return est.beta, draw_standard_errors(draws)


@pytest.fixture(scope="session")
def rsplit_consistency():
    """100 replicates of (beta, sigma) with 200 splits each (about 20 min)."""
    out = Parallel(n_jobs=N_JOBS)(
        delayed(_consistency_rep)(rep) for rep in range(100))
    return {
        "beta": np.array([b for b, _ in out]),
        "sigma": np.array([s for _, s in out]),
    }


def _tuning_rep(rep, candidates):
    # tune r on the dataset, then score every fixed candidate from one
    # shared draw set so the comparison is paired
    seed = 1734
    design, _ = gaussian_design(n=2000, p1=4, p2=150, case="heterogeneous",
                                 seed=derive_seed(seed, "mc-data", rep))
    sel = select_r(design, candidates=candidates,
                   seed=derive_seed(seed, "tuning", rep))
    run_seed = derive_seed(seed, "mc-run", rep)
    est = run_rsplit(design, n_splits=100, seed=derive_seed(run_seed, "splits"))
    res = full_data_residuals(None, design, seed=derive_seed(run_seed, "residuals"))
    cfg = BootstrapConfig(n_draws=500, r=sel.r, seed=derive_seed(run_seed, "boot"))
    draws = bootstrap_draws(est, design, res.residuals, cfg)
    beta_max = float(est.beta.max())
    n = design.n
    reduced = []
    for r in candidates:
        tstar = calibrated_statistics(draws, est.beta,
                                      calibration_terms(est.beta, n, r))
        reduced.append(beta_max - float(tstar.mean()))
    return sel.r, reduced


@pytest.fixture(scope="session")
def tuning_mse():
    """Selected-r vs fixed-r bias-reduced estimates, 100 replicates (about 45 min)."""
    candidates = default_candidates()
    out = Parallel(n_jobs=N_JOBS)(
        delayed(_tuning_rep)(rep, candidates) for rep in range(100))
    selected = np.array([s for s, _ in out])
    fixed = np.array([m for _, m in out])
    sel_col = np.array([
        int(np.argmin(np.abs(candidates - s))) for s in selected])
    return {
        "candidates": candidates,
        "selected_r": selected,
        "fixed": fixed,                       # (reps, len(candidates))
        "selected": fixed[np.arange(len(out)), sel_col],
    }
