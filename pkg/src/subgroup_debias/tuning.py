"""Cross-validated choice of the calibration rate r.

v-fold scheme: for each fold, the training part yields a bias-reduced
max estimate per candidate r, and the held-out part yields reference
coordinate estimates with bootstrap SEs. The criterion for r averages,
over folds, the squared gap between the training bias-reduced estimate and
a reference coordinate, minus that coordinate's bootstrap variance; the
coordinate minimum over the top-k reference coordinates is taken and the
candidate minimizing the criterion wins, ties toward the larger r.

The expensive pieces (split estimates, residuals, draws) do not depend on
r, so they are computed once per fold and only the cheap recentering step
is repeated across the candidate grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._streams import derive_seed
from .calibrate import (
    BootstrapConfig,
    bootstrap_draws,
    calibrated_statistics,
    calibration_terms,
    draw_standard_errors,
)
from .errors import DataError, FoldFailure, NumericalError
from .lasso import full_data_residuals
from .rsplit import run_rsplit
from .validation import check_interval, check_positive_int

__all__ = ["TuningResult", "default_candidates", "select_r"]


def default_candidates():
    """r grid {1/3, 1/6, ..., 1/30}."""
    return np.array([1.0 / (3.0 * k) for k in range(1, 11)])


@dataclass
class TuningResult:
    r: float
    candidates: np.ndarray
    criterion: np.ndarray
    top_coordinates: tuple     # 0-based coordinate indices used as references
    fold_sizes: tuple


def select_r(design, candidates=None, v=3, k=None, b1=100, b2=300,
             split_ratio=0.6, min_size=3, max_size=10, cv_folds=3,
             n_lambdas=100, hessian_normalizer="n2", multiplier="normal",
             seed=0, n_jobs=None):
    """Pick r from the candidate grid by the v-fold criterion."""
    check_positive_int(v, "v", minimum=2)
    if candidates is None:
        candidates = default_candidates()
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.ndim != 1 or candidates.size == 0:
        raise DataError("candidates must be a non-empty 1d grid")
    for c in candidates:
        check_interval(float(c), 0.0, 0.5, "candidate r",
                       open_left=True, open_right=True)
    if candidates.size == 1:
        # nothing to choose; skip the fold computation entirely
        return TuningResult(
            r=float(candidates[0]),
            candidates=candidates,
            criterion=np.zeros(1),
            top_coordinates=(),
            fold_sizes=(),
        )
    p1 = design.p1
    if k is None:
        k = min(3, p1)
    k = check_positive_int(k, "k")
    k = min(k, p1)

    from ._streams import stream  # local import to keep module surface small

    blocks = np.array_split(stream(seed, "tune-folds").permutation(design.n), v)
    m = np.zeros((v, candidates.size))      # bias-reduced training estimates
    beta_train = np.zeros((v, p1))
    beta_ref = np.zeros((v, p1))
    sigma_ref = np.zeros((v, p1))

    for j, block in enumerate(blocks):
        train_idx = np.setdiff1d(np.arange(design.n), block, assume_unique=True)
        train = design.subset_rows(train_idx)
        ref = design.subset_rows(block)
        try:
            est_tr = run_rsplit(train, n_splits=b1, split_ratio=split_ratio,
                                min_size=min_size, max_size=max_size,
                                cv_folds=cv_folds, n_lambdas=n_lambdas,
                                hessian_normalizer=hessian_normalizer,
                                seed=derive_seed(seed, "tune-train", j),
                                n_jobs=n_jobs)
            res_tr = full_data_residuals(None, train, folds=cv_folds,
                                         seed=derive_seed(seed, "tune-train-res", j),
                                         n_lambdas=n_lambdas)
            cfg_tr = BootstrapConfig(n_draws=b2, r=candidates[0], multiplier=multiplier,
                                     seed=derive_seed(seed, "tune-train-boot", j))
            draws_tr = bootstrap_draws(est_tr, train, res_tr.residuals, cfg_tr)

            est_ref = run_rsplit(ref, n_splits=b1, split_ratio=split_ratio,
                                 min_size=min_size, max_size=max_size,
                                 cv_folds=cv_folds, n_lambdas=n_lambdas,
                                 hessian_normalizer=hessian_normalizer,
                                 seed=derive_seed(seed, "tune-ref", j),
                                 n_jobs=n_jobs)
            res_ref = full_data_residuals(None, ref, folds=cv_folds,
                                          seed=derive_seed(seed, "tune-ref-res", j),
                                          n_lambdas=n_lambdas)
            cfg_ref = BootstrapConfig(n_draws=b2, r=candidates[0], multiplier=multiplier,
                                      seed=derive_seed(seed, "tune-ref-boot", j))
            draws_ref = bootstrap_draws(est_ref, ref, res_ref.residuals, cfg_ref)
        except (NumericalError, DataError) as exc:
            raise FoldFailure(f"tuning fold {j} failed: {exc}") from exc

        beta_train[j] = est_tr.beta
        beta_ref[j] = est_ref.beta
        sigma_ref[j] = draw_standard_errors(draws_ref)
        for l, r_l in enumerate(candidates):
            terms = calibration_terms(est_tr.beta, train.n, r_l)
            tstar = calibrated_statistics(draws_tr, est_tr.beta, terms)
            m[j, l] = est_tr.beta.max() - tstar.mean()

    # reference coordinates: top-k by mean training estimate, largest first
    order = np.argsort(-beta_train.mean(axis=0), kind="stable")
    top = tuple(int(i) for i in order[:k])

    criterion = np.zeros(candidates.size)
    for l in range(candidates.size):
        per_coord = [
            np.mean((m[:, l] - beta_ref[:, i]) ** 2 - sigma_ref[:, i] ** 2)
            for i in top
        ]
        criterion[l] = min(per_coord)

    # ties break toward the larger r: scan descending, switch only on strict <
    desc = np.argsort(-candidates, kind="stable")
    best = desc[0]
    for l in desc[1:]:
        if criterion[l] < criterion[best]:
            best = l
    return TuningResult(
        r=float(candidates[best]),
        candidates=candidates,
        criterion=criterion,
        top_coordinates=top,
        fold_sizes=tuple(len(b) for b in blocks),
    )
