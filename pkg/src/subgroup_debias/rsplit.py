"""Repeated-sample-split (R-Split) estimation of subgroup effects.

Each split uses one part of the data to select a small covariate model by
cross-validated penalized logistic regression, and the other part to refit an
unpenalized logistic model on [z | forced x | selected x]. The z-block
coefficients are averaged over splits; the averaged z-rows of the inverse
refit Hessians, scattered back to full column positions, form the linear map
Gamma that the multiplier bootstrap pushes score perturbations through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._streams import derive_seed, stream
from .errors import (
    DataError,
    FoldFailure,
    NonConvergence,
    SeparationDetected,
    SingularHessian,
    TooManyDiscardedSplits,
)
from .glm import inverse_hessian, newton_refit
from .lasso import cv_select_model
from .validation import check_interval, check_positive_int

__all__ = ["SplitRecord", "RSplitResult", "run_rsplit", "RSplitEstimator"]

DISCARD_ERRORS = (SeparationDetected, SingularHessian, NonConvergence, FoldFailure)


@dataclass
class SplitRecord:
    """Diagnostics for one retained split."""

    attempt: int
    selected: tuple
    lam: float
    in_window: bool
    refit_iterations: int


@dataclass
class RSplitResult:
    """Averaged split-and-refit estimate.

    beta is the averaged z-block coefficient vector; gamma_n the averaged
    scattered inverse-Hessian z-rows, with one column per stacked (z, x)
    column. Columns of covariates never selected in any retained split are
    exactly zero.
    """

    beta: np.ndarray
    gamma_n: np.ndarray
    n_splits: int
    n_discarded: int
    n1: int
    n2: int
    hessian_normalizer: str
    records: list = field(default_factory=list)


def _one_split(design, attempt, seed, split_ratio, min_size, max_size,
               cv_folds, n_lambdas, normalizer):
    """Run one split attempt; return (attempt, beta_b, gamma_rows, positions,
    record) or None when the attempt is discarded."""
    n = design.n
    n1 = int(round(split_ratio * n))
    perm = stream(seed, "split", attempt).permutation(n)
    t1, t2 = perm[:n1], perm[n1:]
    try:
        sel = cv_select_model(None, design.subset_rows(t1),
                              min_size=min_size, max_size=max_size,
                              folds=cv_folds,
                              seed=derive_seed(seed, "split-cv", attempt),
                              n_lambdas=n_lambdas)
        sub = design.subset_rows(t2)
        mat, positions = sub.refit_matrix(sel.selected)
        fit = newton_refit(sub.y, mat)
        norm = t2.shape[0] if normalizer == "n2" else n1
        hinv = inverse_hessian(mat, fit.weights, normalizer=norm)
    except DISCARD_ERRORS:
        return None
    record = SplitRecord(attempt=attempt, selected=sel.selected, lam=sel.lam,
                         in_window=sel.in_window, refit_iterations=fit.n_iter)
    return attempt, fit.coef[: design.p1], hinv[: design.p1, :], positions, record


def run_rsplit(design, n_splits=100, split_ratio=0.6, min_size=3, max_size=10,
               cv_folds=3, n_lambdas=100, hessian_normalizer="n2", seed=0,
               n_jobs=None, store_records=False):
    """Average n_splits split-select-refit estimates.

    Failed splits (separation, singular refit, non-convergence, fold failure)
    are discarded and replaced by further attempts, up to 2 * n_splits
    attempts in total; if fewer than n_splits succeed the run errors with
    TooManyDiscardedSplits. Attempt b always uses the stream (seed, "split",
    b), so the estimate does not depend on worker count or scheduling.
    """
    check_positive_int(n_splits, "n_splits")
    check_interval(split_ratio, 0.0, 1.0, "split_ratio", open_left=True, open_right=True)
    if hessian_normalizer not in ("n2", "n1"):
        raise DataError(f"hessian_normalizer must be 'n2' or 'n1', got {hessian_normalizer!r}")
    n = design.n
    n1 = int(round(split_ratio * n))
    n2 = n - n1
    d_refit = design.p1 + len(design.forced) + max_size
    if n2 <= d_refit + 5:
        raise DataError(f"refit part too small: n2={n2} vs refit width up to {d_refit}")

    max_attempts = 2 * n_splits
    succeeded = []
    next_attempt = 0

    def _run_batch(attempts):
        if n_jobs in (None, 1):
            return [_one_split(design, b, seed, split_ratio, min_size, max_size,
                               cv_folds, n_lambdas, hessian_normalizer)
                    for b in attempts]
        return Parallel(n_jobs=n_jobs)(
            delayed(_one_split)(design, b, seed, split_ratio, min_size, max_size,
                                cv_folds, n_lambdas, hessian_normalizer)
            for b in attempts)

    while len(succeeded) < n_splits and next_attempt < max_attempts:
        todo = min(n_splits - len(succeeded), max_attempts - next_attempt)
        batch = range(next_attempt, next_attempt + todo)
        succeeded.extend(r for r in _run_batch(batch) if r is not None)
        next_attempt += todo

    if len(succeeded) < n_splits:
        raise TooManyDiscardedSplits(
            f"only {len(succeeded)} of {next_attempt} attempts usable (need {n_splits})")

    succeeded.sort(key=lambda r: r[0])
    p_all = design.p1 + design.p2
    # compensated per-coordinate sums make beta exactly order independent
    beta = np.array([
        math.fsum(r[1][j] for r in succeeded) / n_splits for j in range(design.p1)
    ])
    gamma = np.zeros((design.p1, p_all))
    for _, _, rows, positions, _ in succeeded:
        gamma[:, positions] += rows
    gamma /= n_splits

    return RSplitResult(
        beta=beta,
        gamma_n=gamma,
        n_splits=n_splits,
        n_discarded=next_attempt - n_splits,
        n1=n1,
        n2=n2,
        hessian_normalizer=hessian_normalizer,
        records=[r[4] for r in succeeded] if store_records else [],
    )


class RSplitEstimator(BaseEstimator):
    """Averaged split-select-refit estimator of the z-block coefficients.

    Parameters mirror run_rsplit. After fit, exposes beta_, gamma_n_,
    n_discarded_, n1_, n2_ and (optionally) records_.
    """

    def __init__(self, n_splits=100, split_ratio=0.6, min_size=3, max_size=10,
                 cv_folds=3, n_lambdas=100, hessian_normalizer="n2",
                 random_state=0, n_jobs=None, store_records=False):
        self.n_splits = n_splits
        self.split_ratio = split_ratio
        self.min_size = min_size
        self.max_size = max_size
        self.cv_folds = cv_folds
        self.n_lambdas = n_lambdas
        self.hessian_normalizer = hessian_normalizer
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.store_records = store_records

    def fit(self, design, y=None):
        res = run_rsplit(
            design,
            n_splits=self.n_splits,
            split_ratio=self.split_ratio,
            min_size=self.min_size,
            max_size=self.max_size,
            cv_folds=self.cv_folds,
            n_lambdas=self.n_lambdas,
            hessian_normalizer=self.hessian_normalizer,
            seed=self.random_state,
            n_jobs=self.n_jobs,
            store_records=self.store_records,
        )
        self.result_ = res
        self.beta_ = res.beta
        self.gamma_n_ = res.gamma_n
        self.n_discarded_ = res.n_discarded
        self.n1_ = res.n1
        self.n2_ = res.n2
        self.records_ = res.records
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit first")

    @property
    def estimate_(self):
        self._check_fitted()
        return self.result_
