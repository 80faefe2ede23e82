"""L1-penalized logistic regression with unpenalized columns.

Solver: IRLS outer loop with coordinate descent on the working quadratic,
working-set screening, warm starts along a descending lambda path, and a
final check of the exact KKT conditions at every accepted solution. The
penalty applies in an internally standardized space (penalized columns
centered and scaled to column norm sqrt(n)); coefficients are mapped back
to the original scale before anything is returned.

On top of the path solver sit the two selection services used elsewhere:
cross-validated model selection restricted to a model-size window, and the
full-data residual fit that feeds the multiplier bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._streams import stream
from .errors import DataError, FoldFailure, NonConvergence
from .glm import expit, log1pexp
from .validation import check_binary_vector, check_matrix, check_positive_int

__all__ = [
    "soft_threshold",
    "standardize_columns",
    "LassoPath",
    "fit_lasso_path",
    "kkt_residuals",
    "SelectionResult",
    "cv_select_model",
    "cv_path_deviance",
    "ResidualFit",
    "full_data_residuals",
    "binomial_deviance",
]

WEIGHT_FLOOR = 1e-5
KKT_TOL_ACTIVE = 1e-4
KKT_TOL_INACTIVE = 1e-4
KKT_TOL_UNPENALIZED = 1e-6
MAX_OUTER = 100


def soft_threshold(rho, lam):
    """Scalar soft-thresholding operator S(rho, lam)."""
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


def standardize_columns(X, penalized):
    """Center/scale penalized columns to mean 0 and norm sqrt(n).

    Unpenalized columns are left untouched. Centering is applied only when an
    unpenalized constant column (an intercept) exists to absorb it; otherwise
    penalized columns are scaled in place. Constant penalized columns get
    scale 1 and are zeroed by centering, so they can never activate.

    Returns (X_std, centers, scales, intercept_index).
    """
    X = check_matrix(X)
    n, d = X.shape
    penalized = np.asarray(penalized, dtype=bool)
    if penalized.shape != (d,):
        raise DataError("penalized mask must have one entry per column")

    intercept_idx = None
    for j in np.flatnonzero(~penalized):
        col = X[:, j]
        if np.ptp(col) == 0.0 and col[0] != 0.0:
            intercept_idx = int(j)
            break

    centers = np.zeros(d)
    scales = np.ones(d)
    Xs = X.copy()
    pen_idx = np.flatnonzero(penalized)
    if pen_idx.size:
        if intercept_idx is not None:
            centers[pen_idx] = X[:, pen_idx].mean(axis=0)
            Xs[:, pen_idx] = X[:, pen_idx] - centers[pen_idx]
        sc = np.sqrt(np.mean(Xs[:, pen_idx] ** 2, axis=0))
        sc[sc == 0.0] = 1.0
        scales[pen_idx] = sc
        Xs[:, pen_idx] /= sc
    return Xs, centers, scales, intercept_idx


def _to_original(coef_std, centers, scales, penalized, intercept_idx):
    coef = coef_std / scales
    coef[~penalized] = coef_std[~penalized]
    if intercept_idx is not None:
        shift = np.sum(coef_std[penalized] * centers[penalized] / scales[penalized])
        coef[intercept_idx] = coef_std[intercept_idx] - shift
    return coef


@njit(cache=True, fastmath={"reassoc", "contract"})
def _nll_mean(eta, y):
    """Mean logistic NLL from the linear predictor."""
    n = eta.shape[0]
    total = 0.0
    for i in range(n):
        u = eta[i]
        if u > 0.0:
            total += u + np.log1p(np.exp(-u)) - y[i] * u
        else:
            total += np.log1p(np.exp(u)) - y[i] * u
    return total / n


@njit(cache=True, fastmath={"reassoc", "contract"})
def _path_kernel(Xf, Xsq, y, pen, grid, coef, countable, stop_active,
                 tol, max_sweeps):
    """IRLS + working-set CD over a descending lambda grid, warm-started.

    Xf is the Fortran-ordered standardized design, Xsq its elementwise
    square, coef the (modified in place) warm start in standardized space.
    Returns (coefs, counts, n_used, total_sweeps, fail_idx); fail_idx >= 0
    flags the grid point where convergence failed, -1 means success.
    """
    n, d = Xf.shape
    m = grid.shape[0]
    coefs = np.zeros((m, d))
    counts = np.zeros(m, dtype=np.int64)
    p = np.empty(n)
    w = np.empty(n)
    r = np.empty(n)
    eta = np.empty(n)
    curv = np.zeros(d)
    curv_done = np.zeros(d, dtype=np.bool_)
    cand_mask = np.empty(d, dtype=np.bool_)
    total_sweeps = 0
    n_used = 0

    for mi in range(m):
        lam = grid[mi]
        budget = max_sweeps
        # fresh eta at each grid point stops rounding drift along the path
        for i in range(n):
            eta[i] = 0.0
        for j in range(d):
            cj = coef[j]
            if cj != 0.0:
                for i in range(n):
                    eta[i] += Xf[i, j] * cj
        pen_sum = 0.0
        for j in range(d):
            if pen[j]:
                pen_sum += abs(coef[j])
        # a lam = inf null fit keeps the penalized block at zero exactly
        prev_obj = _nll_mean(eta, y) if pen_sum == 0.0 else _nll_mean(eta, y) + lam * pen_sum
        converged = False
        last_delta = np.inf
        for j in range(d):
            cand_mask[j] = (not pen[j]) or (coef[j] != 0.0)

        for _outer in range(MAX_OUTER):
            coef_prev = coef.copy()
            eta_prev = eta.copy()
            for i in range(n):
                u = eta[i]
                if u >= 0.0:
                    pi = 1.0 / (1.0 + np.exp(-u))
                else:
                    e = np.exp(u)
                    pi = e / (1.0 + e)
                p[i] = pi
                wi = pi * (1.0 - pi)
                if wi < WEIGHT_FLOOR:
                    wi = WEIGHT_FLOOR
                w[i] = wi
                r[i] = (y[i] - pi) / wi
            for j in range(d):
                curv_done[j] = False

            # inner solves stay coarse until the outer loop is nearly done
            inner_tol = 0.01 * last_delta
            if inner_tol < tol:
                inner_tol = tol
            elif inner_tol > 1e-4:
                inner_tol = 1e-4

            cand = np.where(cand_mask)[0]
            for k in range(cand.shape[0]):
                j = cand[k]
                if not curv_done[j]:
                    s = 0.0
                    for i in range(n):
                        s += w[i] * Xsq[i, j]
                    curv[j] = s / n
                    curv_done[j] = True
            sweeps = 0
            max_delta = inner_tol
            while sweeps < budget:
                sweeps += 1
                max_delta = 0.0
                for k in range(cand.shape[0]):
                    j = cand[k]
                    aj = curv[j]
                    if aj <= 0.0:
                        continue
                    s = 0.0
                    for i in range(n):
                        s += Xf[i, j] * w[i] * r[i]
                    rho = s / n + aj * coef[j]
                    lj = lam if pen[j] else 0.0
                    if rho > lj:
                        new = (rho - lj) / aj
                    elif rho < -lj:
                        new = (rho + lj) / aj
                    else:
                        new = 0.0
                    delta = new - coef[j]
                    if delta != 0.0:
                        coef[j] = new
                        for i in range(n):
                            r[i] -= Xf[i, j] * delta
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                if max_delta < inner_tol:
                    break
            if max_delta >= inner_tol:
                return coefs, counts, n_used, total_sweeps, mi
            budget -= sweeps
            total_sweeps += sweeps

            # exact eta for the new coef: zz - r with zz the working response
            for i in range(n):
                eta[i] = eta_prev[i] + (y[i] - p[i]) / w[i] - r[i]

            # safeguard: the true penalized objective must not increase
            pen_sum = 0.0
            for j in range(d):
                if pen[j]:
                    pen_sum += abs(coef[j])
            obj = _nll_mean(eta, y) if pen_sum == 0.0 else _nll_mean(eta, y) + lam * pen_sum
            halvings = 0
            while obj > prev_obj + 1e-12 and halvings < 30:
                for j in range(d):
                    coef[j] = 0.5 * (coef[j] + coef_prev[j])
                for i in range(n):
                    eta[i] = 0.5 * (eta[i] + eta_prev[i])
                pen_sum = 0.0
                for j in range(d):
                    if pen[j]:
                        pen_sum += abs(coef[j])
                obj = _nll_mean(eta, y) if pen_sum == 0.0 else _nll_mean(eta, y) + lam * pen_sum
                halvings += 1
            if halvings == 30:
                for j in range(d):
                    coef[j] = coef_prev[j]
                for i in range(n):
                    eta[i] = eta_prev[i]
                break
            prev_obj = obj

            delta_outer = 0.0
            for j in range(d):
                dj = abs(coef[j] - coef_prev[j])
                if dj > delta_outer:
                    delta_outer = dj
            last_delta = delta_outer
            if delta_outer < tol:
                # quadratic-gradient screen for working-set violations
                any_viol = False
                for j in range(d):
                    if pen[j] and not cand_mask[j]:
                        s = 0.0
                        for i in range(n):
                            s += Xf[i, j] * w[i] * r[i]
                        if abs(s / n) > lam + 1e-7:
                            cand_mask[j] = True
                            any_viol = True
                if any_viol:
                    last_delta = np.inf
                    continue
                # exact-score KKT check at half tolerances
                for i in range(n):
                    u = eta[i]
                    if u >= 0.0:
                        p[i] = 1.0 / (1.0 + np.exp(-u)) - y[i]
                    else:
                        e = np.exp(u)
                        p[i] = e / (1.0 + e) - y[i]
                ok = True
                for j in range(d):
                    s = 0.0
                    for i in range(n):
                        s += Xf[i, j] * p[i]
                    g = s / n
                    if not pen[j]:
                        if abs(g) > 0.5 * KKT_TOL_UNPENALIZED:
                            ok = False
                            break
                    elif coef[j] == 0.0:
                        if abs(g) > lam + 0.5 * KKT_TOL_INACTIVE:
                            ok = False
                            break
                    else:
                        sign = 1.0 if coef[j] > 0.0 else -1.0
                        if abs(g + lam * sign) > 0.5 * KKT_TOL_ACTIVE:
                            ok = False
                            break
                if ok:
                    converged = True
                    break

        if not converged:
            return coefs, counts, n_used, total_sweeps, mi
        for j in range(d):
            coefs[mi, j] = coef[j]
        count = 0
        for k in range(countable.shape[0]):
            if coef[countable[k]] != 0.0:
                count += 1
        counts[mi] = count
        n_used = mi + 1
        if stop_active >= 0 and count > stop_active:
            break

    return coefs, counts, n_used, total_sweeps, -1


@dataclass
class LassoPath:
    """Solutions along a descending lambda grid, in original column scale."""

    lambdas: np.ndarray
    coefs: np.ndarray          # shape (n_lambdas_used, d)
    active_sets: list          # per lambda: tuple of active countable columns
    active_counts: np.ndarray
    lambda_max: float
    n_sweeps: int
    stopped_early: bool


def fit_lasso_path(y, X, penalized, lambdas=None, n_lambdas=100,
                   lambda_min_ratio=1e-3, countable=None, stop_active=None,
                   tol=1e-7, max_sweeps=100_000):
    """Fit the penalized path over a descending lambda grid with warm starts.

    Parameters
    ----------
    penalized : bool mask over columns; the rest are never shrunk.
    lambdas : explicit descending grid; default 100 log-spaced points from
        lambda_max (smallest lambda with all penalized coefficients zero)
        down to lambda_min_ratio * lambda_max.
    countable : column indices whose activity defines `active_counts`
        (default: all penalized columns).
    stop_active : stop the path after the first grid point whose countable
        active count exceeds this value.
    """
    y = check_binary_vector(y)
    X = check_matrix(X)
    penalized = np.asarray(penalized, dtype=bool)
    Xs, centers, scales, intercept_idx = standardize_columns(X, penalized)
    Xf = np.asfortranarray(Xs)
    Xsq = np.asfortranarray(Xs ** 2)
    n = y.shape[0]
    if countable is None:
        countable = np.flatnonzero(penalized)
    countable = np.asarray(countable, dtype=np.int64)

    # null fit on unpenalized columns only gives lambda_max
    coef_std = np.zeros(X.shape[1])
    _, _, _, sweeps, fail = _path_kernel(
        Xf, Xsq, y, penalized, np.array([np.inf]), coef_std, countable,
        -1, tol, max_sweeps)
    if fail >= 0:
        raise NonConvergence("null fit on the unpenalized columns did not converge")
    g0 = Xs.T @ (expit(Xs @ coef_std) - y) / n
    lambda_max = float(np.max(np.abs(g0[penalized]))) if penalized.any() else 0.0
    lambda_max = max(lambda_max, 1e-10)

    if lambdas is None:
        lambdas = np.geomspace(lambda_max, lambda_min_ratio * lambda_max, n_lambdas)
    else:
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if np.any(np.diff(lambdas) > 0):
            raise DataError("lambda grid must be non-increasing")

    coefs_std, counts, n_used, path_sweeps, fail = _path_kernel(
        Xf, Xsq, y, penalized, lambdas, coef_std, countable,
        -1 if stop_active is None else int(stop_active), tol, max_sweeps)
    if fail >= 0:
        raise NonConvergence(
            f"IRLS failed to reach the KKT conditions at lambda={lambdas[fail]:.3e}")
    sweeps += path_sweeps

    coefs, active_sets = [], []
    for mi in range(n_used):
        row = coefs_std[mi]
        coefs.append(_to_original(row, centers, scales, penalized, intercept_idx))
        active_sets.append(tuple(int(j) for j in countable[row[countable] != 0.0]))

    return LassoPath(
        lambdas=np.asarray(lambdas[:n_used], dtype=np.float64),
        coefs=np.asarray(coefs),
        active_sets=active_sets,
        active_counts=np.asarray(counts[:n_used], dtype=int),
        lambda_max=lambda_max,
        n_sweeps=sweeps,
        stopped_early=bool(n_used < lambdas.shape[0]),
    )


def kkt_residuals(y, X, penalized, coef_orig, lam):
    """Exact KKT residuals of a solution, evaluated in the penalty space.

    Returns a dict with the three optimality gaps:
    - ``unpenalized``: max |score_j| over unpenalized columns
    - ``inactive``: max (|score_j| - lam) over inactive penalized columns
    - ``active``: max |score_j + lam * sign(coef_j)| over active penalized
    where score is the NLL gradient per observation in the standardized space.
    """
    y = check_binary_vector(y)
    X = check_matrix(X)
    penalized = np.asarray(penalized, dtype=bool)
    Xs, centers, scales, intercept_idx = standardize_columns(X, penalized)

    coef_std = np.asarray(coef_orig, dtype=np.float64).copy()
    coef_std[penalized] = coef_std[penalized] * scales[penalized]
    if intercept_idx is not None:
        shift = np.sum(np.asarray(coef_orig)[penalized] * centers[penalized])
        coef_std[intercept_idx] = coef_orig[intercept_idx] + shift

    n = y.shape[0]
    g = Xs.T @ (expit(Xs @ coef_std) - y) / n
    active = penalized & (coef_std != 0.0)
    inactive = penalized & ~active
    out = {
        "unpenalized": float(np.max(np.abs(g[~penalized]))) if (~penalized).any() else 0.0,
        "inactive": float(np.max(np.abs(g[inactive]) - lam)) if inactive.any() else -lam,
        "active": float(np.max(np.abs(g[active] + lam * np.sign(coef_std[active]))))
        if active.any() else 0.0,
    }
    return out


def binomial_deviance(y, X, coef):
    """2 * negative log-likelihood, the CV loss."""
    eta = np.asarray(X) @ np.asarray(coef)
    return 2.0 * float(np.sum(log1pexp(eta) - np.asarray(y) * eta))


def _fold_indices(n, folds, seed):
    perm = stream(seed, "cv").permutation(n)
    return np.array_split(perm, folds)


def cv_path_deviance(y, W, penalized, grid, countable=None, folds=3, seed=0):
    """Sum of out-of-fold deviances along a fixed lambda grid."""
    n = y.shape[0]
    cv_dev = np.zeros(grid.shape[0])
    for k, te in enumerate(_fold_indices(n, folds, seed)):
        tr = np.setdiff1d(np.arange(n), te, assume_unique=True)
        try:
            path = fit_lasso_path(y[tr], W[tr], penalized, lambdas=grid,
                                  countable=countable)
        except (NonConvergence, DataError) as exc:
            raise FoldFailure(f"fold {k} failed: {exc}") from exc
        etas = W[te] @ path.coefs.T
        cv_dev += 2.0 * np.sum(log1pexp(etas) - y[te, None] * etas, axis=0)
    return cv_dev


@dataclass
class SelectionResult:
    """CV-selected covariate set under a model-size window."""

    selected: tuple            # x-column indices into the design's x block
    lam: float
    lambda_index: int
    in_window: bool
    lambdas: np.ndarray
    active_counts: np.ndarray
    cv_deviance: np.ndarray


def _stacked_penalty(design, penalize_forced=False):
    """Stacked [z | x] matrix with its penalty mask and countable columns.

    z columns and the intercept are never penalized; forced x columns
    (subgroup indicators) are penalized only when penalize_forced is set.
    Countable columns are always the free covariates.
    """
    W = design.stacked()
    d = design.p1 + design.p2
    penalized = np.ones(d, dtype=bool)
    penalized[: design.p1] = False
    for j in design.forced:
        if penalize_forced:
            col = design.x[:, j]
            if np.ptp(col) == 0.0 and col[0] != 0.0:
                penalized[design.p1 + j] = False  # the intercept stays free
        else:
            penalized[design.p1 + j] = False
    countable = np.asarray([design.p1 + j for j in design.free], dtype=np.intp)
    return W, penalized, countable


def cv_select_model(y, design, min_size=3, max_size=10, folds=3, seed=0,
                    n_lambdas=100, lambda_min_ratio=1e-3):
    """Choose a covariate model by CV deviance inside a size window.

    Fits the full-data path (stopped once the active count leaves the window
    from below), refits the same lambda grid on each training fold, and picks
    the lambda minimizing out-of-fold deviance among grid points whose
    full-data active count lies in [min_size, max_size]. When no grid point
    lands in the window, the fallback is the count closest to the window,
    ties to the larger model, then to the smaller lambda.
    """
    check_positive_int(folds, "folds", minimum=2)
    if not 0 <= min_size <= max_size:
        raise DataError(f"bad size window [{min_size}, {max_size}]")
    W, penalized, countable = _stacked_penalty(design)
    y = design.y if y is None else y

    full = fit_lasso_path(y, W, penalized, n_lambdas=n_lambdas,
                          lambda_min_ratio=lambda_min_ratio,
                          countable=countable, stop_active=max_size)
    grid = full.lambdas
    cv_dev = cv_path_deviance(y, W, penalized, grid, countable=countable,
                              folds=folds, seed=seed)

    counts = full.active_counts
    in_window = (counts >= min_size) & (counts <= max_size)
    if np.any(in_window):
        idx = int(min(np.flatnonzero(in_window), key=lambda m: (cv_dev[m], -counts[m], m)))
        chosen_in_window = True
    else:
        dist = np.maximum(0, min_size - counts) + np.maximum(0, counts - max_size)
        idx = int(min(range(counts.shape[0]), key=lambda m: (dist[m], -counts[m], m)))
        chosen_in_window = False

    selected = tuple(sorted(int(j - design.p1) for j in full.active_sets[idx]))
    return SelectionResult(
        selected=selected,
        lam=float(grid[idx]),
        lambda_index=idx,
        in_window=chosen_in_window,
        lambdas=grid,
        active_counts=counts,
        cv_deviance=cv_dev,
    )


@dataclass
class ResidualFit:
    """Full-data penalized fit and its raw residuals."""

    residuals: np.ndarray      # y - expit(eta_hat)
    coef: np.ndarray           # stacked (z, x) scale
    lam: float
    lambda_index: int
    active_count: int


def full_data_residuals(y, design, folds=3, seed=0, n_lambdas=100,
                        lambda_min_ratio=1e-3, stop_active=60):
    """Residuals from the CV-min full-data penalized fit.

    The z block and the intercept stay unpenalized; subgroup indicators and
    covariates are penalized. No size window applies; the path is capped at
    stop_active active covariates to bound the work, and the CV minimum is
    taken over the fitted grid.
    """
    W, penalized, countable = _stacked_penalty(design, penalize_forced=True)
    y = design.y if y is None else y

    full = fit_lasso_path(y, W, penalized, n_lambdas=n_lambdas,
                          lambda_min_ratio=lambda_min_ratio,
                          countable=countable, stop_active=stop_active)
    grid = full.lambdas
    cv_dev = cv_path_deviance(y, W, penalized, grid, countable=countable,
                              folds=folds, seed=seed)

    idx = int(np.argmin(cv_dev))
    coef = full.coefs[idx]
    eta = W @ coef
    return ResidualFit(
        residuals=y - expit(eta),
        coef=coef,
        lam=float(grid[idx]),
        lambda_index=idx,
        active_count=int(full.active_counts[idx]),
    )
