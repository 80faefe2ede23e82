"""Logistic-regression numerical core.

Stable likelihood primitives plus a damped Newton refit for low-dimensional
(unpenalized) logistic fits. The refit raises instead of returning garbage:
SeparationDetected when coefficients run away, SingularHessian when the
observed information is numerically rank deficient, NonConvergence when the
iteration budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special, stats

from .errors import DataError, NonConvergence, SeparationDetected, SingularHessian
from .validation import check_binary_vector, check_matrix

__all__ = [
    "expit",
    "log1pexp",
    "neg_log_likelihood",
    "nll_gradient",
    "logistic_weights",
    "GlmFit",
    "newton_refit",
    "inverse_hessian",
    "wald_inference",
    "WaldSummary",
]

# |coef| beyond this during Newton iteration is treated as separation
COEF_CAP = 20.0
RCOND_FLOOR = 1e-12


def expit(u):
    """1 / (1 + exp(-u)) without overflow for |u| up to ~700."""
    return special.expit(u)


def log1pexp(u):
    """log(1 + exp(u)) computed as max(u, 0) + log1p(exp(-|u|))."""
    return np.logaddexp(0.0, u)


def neg_log_likelihood(y, X, coef):
    """Sum_i [log(1 + exp(eta_i)) - y_i * eta_i] for eta = X @ coef."""
    eta = np.asarray(X) @ np.asarray(coef)
    return float(np.sum(log1pexp(eta) - np.asarray(y) * eta))


def nll_gradient(y, X, coef):
    """Gradient of neg_log_likelihood: X' (expit(eta) - y)."""
    X = np.asarray(X)
    eta = X @ np.asarray(coef)
    return X.T @ (expit(eta) - np.asarray(y))


def logistic_weights(eta):
    """Curvature weights f_i = expit'(eta_i) = p_i (1 - p_i), in (0, 0.25]."""
    p = expit(eta)
    return p * (1.0 - p)


@dataclass
class GlmFit:
    """Result of an unpenalized logistic refit."""

    coef: np.ndarray
    n_iter: int
    converged: bool
    nll: float
    grad_max: float
    weights: np.ndarray  # fitted f_i, used for the Hessian factor


def _solve_spd(H, rhs):
    """Solve H s = rhs for symmetric positive definite H, or raise."""
    try:
        c, low = linalg.cho_factor(H, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularHessian(f"Cholesky failed: {exc}") from None
    # cheap conditioning check on the Cholesky diagonal
    diag = np.abs(np.diag(c))
    if diag.min() == 0.0 or (diag.min() / diag.max()) ** 2 < RCOND_FLOOR:
        raise SingularHessian("observed information numerically rank deficient")
    return linalg.cho_solve((c, low), rhs, check_finite=False)


def newton_refit(y, X, tol=1e-8, max_iter=100):
    """Fit logistic regression by damped Newton iteration.

    Parameters
    ----------
    y : array, shape (n,), 0/1
    X : array, shape (n, d), full column rank, n > d
    tol : float
        Convergence threshold on the max-norm of the NLL gradient.
    max_iter : int

    Returns
    -------
    GlmFit
    """
    y = check_binary_vector(y)
    X = check_matrix(X)
    n, d = X.shape
    if n <= d:
        raise DataError(f"need n > d for a refit, got n={n}, d={d}")

    coef = np.zeros(d)
    nll = n * np.log(2.0)  # value at coef = 0
    for it in range(1, max_iter + 1):
        eta = X @ coef
        p = expit(eta)
        grad = X.T @ (p - y)
        grad_max = float(np.max(np.abs(grad)))
        if grad_max < tol:
            return GlmFit(coef=coef, n_iter=it - 1, converged=True, nll=nll,
                          grad_max=grad_max, weights=logistic_weights(eta))
        w = p * (1.0 - p)
        H = (X * w[:, None]).T @ X
        step = _solve_spd(H, grad)

        # backtrack until the objective stops increasing; the slack keeps
        # full steps acceptable once the surface is flat at machine precision
        t = 1.0
        slack = 1e-12 * (1.0 + abs(nll))
        while True:
            cand = coef - t * step
            cand_nll = neg_log_likelihood(y, X, cand)
            if cand_nll <= nll + slack:
                break
            t *= 0.5
            if t < 2.0 ** -30:
                raise NonConvergence("line search failed to reduce the objective")
        coef = cand
        nll = cand_nll
        if np.max(np.abs(coef)) > COEF_CAP:
            raise SeparationDetected(
                f"|coef| exceeded {COEF_CAP} at iteration {it}; data look separated")

    raise NonConvergence(f"gradient max-norm {grad_max:.3e} > {tol} after {max_iter} iterations")


def inverse_hessian(X, weights, normalizer):
    """Inverse of (1/normalizer) * sum_i weights_i x_i x_i'.

    Raises SingularHessian when the matrix is not numerically positive
    definite. Scaling identity: the result is proportional to normalizer.
    """
    X = check_matrix(X)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.shape[0] != X.shape[0]:
        raise DataError("weights length must match rows of X")
    if normalizer <= 0:
        raise DataError("normalizer must be positive")
    H = (X * weights[:, None]).T @ X / float(normalizer)
    return _solve_spd(H, np.eye(X.shape[1]))


@dataclass
class WaldSummary:
    """Per-coefficient Wald inference from an unpenalized fit."""

    coef: np.ndarray
    se: np.ndarray
    zvalue: np.ndarray
    pvalue: np.ndarray


def wald_inference(fit, X):
    """Wald estimates/SEs/p-values at the fitted weights of a GlmFit."""
    vcov = inverse_hessian(X, fit.weights, normalizer=1.0)
    se = np.sqrt(np.diag(vcov))
    zval = fit.coef / se
    pval = 2.0 * stats.norm.sf(np.abs(zval))
    return WaldSummary(coef=fit.coef.copy(), se=se, zvalue=zval, pvalue=pval)
