"""Encoded regression design for subgroup-effect inference.

The model is logistic: logit P(y=1) = z'beta + x'gamma. The z block holds the
p1 treatment-by-subgroup columns whose coefficients are the inferential target;
the x block holds everything else (intercept, subgroup main effects, covariates).
A subset of x columns is "forced": always kept unpenalized and always included
in refits (intercept and subgroup indicators). The remaining "free" columns are
the high-dimensional covariates eligible for selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .validation import check_binary_vector, check_consistent_rows, check_matrix

__all__ = ["EncodedDesign"]


@dataclass
class EncodedDesign:
    """Container for (y, z, x) with column roles and labels.

    Parameters
    ----------
    y : ndarray, shape (n,)
        Binary outcome.
    z : ndarray, shape (n, p1)
        Treatment-by-subgroup columns (inferential block).
    x : ndarray, shape (n, p2)
        Nuisance block: intercept, subgroup main effects, covariates.
    z_labels, x_labels : list of str
        Column names for reporting.
    forced : tuple of int
        Indices into x always included in refits and never penalized.
    """

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    z_labels: list = field(default_factory=list)
    x_labels: list = field(default_factory=list)
    forced: tuple = (0,)

    def __post_init__(self):
        self.y = check_binary_vector(self.y, "y")
        self.z = check_matrix(self.z, "z")
        self.x = check_matrix(self.x, "x")
        check_consistent_rows((self.y, "y"), (self.z, "z"), (self.x, "x"))
        if not self.z_labels:
            self.z_labels = [f"z{j + 1}" for j in range(self.p1)]
        if not self.x_labels:
            self.x_labels = ["intercept"] + [f"x{j}" for j in range(1, self.p2)]
        if len(self.z_labels) != self.p1 or len(self.x_labels) != self.p2:
            raise DataError("label lengths do not match column counts")
        self.forced = tuple(sorted(int(j) for j in self.forced))
        if any(j < 0 or j >= self.p2 for j in self.forced):
            raise DataError("forced indices outside x columns")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p1(self):
        return self.z.shape[1]

    @property
    def p2(self):
        return self.x.shape[1]

    @property
    def free(self):
        """x column indices eligible for selection."""
        forced = set(self.forced)
        return tuple(j for j in range(self.p2) if j not in forced)

    def stacked(self):
        """The full (n, p1 + p2) matrix [z | x] in Gamma column order."""
        return np.hstack([self.z, self.x])

    def labels(self):
        return list(self.z_labels) + list(self.x_labels)

    def subset_rows(self, idx):
        """A new design restricted to the given row indices."""
        idx = np.asarray(idx)
        return EncodedDesign(
            y=self.y[idx],
            z=self.z[idx],
            x=self.x[idx],
            z_labels=list(self.z_labels),
            x_labels=list(self.x_labels),
            forced=self.forced,
        )

    def refit_matrix(self, selected):
        """Design [z | x_forced | x_selected] for an unpenalized refit.

        Returns the matrix and the positions of its columns inside the stacked
        (z, x) order: z column j maps to j, x column j maps to p1 + j.
        """
        selected = [int(j) for j in selected]
        overlap = set(selected) & set(self.forced)
        if overlap:
            raise DataError(f"selected columns overlap forced columns: {sorted(overlap)}")
        xcols = list(self.forced) + selected
        mat = np.hstack([self.z, self.x[:, xcols]])
        positions = list(range(self.p1)) + [self.p1 + j for j in xcols]
        return mat, np.asarray(positions, dtype=np.intp)
