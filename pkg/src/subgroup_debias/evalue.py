"""E-values for unmeasured-confounding sensitivity of odds-ratio findings.

With a rare outcome the odds ratio approximates the risk ratio, and the
E-value of a risk ratio RR >= 1 is RR + sqrt(RR (RR - 1)): the minimum
strength of association an unmeasured confounder needs with both treatment
and outcome to fully explain the estimate away. Protective estimates are
inverted first, so the input here is a log odds ratio of either sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["e_value", "e_value_for_interval", "EvalueReport", "evalue_report"]


def e_value(log_or):
    """E-value of a log odds ratio (point estimate)."""
    rr = math.exp(abs(float(log_or)))
    return rr + math.sqrt(rr * (rr - 1.0))


def e_value_for_interval(lower, upper):
    """E-value of the confidence limit closer to the null.

    An interval containing 0 (on the log scale) can be explained by no
    confounding at all, so its E-value is 1. One-sided intervals pass
    +/- inf for the open side.
    """
    lower, upper = float(lower), float(upper)
    if lower > upper:
        raise ValueError(f"lower {lower} > upper {upper}")
    if lower <= 0.0 <= upper:
        return 1.0
    near = lower if lower > 0.0 else upper
    return e_value(near)


@dataclass
class EvalueReport:
    log_or: float
    lower: float
    upper: float
    e_estimate: float
    e_bound: float


def evalue_report(log_or, lower=-math.inf, upper=math.inf):
    return EvalueReport(
        log_or=float(log_or),
        lower=float(lower),
        upper=float(upper),
        e_estimate=e_value(log_or),
        e_bound=e_value_for_interval(lower, upper),
    )
