"""Debiased bootstrap inference for the maximum subgroup treatment effect.

Library layout:

- design / data_io: the encoded regression layout and the CSV codecs
- glm: logistic likelihood primitives and the unpenalized Newton refit
- lasso: penalized path solver, windowed CV model selection, residual fit
- rsplit: repeated-split averaged estimator of the subgroup effects
- calibrate: calibrated wild bootstrap for the maximum effect
- tuning: cross-validated choice of the calibration rate
- evalue: unmeasured-confounding sensitivity values
- simulate: synthetic designs and Monte Carlo harnesses
- pipeline / cli: end-to-end analysis and the command-line front end
"""

__version__ = "0.1.0"

from .calibrate import (
    BootstrapConfig,
    MaxInferenceResult,
    bootstrap_draws,
    calibrated_statistics,
    calibration_terms,
    max_effect_inference,
    selected_subgroup,
    simultaneous_comparator,
)
from .design import EncodedDesign
from .evalue import e_value, e_value_for_interval
from .pipeline import AnalysisConfig, MaxEffectInference, analyze
from .rsplit import RSplitEstimator, RSplitResult, run_rsplit
from .tuning import select_r

__all__ = [
    "__version__",
    "EncodedDesign",
    "BootstrapConfig",
    "MaxInferenceResult",
    "bootstrap_draws",
    "calibration_terms",
    "calibrated_statistics",
    "max_effect_inference",
    "selected_subgroup",
    "simultaneous_comparator",
    "e_value",
    "e_value_for_interval",
    "AnalysisConfig",
    "MaxEffectInference",
    "analyze",
    "RSplitEstimator",
    "RSplitResult",
    "run_rsplit",
    "select_r",
]
