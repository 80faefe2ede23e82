"""End-to-end analysis of one dataset.

Chain: repeated-split estimation -> full-data residual fit -> (optional)
r tuning -> calibrated multiplier bootstrap. The report carries per-subgroup
naive rows (estimate, bootstrap SE, Wald interval, Bonferroni p, E-values)
next to the calibrated max-effect summary and the simultaneous bands, which
is what the CLI renders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._streams import derive_seed
from .calibrate import BootstrapConfig, max_effect_inference
from .errors import DataError
from .evalue import e_value, e_value_for_interval
from .lasso import full_data_residuals
from .rsplit import run_rsplit
from .tuning import default_candidates, select_r

__all__ = ["AnalysisConfig", "SubgroupRow", "AnalysisReport", "analyze",
           "MaxEffectInference"]


@dataclass
class AnalysisConfig:
    b1: int = 100
    b2: int = 500
    split_ratio: float = 0.6
    min_size: int = 3
    max_size: int = 10
    cv_folds: int = 3
    n_lambdas: int = 100
    r: object = "auto"          # float, or "auto" to tune
    alpha: float = 0.05
    multiplier: str = "normal"
    ci: str = "basic"
    hessian_normalizer: str = "n2"
    seed: int = 0
    n_jobs: object = None
    tune_v: int = 3
    tune_b1: int = 100
    tune_b2: int = 300
    tune_candidates: object = None


@dataclass
class SubgroupRow:
    index: int                  # 1-based, matching subgroup labels
    label: str
    estimate: float
    sigma: float
    lower: float
    upper: float
    p_value: float
    p_bonferroni: float
    sim_lower: float
    sim_upper: float
    e_value: float
    e_value_bound: float


@dataclass
class AnalysisReport:
    rows: list
    s_hat: int
    s_hat_label: str
    beta_max: float
    r: float
    r_tuned: bool
    calibrated: object
    uncalibrated: object
    simultaneous: object
    e_value: float
    e_value_bound: float
    n: int
    p1: int
    p2: int
    n_discarded: int
    config: AnalysisConfig = field(repr=False, default=None)

    def to_payload(self):
        def summary(s):
            return {
                "method": s.method, "estimate": s.estimate,
                "bias_reduced": s.bias_reduced, "lower": s.lower,
                "upper": s.upper, "one_sided_lower": s.one_sided_lower,
                "p_value": s.p_value, "p_value_one_sided": s.p_value_one_sided,
                "alpha": s.alpha,
            }
        return {
            "n": self.n, "p1": self.p1, "p2": self.p2,
            "n_discarded_splits": self.n_discarded,
            "r": self.r, "r_tuned": self.r_tuned,
            "selected_subgroup": self.s_hat,
            "selected_subgroup_label": self.s_hat_label,
            "beta_max": self.beta_max,
            "e_value": self.e_value,
            "e_value_bound": self.e_value_bound,
            "calibrated": summary(self.calibrated),
            "no_adjustment": summary(self.uncalibrated),
            "simultaneous": {
                "q_star": self.simultaneous.q_star,
                "max_lower": self.simultaneous.max_lower,
                "max_upper": self.simultaneous.max_upper,
                "p_value_selected": self.simultaneous.p_value_selected,
                "alpha": self.simultaneous.alpha,
            },
            "subgroups": [vars(r).copy() for r in self.rows],
        }

    def to_csv_rows(self):
        return [vars(r).copy() for r in self.rows]

    csv_fields = ("index", "label", "estimate", "sigma", "lower", "upper",
                  "p_value", "p_bonferroni", "sim_lower", "sim_upper",
                  "e_value", "e_value_bound")


def analyze(design, config=None):
    """Run the full calibrated-inference pipeline on an encoded design."""
    config = config or AnalysisConfig()
    seed = config.seed

    est = run_rsplit(design, n_splits=config.b1, split_ratio=config.split_ratio,
                     min_size=config.min_size, max_size=config.max_size,
                     cv_folds=config.cv_folds, n_lambdas=config.n_lambdas,
                     hessian_normalizer=config.hessian_normalizer,
                     seed=derive_seed(seed, "splits"), n_jobs=config.n_jobs)
    res = full_data_residuals(None, design, folds=config.cv_folds,
                              seed=derive_seed(seed, "residuals"),
                              n_lambdas=config.n_lambdas)

    r_tuned = False
    if config.r == "auto":
        tuned = select_r(design,
                         candidates=(default_candidates()
                                     if config.tune_candidates is None
                                     else config.tune_candidates),
                         v=config.tune_v, b1=config.tune_b1, b2=config.tune_b2,
                         split_ratio=config.split_ratio,
                         min_size=config.min_size, max_size=config.max_size,
                         cv_folds=config.cv_folds, n_lambdas=config.n_lambdas,
                         hessian_normalizer=config.hessian_normalizer,
                         multiplier=config.multiplier,
                         seed=derive_seed(seed, "tuning"), n_jobs=config.n_jobs)
        r_use = tuned.r
        r_tuned = True
    else:
        r_use = float(config.r)
        if not 0.0 < r_use < 0.5:
            raise DataError(f"r={r_use} outside (0, 0.5)")

    cfg = BootstrapConfig(n_draws=config.b2, r=r_use, alpha=config.alpha,
                          multiplier=config.multiplier, ci=config.ci,
                          seed=derive_seed(seed, "boot"))
    inf = max_effect_inference(est, design, res.residuals, cfg)

    zq = stats.norm.ppf(1.0 - config.alpha / 2.0)
    rows = []
    for j in range(design.p1):
        b, s = float(inf.beta[j]), float(inf.sigma[j])
        lo, hi = b - zq * s, b + zq * s
        p = float(2.0 * stats.norm.sf(abs(b / s))) if s > 0 else float(b != 0.0)
        rows.append(SubgroupRow(
            index=j + 1,
            label=design.z_labels[j],
            estimate=b,
            sigma=s,
            lower=lo,
            upper=hi,
            p_value=p,
            p_bonferroni=min(1.0, p * design.p1),
            sim_lower=float(inf.simultaneous.lower[j]),
            sim_upper=float(inf.simultaneous.upper[j]),
            e_value=e_value(b),
            e_value_bound=e_value_for_interval(lo, hi),
        ))

    cal = inf.calibrated
    return AnalysisReport(
        rows=rows,
        s_hat=inf.s_hat,
        s_hat_label=design.z_labels[inf.s_hat - 1],
        beta_max=inf.beta_max,
        r=r_use,
        r_tuned=r_tuned,
        calibrated=cal,
        uncalibrated=inf.uncalibrated,
        simultaneous=inf.simultaneous,
        e_value=e_value(cal.bias_reduced),
        e_value_bound=e_value_for_interval(cal.lower, cal.upper),
        n=design.n,
        p1=design.p1,
        p2=design.p2,
        n_discarded=est.n_discarded,
        config=config,
    )


class MaxEffectInference(BaseEstimator):
    """sklearn-style front end to the full pipeline.

    Constructor parameters mirror AnalysisConfig; fit(design) runs analyze
    and exposes report_, beta_, sigma_, s_hat_, r_.
    """

    def __init__(self, b1=100, b2=500, split_ratio=0.6, min_size=3,
                 max_size=10, cv_folds=3, n_lambdas=100, r="auto", alpha=0.05,
                 multiplier="normal", ci="basic", hessian_normalizer="n2",
                 random_state=0, n_jobs=None, tune_v=3, tune_b1=100,
                 tune_b2=300, tune_candidates=None):
        self.b1 = b1
        self.b2 = b2
        self.split_ratio = split_ratio
        self.min_size = min_size
        self.max_size = max_size
        self.cv_folds = cv_folds
        self.n_lambdas = n_lambdas
        self.r = r
        self.alpha = alpha
        self.multiplier = multiplier
        self.ci = ci
        self.hessian_normalizer = hessian_normalizer
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.tune_v = tune_v
        self.tune_b1 = tune_b1
        self.tune_b2 = tune_b2
        self.tune_candidates = tune_candidates

    def fit(self, design, y=None):
        config = AnalysisConfig(
            b1=self.b1, b2=self.b2, split_ratio=self.split_ratio,
            min_size=self.min_size, max_size=self.max_size,
            cv_folds=self.cv_folds, n_lambdas=self.n_lambdas, r=self.r,
            alpha=self.alpha, multiplier=self.multiplier, ci=self.ci,
            hessian_normalizer=self.hessian_normalizer,
            seed=self.random_state, n_jobs=self.n_jobs, tune_v=self.tune_v,
            tune_b1=self.tune_b1, tune_b2=self.tune_b2,
            tune_candidates=self.tune_candidates,
        )
        report = analyze(design, config)
        self.report_ = report
        self.beta_ = [row.estimate for row in report.rows]
        self.sigma_ = [row.sigma for row in report.rows]
        self.s_hat_ = report.s_hat
        self.r_ = report.r
        return self

    @property
    def summary_(self):
        if not hasattr(self, "report_"):
            raise NotFittedError("call fit first")
        return self.report_.to_payload()
