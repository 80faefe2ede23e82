from types import SimpleNamespace

import numpy as np
import pytest

from subgroup_debias import calibrate
from subgroup_debias.calibrate import (
    BootstrapConfig,
    bootstrap_draws,
    calibrated_statistics,
    calibration_terms,
    draw_standard_errors,
    interval_and_pvalue,
    max_effect_inference,
    order_statistic,
    selected_subgroup,
    simultaneous_comparator,
)
from subgroup_debias.design import EncodedDesign
from subgroup_debias.errors import DataError


def tiny_problem(seed=0, n=40, p1=2, p2=3, beta=None):
    """Handmade design + estimate pair for exercising the draw machinery."""
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, size=(n, p1)).astype(float)
    x = np.column_stack([np.ones(n), rng.normal(size=(n, p2 - 1))])
    y = rng.integers(0, 2, size=n).astype(float)
    design = EncodedDesign(y=y, z=z, x=x)
    beta = rng.normal(size=p1) if beta is None else np.asarray(beta, dtype=float)
    gamma_n = rng.normal(size=(p1, p1 + p2))
    estimate = SimpleNamespace(beta=beta, gamma_n=gamma_n)
    residuals = rng.uniform(-0.8, 0.8, size=n)
    return design, estimate, residuals


def test_calibration_terms_tied_max_vanish():
    assert np.array_equal(calibration_terms([0.3, 0.3], n=500, r=0.15), [0.0, 0.0])


def test_calibration_terms_direct_value():
    # 10000^(0.25 - 0.5) = 0.1, so the gap coordinate gets 0.9 of its distance
    c = calibration_terms([0.0, 1.0], n=10_000, r=0.25)
    assert abs(c[0] - 0.9) <= 1e-12
    assert c[1] == 0.0


def test_calibration_terms_fade_as_r_approaches_half():
    beta = np.array([0.0, 1.0, -2.0])
    c = calibration_terms(beta, n=100, r=0.499)
    gaps = beta.max() - beta
    assert np.all(c <= 0.005 * gaps + 1e-15)


def test_calibration_terms_sign_and_argmax():
    rng = np.random.default_rng(3)
    beta = rng.normal(size=6)
    c = calibration_terms(beta, n=200, r=0.2)
    assert np.all(c >= 0.0)
    assert c[np.argmax(beta)] == 0.0


@pytest.mark.parametrize("r", [0.0, 0.5, -0.1, 0.6])
def test_calibration_terms_r_out_of_range(r):
    with pytest.raises(DataError):
        calibration_terms([0.0, 1.0], n=100, r=r)


def test_calibration_terms_need_two_rows():
    with pytest.raises(DataError):
        calibration_terms([0.0, 1.0], n=1, r=0.2)


def test_calibrated_statistics_hand_example():
    # with beta=(0,1) and c=(0.9,0) the per-draw max arguments are
    # (b1+0.9, b2); these three draws make them (0.2,1.1), (1.3,0.9),
    # (-0.5,1.0), giving T* = max - 1 = {0.1, 0.3, 0.0}
    draws = np.array([[-0.7, 1.1], [0.4, 0.9], [-1.4, 1.0]])
    tstar = calibrated_statistics(draws, beta=[0.0, 1.0], terms=[0.9, 0.0])
    assert tstar == pytest.approx([0.1, 0.3, 0.0], abs=1e-12)


def test_calibrated_statistics_single_coordinate():
    draws = np.array([[0.4], [-0.2], [1.7]])
    t_cal = calibrated_statistics(draws, beta=[0.25], terms=[0.0])
    t_unc = calibrated_statistics(draws, beta=[0.25], terms=None)
    assert np.array_equal(t_cal, t_unc)
    assert np.array_equal(t_cal, draws[:, 0] - 0.25)


def test_calibrated_statistics_degenerate_draws():
    beta = np.array([0.1, 0.7, -0.3])
    draws = np.tile(beta, (8, 1))
    assert np.array_equal(calibrated_statistics(draws, beta, None), np.zeros(8))


def test_order_statistic_convention():
    vals = np.array([3.0, 1.0, 2.0])
    assert order_statistic(vals, 1.0 / 3.0) == 1.0   # ceil(1) = 1st
    assert order_statistic(vals, 0.34) == 2.0        # ceil(1.02) = 2nd
    assert order_statistic(vals, 1.0) == 3.0
    assert order_statistic(vals, 1e-9) == 1.0
    with pytest.raises(DataError):
        order_statistic(np.array([]), 0.5)


def test_hand_quantile_interval():
    # 101 evenly spaced T* values on [-0.1, 0.1]: the 0.025 and 0.975 order
    # statistics land on the 3rd and 99th points, i.e. -/+ 0.096
    tstar = np.linspace(-0.1, 0.1, 101)
    s = interval_and_pvalue(tstar, beta_max=0.5, alpha=0.05)
    assert s.lower == pytest.approx(0.5 - 0.096, abs=1e-12)
    assert s.upper == pytest.approx(0.5 + 0.096, abs=1e-12)
    # one-sided: ceil(0.95 * 101) = 96th point = 0.09
    assert s.one_sided_lower == pytest.approx(0.5 - 0.09, abs=1e-12)


def test_symmetric_interval_variant():
    tstar = np.linspace(-0.1, 0.1, 101)
    s = interval_and_pvalue(tstar, beta_max=0.5, alpha=0.05, ci="symmetric")
    assert s.lower == pytest.approx(0.5 - 0.096, abs=1e-12)
    assert s.upper == pytest.approx(0.5 + 0.096, abs=1e-12)
    # an asymmetric T* cloud keeps the symmetric variant mirrored
    skewed = np.concatenate([tstar, [0.3, 0.4]])
    t = interval_and_pvalue(skewed, beta_max=0.5, alpha=0.05, ci="symmetric")
    assert (t.upper - 0.5) == pytest.approx(0.5 - t.lower, abs=1e-15)


def test_degenerate_tstar_collapses_interval():
    s = interval_and_pvalue(np.zeros(200), beta_max=0.8)
    assert s.lower == s.upper == s.bias_reduced == 0.8


def test_bias_reduced_is_exact_mean_shift():
    tstar = np.full(50, 0.07)
    s = interval_and_pvalue(tstar, beta_max=0.5)
    assert s.bias_reduced == 0.5 - tstar.mean()
    assert s.bias_reduced == pytest.approx(0.43, abs=1e-12)


def test_one_sided_lower_monotone_in_alpha():
    rng = np.random.default_rng(9)
    tstar = rng.normal(size=400)
    lowers = [interval_and_pvalue(tstar, 0.3, alpha=a).one_sided_lower
              for a in (0.2, 0.1, 0.05, 0.01)]
    assert all(b <= a + 1e-15 for a, b in zip(lowers, lowers[1:]))


def test_pvalue_add_one_tail_count():
    tstar = np.array([-0.2, -0.1, 0.0, 0.1, 0.2])
    s = interval_and_pvalue(tstar, beta_max=0.05)
    # 2 draws sit at or above 0.05 -> one-sided p = 3/6
    assert s.p_value_one_sided == pytest.approx(3.0 / 6.0)
    assert 0.0 < s.p_value <= 1.0


def test_selected_subgroup_examples():
    assert selected_subgroup([0.1, 0.4, 0.4]) == 2
    assert selected_subgroup([0.41, 0.10, -0.00, -0.07, 0.02, -0.03]) == 1
    beta = np.array([0.3, -0.1, 0.9, 0.2])
    perm = np.array([2, 0, 3, 1])
    assert selected_subgroup(beta[perm]) == int(np.argmax(beta[perm])) + 1
    assert beta[perm][selected_subgroup(beta[perm]) - 1] == beta.max()


def test_location_equivariance():
    rng = np.random.default_rng(21)
    beta = rng.normal(size=3)
    draws = beta + 0.1 * rng.normal(size=(300, 3))
    delta = 0.37
    c = calibration_terms(beta, n=900, r=0.15)
    c_shift = calibration_terms(beta + delta, n=900, r=0.15)
    assert np.allclose(c, c_shift, atol=1e-12)
    t = calibrated_statistics(draws, beta, c)
    t_shift = calibrated_statistics(draws + delta, beta + delta, c_shift)
    assert np.allclose(t, t_shift, atol=1e-12)

    a = interval_and_pvalue(t, float(beta.max()))
    b = interval_and_pvalue(t_shift, float(beta.max()) + delta)
    assert b.lower == pytest.approx(a.lower + delta, abs=1e-12)
    assert b.upper == pytest.approx(a.upper + delta, abs=1e-12)
    assert b.bias_reduced == pytest.approx(a.bias_reduced + delta, abs=1e-12)
    assert selected_subgroup(beta + delta) == selected_subgroup(beta)
    # the p-value tests a fixed null at 0, so it shifts with the data; it is
    # invariant when the null point shifts along: count against beta_max - delta
    n_hi = np.count_nonzero(t_shift >= (beta.max() + delta) - delta)
    assert (1.0 + n_hi) / (len(t_shift) + 1.0) == pytest.approx(a.p_value_one_sided, abs=1e-12)


def test_zero_residuals_make_degenerate_draws():
    design, estimate, _ = tiny_problem(seed=4)
    config = BootstrapConfig(n_draws=150, seed=11)
    draws = bootstrap_draws(estimate, design, np.zeros(design.n), config)
    assert np.array_equal(draws, np.tile(estimate.beta, (150, 1)))
    res = max_effect_inference(estimate, design, np.zeros(design.n), config)
    assert res.calibrated.lower == res.calibrated.upper == res.beta_max
    assert res.simultaneous.q_star == 0.0


def test_rademacher_single_row_two_point_support():
    design, estimate, residuals = tiny_problem(seed=5, n=1)
    config = BootstrapConfig(n_draws=128, multiplier="rademacher", seed=2)
    draws = bootstrap_draws(estimate, design, residuals, config)
    s = design.stacked()[0]
    step = estimate.gamma_n @ (s * residuals[0])
    plus, minus = estimate.beta + step, estimate.beta - step
    for row in draws:
        assert np.allclose(row, plus, atol=1e-12) or np.allclose(row, minus, atol=1e-12)
    signs = {tuple(np.sign(row - estimate.beta)) for row in draws}
    assert len(signs) == 2


def test_draw_covariance_matches_analytic():
    design, estimate, residuals = tiny_problem(seed=6, n=30, p1=2, p2=3)
    config = BootstrapConfig(n_draws=20_000, seed=7)
    draws = bootstrap_draws(estimate, design, residuals, config)
    s = design.stacked()
    n = design.n
    target = np.zeros((2, 2))
    for i in range(n):
        v = estimate.gamma_n @ (s[i] * residuals[i])
        target += np.outer(v, v)
    target /= n * n
    emp = np.cov(draws, rowvar=False)
    rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
    assert rel <= 0.15


def test_draws_deterministic_and_seed_sensitive():
    design, estimate, residuals = tiny_problem(seed=8)
    cfg = BootstrapConfig(n_draws=120, seed=123)
    a = bootstrap_draws(estimate, design, residuals, cfg)
    b = bootstrap_draws(estimate, design, residuals, BootstrapConfig(n_draws=120, seed=123))
    assert np.array_equal(a, b)
    c = bootstrap_draws(estimate, design, residuals, BootstrapConfig(n_draws=120, seed=124))
    assert not np.array_equal(a, c)
    # draw b depends only on its own stream: a longer run extends, not reshuffles
    d = bootstrap_draws(estimate, design, residuals, BootstrapConfig(n_draws=160, seed=123))
    assert np.array_equal(d[:120], a)


def test_residual_length_checked():
    design, estimate, residuals = tiny_problem(seed=9)
    with pytest.raises(DataError):
        bootstrap_draws(estimate, design, residuals[:-1], BootstrapConfig(n_draws=110))


def test_sigma_doubles_with_residuals():
    design, estimate, residuals = tiny_problem(seed=10)
    cfg = BootstrapConfig(n_draws=200, seed=3)
    s1 = draw_standard_errors(bootstrap_draws(estimate, design, residuals, cfg))
    s2 = draw_standard_errors(bootstrap_draws(estimate, design, 2.0 * residuals, cfg))
    assert np.allclose(s2, 2.0 * s1, atol=1e-10)


def test_simultaneous_single_coordinate_is_symmetric_band():
    rng = np.random.default_rng(31)
    beta = np.array([0.4])
    draws = beta + 0.2 * rng.normal(size=(500, 1))
    bands = simultaneous_comparator(draws, beta, alpha=0.1)
    q = order_statistic(np.abs(draws[:, 0] - 0.4), 0.9)
    assert bands.q_star == q
    assert bands.lower[0] == pytest.approx(0.4 - q)
    assert bands.upper[0] == pytest.approx(0.4 + q)
    assert bands.max_lower == pytest.approx(0.4 - q)


def test_simultaneous_bands_cover_every_coordinate_of_draws_quantile():
    rng = np.random.default_rng(32)
    beta = np.array([0.1, -0.2, 0.5])
    draws = beta + 0.1 * rng.normal(size=(400, 3))
    bands = simultaneous_comparator(draws, beta, alpha=0.05)
    inside = np.all((draws >= bands.lower) & (draws <= bands.upper), axis=1)
    # by construction at least ceil(0.95 B) draws lie fully inside the bands
    assert np.count_nonzero(inside) >= int(np.ceil(0.95 * 400))
    assert bands.max_upper - bands.max_lower == pytest.approx(2.0 * bands.q_star)


def test_calibration_null_identity_through_pipeline():
    # equal beta coordinates zero the calibration, so both summaries coincide
    design, estimate, residuals = tiny_problem(seed=12, beta=[0.2, 0.2])
    res = max_effect_inference(estimate, design, residuals,
                               BootstrapConfig(n_draws=300, seed=5))
    assert np.array_equal(res.terms, np.zeros(2))
    assert res.calibrated.lower == res.uncalibrated.lower
    assert res.calibrated.upper == res.uncalibrated.upper
    assert res.calibrated.p_value == res.uncalibrated.p_value


def test_max_effect_inference_fields_consistent():
    design, estimate, residuals = tiny_problem(seed=13, beta=[0.1, 0.6])
    cfg = BootstrapConfig(n_draws=250, seed=9)
    res = max_effect_inference(estimate, design, residuals, cfg, keep_draws=True)
    assert res.beta_max == 0.6
    assert res.s_hat == 2
    assert res.draws.shape == (250, 2)
    assert res.calibrated.method == "boot-calibrated"
    assert res.uncalibrated.method == "no-adjustment"
    redo = calibrated_statistics(res.draws, res.beta, res.terms)
    again = interval_and_pvalue(redo, res.beta_max, cfg.alpha)
    assert again.lower == res.calibrated.lower
    assert again.upper == res.calibrated.upper
    assert np.array_equal(res.sigma, res.draws.std(axis=0, ddof=1))


def test_bootstrap_config_validation():
    with pytest.raises(DataError):
        BootstrapConfig(r=0.5)
    with pytest.raises(DataError):
        BootstrapConfig(multiplier="uniform")
    with pytest.raises(DataError):
        BootstrapConfig(ci="percentile")
    with pytest.raises(DataError):
        BootstrapConfig(n_draws=0)
