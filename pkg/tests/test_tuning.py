import numpy as np
import pytest
from scipy.special import expit

from subgroup_debias.design import EncodedDesign
from subgroup_debias.errors import DataError, FoldFailure
from subgroup_debias.tuning import TuningResult, default_candidates, select_r


def tune_design(n, k, seed):
    """One treated subgroup column plus k gaussian covariates."""
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, size=n)
    g = rng.standard_normal((n, k))
    eta = 0.8 * t + 0.7 * g[:, 0]
    y = rng.binomial(1, expit(eta))
    return EncodedDesign(
        y=y, z=t[:, None].astype(float),
        x=np.column_stack([np.ones(n), g]),
        z_labels=["z:t"],
        x_labels=["intercept"] + [f"w{j + 1}" for j in range(k)],
    )


def test_default_candidate_grid():
    grid = default_candidates()
    assert np.allclose(grid, [1.0 / (3 * k) for k in range(1, 11)])
    assert np.all(np.diff(grid) < 0)
    assert np.all((grid > 0) & (grid < 0.5))


def test_single_candidate_skips_fold_work():
    # n=12 cannot satisfy any split precondition; success proves no fold ran
    design = tune_design(12, 2, seed=0)
    res = select_r(design, candidates=[0.2], seed=5)
    assert isinstance(res, TuningResult)
    assert res.r == 0.2
    assert res.fold_sizes == ()
    assert res.top_coordinates == ()
    assert res.criterion.shape == (1,)


def test_single_candidate_still_validated():
    design = tune_design(12, 2, seed=0)
    with pytest.raises(DataError):
        select_r(design, candidates=[0.7])
    with pytest.raises(DataError):
        select_r(design, candidates=[0.0])
    with pytest.raises(DataError):
        select_r(design, candidates=[0.2], v=1)


def test_candidate_grid_validation():
    design = tune_design(12, 2, seed=0)
    with pytest.raises(DataError):
        select_r(design, candidates=[])
    with pytest.raises(DataError):
        select_r(design, candidates=[[0.2, 0.1]])
    with pytest.raises(DataError):
        select_r(design, candidates=[0.3, 0.5])


def test_selected_r_fields_and_determinism():
    design = tune_design(360, 5, seed=2)
    kwargs = dict(candidates=[0.3, 0.2, 0.1], b1=4, b2=100,
                  min_size=1, max_size=3, seed=7)
    res = select_r(design, **kwargs)
    assert res.r in (0.3, 0.2, 0.1)
    assert res.criterion.shape == (3,)
    assert np.all(np.isfinite(res.criterion))
    assert len(res.fold_sizes) == 3
    assert sum(res.fold_sizes) == design.n
    # p1 = 1 caps the reference coordinate set
    assert res.top_coordinates == (0,)

    again = select_r(design, **kwargs)
    assert again.r == res.r
    assert np.array_equal(again.criterion, res.criterion)


def test_duplicated_candidates_tie_is_exact():
    design = tune_design(360, 5, seed=2)
    res = select_r(design, candidates=[0.25, 0.25], b1=4, b2=100,
                   min_size=1, max_size=3, k=1, seed=7)
    assert res.r == 0.25
    # identical r values share the recentering, so the tie is bit-exact
    assert res.criterion[0] == res.criterion[1]


def test_fold_too_small_raises_fold_failure():
    design = tune_design(60, 5, seed=4)
    with pytest.raises(FoldFailure):
        select_r(design, candidates=[0.2, 0.1], b1=4, b2=100,
                 min_size=1, max_size=3, seed=1)
