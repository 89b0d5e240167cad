"""Tests for distributional and mobility statistics."""

import math

import numpy as np
import pandas as pd
import pytest

from mobility_lab.estimators import (
    correlation_to_slope,
    couple_pairs,
    igc,
    igr,
    mean_sd,
    mean_sd_cv,
    moving_average_3yr,
    parent_values,
    rank_correlation,
    slope_to_correlation,
    spousal_correlation,
    symmetric_correlation,
)
from mobility_lab.exceptions import (
    DegenerateVarianceError,
    EmptySampleError,
    InsufficientSampleError,
    UndefinedCVError,
    ValidationError,
)
from mobility_lab.model import AgeRule, ParentVariable

HAND_SAMPLE = [(1, 2), (3, 3), (5, 5), (8, 7), (11, 10), (15, 13)]


def _brute_pearson(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys, strict=True))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


def _brute_midranks(values):
    ranks = []
    for v in values:
        below = sum(1 for w in values if w < v)
        ties = sum(1 for w in values if w == v)
        ranks.append(below + (ties + 1) / 2)
    return ranks


def _brute_jackknife(xs, ys, statistic=_brute_pearson):
    n = len(xs)
    loo = [statistic(xs[:i] + xs[i + 1 :], ys[:i] + ys[i + 1 :]) for i in range(n)]
    mean = sum(loo) / n
    return math.sqrt((n - 1) / n * sum((v - mean) ** 2 for v in loo))


def _brute_pooled(xs, ys):
    return _brute_pearson(xs + ys, ys + xs)


def _random_samples(count=50, seed=23):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        n = int(rng.integers(5, 21))
        parent = np.round(rng.normal(10.0, 3.0, n))
        child = np.round(0.5 * parent + rng.normal(5.0, 2.0, n))
        samples.append((parent.tolist(), child.tolist()))
    return samples


RANDOM_SAMPLES = _random_samples()


def test_mean_sd_cv_examples():
    """Test mean, sd and cv on hand-computed samples."""
    assert mean_sd_cv([10, 10, 10]) == (10.0, 0.0, 0.0)
    mean, sd, cv = mean_sd_cv([8, 12])
    assert mean == 10.0
    assert sd == pytest.approx(2.8284271247)
    assert cv == pytest.approx(0.28284271247)


def test_mean_sd_cv_errors():
    """Test zero means and tiny samples raise explicit errors."""
    with pytest.raises(UndefinedCVError):
        mean_sd_cv([-1.0, 1.0])
    with pytest.raises(InsufficientSampleError):
        mean_sd_cv([3.0])
    with pytest.raises(ValidationError):
        mean_sd_cv([1.0, float("nan")])


def test_mean_sd_cv_normal_sample():
    """Test cv of a large normal sample is close to sd / mean."""
    rng = np.random.default_rng(7)
    _, _, cv = mean_sd_cv(rng.normal(10.0, 2.0, 200_000))
    assert cv == pytest.approx(0.2, abs=0.002)


def test_igc_hand_sample_matches_brute_force():
    """Test IGC and its jackknife SE against a brute-force computation."""
    parent = [p for p, _ in HAND_SAMPLE]
    child = [c for _, c in HAND_SAMPLE]
    result = igc(child, parent)
    assert result.value == pytest.approx(_brute_pearson(parent, child), abs=1e-12)
    assert result.se == pytest.approx(_brute_jackknife(parent, child), rel=1e-9)
    assert result.n == 6


def test_igc_identity_and_independence():
    """Test IGC is 1 for identical vectors and near 0 for independent ones."""
    x = np.arange(20, dtype=float)
    assert igc(x, x).value == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    n = 100_000
    value = igc(rng.normal(size=n), rng.normal(size=n)).value
    assert abs(value) < 3 / math.sqrt(n)


def test_igc_degenerate():
    """Test constant vectors raise DegenerateVarianceError."""
    with pytest.raises(DegenerateVarianceError):
        igc([5, 5, 5], [1, 2, 3])
    with pytest.raises(ValidationError):
        igc([1, 2, 3], [1, 2])


def test_igr_identity_with_igc():
    """Test IGR equals IGC times the sd ratio."""
    rng = np.random.default_rng(11)
    parent = rng.normal(10, 3, 500)
    child = 0.5 * parent + rng.normal(0, 2, 500)
    slope = igr(child, parent).value
    corr = igc(child, parent).value
    ratio = child.std(ddof=1) / parent.std(ddof=1)
    assert slope == pytest.approx(corr * ratio, rel=1e-10)
    assert igr(2 * parent, parent).value == pytest.approx(2.0)
    with pytest.raises(DegenerateVarianceError):
        igr([1, 2, 3], [4, 4, 4])


def test_slope_correlation_conversion():
    """Test slopes and correlations convert through the sd ratio."""
    corr = slope_to_correlation(0.6, 2.0, 3.0)
    assert corr == pytest.approx(0.4)
    assert correlation_to_slope(corr, 2.0, 3.0) == pytest.approx(0.6)


def test_rank_correlation_monotone_transform():
    """Test a strictly monotone transform has rank correlation 1."""
    parent = np.array([1.0, 4.0, 2.0, 9.0, 7.0])
    assert rank_correlation(np.exp(parent), parent).value == pytest.approx(1.0)


def test_rank_correlation_ties_match_midrank_oracle():
    """Test heavy ties use midranks exactly."""
    parent = [1, 1, 5, 5, 5, 8, 11, 11, 15, 18]
    child = [3, 5, 5, 5, 8, 8, 11, 15, 15, 15]
    expected = _brute_pearson(_brute_midranks(parent), _brute_midranks(child))
    assert rank_correlation(child, parent).value == pytest.approx(expected, abs=1e-12)


def test_parent_values_max_falls_back():
    """Test MAX picks the more educated parent or the one that is known."""
    frame = pd.DataFrame(
        {
            "father_edu_years": pd.array([5, None, 11], dtype="Int64"),
            "mother_edu_years": pd.array([8, 3, None], dtype="Int64"),
        }
    )
    father = parent_values(frame)
    assert father.isna().tolist() == [False, True, False]
    best = parent_values(frame, ParentVariable.MAX)
    assert best.tolist() == [8, 3, 11]


def _couples_frame():
    return pd.DataFrame(
        {
            "id": [1, 2, 3, 4, 5, 6, 7, 8],
            "spouse_id": pd.array([2, 1, 4, 3, 6, 5, 8, 7], dtype="Int64"),
            "edu_years": [5, 8, 11, 11, 15, 18, 1, 3],
            "cohort": [1940, 1942, 1945, 1941, 1940, 1935, 1950, 1950],
        }
    )


def test_couple_pairs_are_canonical():
    """Test each couple appears once regardless of listing order."""
    frame = _couples_frame()
    lo, hi = couple_pairs(frame)
    assert lo.tolist() == [1, 5, 11, 15]
    assert hi.tolist() == [3, 8, 11, 18]
    shuffled = frame.sample(frac=1.0, random_state=0)
    lo2, hi2 = couple_pairs(shuffled)
    assert lo2.tolist() == lo.tolist()
    assert hi2.tolist() == hi.tolist()


def test_spousal_correlation_symmetric():
    """Test swapping partner roles leaves the value bit-identical."""
    frame = _couples_frame()
    swapped = frame.copy()
    swapped["edu_years"] = [8, 5, 11, 11, 18, 15, 3, 1]
    assert spousal_correlation(frame).value == spousal_correlation(swapped).value


def test_spousal_correlation_age_rule():
    """Test the age rule keeps couples with one partner of the target age."""
    frame = _couples_frame()
    lo, hi = couple_pairs(frame, AgeRule(at_least_one_aged=35, survey_year=1975))
    assert lo.tolist() == [5, 15]
    with pytest.raises(EmptySampleError):
        spousal_correlation(frame, AgeRule(at_least_one_aged=35, survey_year=2000))


def test_symmetric_correlation_identical_couples():
    """Test couples with identical schooling correlate perfectly."""
    assert symmetric_correlation([1, 5, 11], [1, 5, 11]).value == pytest.approx(1.0)
    with pytest.raises(DegenerateVarianceError):
        symmetric_correlation([5, 5], [5, 5])


def test_moving_average_3yr():
    """Test the centered moving average and its boundaries."""
    assert moving_average_3yr({}) == {}
    assert moving_average_3yr({1990: 2.0, 1991: 2.0}) == {1990: 2.0, 1991: 2.0}
    smoothed = moving_average_3yr({1990: 0.3, 1991: 0.6, 1992: 0.3})
    assert smoothed[1991] == pytest.approx(0.4)
    assert smoothed[1990] == pytest.approx(0.45)
    assert smoothed[1992] == pytest.approx(0.45)


def test_mean_sd_defined_at_zero_mean():
    """Test the mean and SD stay available when the CV is undefined."""
    assert mean_sd([-1.0, 1.0]) == (0.0, pytest.approx(math.sqrt(2.0)))


@pytest.mark.parametrize(("parent", "child"), RANDOM_SAMPLES)
def test_correlations_match_brute_force_on_small_samples(parent, child):
    """Test every correlation and its jackknife against direct formulas."""
    result = igc(child, parent)
    assert result.value == pytest.approx(_brute_pearson(parent, child), abs=1e-12)
    assert result.se == pytest.approx(_brute_jackknife(parent, child), rel=1e-9)

    parent_ranks = _brute_midranks(parent)
    child_ranks = _brute_midranks(child)
    rank = rank_correlation(child, parent)
    expected_rank = _brute_pearson(parent_ranks, child_ranks)
    assert rank.value == pytest.approx(expected_rank, abs=1e-12)
    assert rank.se == pytest.approx(
        _brute_jackknife(parent_ranks, child_ranks), rel=1e-9
    )

    pooled = symmetric_correlation(parent, child)
    assert pooled.value == pytest.approx(_brute_pooled(parent, child), abs=1e-12)
    assert pooled.se == pytest.approx(
        _brute_jackknife(parent, child, _brute_pooled), rel=1e-9
    )

    ratio = np.std(child, ddof=1) / np.std(parent, ddof=1)
    assert igr(child, parent).value == pytest.approx(result.value * ratio, abs=1e-12)


@pytest.mark.parametrize(("scale_child", "scale_parent"), [(2.0, 0.5), (0.1, 30.0)])
def test_shift_and_scale_invariance(scale_child, scale_parent):
    """Test correlations ignore affine changes and IGR rescales by their ratio."""
    rng = np.random.default_rng(31)
    parent = rng.normal(10.0, 3.0, 200)
    child = 0.5 * parent + rng.normal(0.0, 2.0, 200)
    moved_child = scale_child * child + 7.0
    moved_parent = scale_parent * parent - 4.0

    assert igc(moved_child, moved_parent).value == pytest.approx(
        igc(child, parent).value, abs=1e-12
    )
    assert rank_correlation(moved_child, moved_parent).value == pytest.approx(
        rank_correlation(child, parent).value, abs=1e-12
    )
    assert igr(moved_child, moved_parent).value == pytest.approx(
        igr(child, parent).value * scale_child / scale_parent, rel=1e-10
    )


def test_igc_jackknife_se_tracks_monte_carlo_sd():
    """Test the jackknife SE is within 20% of the replication SD."""
    rng = np.random.default_rng(17)
    cov = [[1.0, 0.5], [0.5, 1.0]]
    values = []
    ses = []
    for _ in range(500):
        sample = rng.multivariate_normal([0.0, 0.0], cov, size=500)
        result = igc(sample[:, 1], sample[:, 0])
        values.append(result.value)
        ses.append(result.se)
    assert np.mean(ses) == pytest.approx(np.std(values, ddof=1), rel=0.2)
