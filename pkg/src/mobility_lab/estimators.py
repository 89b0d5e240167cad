"""Distributional and mobility statistics.

Linear statistics carry analytic standard errors; correlations carry
delete-one jackknife standard errors computed in closed form from centered
sums, so every estimator stays O(n).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.stats import rankdata

from .exceptions import (
    DegenerateVarianceError,
    EmptySampleError,
    InsufficientSampleError,
    UndefinedCVError,
    ValidationError,
)
from .model import AgeRule, ParentVariable, StatResult

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]


class MeanSdCv(NamedTuple):
    """Mean, sample standard deviation and coefficient of variation."""

    mean: float
    sd: float
    cv: float


def _as_vector(values: npt.ArrayLike, name: str) -> FloatArray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite values")
    return array


def _paired(
    child: npt.ArrayLike, parent: npt.ArrayLike, min_n: int = 3
) -> tuple[FloatArray, FloatArray]:
    y = _as_vector(child, "child")
    x = _as_vector(parent, "parent")
    if y.shape != x.shape:
        raise ValidationError(f"Length mismatch: child {y.size}, parent {x.size}")
    if y.size < min_n:
        raise InsufficientSampleError(f"Need at least {min_n} pairs, got {y.size}")
    return y, x


def mean_sd(x: npt.ArrayLike) -> tuple[float, float]:
    """Mean and n-1 standard deviation.

    Raises:
        InsufficientSampleError: With fewer than two observations.
    """
    values = _as_vector(x, "x")
    if values.size < 2:
        raise InsufficientSampleError(f"Need at least 2 values, got {values.size}")
    return float(values.mean()), float(values.std(ddof=1))


def mean_sd_cv(x: npt.ArrayLike) -> MeanSdCv:
    """Mean, n-1 standard deviation and their ratio.

    Raises:
        InsufficientSampleError: With fewer than two observations.
        UndefinedCVError: If the mean is exactly zero.
    """
    mean, sd = mean_sd(x)
    if mean == 0.0:
        raise UndefinedCVError("Coefficient of variation undefined for zero mean")
    return MeanSdCv(mean, sd, sd / mean)


def _jackknife_se(loo: FloatArray) -> float:
    finite = loo[np.isfinite(loo)]
    n = finite.size
    if n < 2:
        return math.nan
    return float(math.sqrt((n - 1) / n * np.sum((finite - finite.mean()) ** 2)))


def _pearson_with_jackknife(y: FloatArray, x: FloatArray) -> StatResult:
    n = y.size
    yc = y - y.mean()
    xc = x - x.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= 0.0:
        raise DegenerateVarianceError("Parent variable has zero variance")
    if syy <= 0.0:
        raise DegenerateVarianceError("Child variable has zero variance")
    sxy = float(xc @ yc)
    r = sxy / math.sqrt(sxx * syy)

    # Leave-one-out centered sums; the full-sample sums of xc and yc are zero.
    m = n - 1
    sx_i = -xc
    sy_i = -yc
    with np.errstate(divide="ignore", invalid="ignore"):
        sxx_i = (sxx - xc * xc) - sx_i * sx_i / m
        syy_i = (syy - yc * yc) - sy_i * sy_i / m
        sxy_i = (sxy - xc * yc) - sx_i * sy_i / m
        loo = sxy_i / np.sqrt(sxx_i * syy_i)
    return StatResult(value=float(np.clip(r, -1.0, 1.0)), n=n, se=_jackknife_se(loo))


def igc(child: npt.ArrayLike, parent: npt.ArrayLike) -> StatResult:
    """Intergenerational correlation (Pearson) with jackknife SE.

    Raises:
        ValidationError: On unequal lengths or non-finite values.
        InsufficientSampleError: With fewer than three pairs.
        DegenerateVarianceError: If either vector is constant.
    """
    y, x = _paired(child, parent)
    return _pearson_with_jackknife(y, x)


def igr(child: npt.ArrayLike, parent: npt.ArrayLike) -> StatResult:
    """Intergenerational regression slope of child on parent.

    Satisfies ``igr == igc * sd(child) / sd(parent)``. The SE is the usual
    homoskedastic OLS standard error.

    Raises:
        DegenerateVarianceError: If the parent vector is constant.
    """
    y, x = _paired(child, parent)
    yc = y - y.mean()
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 0.0:
        raise DegenerateVarianceError("Parent variable has zero variance")
    slope = float(xc @ yc) / sxx
    resid = yc - slope * xc
    se = math.sqrt(float(resid @ resid) / (y.size - 2) / sxx)
    return StatResult(value=slope, n=int(y.size), se=se)


def rank_correlation(child: npt.ArrayLike, parent: npt.ArrayLike) -> StatResult:
    """Spearman correlation with midranks for ties.

    The jackknife holds the full-sample ranks fixed.
    """
    y, x = _paired(child, parent)
    return _pearson_with_jackknife(
        rankdata(y, method="average").astype(np.float64),
        rankdata(x, method="average").astype(np.float64),
    )


def slope_to_correlation(slope: float, sd_parent: float, sd_child: float) -> float:
    """Convert a parent-child slope into a correlation."""
    if sd_child <= 0.0:
        raise DegenerateVarianceError("Child standard deviation must be positive")
    return slope * sd_parent / sd_child


def correlation_to_slope(corr: float, sd_parent: float, sd_child: float) -> float:
    """Convert a parent-child correlation into a slope."""
    if sd_parent <= 0.0:
        raise DegenerateVarianceError("Parent standard deviation must be positive")
    return corr * sd_child / sd_parent


def parent_values(
    frame: pd.DataFrame, parent: ParentVariable = ParentVariable.FATHER
) -> pd.Series:
    """Parental schooling used by the mobility statistics.

    ``MAX`` takes the more educated parent, falling back to whichever parent
    is known.
    """
    father = frame["father_edu_years"].astype("Float64")
    if parent is ParentVariable.FATHER:
        return father
    mother = frame["mother_edu_years"].astype("Float64")
    return pd.concat([father, mother], axis=1).max(axis=1, skipna=True)


def couple_pairs(
    microdata: pd.DataFrame,
    age_rule: AgeRule | None = None,
    column: str = "edu_years",
) -> tuple[FloatArray, FloatArray]:
    """Canonical (lower, higher) schooling of each qualifying couple.

    Each couple appears once, keyed by its lower id, and pairs are sorted so
    the output does not depend on which partner is listed first.
    """
    required = {"id", "spouse_id", column}
    missing = required - set(microdata.columns)
    if missing:
        raise ValidationError(f"Missing columns for couples: {sorted(missing)}")

    columns = ["id", "spouse_id", column]
    if "cohort" in microdata.columns and column != "cohort":
        columns.append("cohort")
    linked = microdata[microdata["spouse_id"].notna()]
    left = linked[columns]
    right = left.rename(
        columns={
            "id": "spouse_id",
            "spouse_id": "id",
            column: f"{column}_spouse",
            "cohort": "cohort_spouse",
        }
    )
    couples = left.merge(right, on=["id", "spouse_id"], how="inner")
    couples = couples[couples["id"] < couples["spouse_id"]]

    if age_rule is not None and age_rule.survey_year is not None:
        if "cohort" not in couples:
            raise ValidationError("Age rule needs a cohort column")
        age_a = age_rule.survey_year - couples["cohort"]
        age_b = age_rule.survey_year - couples["cohort_spouse"]
        target = age_rule.at_least_one_aged
        couples = couples[(age_a == target) | (age_b == target)]

    a = couples[column].to_numpy(dtype=np.float64, na_value=np.nan)
    b = couples[f"{column}_spouse"].to_numpy(dtype=np.float64, na_value=np.nan)
    keep = np.isfinite(a) & np.isfinite(b)
    lo = np.minimum(a[keep], b[keep])
    hi = np.maximum(a[keep], b[keep])
    order = np.lexsort((hi, lo))
    return lo[order], hi[order]


def spousal_correlation(
    microdata: pd.DataFrame,
    age_rule: AgeRule | None = None,
    column: str = "edu_years",
) -> StatResult:
    """Symmetrized correlation of partners' schooling.

    Every couple enters in both orders (the intraclass form), so swapping
    partner roles leaves the value bit-identical. ``n`` counts couples and
    the jackknife deletes one couple at a time.

    Args:
        microdata: Rows with ``id``, ``spouse_id`` and ``column``; the age
            rule also needs ``cohort``.
        age_rule: Qualification rule; None keeps every couple.
        column: Schooling column to correlate.

    Raises:
        EmptySampleError: When no couple qualifies.
        DegenerateVarianceError: When all partners share one value.
    """
    lo, hi = couple_pairs(microdata, age_rule, column)
    return symmetric_correlation(lo, hi)


def symmetric_correlation(a: npt.ArrayLike, b: npt.ArrayLike) -> StatResult:
    """Double-entry Pearson correlation of exchangeable pairs.

    Each pair contributes both orders. ``n`` counts pairs and the jackknife
    deletes one pair at a time.

    Raises:
        EmptySampleError: With no pairs.
        DegenerateVarianceError: When every value is identical.
    """
    lo = np.asarray(a, dtype=np.float64)
    hi = np.asarray(b, dtype=np.float64)
    if lo.shape != hi.shape:
        raise ValidationError("Pair vectors differ in length")
    m = lo.size
    if m == 0:
        raise EmptySampleError("No qualifying couples")
    if m < 2:
        raise InsufficientSampleError(f"Need at least 2 couples, got {m}")

    center = (lo.sum() + hi.sum()) / (2 * m)
    lc = lo - center
    hc = hi - center
    q = float(lc @ lc + hc @ hc)
    p = 2.0 * float(lc @ hc)
    if q <= 0.0:
        raise DegenerateVarianceError("Partner schooling has zero variance")
    value = p / q

    s_i = -(lc + hc)
    n_i = 2.0 * (m - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_i = (q - lc * lc - hc * hc) - s_i * s_i / n_i
        cov_i = (p - 2.0 * lc * hc) - s_i * s_i / n_i
        loo = cov_i / var_i
    return StatResult(
        value=float(np.clip(value, -1.0, 1.0)), n=m, se=_jackknife_se(loo)
    )


def moving_average_3yr(series: Mapping[int, float]) -> dict[int, float]:
    """Centered three-cohort moving average.

    Boundary cohorts average only the neighbours that exist.
    """
    result: dict[int, float] = {}
    for cohort in sorted(series):
        window = [
            series[c] for c in (cohort - 1, cohort, cohort + 1) if c in series
        ]
        result[cohort] = float(sum(window) / len(window))
    return result
