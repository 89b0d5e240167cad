"""Coresidence bias: measurement, diagnosis and correction.

Surveys that link children to parents through the household only see
parental schooling for children still living at home. This module measures
the resulting bias by age of measurement, tests the parallel-trends
assumption and implements the share-reweighting correction that recovers
the full-population conditional expectation from dependents only.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict

import numpy as np
import pandas as pd
import statsmodels.api as sm

from .estimators import igc, igr, parent_values
from .exceptions import (
    CollinearityError,
    EmptySampleError,
    EstimationError,
    InsufficientSampleError,
    ValidationError,
)
from .model import (
    BiasReport,
    Estimate,
    HilgerInputs,
    HilgerResult,
    ObservationRule,
    ParallelTrendsResult,
    ParentVariable,
    Sex,
)
from .population import observe

_LOGGER = logging.getLogger(__name__)

DEFAULT_PERIODS: tuple[tuple[int, int], ...] = ((1950, 1964), (1965, 1979))


def decompose_group_mean(d: float, y_dep: float, y_indep: float) -> float:
    """Group mean as the dependency-rate mix of dependents and independents."""
    if not 0.0 <= d <= 1.0:
        raise ValidationError(f"Dependency rate must lie in [0, 1], got {d}")
    return d * y_dep + (1.0 - d) * y_indep


def estimate_rho_hat(inputs: HilgerInputs) -> float:
    """Gap between independents and share-weighted dependents.

    ``y_indep - sum_g share_g * y_dep_g``. Groups without dependents carry
    no ``y_dep`` and are left out, with the remaining shares renormalized.

    Raises:
        EmptySampleError: Without independents or usable groups.
    """
    if inputs.n_indep == 0:
        raise EmptySampleError("No independent children to estimate the gap")
    shares = np.asarray(inputs.shares, dtype=np.float64)
    y_dep = np.asarray(inputs.y_dep, dtype=np.float64)
    usable = np.asarray(inputs.n_dep) > 0
    weight = shares[usable].sum()
    if weight <= 0.0:
        raise EmptySampleError("No group has both dependents and independents")
    if not usable.all():
        _LOGGER.warning(
            f"Renormalizing shares over {int(usable.sum())} of {usable.size} groups"
        )
    return float(inputs.y_indep - (shares[usable] @ y_dep[usable]) / weight)


def _weighted_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = float(np.sum(w * (x - xm) ** 2))
    if sxx <= 0.0:
        raise InsufficientSampleError("Need at least two groups with weight")
    return float(np.sum(w * (x - xm) * (y - ym)) / sxx)


def hilger_corrected_cef(inputs: HilgerInputs, rho_hat: float) -> HilgerResult:
    """Corrected group means and the corrected intergenerational slope.

    Independents of group g are imputed ``y_dep_g + rho_hat``; the group
    dependency rate is ``n_dep_g / (n_dep_g + share_g * n_indep)``. The
    slope is least squares of corrected means on group values weighted by
    estimated group size, which equals the micro-level slope when parental
    schooling is constant within groups.

    Groups without dependents or without any estimated members are dropped
    and listed in the result.
    """
    if not math.isfinite(rho_hat):
        raise ValidationError(f"rho_hat must be finite, got {rho_hat}")
    means: dict[float, float] = {}
    dropped: list[float] = []
    groups: list[float] = []
    weights: list[float] = []
    for group, y_dep, n_dep, share in zip(
        inputs.groups, inputs.y_dep, inputs.n_dep, inputs.shares, strict=True
    ):
        total = n_dep + share * inputs.n_indep
        if total <= 0.0 or n_dep == 0:
            dropped.append(group)
            continue
        d = n_dep / total
        means[group] = decompose_group_mean(d, y_dep, y_dep + rho_hat)
        groups.append(group)
        weights.append(total)
    if dropped:
        _LOGGER.warning(f"Dropped parental groups without dependents: {dropped}")
    slope = _weighted_slope(
        np.asarray(groups, dtype=np.float64),
        np.asarray([means[g] for g in groups], dtype=np.float64),
        np.asarray(weights, dtype=np.float64),
    )
    return HilgerResult(
        rho_hat=rho_hat,
        corrected_means=means,
        corrected_igr=slope,
        dropped_groups=tuple(dropped),
    )


def _with_parent(frame: pd.DataFrame, parent: ParentVariable) -> pd.DataFrame:
    values = parent_values(frame, parent)
    out = frame.assign(parent_edu=values)
    return out[out["parent_edu"].notna()]


def hilger_inputs_from_population(
    population: pd.DataFrame,
    survey_year: int,
    age: int,
    *,
    proxy_age: int = 16,
    exact_shares: bool = False,
    parent: ParentVariable = ParentVariable.FATHER,
    completion_profile: dict[int, int] | None = None,
) -> HilgerInputs:
    """Build correction inputs for one (survey year, age) cell.

    Independents' group shares come either from ground truth
    (``exact_shares``) or from the smooth-cohorts proxy: the parental mix of
    coresident children aged ``proxy_age`` in the same survey year scales
    the age group's size, and dependents are subtracted group by group.
    """
    rule = ObservationRule(age, survey_year=survey_year)
    cell = _with_parent(observe(population, rule, completion_profile), parent)
    dep = cell[cell["coresident"]]
    indep = cell[~cell["coresident"]]
    dep_stats = dep.groupby("parent_edu")["edu_years"].agg(["mean", "size"])

    if exact_shares:
        counts = indep.groupby("parent_edu").size().astype(np.float64)
    else:
        proxy = _with_parent(
            observe(
                population,
                ObservationRule(proxy_age, survey_year=survey_year),
                completion_profile,
            ),
            parent,
        )
        proxy = proxy[proxy["coresident"]]
        if proxy.empty:
            raise EmptySampleError(
                f"No coresident children aged {proxy_age} in {survey_year}"
            )
        proxy_share = proxy.groupby("parent_edu").size() / len(proxy)
        expected = proxy_share * len(cell)
        dep_counts = dep_stats["size"].reindex(expected.index, fill_value=0)
        counts = (expected - dep_counts).clip(lower=0.0)

    groups = sorted(set(dep_stats.index) | set(counts.index))
    if not groups:
        raise EmptySampleError(f"No children aged {age} in {survey_year}")
    counts = counts.reindex(groups, fill_value=0.0)
    total = float(counts.sum())
    if total <= 0.0:
        shares = np.full(len(groups), 1.0 / len(groups))
    else:
        shares = counts.to_numpy() / total
    dep_stats = dep_stats.reindex(groups)
    return HilgerInputs(
        groups=tuple(float(g) for g in groups),
        y_dep=tuple(float(v) for v in dep_stats["mean"].fillna(0.0)),
        n_dep=tuple(int(v) for v in dep_stats["size"].fillna(0)),
        y_indep=float(indep["edu_years"].mean()) if len(indep) else math.nan,
        n_indep=len(indep),
        shares=tuple(float(s) for s in shares),
    )


def hilger_comparison(
    population: pd.DataFrame,
    ages: Sequence[int],
    survey_years: Sequence[int],
    *,
    proxy_age: int = 16,
    exact_shares: bool = False,
    parent: ParentVariable = ParentVariable.FATHER,
    completion_profile: dict[int, int] | None = None,
) -> pd.DataFrame:
    """Dependent-only, corrected and full-population slopes per cell.

    The benchmark is the slope over all children of the same age and survey
    year, coresident or not. Cells where any series cannot be computed are
    skipped.
    """
    rows: list[dict[str, object]] = []
    for age in sorted(ages):
        for year in sorted(survey_years):
            cell = _with_parent(
                observe(
                    population,
                    ObservationRule(age, survey_year=year),
                    completion_profile,
                ),
                parent,
            )
            dep = cell[cell["coresident"]]
            try:
                inputs = hilger_inputs_from_population(
                    population,
                    year,
                    age,
                    proxy_age=proxy_age,
                    exact_shares=exact_shares,
                    parent=parent,
                    completion_profile=completion_profile,
                )
                rho_hat = estimate_rho_hat(inputs)
                corrected = hilger_corrected_cef(inputs, rho_hat)
                dependent = igr(dep["edu_years"], dep["parent_edu"]).value
                benchmark = igr(cell["edu_years"], cell["parent_edu"]).value
            except EstimationError as err:
                _LOGGER.debug(f"Skipping age {age}, year {year}: {err}")
                continue
            rows.append(
                {
                    "age": age,
                    "survey_year": year,
                    "cohort": year - age,
                    "igr_dependent": dependent,
                    "igr_corrected": corrected.corrected_igr,
                    "igr_benchmark": benchmark,
                    "rho_hat": rho_hat,
                    "n_dep": len(dep),
                    "n_indep": inputs.n_indep,
                    "dropped_groups": len(corrected.dropped_groups),
                }
            )
    _LOGGER.info(f"Computed {len(rows)} correction cells")
    return pd.DataFrame(
        rows,
        columns=[
            "age",
            "survey_year",
            "cohort",
            "igr_dependent",
            "igr_corrected",
            "igr_benchmark",
            "rho_hat",
            "n_dep",
            "n_indep",
            "dropped_groups",
        ],
    )


def smooth_cohorts_check(
    population: pd.DataFrame,
    ages: Sequence[int],
    survey_years: Sequence[int],
    *,
    proxy_age: int = 16,
    parent: ParentVariable = ParentVariable.FATHER,
) -> pd.DataFrame:
    """Compare proxy parental-group shares with the true shares of an age.

    The correction takes the parental mix of coresident children aged
    ``proxy_age`` as the mix of the whole age group in the same survey year.
    In synthetic data the true mix of every child of the target age is
    known, so the proxy error can be measured directly. ``total_variation``
    is half the summed absolute share gap.
    """
    rows: list[dict[str, object]] = []
    for year in sorted(survey_years):
        proxy = _with_parent(
            observe(population, ObservationRule(proxy_age, survey_year=year)),
            parent,
        )
        proxy = proxy[proxy["coresident"]]
        if proxy.empty:
            _LOGGER.debug(f"No coresident children aged {proxy_age} in {year}")
            continue
        proxy_share = proxy["parent_edu"].value_counts(normalize=True)
        for age in sorted(ages):
            target = _with_parent(
                observe(population, ObservationRule(age, survey_year=year)), parent
            )
            if target.empty:
                continue
            true_share = target["parent_edu"].value_counts(normalize=True)
            groups = proxy_share.index.union(true_share.index)
            gap = (
                proxy_share.reindex(groups, fill_value=0.0)
                - true_share.reindex(groups, fill_value=0.0)
            ).abs()
            rows.append(
                {
                    "age": age,
                    "survey_year": year,
                    "cohort": year - age,
                    "proxy_cohort": year - proxy_age,
                    "max_share_gap": float(gap.max()),
                    "total_variation": float(gap.sum() / 2.0),
                    "n_proxy": len(proxy),
                    "n_target": len(target),
                }
            )
    _LOGGER.info(f"Checked proxy shares in {len(rows)} cells")
    return pd.DataFrame(
        rows,
        columns=[
            "age",
            "survey_year",
            "cohort",
            "proxy_cohort",
            "max_share_gap",
            "total_variation",
            "n_proxy",
            "n_target",
        ],
    )


def bias_reduction_summary(comparison: pd.DataFrame) -> pd.DataFrame:
    """Per-cohort absolute slope gaps before and after the correction.

    ``reduction`` is the share of the dependent-only gap removed by the
    correction; it is NaN when the dependent-only gap is zero.
    """
    frame = comparison.assign(
        gap_dependent=(comparison["igr_dependent"] - comparison["igr_benchmark"]).abs(),
        gap_corrected=(comparison["igr_corrected"] - comparison["igr_benchmark"]).abs(),
    )
    summary = (
        frame.groupby("cohort", sort=True)[["gap_dependent", "gap_corrected"]]
        .mean()
        .reset_index()
    )
    dependent = summary["gap_dependent"].where(summary["gap_dependent"] > 0.0)
    summary["reduction"] = 1.0 - summary["gap_corrected"] / dependent
    return summary


def _check_rank(design: pd.DataFrame) -> None:
    kept: list[str] = []
    degenerate: list[str] = []
    for column in design.columns:
        candidate = design[kept + [column]].to_numpy(dtype=np.float64)
        if np.linalg.matrix_rank(candidate) == len(kept) + 1:
            kept.append(column)
        else:
            degenerate.append(column)
    if degenerate:
        raise CollinearityError(degenerate)


def parallel_trends_test(
    microdata: pd.DataFrame, parent: ParentVariable = ParentVariable.FATHER
) -> ParallelTrendsResult:
    """Regress child schooling on parent, independence and their interaction.

    ``y = alpha + beta * x + rho * d + gamma * x * d`` with ``d = 1`` for
    children no longer living at home and HC1 standard errors. Parallel
    trends holds when ``gamma`` is zero.

    Args:
        microdata: Observed rows at one age with ``coresident``,
            ``edu_years`` and parental schooling.
        parent: Parental schooling measure.

    Raises:
        CollinearityError: Naming the degenerate column, e.g. when every
            child is independent.
    """
    frame = _with_parent(microdata, parent)
    if frame.empty:
        raise EmptySampleError("No rows with known parental schooling")
    x = frame["parent_edu"].to_numpy(dtype=np.float64)
    d = (~frame["coresident"].to_numpy(dtype=bool)).astype(np.float64)
    design = pd.DataFrame(
        {"const": 1.0, "parent": x, "independent": d, "parent_x_independent": x * d}
    )
    _check_rank(design)
    y = frame["edu_years"].to_numpy(dtype=np.float64)
    fit = sm.OLS(y, design).fit(cov_type="HC1")

    def est(name: str) -> Estimate:
        return Estimate(float(fit.params[name]), float(fit.bse[name]))

    return ParallelTrendsResult(
        alpha=est("const"),
        beta=est("parent"),
        rho=est("independent"),
        gamma=est("parent_x_independent"),
        n=len(frame),
    )


def parallel_trends_table(
    population: pd.DataFrame,
    ages: Sequence[int],
    survey_years: Sequence[int],
    *,
    parent: ParentVariable = ParentVariable.FATHER,
    completion_profile: dict[int, int] | None = None,
) -> pd.DataFrame:
    """Intercept and slope gaps of independents by age and cohort.

    Runs :func:`parallel_trends_test` on every (age, survey year) cell.
    Cells where the regression cannot be estimated, for instance because
    nobody has left home yet, are skipped.
    """
    rows: list[dict[str, object]] = []
    for age in sorted(ages):
        for year in sorted(survey_years):
            cell = _with_parent(
                observe(
                    population,
                    ObservationRule(age, survey_year=year),
                    completion_profile,
                ),
                parent,
            )
            try:
                result = parallel_trends_test(cell, parent)
            except EstimationError as err:
                _LOGGER.debug(f"No trend test at age {age}, year {year}: {err}")
                continue
            rows.append(
                {
                    "age": age,
                    "survey_year": year,
                    "cohort": year - age,
                    "beta": result.beta.value,
                    "beta_se": result.beta.se,
                    "rho": result.rho.value,
                    "rho_se": result.rho.se,
                    "gamma": result.gamma.value,
                    "gamma_se": result.gamma.se,
                    "n": result.n,
                    "n_indep": int((~cell["coresident"]).sum()),
                }
            )
    _LOGGER.info(f"Estimated parallel-trends regressions in {len(rows)} cells")
    return pd.DataFrame(
        rows,
        columns=[
            "age",
            "survey_year",
            "cohort",
            "beta",
            "beta_se",
            "rho",
            "rho_se",
            "gamma",
            "gamma_se",
            "n",
            "n_indep",
        ],
    )


def coresidence_share(
    population: pd.DataFrame, age: int, sex: Sex | None = None
) -> float:
    """Share of individuals still living with their parents at ``age``.

    With ``sex`` only that sex is counted.
    """
    if sex is not None:
        population = population[population["sex"] == sex.value]
    if population.empty:
        raise EmptySampleError("Empty population")
    return float((population["leave_home_age"] > age).mean())


def bias_by_age(
    population: pd.DataFrame,
    ages: Sequence[int],
    benchmark_age: int = 30,
    *,
    periods: Sequence[tuple[int, int]] = DEFAULT_PERIODS,
    parent: ParentVariable = ParentVariable.FATHER,
    completion_profile: dict[int, int] | None = None,
) -> list[BiasReport]:
    """Bias of dependent-only statistics by age of measurement.

    For each fictitious survey year ``y`` in a period window the
    dependent-only IGC at age ``a`` (cohort ``y - a``) is compared with the
    all-children IGC at ``benchmark_age`` (cohort ``y - benchmark_age``).
    Both sides use the same survey years with equal weight; years where
    either side cannot be computed are skipped.

    Returns:
        One report per (period, age) with at least one usable year.
    """
    latest_completion = int(population["edu_completion_age"].max())
    if latest_completion > benchmark_age:
        _LOGGER.warning(
            f"Benchmark age {benchmark_age} precedes completion at "
            f"{latest_completion}; the benchmark itself is censored"
        )
    by_cohort = {int(c): f for c, f in population.groupby("cohort", sort=True)}

    def observed(cohort: int, age: int) -> pd.DataFrame | None:
        frame = by_cohort.get(cohort)
        if frame is None:
            return None
        return _with_parent(
            observe(frame, ObservationRule(age), completion_profile), parent
        )

    reports: list[BiasReport] = []
    for lo, hi in periods:
        label = f"{lo}-{hi}"
        for age in sorted(ages):
            diffs: list[float] = []
            mean_diffs: list[float] = []
            n_dep = n_all = n_cohort = n_home = 0
            for year in range(lo, hi + 1):
                cell = observed(year - age, age)
                bench = observed(year - benchmark_age, benchmark_age)
                if cell is None or bench is None:
                    continue
                dep = cell[cell["coresident"]]
                try:
                    dep_igc = igc(dep["edu_years"], dep["parent_edu"]).value
                    all_igc = igc(bench["edu_years"], bench["parent_edu"]).value
                except EstimationError as err:
                    _LOGGER.debug(f"Skipping age {age}, year {year}: {err}")
                    continue
                diffs.append(dep_igc - all_igc)
                mean_diffs.append(
                    float(dep["edu_years"].mean() - bench["edu_years"].mean())
                )
                n_dep += len(dep)
                n_all += len(bench)
                n_cohort += len(cell)
                n_home += int(cell["coresident"].sum())
            if not diffs:
                _LOGGER.debug(f"No usable survey years for age {age} in {label}")
                continue
            values = np.asarray(diffs)
            reports.append(
                BiasReport(
                    age=age,
                    period=label,
                    diff_igc=float(values.mean()),
                    abs_diff_igc=float(np.abs(values).mean()),
                    diff_mean=float(np.mean(mean_diffs)),
                    coresidence_share=n_home / n_cohort,
                    n_dep=n_dep,
                    n_all=n_all,
                    n_years=len(diffs),
                )
            )
    _LOGGER.info(f"Computed {len(reports)} bias reports over {len(periods)} periods")
    return reports


def bias_reports_frame(reports: Sequence[BiasReport]) -> pd.DataFrame:
    """Tabulate bias reports in their CSV column order."""
    columns = [
        "age",
        "period",
        "diff_igc",
        "abs_diff_igc",
        "diff_mean",
        "coresidence_share",
        "n_dep",
        "n_all",
        "n_years",
    ]
    return pd.DataFrame([asdict(r) for r in reports], columns=columns)
