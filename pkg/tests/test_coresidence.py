"""Tests for coresidence bias measurement and correction."""

import numpy as np
import pandas as pd
import pytest

from mobility_lab.coresidence import (
    bias_by_age,
    bias_reduction_summary,
    bias_reports_frame,
    coresidence_share,
    decompose_group_mean,
    estimate_rho_hat,
    hilger_comparison,
    hilger_corrected_cef,
    hilger_inputs_from_population,
    parallel_trends_table,
    parallel_trends_test,
    smooth_cohorts_check,
)
from mobility_lab.exceptions import (
    CollinearityError,
    EmptySampleError,
    ValidationError,
)
from mobility_lab.model import (
    DEFAULT_COMPLETION_PROFILE,
    NEVER_LEAVES,
    HilgerInputs,
    LeaveHomeSchedule,
    ModelParams,
    PopulationConfig,
    Sex,
)
from mobility_lab.population import generate_population

# (father schooling, dependents' schooling, independents' schooling); within
# each group independents sit a constant 3 years above dependents on average.
PARALLEL_GROUPS = [
    (1, [1, 3], [5]),
    (5, [5, 8, 5, 8], [8, 11]),
    (11, [8, 11], [11, 11, 15, 15, 8, 15]),
]


def _person(idx, father, edu, leaves, cohort=1940, sex="male"):
    return {
        "id": idx,
        "region_id": "madrid",
        "cohort": cohort,
        "sex": sex,
        "edu_latent": float(edu),
        "edu_years": edu,
        "father_edu_years": father,
        "mother_edu_years": father,
        "father_latent": float(father),
        "mother_latent": float(father),
        "spouse_id": None,
        "leave_home_age": 20 if leaves else NEVER_LEAVES,
        "edu_completion_age": DEFAULT_COMPLETION_PROFILE[edu],
    }


@pytest.fixture
def parallel_population():
    """Create a hand-built cohort where parallel trends hold exactly."""
    rows = []
    for father, dependents, independents in PARALLEL_GROUPS:
        for edu in dependents:
            rows.append(_person(len(rows) + 1, father, edu, leaves=False))
        for edu in independents:
            rows.append(_person(len(rows) + 1, father, edu, leaves=True))
    return _frame(rows)


def _frame(rows):
    frame = pd.DataFrame(rows)
    for column in ("father_edu_years", "mother_edu_years", "spouse_id"):
        frame[column] = frame[column].astype("Int64")
    return frame


def test_decompose_group_mean():
    """Test the group mean mixes dependents and independents."""
    assert decompose_group_mean(1.0, 10.0, 8.0) == 10.0
    assert decompose_group_mean(0.5, 10.0, 8.0) == 9.0
    with pytest.raises(ValidationError):
        decompose_group_mean(1.5, 10.0, 8.0)


def test_rho_hat_zero_when_independents_match():
    """Test no gap when independents equal share-weighted dependents."""
    inputs = HilgerInputs(
        groups=(1.0, 5.0),
        y_dep=(4.0, 8.0),
        n_dep=(10, 10),
        y_indep=0.25 * 4.0 + 0.75 * 8.0,
        n_indep=8,
        shares=(0.25, 0.75),
    )
    assert estimate_rho_hat(inputs) == pytest.approx(0.0)


def test_rho_hat_recovers_constant_shift():
    """Test a constant shift of 2 is recovered with correct shares."""
    shares = (0.2, 0.5, 0.3)
    y_dep = (3.0, 7.0, 12.0)
    y_indep = sum(s * (y + 2.0) for s, y in zip(shares, y_dep, strict=True))
    inputs = HilgerInputs((1.0, 5.0, 11.0), y_dep, (5, 5, 5), y_indep, 10, shares)
    assert estimate_rho_hat(inputs) == pytest.approx(2.0)


def test_rho_hat_share_error_discrepancy():
    """Test mis-estimated shares bias the gap by the share-error contrast."""
    true_shares = np.array([0.2, 0.5, 0.3])
    wrong_shares = (0.3, 0.4, 0.3)
    y_dep = np.array([3.0, 7.0, 12.0])
    y_indep = float(true_shares @ (y_dep + 2.0))
    inputs = HilgerInputs(
        (1.0, 5.0, 11.0), tuple(y_dep), (5, 5, 5), y_indep, 10, wrong_shares
    )
    discrepancy = float((true_shares - np.array(wrong_shares)) @ y_dep)
    assert estimate_rho_hat(inputs) - 2.0 == pytest.approx(discrepancy)


def test_rho_hat_needs_independents():
    """Test an empty independent sample is an error."""
    inputs = HilgerInputs((1.0, 5.0), (4.0, 8.0), (3, 3), 0.0, 0, (0.5, 0.5))
    with pytest.raises(EmptySampleError):
        estimate_rho_hat(inputs)


def test_corrected_cef_without_independents():
    """Test a zero gap with full dependency returns the dependent CEF."""
    inputs = HilgerInputs(
        groups=(1.0, 5.0, 11.0),
        y_dep=(3.0, 7.0, 12.0),
        n_dep=(4, 6, 2),
        y_indep=0.0,
        n_indep=0,
        shares=(0.2, 0.5, 0.3),
    )
    result = hilger_corrected_cef(inputs, 0.0)
    assert result.corrected_means == {1.0: 3.0, 5.0: 7.0, 11.0: 12.0}
    assert not result.has_dropped_groups


def test_corrected_cef_drops_empty_groups():
    """Test groups without dependents are dropped and flagged."""
    inputs = HilgerInputs(
        groups=(1.0, 5.0, 11.0),
        y_dep=(3.0, 0.0, 12.0),
        n_dep=(4, 0, 2),
        y_indep=9.0,
        n_indep=6,
        shares=(0.2, 0.5, 0.3),
    )
    result = hilger_corrected_cef(inputs, 1.0)
    assert result.dropped_groups == (5.0,)
    assert set(result.corrected_means) == {1.0, 11.0}


def test_inputs_with_exact_shares(parallel_population):
    """Test group inputs built from microdata with true shares."""
    inputs = hilger_inputs_from_population(
        parallel_population, survey_year=1970, age=30, exact_shares=True
    )
    assert inputs.groups == (1.0, 5.0, 11.0)
    assert inputs.n_dep == (2, 4, 2)
    assert inputs.y_dep == pytest.approx((2.0, 6.5, 9.5))
    assert inputs.n_indep == 9
    assert inputs.shares == pytest.approx((1 / 9, 2 / 9, 6 / 9))
    assert estimate_rho_hat(inputs) == pytest.approx(3.0)


def test_correction_is_exact_under_parallel_trends(parallel_population):
    """Test the corrected slope equals the full-population slope."""
    table = hilger_comparison(parallel_population, [30], [1970], exact_shares=True)
    assert len(table) == 1
    row = table.iloc[0]
    assert row["rho_hat"] == pytest.approx(3.0)
    assert row["igr_corrected"] == pytest.approx(row["igr_benchmark"], abs=1e-6)
    assert abs(row["igr_dependent"] - row["igr_benchmark"]) > 0.01


def _trend_sample(rho, gamma, n, seed):
    rng = np.random.default_rng(seed)
    father = rng.choice([1, 3, 5, 8, 11, 15, 18], size=n)
    coresident = rng.random(n) < 0.5
    d = (~coresident).astype(float)
    child = 2.0 + 0.5 * father + rho * d + gamma * father * d + rng.normal(0, 2, n)
    return pd.DataFrame(
        {
            "father_edu_years": pd.array(father, dtype="Int64"),
            "mother_edu_years": pd.array(father, dtype="Int64"),
            "coresident": coresident,
            "edu_years": child,
        }
    )


def test_parallel_trends_level_shift():
    """Test a pure level shift shows up in rho but not gamma."""
    result = parallel_trends_test(_trend_sample(-0.5, 0.0, 100_000, seed=1))
    assert abs(result.rho.value + 0.5) < 3 * result.rho.se
    assert abs(result.gamma.value) < 3 * result.gamma.se
    assert result.beta.value == pytest.approx(0.5, abs=0.01)
    assert result.n == 100_000


def test_parallel_trends_violation_detected():
    """Test a slope difference is estimated in gamma."""
    result = parallel_trends_test(_trend_sample(0.0, 0.1, 100_000, seed=2))
    assert abs(result.gamma.value - 0.1) < 3 * result.gamma.se
    assert result.gamma.value / result.gamma.se > 3


def test_parallel_trends_collinear():
    """Test an all-independent sample names the degenerate column."""
    frame = _trend_sample(0.0, 0.0, 200, seed=3)
    frame["coresident"] = False
    with pytest.raises(CollinearityError) as excinfo:
        parallel_trends_test(frame)
    assert "independent" in excinfo.value.columns


def test_coresidence_share():
    """Test the share living at home counts leave ages above the age."""
    population = pd.DataFrame(
        {
            "leave_home_age": [18, 25, 27, 99],
            "sex": ["male", "female", "female", "female"],
        }
    )
    assert coresidence_share(population, 25) == 0.5
    assert coresidence_share(population, 25, Sex.MALE) == 0.0
    assert coresidence_share(population, 25, Sex.FEMALE) == pytest.approx(2 / 3)
    with pytest.raises(EmptySampleError):
        coresidence_share(population.iloc[1:], 25, Sex.MALE)
    with pytest.raises(EmptySampleError):
        coresidence_share(population.iloc[0:0], 25)


def test_bias_zero_with_universal_coresidence():
    """Test dependent-only and full samples agree when nobody leaves."""
    config = PopulationConfig(
        n_per_region_cohort=400,
        regions=("madrid",),
        cohorts=tuple(range(1920, 1946)),
        model=ModelParams(lam=0.6, rho=0.6, sigma_eps2=4.0),
        seed=3,
    )
    population = generate_population(config)
    reports = bias_by_age(population, [30], 30, periods=((1960, 1964),))
    assert len(reports) == 1
    report = reports[0]
    assert report.diff_igc == 0.0
    assert report.abs_diff_igc == 0.0
    assert report.coresidence_share == 1.0
    assert report.n_years == 5
    assert report.period == "1960-1964"


def test_bias_reports_frame_columns():
    """Test the bias table keeps its column order when empty."""
    frame = bias_reports_frame([])
    assert list(frame.columns)[:4] == ["age", "period", "diff_igc", "abs_diff_igc"]
    assert frame.empty


def _sloped_inputs(gamma):
    """Noiseless group data where independents gain ``1 + gamma * father``."""
    groups = np.array([1.0, 5.0, 11.0])
    n_dep = np.array([10, 10, 10])
    n_indep = np.array([10, 20, 30])
    y_dep = 2.0 + 0.5 * groups
    y_indep = y_dep + 1.0 + gamma * groups
    inputs = HilgerInputs(
        groups=tuple(float(g) for g in groups),
        y_dep=tuple(float(y) for y in y_dep),
        n_dep=tuple(int(n) for n in n_dep),
        y_indep=float(n_indep @ y_indep / n_indep.sum()),
        n_indep=int(n_indep.sum()),
        shares=tuple(float(s) for s in n_indep / n_indep.sum()),
    )
    size = n_dep + n_indep
    full_means = (n_dep * y_dep + n_indep * y_indep) / size
    benchmark = np.polyfit(groups, full_means, 1, w=np.sqrt(size))[0]
    return inputs, float(benchmark)


def test_corrected_slope_exact_only_under_parallel_trends():
    """Test a slope gap between independents and dependents leaves a residual."""
    inputs, benchmark = _sloped_inputs(gamma=0.0)
    corrected = hilger_corrected_cef(inputs, estimate_rho_hat(inputs))
    assert corrected.corrected_igr == pytest.approx(benchmark, abs=1e-9)

    inputs, benchmark = _sloped_inputs(gamma=0.1)
    corrected = hilger_corrected_cef(inputs, estimate_rho_hat(inputs))
    residual = corrected.corrected_igr - benchmark
    assert abs(residual) > 0.01
    dependent_gap = 0.5 - benchmark
    assert abs(residual) < abs(dependent_gap)


def test_parallel_trends_table(parallel_population):
    """Test one row per estimable cell, skipping cells nobody has left."""
    table = parallel_trends_table(parallel_population, [16, 30], [1956, 1970])
    assert len(table) == 1
    row = table.iloc[0]
    assert (row["age"], row["survey_year"], row["cohort"]) == (30, 1970, 1940)
    assert row["n"] == 17
    assert row["n_indep"] == 9
    assert np.isfinite([row["rho"], row["rho_se"], row["gamma"], row["gamma_se"]]).all()


def test_parallel_trends_table_empty():
    """Test an empty table keeps its columns."""
    table = parallel_trends_table(_frame([_person(1, 5, 8, leaves=True)]), [30], [1900])
    assert table.empty
    assert {"rho", "gamma", "n_indep"} <= set(table.columns)


def test_smooth_cohorts_check_measures_share_gap():
    """Test the proxy mix is compared with the true mix of the target age."""
    rows = []
    for father in (1, 1, 5, 11):
        rows.append(_person(len(rows) + 1, father, 8, leaves=False, cohort=1954))
    for father, leaves in ((1, True), (5, False), (5, True), (11, False)):
        rows.append(_person(len(rows) + 1, father, 8, leaves=leaves))
    population = _frame(rows)

    table = smooth_cohorts_check(population, [30], [1970, 1971])
    assert len(table) == 1
    row = table.iloc[0]
    assert (row["cohort"], row["proxy_cohort"]) == (1940, 1954)
    assert row["max_share_gap"] == pytest.approx(0.25)
    assert row["total_variation"] == pytest.approx(0.25)
    assert (row["n_proxy"], row["n_target"]) == (4, 4)


def test_smooth_cohorts_check_exact_when_mixes_agree(parallel_population):
    """Test identical parental mixes give a zero gap."""
    younger = parallel_population.assign(
        cohort=1954, leave_home_age=NEVER_LEAVES, id=parallel_population["id"] + 100
    )
    population = pd.concat([parallel_population, younger], ignore_index=True)
    table = smooth_cohorts_check(population, [30], [1970])
    assert table["max_share_gap"].tolist() == [pytest.approx(0.0)]


def test_bias_reduction_summary():
    """Test per-cohort gaps and the share of the gap removed."""
    comparison = pd.DataFrame(
        {
            "cohort": [1940, 1940, 1941],
            "igr_dependent": [0.5, 0.3, 0.4],
            "igr_corrected": [0.45, 0.42, 0.41],
            "igr_benchmark": [0.4, 0.4, 0.4],
        }
    )
    summary = bias_reduction_summary(comparison).set_index("cohort")
    assert summary.loc[1940, "gap_dependent"] == pytest.approx(0.1)
    assert summary.loc[1940, "gap_corrected"] == pytest.approx(0.035)
    assert summary.loc[1940, "reduction"] == pytest.approx(0.65)
    assert np.isnan(summary.loc[1941, "reduction"])


@pytest.mark.slow
def test_censoring_bias_vanishes_once_schooling_is_complete():
    """Test education-blind leaving only biases ages still in school."""
    config = PopulationConfig(
        n_per_region_cohort=3000,
        regions=("madrid",),
        cohorts=tuple(range(1938, 1955)),
        model=ModelParams(lam=0.6, rho=0.6, sigma_eps2=4.0),
        leave_home=LeaveHomeSchedule(hazards={age: 0.03 for age in range(18, 35)}),
        completion_delay_probs=(0.5, 0.3, 0.2),
        seed=8,
    )
    population = generate_population(config, threads=2)
    reports = bias_by_age(population, [18, 30], 30, periods=((1968, 1970),))
    curve = {report.age: report for report in reports}
    assert curve[30].abs_diff_igc < 0.03
    assert curve[18].diff_igc < 0.0
    assert curve[18].abs_diff_igc > 0.05


@pytest.mark.slow
def test_selection_bias_grows_as_children_leave():
    """Test the bias rises with age when better-educated children leave first."""
    profile = {1: 7, 3: 9, 5: 12, 8: 14, 11: 15, 15: 16, 18: 16}
    config = PopulationConfig(
        n_per_region_cohort=8000,
        regions=("madrid",),
        cohorts=tuple(range(1945, 1962)),
        model=ModelParams(lam=0.6, rho=0.6, sigma_eps2=4.0),
        leave_home=LeaveHomeSchedule(
            hazards={age: 0.08 for age in range(19, 35)}, education_gradient=1.5
        ),
        completion_profile=profile,
        seed=9,
    )
    population = generate_population(config, threads=2)
    reports = bias_by_age(
        population,
        [18, 22, 30],
        30,
        periods=((1975, 1979),),
        completion_profile=profile,
    )
    bias = [report.abs_diff_igc for report in sorted(reports, key=lambda r: r.age)]
    assert bias == sorted(bias)
    assert bias[-1] > bias[0] + 0.05
