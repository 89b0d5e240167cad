"""Data models for the mobility laboratory.

This module defines the core data structures shared by the simulator, the
estimators and the regional engine. Parameter and result classes are frozen
(immutable) so they can be shared freely between worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .exceptions import ValidationError

EDUCATION_GRID: tuple[int, ...] = (1, 3, 5, 8, 11, 15, 18)

# Standard completion age of every grid level.
DEFAULT_COMPLETION_PROFILE: dict[int, int] = {
    1: 7,
    3: 9,
    5: 12,
    8: 15,
    11: 18,
    15: 22,
    18: 24,
}

NEVER_LEAVES = 99


class Sex(Enum):
    """Sex of a synthetic individual."""

    MALE = "male"
    FEMALE = "female"


class FeedbackKind(Enum):
    """Parametric family mapping parental variance to spousal sorting."""

    CONSTANT = "constant"
    LINEAR = "linear"  # a + b * variance, clipped to [0, 1]
    LOGISTIC = "logistic"


class MeanRule(Enum):
    """How mean schooling evolves between generations."""

    FIXED = "fixed"  # intercept (1 - lam) * mu keeps the mean constant
    DRIFT = "drift"  # mu' = lam * mu + drift


class ParentVariable(Enum):
    """Which parental schooling measure mobility statistics use."""

    FATHER = "father"
    MAX = "max"  # the more educated parent


class StatKind(Enum):
    """Regional statistic identifiers (panel ``stat_kind`` column)."""

    MEAN = "mean"
    SD = "sd"
    CV = "cv"
    IGC = "igc"
    IGR = "igr"
    AM = "am"
    RANK = "rank"
    FATHER_MEAN = "father_mean"
    FATHER_SD = "father_sd"


class Design(Enum):
    """Regression design."""

    LEVELS = "levels"
    FIRST_DIFFERENCE = "first_difference"


class Estimator(Enum):
    """Regression estimator."""

    OLS = "ols"
    SPLIT_IV = "split_iv"


class RegionKind(Enum):
    """Kind of territorial unit in the region registry."""

    MUNICIPALITY = "municipality"
    REST_OF_PROVINCE = "rest_of_province"
    AUTONOMOUS_CITY = "autonomous_city"


class EducationCategory(Enum):
    """The seven harmonized schooling categories and their years."""

    ILLITERATE = ("Illiterate", 1)
    LITERATE = ("Literate", 3)
    PRIMARY = ("Primary Schooling", 5)
    SECONDARY = ("Secondary School", 8)
    ACADEMIC_OR_PROFESSIONAL = ("Academic high school and professional studies", 11)
    SHORT_COLLEGE = ("Short college degree", 15)
    LONG_COLLEGE = ("Long college degree", 18)

    @property
    def label(self) -> str:
        """Canonical survey label."""
        return self.value[0]

    @property
    def years(self) -> int:
        """Years of schooling assigned to the category."""
        return self.value[1]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the transmission model.

    Attributes:
        lam: Transmission strength from the parental midpoint, in [0, 1].
        rho: Assortative-mating parameter, in [0, 1].
        sigma_eps2: Variance of the idiosyncratic schooling shock.
        mu: Mean schooling of the parental generation.
        mean_rule: Whether the mean is held fixed or drifts.
        drift: Child intercept under ``MeanRule.DRIFT``.
    """

    lam: float
    rho: float
    sigma_eps2: float
    mu: float = 10.0
    mean_rule: MeanRule = MeanRule.FIXED
    drift: float = 0.0

    def __post_init__(self) -> None:
        _require(
            _finite(self.lam, self.rho, self.sigma_eps2, self.mu, self.drift),
            f"Model parameters must be finite: {self}",
        )
        _require(0.0 <= self.lam <= 1.0, f"lam must lie in [0, 1], got {self.lam}")
        _require(0.0 <= self.rho <= 1.0, f"rho must lie in [0, 1], got {self.rho}")
        _require(
            self.sigma_eps2 >= 0.0,
            f"sigma_eps2 must be non-negative, got {self.sigma_eps2}",
        )

    @property
    def child_intercept(self) -> float:
        """Intercept added to a child's inherited schooling."""
        if self.mean_rule is MeanRule.FIXED:
            return (1.0 - self.lam) * self.mu
        return self.drift

    @property
    def child_mean(self) -> float:
        """Mean schooling of the next generation."""
        return self.lam * self.mu + self.child_intercept


@dataclass(frozen=True)
class FeedbackSpec:
    """Mapping g from parental variance to spousal sorting.

    Attributes:
        kind: Parametric family.
        rho: Sorting level for ``CONSTANT``.
        intercept: ``a`` in ``a + b * variance`` for ``LINEAR``.
        slope: ``b`` for ``LINEAR``; must be non-negative.
        lower: Lower asymptote for ``LOGISTIC``.
        upper: Upper asymptote for ``LOGISTIC``.
        steepness: ``k`` for ``LOGISTIC``; must be non-negative.
        midpoint: Variance at which the logistic curve is halfway.
    """

    kind: FeedbackKind = FeedbackKind.CONSTANT
    rho: float = 0.5
    intercept: float = 0.0
    slope: float = 0.0
    lower: float = 0.0
    upper: float = 1.0
    steepness: float = 1.0
    midpoint: float = 0.0

    def __post_init__(self) -> None:
        _require(
            _finite(
                self.rho,
                self.intercept,
                self.slope,
                self.lower,
                self.upper,
                self.steepness,
                self.midpoint,
            ),
            f"Feedback parameters must be finite: {self}",
        )
        _require(self.slope >= 0.0, "Feedback slope must be non-negative")
        _require(self.steepness >= 0.0, "Feedback steepness must be non-negative")
        _require(self.upper >= self.lower, "Feedback upper must be >= lower")


@dataclass(frozen=True)
class GenerationMoments:
    """Moments of one generation in a dynamics run.

    Attributes:
        t: Generation index, starting at 0.
        mean: Mean schooling.
        variance: Variance of schooling.
        rho_used: Sorting applied when this generation formed couples.
        slope_to_child: Parent-child slope produced by this generation.
        lam: Transmission strength applied by this generation.
    """

    t: int
    mean: float
    variance: float
    rho_used: float
    slope_to_child: float
    lam: float


@dataclass(frozen=True)
class ObservationRule:
    """How a survey observes the synthetic population.

    Attributes:
        measure_age: Age at which schooling is measured.
        coresident_only: Keep only children still living with parents.
        survey_year: Restrict to one fictitious survey year (cohort + age).
    """

    measure_age: int
    coresident_only: bool = False
    survey_year: int | None = None

    def __post_init__(self) -> None:
        _require(
            16 <= self.measure_age <= 45,
            f"measure_age must lie in [16, 45], got {self.measure_age}",
        )


@dataclass(frozen=True)
class LeaveHomeSchedule:
    """Discrete per-age hazard of leaving the parental home.

    Attributes:
        hazards: Probability of leaving at each age, given still at home.
            Ages absent from the table have hazard 0.
        education_gradient: Log-hazard shift per standard deviation of
            final schooling within the (region, cohort) block.
        start_age: First age at which leaving is possible.
        max_age: Last age considered; never leaving is coded 99.
    """

    hazards: dict[int, float] = field(default_factory=dict)
    education_gradient: float = 0.0
    start_age: int = 15
    max_age: int = 60

    def __post_init__(self) -> None:
        _require(self.start_age >= 15, "start_age must be at least 15")
        _require(self.max_age >= self.start_age, "max_age must be >= start_age")
        for age, hazard in self.hazards.items():
            _require(
                0.0 <= hazard <= 1.0,
                f"Hazard at age {age} must lie in [0, 1], got {hazard}",
            )
        _require(_finite(self.education_gradient), "education_gradient not finite")


@dataclass(frozen=True)
class PopulationConfig:
    """Scaffolding of a synthetic population run.

    Attributes:
        n_per_region_cohort: Couples (and children) per block.
        regions: Region ids to populate.
        cohorts: Birth cohorts of the child generation.
        model: Shared model parameters.
        model_by_cohort: Per-cohort overrides of ``model``.
        parent_variance: Variance of parental latent schooling. Defaults to
            the steady state of the block's model.
        leave_home: Leave-home hazard schedule.
        completion_profile: Standard completion age per grid level.
        completion_delay_probs: Probability of finishing 0, 1, 2, ... years
            late.
        seed: Root seed; each block derives its own stream.
    """

    n_per_region_cohort: int
    regions: tuple[str, ...]
    cohorts: tuple[int, ...]
    model: ModelParams
    model_by_cohort: dict[int, ModelParams] = field(default_factory=dict)
    parent_variance: float | None = None
    leave_home: LeaveHomeSchedule = field(default_factory=LeaveHomeSchedule)
    completion_profile: dict[int, int] = field(
        default_factory=lambda: dict(DEFAULT_COMPLETION_PROFILE)
    )
    completion_delay_probs: tuple[float, ...] = (1.0,)
    seed: int = 0

    def __post_init__(self) -> None:
        _require(self.n_per_region_cohort >= 1, "n_per_region_cohort must be >= 1")
        _require(len(self.regions) > 0, "At least one region is required")
        _require(len(self.cohorts) > 0, "At least one cohort is required")
        _require(
            len(set(self.regions)) == len(self.regions), "Duplicate region ids"
        )
        _require(
            set(self.completion_profile) == set(EDUCATION_GRID),
            "completion_profile must cover every grid level",
        )
        probs = self.completion_delay_probs
        _require(
            all(0.0 <= p <= 1.0 for p in probs) and abs(sum(probs) - 1.0) < 1e-9,
            "completion_delay_probs must be probabilities summing to 1",
        )
        _require(
            self.parent_variance is None or self.parent_variance >= 0.0,
            "parent_variance must be non-negative",
        )
        _require(self.seed >= 0, "seed must be non-negative")

    def model_for(self, cohort: int) -> ModelParams:
        """Return the model parameters applying to a cohort."""
        return self.model_by_cohort.get(cohort, self.model)


@dataclass(frozen=True)
class StatResult:
    """A scalar statistic with its sample size and standard error."""

    value: float
    n: int
    se: float


@dataclass(frozen=True)
class AgeRule:
    """Couple qualification rule for spousal correlations.

    Attributes:
        at_least_one_aged: Required age of at least one partner.
        survey_year: Survey year in which ages are evaluated. When None,
            every couple qualifies.
    """

    at_least_one_aged: int = 35
    survey_year: int | None = None


@dataclass(frozen=True)
class Estimate:
    """A coefficient with its robust standard error."""

    value: float
    se: float


@dataclass(frozen=True)
class BiasReport:
    """Coresidence bias of dependent-only statistics at one age.

    Attributes:
        age: Measurement age.
        period: Label of the pooled survey-year window, e.g. "1950-1964".
        diff_igc: Mean signed IGC bias over survey years.
        abs_diff_igc: Mean absolute IGC bias over survey years.
        diff_mean: Mean signed bias in mean schooling.
        coresidence_share: Share of the age group living with parents.
        n_dep: Dependent observations used.
        n_all: Benchmark observations used.
        n_years: Survey years contributing to the window.
    """

    age: int
    period: str
    diff_igc: float
    abs_diff_igc: float
    diff_mean: float
    coresidence_share: float
    n_dep: int
    n_all: int
    n_years: int


@dataclass(frozen=True)
class HilgerInputs:
    """Grouped inputs to the coresidence correction.

    Attributes:
        groups: Parental schooling value of each group.
        y_dep: Mean schooling of dependents per group.
        n_dep: Number of dependents per group.
        y_indep: Mean schooling of all independents.
        n_indep: Number of independents.
        shares: Estimated share of independents in each group.
    """

    groups: tuple[float, ...]
    y_dep: tuple[float, ...]
    n_dep: tuple[int, ...]
    y_indep: float
    n_indep: int
    shares: tuple[float, ...]

    def __post_init__(self) -> None:
        k = len(self.groups)
        _require(
            len(self.y_dep) == k and len(self.n_dep) == k and len(self.shares) == k,
            "HilgerInputs vectors must have equal length",
        )
        _require(
            all(n >= 0 for n in self.n_dep) and self.n_indep >= 0,
            "Counts must be non-negative",
        )
        _require(all(s >= 0.0 for s in self.shares), "Shares must be non-negative")
        _require(
            abs(sum(self.shares) - 1.0) <= 1e-9,
            f"Shares must sum to 1, got {sum(self.shares)!r}",
        )


@dataclass(frozen=True)
class HilgerResult:
    """Corrected conditional expectation and slope.

    Attributes:
        rho_hat: Estimated dependent/independent intercept gap.
        corrected_means: Corrected mean schooling per parental group.
        corrected_igr: Count-weighted slope of corrected means on groups.
        dropped_groups: Groups excluded for lack of dependents or counts.
    """

    rho_hat: float
    corrected_means: dict[float, float]
    corrected_igr: float
    dropped_groups: tuple[float, ...] = ()

    @property
    def has_dropped_groups(self) -> bool:
        """True when any group was excluded from the correction."""
        return bool(self.dropped_groups)


@dataclass(frozen=True)
class ParallelTrendsResult:
    """Coefficients of child ~ parent + independent + parent:independent."""

    alpha: Estimate
    beta: Estimate
    rho: Estimate
    gamma: Estimate
    n: int


@dataclass(frozen=True)
class RegionEntry:
    """One territorial unit of the region registry."""

    region_id: str
    name: str
    kind: RegionKind


@dataclass(frozen=True)
class PeriodScheme:
    """Maps birth cohorts to ordinal period labels.

    Attributes:
        width: Cohorts per period (10 gives decades).
        origin: Any cohort starting a period.
    """

    width: int = 10
    origin: int = 1900

    def __post_init__(self) -> None:
        _require(self.width >= 1, "Period width must be >= 1")

    def period_of(self, cohort: int) -> int:
        """Return the first cohort of the period containing ``cohort``."""
        return self.origin + ((cohort - self.origin) // self.width) * self.width


@dataclass(frozen=True)
class RegionalStat:
    """One (region, period, statistic) cell of the panel."""

    region_id: str
    period: int
    stat_kind: StatKind
    value: float
    n: int
    half_a: float
    half_b: float


@dataclass(frozen=True)
class Regressor:
    """A regressor in a regional regression.

    Attributes:
        kind: Statistic used as regressor.
        lagged: Use the previous period's value.
    """

    kind: StatKind
    lagged: bool = False

    @property
    def name(self) -> str:
        """Column name in the design matrix."""
        return f"{self.kind.value}_lag" if self.lagged else self.kind.value


@dataclass(frozen=True)
class RegressionSpec:
    """Declarative description of a regional regression.

    Attributes:
        dependent: Statistic on the left-hand side.
        regressors: Right-hand side statistics.
        design: Levels or first differences.
        fixed_effects: Only ``("time",)`` or no effects are supported.
        estimator: OLS or split-sample IV.
        instrumented: Regressors entered as half A and instrumented by
            half B. Must be a non-empty subset of ``regressors`` for
            split IV and empty for OLS.
    """

    dependent: StatKind
    regressors: tuple[Regressor, ...]
    design: Design = Design.LEVELS
    fixed_effects: tuple[str, ...] = ("time",)
    estimator: Estimator = Estimator.OLS
    instrumented: tuple[Regressor, ...] = ()

    def __post_init__(self) -> None:
        _require(len(self.regressors) > 0, "At least one regressor is required")
        _require(
            len(set(self.regressors)) == len(self.regressors),
            "Duplicate regressors",
        )
        _require(
            set(self.fixed_effects) <= {"time"},
            f"Unsupported fixed effects: {self.fixed_effects}",
        )
        _require(
            set(self.instrumented) <= set(self.regressors),
            "instrumented must be a subset of regressors",
        )
        if self.estimator is Estimator.SPLIT_IV:
            _require(len(self.instrumented) > 0, "split_iv needs instrumented")
        else:
            _require(not self.instrumented, "OLS takes no instrumented regressors")

    def with_estimator(self, estimator: Estimator) -> RegressionSpec:
        """Return the same design under another estimator.

        Switching to split IV instruments every regressor.
        """
        instrumented = self.regressors if estimator is Estimator.SPLIT_IV else ()
        return RegressionSpec(
            dependent=self.dependent,
            regressors=self.regressors,
            design=self.design,
            fixed_effects=self.fixed_effects,
            estimator=estimator,
            instrumented=instrumented,
        )


@dataclass(frozen=True)
class FirstStageResult:
    """Reliability of a statistic across split halves.

    Attributes:
        stat_kind: Statistic examined.
        slope: OLS slope of half A on half B with time effects.
        se: Robust (HC1) standard error of the slope.
        n_cells: Cells used.
        low_power: Fewer than ten cells were available.
    """

    stat_kind: StatKind
    slope: float
    se: float
    n_cells: int
    low_power: bool


@dataclass(frozen=True)
class RegressionResult:
    """Output of a regional regression.

    Attributes:
        spec: The regression that was run.
        coefficients: Estimates for each regressor, keyed by column name.
        standardized_betas: coefficient * sd(x) / sd(y) on the estimation
            sample.
        n: Observations used.
        r2: R-squared for OLS, None for split IV.
        first_stage_coefficients: Coefficient of each instrumented
            regressor on its own half-B twin.
        first_stage_f: Partial F statistic per instrumented regressor.
        weak_first_stage: Any partial F below 4.
    """

    spec: RegressionSpec
    coefficients: dict[str, Estimate]
    standardized_betas: dict[str, float]
    n: int
    r2: float | None
    first_stage_coefficients: dict[str, float] = field(default_factory=dict)
    first_stage_f: dict[str, float] = field(default_factory=dict)
    weak_first_stage: bool = False

    def coefficient(self, regressor: Regressor | StatKind) -> float:
        """Return the point estimate for a regressor."""
        if isinstance(regressor, StatKind):
            regressor = Regressor(regressor)
        return self.coefficients[regressor.name].value


@dataclass(frozen=True)
class PersistenceRow:
    """OLS against split-IV persistence of one statistic."""

    stat_kind: StatKind
    ols: float
    ssiv: float
    reliability: float

    @property
    def gap(self) -> float:
        """Split-IV minus OLS persistence."""
        return self.ssiv - self.ols


@dataclass(frozen=True)
class ContaminationReport:
    """Two-regressor measurement-error experiment.

    Attributes:
        truth: Data-generating coefficients (precise, noisy).
        ols: Mean OLS coefficients over replications.
        ssiv: Mean split-IV coefficients over replications.
        ssiv_se: Mean robust standard errors of the split-IV coefficients.
        oracle: Probability limit of OLS from the measurement-error formula.
        reps: Replications run.
    """

    truth: tuple[float, float]
    ols: tuple[float, float]
    ssiv: tuple[float, float]
    ssiv_se: tuple[float, float]
    oracle: tuple[float, float]
    reps: int


@dataclass(frozen=True)
class AttenuationReport:
    """Single-regressor attenuation experiment at one reliability."""

    reliability: float
    beta: float
    ols_mean: float
    ssiv_mean: float
    ssiv_se: float
    first_stage_mean: float
    reps: int

    @property
    def attenuation(self) -> float:
        """Mean OLS slope relative to the true slope."""
        return self.ols_mean / self.beta


@dataclass(frozen=True)
class GatsbyReport:
    """Inequality and mobility regressions with the sorting channel.

    Attributes:
        levels: Level regressions of IGC on parental mean and dispersion.
        changes: The same designs in first differences.
        without_sorting: Split-IV IGC on dispersion alone.
        with_sorting: Split-IV IGC on dispersion and assortative mating.
        mediation_share: Share of the dispersion coefficient removed by
            conditioning on assortative mating.
    """

    levels: tuple[RegressionResult, ...]
    changes: tuple[RegressionResult, ...]
    without_sorting: RegressionResult
    with_sorting: RegressionResult
    mediation_share: float


@dataclass(frozen=True)
class CalibratedPath:
    """Inputs reproducing a calibrated run of the dynamics.

    Attributes:
        params: Parameters of generation 0.
        feedback: Sorting response to parental variance.
        slope_path: Target parent-child slope of each generation.
        initial_variance: Variance of generation 0.
    """

    params: ModelParams
    feedback: FeedbackSpec
    slope_path: tuple[float, ...]
    initial_variance: float
