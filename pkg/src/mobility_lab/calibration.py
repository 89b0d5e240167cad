"""Calibrated parameter sets and synthetic panel generators.

The fixtures here reproduce documented magnitudes: the declining slope and
sorting path of the vicious cycle, the coresidence schedule behind the
age-of-measurement bias curve, and regional panels with known truth for
the persistence and mediation batteries.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import replace

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .dynamics import simulate_dynamics, steady_state_variance, variance_recursion
from .exceptions import EstimationError, ValidationError
from .model import (
    CalibratedPath,
    FeedbackKind,
    FeedbackSpec,
    LeaveHomeSchedule,
    ModelParams,
    PopulationConfig,
    StatKind,
)
from .regional import PANEL_INDEX, simulate_noisy_panel

_LOGGER = logging.getLogger(__name__)

SLOPE_START = 0.57
SLOPE_END = 0.33
SORTING_START = 0.66
SORTING_END = 0.55

# First-stage ladder of the persistence panel, most to least precise.
RELIABILITY_LADDER: dict[StatKind, float] = {
    StatKind.MEAN: 0.96,
    StatKind.SD: 0.70,
    StatKind.IGC: 0.40,
    StatKind.AM: 0.25,
}

CORESIDENCE_SURVEY_YEARS: tuple[int, ...] = tuple(range(1960, 1975))
CORESIDENCE_AGES: tuple[int, ...] = tuple(range(18, 33))
CORESIDENCE_PERIODS: tuple[tuple[int, int], ...] = ((1960, 1974),)
CORESIDENCE_SHARE_AT_27 = 0.55

# Level and cross-regional scale of each statistic in synthetic panels.
_PANEL_SCALES: dict[StatKind, tuple[float, float]] = {
    StatKind.MEAN: (8.0, 1.5),
    StatKind.SD: (3.5, 0.4),
    StatKind.IGC: (0.45, 0.06),
    StatKind.AM: (0.6, 0.08),
}


def vicious_cycle_path(generations: int = 7) -> CalibratedPath:
    """Dynamics inputs where slope and sorting decline together.

    The slope falls linearly from 0.57 to 0.33. Sorting responds linearly
    to parental variance, starting at 0.66; the response slope is solved so
    that sorting reaches 0.55 in the last generation.

    Raises:
        ValidationError: If fewer than two generations are requested.
        EstimationError: If no response slope reaches the end point.
    """
    if generations < 2:
        raise ValidationError("The calibrated path needs at least two generations")
    slopes = tuple(float(s) for s in np.linspace(SLOPE_START, SLOPE_END, generations))
    lam0 = 2.0 * SLOPE_START / (1.0 + SORTING_START)
    params = ModelParams(lam=lam0, rho=SORTING_START, sigma_eps2=1.0)
    variance0 = steady_state_variance(params)

    def feedback_for(slope: float) -> FeedbackSpec:
        return FeedbackSpec(
            kind=FeedbackKind.LINEAR,
            intercept=SORTING_START - slope * variance0,
            slope=slope,
        )

    def end_gap(slope: float) -> float:
        moments = simulate_dynamics(
            params,
            feedback_for(slope),
            generations,
            initial_variance=variance0,
            slope_path=slopes,
        )
        return moments[-1].rho_used - SORTING_END

    try:
        response = brentq(end_gap, 0.0, 1.0, xtol=1e-12)
    except ValueError as err:
        raise EstimationError(f"Cannot calibrate sorting response: {err}") from err
    _LOGGER.info(
        f"Calibrated sorting response {response:.4f} over {generations} "
        f"generations (initial variance {variance0:.4f})"
    )
    return CalibratedPath(
        params=params,
        feedback=feedback_for(response),
        slope_path=slopes,
        initial_variance=variance0,
    )


def hazard_for_share(
    share: float, n_ages: int, education_gradient: float = 0.0
) -> float:
    """Constant hazard leaving ``share`` at home after ``n_ages`` exposures.

    Individual hazards are ``h * exp(gradient * z)`` with standardized
    schooling ``z``, averaged over a standard normal by Gauss-Hermite
    quadrature.
    """
    if not 0.0 < share < 1.0:
        raise ValidationError(f"share must lie in (0, 1), got {share}")
    if n_ages < 1:
        raise ValidationError("n_ages must be >= 1")
    nodes, weights = np.polynomial.hermite_e.hermegauss(40)
    weights = weights / weights.sum()
    shift = np.exp(education_gradient * nodes)

    def gap(hazard: float) -> float:
        stay = (1.0 - np.clip(hazard * shift, 0.0, 1.0)) ** n_ages
        return float(weights @ stay) - share

    return float(brentq(gap, 0.0, 1.0, xtol=1e-12))


def calibrated_coresidence_config(
    n_per_cohort: int = 40_000,
    seed: int = 0,
    region_id: str = "madrid",
) -> PopulationConfig:
    """Population whose coresidence bias is smallest in the mid twenties.

    Young ages are censored by delayed completion (up to three years late);
    older ages are selected because the more educated leave home sooner.
    Nobody leaves before 20, 55% remain at home at 27, and the hazard rises
    to 0.15 per year afterwards.
    """
    gradient = 0.4
    early = hazard_for_share(CORESIDENCE_SHARE_AT_27, 8, gradient)
    hazards = {age: early for age in range(20, 28)}
    hazards.update({age: 0.15 for age in range(28, 61)})
    lam, rho, latent_sd = 0.6, 0.6, 3.5
    contraction = lam**2 * (1.0 + rho) / 2.0
    model = ModelParams(
        lam=lam, rho=rho, sigma_eps2=latent_sd**2 * (1.0 - contraction), mu=10.0
    )
    first = CORESIDENCE_SURVEY_YEARS[0] - max(CORESIDENCE_AGES)
    last = CORESIDENCE_SURVEY_YEARS[-1] - min(CORESIDENCE_AGES)
    return PopulationConfig(
        n_per_region_cohort=n_per_cohort,
        regions=(region_id,),
        cohorts=tuple(range(first, last + 1)),
        model=model,
        parent_variance=latent_sd**2,
        leave_home=LeaveHomeSchedule(
            hazards=hazards, education_gradient=gradient, start_age=15
        ),
        completion_delay_probs=(0.5, 0.25, 0.15, 0.10),
        seed=seed,
    )


def _cell_grid(n_regions: int, n_periods: int, first_period: int) -> pd.MultiIndex:
    regions = [f"region-{i:03d}" for i in range(n_regions)]
    periods = [first_period + 10 * t for t in range(n_periods)]
    return pd.MultiIndex.from_product([regions, periods], names=PANEL_INDEX)


def _ar1(
    rng: np.random.Generator, n_regions: int, n_periods: int, persistence: float
) -> np.ndarray:
    """Stationary unit-variance AR(1) paths, one row per region."""
    paths = np.empty((n_regions, n_periods))
    paths[:, 0] = rng.standard_normal(n_regions)
    innovation_sd = math.sqrt(1.0 - persistence**2)
    for t in range(1, n_periods):
        shocks = rng.standard_normal(n_regions)
        paths[:, t] = persistence * paths[:, t - 1] + innovation_sd * shocks
    return paths


def persistent_regions_panel(
    n_regions: int = 107,
    n_periods: int = 8,
    *,
    persistence: float = 0.8,
    reliability: Mapping[StatKind, float] | None = None,
    seed: int = 0,
) -> pd.DataFrame:
    """Panel whose true statistics follow AR(1) paths with equal persistence.

    Every statistic has the same true persistence but a different
    reliability, so OLS understates persistence by an amount that grows as
    reliability falls while split IV stays near the truth.
    """
    if not 0.0 <= persistence < 1.0:
        raise ValidationError("persistence must lie in [0, 1)")
    ladder = dict(RELIABILITY_LADDER if reliability is None else reliability)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    index = _cell_grid(n_regions, n_periods, 1900)
    truth: dict[str, np.ndarray] = {}
    for kind in sorted(ladder, key=lambda k: k.value):
        level, scale = _PANEL_SCALES.get(kind, (0.0, 1.0))
        trend = np.linspace(0.0, 1.0, n_periods) * scale
        paths = _ar1(rng, n_regions, n_periods, persistence)
        values = level + trend + scale * paths
        truth[kind.value] = values.ravel()
    frame = pd.DataFrame(truth, index=index)
    return simulate_noisy_panel(frame, ladder, rng, full_value="mean")


def vicious_cycle_panel(
    n_regions: int = 107,
    n_periods: int = 40,
    *,
    sorting_response: float = 0.15,
    beta_sorting: float = 0.4,
    beta_inequality: float = 0.06,
    seed: int = 0,
) -> pd.DataFrame:
    """Regional panel where half of the inequality effect runs through sorting.

    Standardized parental dispersion raises sorting by ``sorting_response``;
    IGC loads on dispersion and sorting. With the defaults the indirect
    effect ``beta_sorting * sorting_response`` equals the direct effect, so
    conditioning on sorting halves the dispersion coefficient. Sorting is
    measured noisily (reliability 0.25) and dispersion precisely (0.96).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    index = _cell_grid(n_regions, n_periods, 1900)
    size = len(index)
    period_codes = index.codes[1]
    period_shift = 0.5 * rng.standard_normal(n_periods)[period_codes]
    dispersion = rng.standard_normal(size)
    sorting = sorting_response * dispersion + rng.standard_normal(size)
    level = rng.standard_normal(size)
    igc = (
        beta_inequality * dispersion
        + beta_sorting * sorting
        + 0.05 * level
        + period_shift
        + 0.1 * rng.standard_normal(size)
    )
    truth = pd.DataFrame(
        {
            StatKind.FATHER_SD.value: 3.5 + dispersion,
            StatKind.FATHER_MEAN.value: 8.0 + level,
            StatKind.AM.value: 0.6 + sorting + 0.2 * period_shift,
            StatKind.IGC.value: 0.45 + igc,
        },
        index=index,
    )
    reliability = {
        StatKind.FATHER_SD: 0.96,
        StatKind.FATHER_MEAN: 0.96,
        StatKind.AM: 0.25,
        StatKind.IGC: 0.70,
    }
    return simulate_noisy_panel(truth, reliability, rng, full_value="mean")


def no_sorting_panel(
    n_regions: int = 107, n_periods: int = 40, *, seed: int = 0
) -> pd.DataFrame:
    """Regional panel where sorting is unrelated to parental dispersion."""
    return vicious_cycle_panel(
        n_regions, n_periods, sorting_response=0.0, seed=seed
    )


def model_feedback_panel(
    n_regions: int = 60,
    generations: int = 6,
    *,
    params: ModelParams | None = None,
    feedback: FeedbackSpec | None = None,
    reliability: float = 0.9,
    seed: int = 0,
) -> pd.DataFrame:
    """Regional panel generated by the transmission model with feedback.

    Regions differ in shock variance and initial variance. Each generation
    is a period; its cells hold the parental dispersion, the sorting
    applied, the child dispersion and the parent-child correlation.
    """
    base = params or ModelParams(lam=0.6, rho=0.6, sigma_eps2=1.0)
    response = feedback or FeedbackSpec(
        kind=FeedbackKind.LINEAR, intercept=0.3, slope=0.2
    )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shock_variance = rng.uniform(0.6, 1.4, n_regions)
    start_scale = rng.uniform(0.7, 1.3, n_regions)
    index = _cell_grid(n_regions, generations, 0)
    records: dict[str, list[float]] = {
        StatKind.FATHER_SD.value: [],
        StatKind.AM.value: [],
        StatKind.SD.value: [],
        StatKind.IGC.value: [],
    }
    for r in range(n_regions):
        regional = replace(base, sigma_eps2=float(shock_variance[r]))
        start = steady_state_variance(regional) * float(start_scale[r])
        moments = simulate_dynamics(
            regional, response, generations, initial_variance=start
        )
        for m in moments:
            applied = replace(regional, lam=m.lam, rho=m.rho_used)
            child_variance = variance_recursion(m.variance, applied)
            records[StatKind.FATHER_SD.value].append(math.sqrt(m.variance))
            records[StatKind.AM.value].append(m.rho_used)
            records[StatKind.SD.value].append(math.sqrt(child_variance))
            records[StatKind.IGC.value].append(
                m.slope_to_child * math.sqrt(m.variance / child_variance)
            )
    truth = pd.DataFrame(records, index=index)
    ladder = {StatKind(name): reliability for name in records}
    return simulate_noisy_panel(truth, ladder, rng, full_value="mean")
