"""Synthetic population generator.

A population is built block by block, one block per (region, cohort). Each
block draws a parental generation, sorts parents into couples, produces one
child per couple, matches the children with each other and draws their
schooling completion and leave-home ages. Every block owns an RNG stream
derived from the root seed and the block key, so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, overload

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import norm, rankdata

from .dynamics import steady_state_variance
from .exceptions import PoolImbalanceError, ValidationError
from .model import (
    DEFAULT_COMPLETION_PROFILE,
    EDUCATION_GRID,
    NEVER_LEAVES,
    LeaveHomeSchedule,
    ModelParams,
    ObservationRule,
    PopulationConfig,
    Sex,
)

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

# Midpoints between consecutive grid levels.
_GRID = np.asarray(EDUCATION_GRID, dtype=np.int64)
_CUTS = (_GRID[:-1] + _GRID[1:]) / 2.0

POPULATION_COLUMNS: tuple[str, ...] = (
    "id",
    "region_id",
    "cohort",
    "sex",
    "edu_latent",
    "edu_years",
    "father_edu_years",
    "mother_edu_years",
    "father_latent",
    "mother_latent",
    "spouse_id",
    "leave_home_age",
    "edu_completion_age",
)


class Couples(NamedTuple):
    """Index pairs into the male and female pools; position k is a couple."""

    male_idx: IntArray
    female_idx: IntArray


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _pearson(a: FloatArray, b: FloatArray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac) * float(bc @ bc))
    return float(ac @ bc) / denom if denom > 0.0 else 0.0


def match_couples(
    male_latent: npt.ArrayLike,
    female_latent: npt.ArrayLike,
    rho_target: float,
    seed: int | np.random.Generator,
) -> Couples:
    """Pair men and women so spouses' latent schooling correlates at a target.

    Women are ranked by schooling; men are ranked by a Gaussian-copula score
    ``rc * normal_score(own rank) + sqrt(1 - rc**2) * noise`` and the k-th
    man is paired with the k-th woman. The copula weight ``rc`` is solved so
    the realized sample correlation hits ``rho_target``. Matching only
    permutes indices, so both marginals are preserved exactly.

    Args:
        male_latent: Latent schooling of the male pool.
        female_latent: Latent schooling of the female pool.
        rho_target: Target spousal correlation in [0, 1].
        seed: Seed or generator for the copula noise.

    Returns:
        Matched index pairs.

    Raises:
        PoolImbalanceError: If the pools differ in size.
        ValidationError: If ``rho_target`` is outside [0, 1].
    """
    men = np.asarray(male_latent, dtype=np.float64)
    women = np.asarray(female_latent, dtype=np.float64)
    if men.size != women.size:
        raise PoolImbalanceError(men.size, women.size)
    if not 0.0 <= rho_target <= 1.0:
        raise ValidationError(f"rho_target must lie in [0, 1], got {rho_target}")
    rng = _rng(seed)
    n = men.size
    female_order = np.argsort(women, kind="stable").astype(np.int64)
    if n < 3 or rho_target == 0.0:
        return Couples(rng.permutation(n).astype(np.int64), female_order)
    if rho_target >= 1.0:
        return Couples(np.argsort(men, kind="stable").astype(np.int64), female_order)

    scores = norm.ppf((rankdata(men, method="ordinal") - 0.5) / n)
    noise = rng.standard_normal(n)
    women_sorted = women[female_order]

    def order_for(rc: float) -> IntArray:
        latent = rc * scores + math.sqrt(max(1.0 - rc * rc, 0.0)) * noise
        return np.argsort(latent, kind="stable").astype(np.int64)

    def gap(rc: float) -> float:
        return _pearson(men[order_for(rc)], women_sorted) - rho_target

    lo = max(0.0, rho_target - 0.05)
    hi = min(1.0, rho_target + 0.05)
    if gap(lo) * gap(hi) > 0.0:
        lo, hi = 0.0, 1.0
    if gap(lo) * gap(hi) > 0.0:
        rc = lo if abs(gap(lo)) < abs(gap(hi)) else hi
        _LOGGER.warning(f"Spousal target {rho_target} unreachable; using rc={rc}")
    else:
        rc = float(brentq(gap, lo, hi, xtol=1e-4))
    return Couples(order_for(rc), female_order)


def produce_children(
    father_latent: npt.ArrayLike,
    mother_latent: npt.ArrayLike,
    params: ModelParams,
    seed: int | np.random.Generator,
) -> FloatArray:
    """Latent schooling of one child per couple.

    ``lam * (father + mother) / 2 + intercept + eps`` with
    ``eps ~ Normal(0, sigma_eps2)``. The intercept is ``(1 - lam) * mu``
    under the fixed-mean rule and ``drift`` otherwise.
    """
    fathers = np.asarray(father_latent, dtype=np.float64)
    mothers = np.asarray(mother_latent, dtype=np.float64)
    if fathers.shape != mothers.shape:
        raise ValidationError("Father and mother vectors differ in length")
    rng = _rng(seed)
    shocks = rng.standard_normal(fathers.size) * math.sqrt(params.sigma_eps2)
    midpoint = (fathers + mothers) / 2.0
    return np.asarray(
        params.lam * midpoint + params.child_intercept + shocks, dtype=np.float64
    )


@overload
def discretize_education(edu_latent: float) -> int: ...


@overload
def discretize_education(edu_latent: npt.NDArray[np.float64]) -> IntArray: ...


def discretize_education(edu_latent: float | FloatArray) -> int | IntArray:
    """Snap latent schooling to the nearest grid level, ties going down."""
    values = np.asarray(edu_latent, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("Latent schooling must be finite")
    snapped = _GRID[np.searchsorted(_CUTS, values, side="left")]
    if snapped.ndim == 0:
        return int(snapped)
    return snapped.astype(np.int64)


def constant_hazard_for_share(share: float, age: int, start_age: int) -> float:
    """Per-age hazard that leaves ``share`` of a cohort at home at ``age``.

    Leaving is possible at every age from ``start_age`` through ``age``.
    """
    if not 0.0 < share <= 1.0:
        raise ValidationError(f"share must lie in (0, 1], got {share}")
    if age < start_age:
        raise ValidationError("age must be >= start_age")
    return 1.0 - share ** (1.0 / (age - start_age + 1))


def _draw_leave_home(
    edu_years: IntArray, schedule: LeaveHomeSchedule, rng: np.random.Generator
) -> IntArray:
    n = edu_years.size
    sd = float(edu_years.std()) if n > 1 else 0.0
    z = (edu_years - edu_years.mean()) / sd if sd > 0.0 else np.zeros(n)
    shift = np.exp(schedule.education_gradient * z)
    leave = np.full(n, NEVER_LEAVES, dtype=np.int64)
    at_home = np.ones(n, dtype=bool)
    for age in range(schedule.start_age, schedule.max_age + 1):
        hazard = schedule.hazards.get(age, 0.0)
        if hazard <= 0.0:
            continue
        prob = np.clip(hazard * shift, 0.0, 1.0)
        leaving = at_home & (rng.random(n) < prob)
        leave[leaving] = age
        at_home &= ~leaving
    return leave


def _block_seed(seed: int, region_id: str, cohort: int) -> np.random.SeedSequence:
    region_key = zlib.crc32(region_id.encode("utf-8"))
    return np.random.SeedSequence(seed, spawn_key=(region_key, cohort))


def _generate_block(
    config: PopulationConfig, region_id: str, cohort: int, id_base: int
) -> pd.DataFrame:
    rng = np.random.default_rng(_block_seed(config.seed, region_id, cohort))
    n = config.n_per_region_cohort
    params = config.model_for(cohort)
    parent_variance = (
        config.parent_variance
        if config.parent_variance is not None
        else steady_state_variance(params)
    )
    parent_sd = math.sqrt(parent_variance)
    men = params.mu + parent_sd * rng.standard_normal(n)
    women = params.mu + parent_sd * rng.standard_normal(n)
    parents = match_couples(men, women, params.rho, rng)
    father_latent = men[parents.male_idx]
    mother_latent = women[parents.female_idx]
    child_latent = produce_children(father_latent, mother_latent, params, rng)
    edu_years = discretize_education(child_latent)

    ids = id_base + np.arange(1, n + 1, dtype=np.int64)
    n_male = (n + 1) // 2
    is_male = rng.permutation(np.arange(n) < n_male)

    spouse = np.full(n, -1, dtype=np.int64)
    male_pos = np.flatnonzero(is_male)
    female_pos = np.flatnonzero(~is_male)
    if male_pos.size > female_pos.size:
        keep = np.sort(rng.choice(male_pos.size, female_pos.size, replace=False))
        male_pos = male_pos[keep]
    if male_pos.size > 0:
        children = match_couples(
            child_latent[male_pos], child_latent[female_pos], params.rho, rng
        )
        husbands = male_pos[children.male_idx]
        wives = female_pos[children.female_idx]
        spouse[husbands] = ids[wives]
        spouse[wives] = ids[husbands]

    probs = np.asarray(config.completion_delay_probs, dtype=np.float64)
    delay = rng.choice(probs.size, size=n, p=probs)
    standard = np.vectorize(config.completion_profile.__getitem__, otypes=[np.int64])(
        edu_years
    )
    completion = np.maximum(standard + delay, 14).astype(np.int64)
    leave_home = _draw_leave_home(edu_years, config.leave_home, rng)

    block = pd.DataFrame(
        {
            "id": ids,
            "region_id": region_id,
            "cohort": np.full(n, cohort, dtype=np.int64),
            "sex": np.where(is_male, Sex.MALE.value, Sex.FEMALE.value),
            "edu_latent": child_latent,
            "edu_years": edu_years,
            "father_edu_years": pd.array(
                discretize_education(father_latent), dtype="Int64"
            ),
            "mother_edu_years": pd.array(
                discretize_education(mother_latent), dtype="Int64"
            ),
            "father_latent": father_latent,
            "mother_latent": mother_latent,
            "spouse_id": pd.arrays.IntegerArray(spouse, spouse < 0),
            "leave_home_age": leave_home,
            "edu_completion_age": completion,
        }
    )
    return block


def generate_population(config: PopulationConfig, threads: int = 1) -> pd.DataFrame:
    """Generate the full synthetic population.

    Args:
        config: Population scaffolding.
        threads: Worker threads. Affects speed only.

    Returns:
        One row per child, sorted by block (region id, cohort) then id.
    """
    blocks = [
        (region_id, cohort)
        for region_id in sorted(config.regions)
        for cohort in sorted(config.cohorts)
    ]
    n = config.n_per_region_cohort
    _LOGGER.info(
        f"Generating {len(blocks)} blocks of {n} children with {threads} thread(s)"
    )

    def build(item: tuple[int, tuple[str, int]]) -> pd.DataFrame:
        index, (region_id, cohort) = item
        return _generate_block(config, region_id, cohort, index * n)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        frames = list(pool.map(build, enumerate(blocks)))
    population = pd.concat(frames, ignore_index=True)
    _LOGGER.info(f"Generated population of {len(population)} individuals")
    return population


def reported_education(
    edu_final: npt.ArrayLike,
    completion_age: npt.ArrayLike,
    age: int | npt.ArrayLike,
    completion_profile: dict[int, int] | None = None,
) -> IntArray:
    """Schooling attained by ``age`` on each person's completion trajectory.

    A person finishing ``delay`` years late has reached every grid level
    ``L <= edu_final`` whose standard completion age plus ``delay`` is at
    most ``age``; below all levels they report the lowest one.
    """
    profile = completion_profile or DEFAULT_COMPLETION_PROFILE
    final = np.asarray(edu_final, dtype=np.int64)
    done = np.asarray(completion_age, dtype=np.int64)
    ages = np.asarray(age, dtype=np.int64)
    standard = np.vectorize(profile.__getitem__, otypes=[np.int64])(final)
    delay = np.maximum(done - standard, 0)
    reported = np.full(final.shape, EDUCATION_GRID[0], dtype=np.int64)
    for level in EDUCATION_GRID:
        reached = (level <= final) & (profile[level] + delay <= ages)
        reported = np.where(reached, level, reported)
    return reported


def observe(
    population: pd.DataFrame,
    rule: ObservationRule,
    completion_profile: dict[int, int] | None = None,
) -> pd.DataFrame:
    """Survey view of the population at a measurement age.

    Adds ``age``, ``survey_year``, ``coresident`` and ``edu_final`` (true
    final schooling) and replaces ``edu_years`` by schooling reported at the
    measurement age. With ``coresident_only`` only children still living
    with their parents are kept. An empty selection returns an empty table
    with the same columns.
    """
    age = rule.measure_age
    frame = population
    if rule.survey_year is not None:
        frame = frame[frame["cohort"] + age == rule.survey_year]
    coresident = frame["leave_home_age"] > age
    if rule.coresident_only:
        frame = frame[coresident]
        coresident = coresident[coresident]
    observed = frame.copy()
    observed["age"] = np.int64(age)
    observed["survey_year"] = (observed["cohort"] + age).astype(np.int64)
    observed["coresident"] = coresident.to_numpy(dtype=bool)
    observed["edu_final"] = observed["edu_years"].astype(np.int64)
    observed["edu_years"] = reported_education(
        observed["edu_final"].to_numpy(),
        observed["edu_completion_age"].to_numpy(),
        age,
        completion_profile,
    )
    _LOGGER.debug(
        f"Observed {len(observed)} of {len(population)} rows at age {age} "
        f"(coresident_only={rule.coresident_only})"
    )
    return observed.reset_index(drop=True)
