"""Regional statistics and measurement-error robust regressions.

A panel holds one row per (region, period, statistic) with the full-sample
value and the values on two disjoint stratified half samples. Regressions
run on the panel in levels or first differences with period effects, either
by OLS or by split-sample IV, where each noisy regressor measured on half A
is instrumented by its twin measured on half B.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import statsmodels.api as sm
from linearmodels.iv import IV2SLS

from .data_io import PANEL_COLUMNS
from .estimators import (
    igc,
    igr,
    mean_sd,
    mean_sd_cv,
    parent_values,
    rank_correlation,
    symmetric_correlation,
)
from .exceptions import (
    CollinearityError,
    DuplicateKeyError,
    EstimationError,
    InsufficientSampleError,
    ValidationError,
)
from .model import (
    AttenuationReport,
    ContaminationReport,
    Design,
    Estimate,
    Estimator,
    FirstStageResult,
    GatsbyReport,
    ObservationRule,
    ParentVariable,
    PeriodScheme,
    PersistenceRow,
    RegressionResult,
    RegressionSpec,
    Regressor,
    StatKind,
)
from .population import observe
from .registry import RegionRegistry

_LOGGER = logging.getLogger(__name__)

DEFAULT_STRATA: tuple[str, ...] = ("sex", "cohort", "survey_year", "region_id")
MIN_CELL = 50
MIN_HALF = 25
LOW_POWER_CELLS = 10
WEAK_F = 4.0

PANEL_INDEX = ["region_id", "period"]

_PAIR_ESTIMATORS = {
    StatKind.IGC: igc,
    StatKind.IGR: igr,
    StatKind.RANK: rank_correlation,
}


def cell_statistic(
    frame: pd.DataFrame,
    kind: StatKind,
    parent: ParentVariable = ParentVariable.FATHER,
) -> tuple[float, int]:
    """Value and sample size of one statistic on a set of rows.

    Statistics that cannot be computed (too few rows, no variance, zero
    mean for CV) come back as NaN with the number of usable rows.
    """
    if kind is StatKind.CV:
        values = frame["edu_years"].to_numpy(dtype=np.float64)
        n = values.size

        def compute() -> float:
            return mean_sd_cv(values).cv

    elif kind in (StatKind.MEAN, StatKind.SD):
        values = frame["edu_years"].to_numpy(dtype=np.float64)
        n = values.size
        position = 0 if kind is StatKind.MEAN else 1

        def compute() -> float:
            return mean_sd(values)[position]

    elif kind in (StatKind.FATHER_MEAN, StatKind.FATHER_SD):
        fathers = frame["father_edu_years"].dropna().to_numpy(dtype=np.float64)
        n = fathers.size
        father_position = 0 if kind is StatKind.FATHER_MEAN else 1

        def compute() -> float:
            return mean_sd(fathers)[father_position]

    elif kind is StatKind.AM:
        both = frame[["father_edu_years", "mother_edu_years"]].dropna()
        n = len(both)

        def compute() -> float:
            return symmetric_correlation(
                both["father_edu_years"].to_numpy(dtype=np.float64),
                both["mother_edu_years"].to_numpy(dtype=np.float64),
            ).value

    else:
        parents = parent_values(frame, parent)
        known = parents.notna().to_numpy()
        child = frame["edu_years"].to_numpy(dtype=np.float64)[known]
        x = parents[known].to_numpy(dtype=np.float64)
        n = child.size
        estimator = _PAIR_ESTIMATORS[kind]

        def compute() -> float:
            return estimator(child, x).value

    try:
        return compute(), int(n)
    except EstimationError as err:
        _LOGGER.debug(f"{kind.value} undefined on {len(frame)} rows: {err}")
        return math.nan, int(n)


def assign_halves(
    microdata: pd.DataFrame,
    strata: Sequence[str] = DEFAULT_STRATA,
    seed: int = 0,
) -> np.ndarray:
    """Random stratified assignment of rows to half A (True) or B (False).

    Sampling units are couples whose both members are present, or single
    rows; a unit is stratified by its lower-id member. Within each stratum
    units are split as evenly as possible and a seeded coin decides which
    half receives the odd unit.
    """
    n_rows = len(microdata)
    if n_rows == 0:
        return np.zeros(0, dtype=bool)
    ids = microdata["id"].to_numpy(dtype=np.int64)
    if "spouse_id" in microdata.columns:
        spouse = microdata["spouse_id"].astype("Int64").fillna(-1).to_numpy(np.int64)
    else:
        spouse = np.full(n_rows, -1, dtype=np.int64)
    linked = np.isin(spouse, ids) & (spouse >= 0)
    unit = np.where(linked, np.minimum(ids, spouse), ids)

    columns = [c for c in strata if c in microdata.columns]
    heads = microdata.loc[ids == unit, columns].assign(_unit=unit[ids == unit])
    if columns:
        codes = heads.groupby(columns, sort=True, dropna=False).ngroup().to_numpy()
    else:
        codes = np.zeros(len(heads), dtype=np.int64)
    head_units = heads["_unit"].to_numpy(dtype=np.int64)

    canonical = np.lexsort((head_units, codes))
    codes = codes[canonical]
    head_units = head_units[canonical]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = rng.random(head_units.size)
    order = np.lexsort((draws, codes))
    codes = codes[order]
    head_units = head_units[order]

    n_strata = int(codes.max()) + 1
    sizes = np.bincount(codes, minlength=n_strata)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    position = np.arange(codes.size) - starts[codes]
    coins = rng.integers(0, 2, size=n_strata)
    take = sizes // 2 + (sizes % 2) * coins
    in_a = position < take[codes]

    lookup = pd.Series(in_a, index=head_units)
    return lookup.reindex(unit).to_numpy(dtype=bool)


def split_halves(
    microdata: pd.DataFrame,
    strata: Sequence[str] = DEFAULT_STRATA,
    seed: int = 0,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Partition rows into two stratified halves keeping couples together."""
    in_a = assign_halves(microdata, strata, seed)
    return microdata[in_a], microdata[~in_a]


def _with_period(microdata: pd.DataFrame, scheme: PeriodScheme) -> pd.DataFrame:
    cohort = microdata["cohort"].to_numpy(dtype=np.int64)
    period = scheme.origin + ((cohort - scheme.origin) // scheme.width) * scheme.width
    return microdata.assign(period=period)


def compute_panel(
    microdata: pd.DataFrame,
    registry: RegionRegistry,
    scheme: PeriodScheme | None = None,
    *,
    rule: ObservationRule | None = None,
    kinds: Sequence[StatKind] = tuple(StatKind),
    parent: ParentVariable = ParentVariable.FATHER,
    min_cell: int = MIN_CELL,
    min_half: int = MIN_HALF,
    strata: Sequence[str] = DEFAULT_STRATA,
    seed: int = 0,
    completion_profile: dict[int, int] | None = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Per-(region, period) statistics with split-half replicates.

    Args:
        microdata: Rows carrying ``region_id`` and ``cohort``. When ``rule``
            is given they are first observed under it.
        registry: Known regions.
        scheme: Cohort to period mapping; decades by default.
        rule: Optional observation rule applied before aggregation.
        kinds: Statistics to compute.
        parent: Parental schooling measure for mobility statistics.
        min_cell: Cells with fewer usable rows are omitted.
        min_half: Half values with fewer rows are reported as NaN.
        strata: Stratification columns for the half split.
        seed: Seed of the half split.
        completion_profile: Completion ages used by ``rule``.
        threads: Worker threads over cells; affects speed only.

    Returns:
        Panel table sorted by region, period and statistic.

    Raises:
        UnknownRegionError: If rows reference regions outside the registry.
    """
    scheme = scheme or PeriodScheme()
    registry.validate_ids(microdata["region_id"].unique())
    if rule is not None:
        microdata = observe(microdata, rule, completion_profile)
    data = _with_period(microdata, scheme)
    data = data.assign(_half_a=assign_halves(data, strata, seed))
    cells = list(data.groupby(PANEL_INDEX, sort=True))

    def summarize(
        item: tuple[tuple[str, int], pd.DataFrame],
    ) -> list[dict[str, object]]:
        (region_id, period), frame = item
        half_a = frame[frame["_half_a"]]
        half_b = frame[~frame["_half_a"]]
        rows: list[dict[str, object]] = []
        for kind in kinds:
            value, n = cell_statistic(frame, kind, parent)
            if n < min_cell or not math.isfinite(value):
                _LOGGER.debug(f"Omitting {region_id}/{period}/{kind.value}: n={n}")
                continue
            a, n_a = cell_statistic(half_a, kind, parent)
            b, n_b = cell_statistic(half_b, kind, parent)
            if min(n_a, n_b) < min_half:
                a = b = math.nan
            rows.append(
                {
                    "region_id": region_id,
                    "period": int(period),
                    "stat_kind": kind.value,
                    "value": value,
                    "n": n,
                    "half_a": a,
                    "half_b": b,
                }
            )
        return rows

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(summarize, cells))
    rows = [row for cell_rows in results for row in cell_rows]
    panel = pd.DataFrame(rows, columns=list(PANEL_COLUMNS))
    omitted = len(cells) * len(kinds) - len(panel)
    _LOGGER.info(
        f"Computed {len(panel)} panel cells from {len(cells)} region-periods "
        f"({omitted} below threshold or undefined)"
    )
    return panel.astype({"period": np.int64, "n": np.int64})


def _period_dummies(periods: pd.Index | pd.Series) -> pd.DataFrame:
    labels = pd.Series(np.asarray(periods), dtype="category")
    dummies = pd.get_dummies(labels, prefix="period", drop_first=True, dtype=float)
    return dummies


def _check_rank(design: pd.DataFrame) -> None:
    kept: list[str] = []
    collinear: list[str] = []
    for column in design.columns:
        candidate = design[kept + [column]].to_numpy(dtype=np.float64)
        if np.linalg.matrix_rank(candidate) == len(kept) + 1:
            kept.append(column)
        else:
            collinear.append(str(column))
    if collinear:
        raise CollinearityError(collinear)


def first_stage(kind: StatKind, panel: pd.DataFrame) -> FirstStageResult:
    """Reliability of a statistic: OLS of half A on half B with period effects.

    Raises:
        InsufficientSampleError: If too few cells remain to fit the model.
    """
    rows = panel[
        (panel["stat_kind"] == kind.value)
        & panel["half_a"].notna()
        & panel["half_b"].notna()
    ].reset_index(drop=True)
    n_cells = len(rows)
    design = pd.concat(
        [
            pd.DataFrame({"const": 1.0, "half_b": rows["half_b"].astype(float)}),
            _period_dummies(rows["period"]),
        ],
        axis=1,
    )
    if n_cells <= design.shape[1]:
        raise InsufficientSampleError(
            f"{n_cells} cells cannot identify {design.shape[1]} first-stage terms"
        )
    _check_rank(design)
    fit = sm.OLS(rows["half_a"].astype(float), design).fit(cov_type="HC1")
    low_power = n_cells < LOW_POWER_CELLS
    if low_power:
        _LOGGER.warning(f"First stage for {kind.value} uses only {n_cells} cells")
    return FirstStageResult(
        stat_kind=kind,
        slope=float(fit.params["half_b"]),
        se=float(fit.bse["half_b"]),
        n_cells=n_cells,
        low_power=low_power,
    )


def _wide(panel: pd.DataFrame) -> pd.DataFrame:
    duplicated = panel.duplicated(subset=["region_id", "period", "stat_kind"])
    if duplicated.any():
        keys = panel.loc[duplicated, ["region_id", "period", "stat_kind"]]
        raise DuplicateKeyError("panel cells", keys.itertuples(index=False, name=None))
    wide = panel.pivot(
        index=PANEL_INDEX, columns="stat_kind", values=["value", "half_a", "half_b"]
    )
    regions = sorted(panel["region_id"].unique())
    periods = sorted(panel["period"].unique())
    grid = pd.MultiIndex.from_product([regions, periods], names=PANEL_INDEX)
    return wide.reindex(grid)


def _design_frame(spec: RegressionSpec, panel: pd.DataFrame) -> pd.DataFrame:
    wide = _wide(panel)
    instrumented = set(spec.instrumented)

    def series(kind: StatKind, field: str, lagged: bool) -> pd.Series:
        key = (field, kind.value)
        if key not in wide.columns:
            raise ValidationError(f"Panel has no {field} values for {kind.value}")
        column = wide[key]
        if lagged:
            column = column.groupby(level="region_id").shift(1)
        return column

    columns: dict[str, pd.Series] = {"y": series(spec.dependent, "value", False)}
    for reg in spec.regressors:
        field = "half_a" if reg in instrumented else "value"
        columns[reg.name] = series(reg.kind, field, reg.lagged)
        if reg in instrumented:
            columns[f"{reg.name}_b"] = series(reg.kind, "half_b", reg.lagged)
    frame = pd.DataFrame(columns)
    if spec.design is Design.FIRST_DIFFERENCE:
        frame = frame - frame.groupby(level="region_id").shift(1)
    frame = frame.dropna()
    if frame.empty:
        raise InsufficientSampleError("No complete observations for the design")
    return frame


def regress(spec: RegressionSpec, panel: pd.DataFrame) -> RegressionResult:
    """Run a regional regression.

    OLS and split IV both go through ``linearmodels.iv.IV2SLS`` with robust
    (HC1) covariance. Period dummies implement time effects in both stages.

    Raises:
        CollinearityError: Naming the collinear columns.
        InsufficientSampleError: If no complete observations remain.
    """
    frame = _design_frame(spec, panel)
    instrumented = [r for r in spec.regressors if r in spec.instrumented]
    exogenous = [r for r in spec.regressors if r not in spec.instrumented]
    periods = frame.index.get_level_values("period")

    exog = pd.DataFrame({"const": 1.0}, index=frame.index)
    for reg in exogenous:
        exog[reg.name] = frame[reg.name]
    if "time" in spec.fixed_effects:
        dummies = _period_dummies(periods)
        dummies.index = frame.index
        exog = pd.concat([exog, dummies], axis=1)
    endog = frame[[r.name for r in instrumented]] if instrumented else None
    instruments = (
        frame[[f"{r.name}_b" for r in instrumented]] if instrumented else None
    )

    stage_two = exog if endog is None else pd.concat([exog, endog], axis=1)
    _check_rank(stage_two)
    if instruments is not None:
        _check_rank(pd.concat([exog, instruments], axis=1))
    n_params = stage_two.shape[1]
    if len(frame) <= n_params:
        raise InsufficientSampleError(
            f"{len(frame)} observations cannot identify {n_params} parameters"
        )

    fit = IV2SLS(frame["y"], exog, endog, instruments).fit(
        cov_type="robust", debiased=True
    )
    sd_y = float(frame["y"].std(ddof=1))
    coefficients: dict[str, Estimate] = {}
    betas: dict[str, float] = {}
    for reg in spec.regressors:
        value = float(fit.params[reg.name])
        coefficients[reg.name] = Estimate(value, float(fit.std_errors[reg.name]))
        sd_x = float(frame[reg.name].std(ddof=1))
        betas[reg.name] = value * sd_x / sd_y if sd_y > 0.0 else math.nan

    stage_one: dict[str, float] = {}
    f_stats: dict[str, float] = {}
    if instrumented:
        individual = fit.first_stage.individual
        diagnostics = fit.first_stage.diagnostics
        for reg in instrumented:
            stage_one[reg.name] = float(
                individual[reg.name].params[f"{reg.name}_b"]
            )
            f_stats[reg.name] = float(diagnostics.loc[reg.name, "f.stat"])
    weak = any(f < WEAK_F for f in f_stats.values())
    if weak:
        _LOGGER.warning(f"Weak first stage in {spec.dependent.value} model: {f_stats}")

    is_ols = spec.estimator is Estimator.OLS
    _LOGGER.debug(f"{spec.estimator.value} {spec.dependent.value}: {coefficients}")
    return RegressionResult(
        spec=spec,
        coefficients=coefficients,
        standardized_betas=betas,
        n=int(fit.nobs),
        r2=float(fit.rsquared) if is_ols else None,
        first_stage_coefficients=stage_one,
        first_stage_f=f_stats,
        weak_first_stage=weak,
    )


def persistence_battery(
    panel: pd.DataFrame, kinds: Sequence[StatKind] | None = None
) -> list[PersistenceRow]:
    """Persistence of each statistic on its own lag under OLS and split IV."""
    available = set(panel["stat_kind"].unique())
    chosen = kinds or [k for k in StatKind if k.value in available]
    rows = []
    for kind in chosen:
        lag = Regressor(kind, lagged=True)
        ols_spec = RegressionSpec(dependent=kind, regressors=(lag,))
        ols = regress(ols_spec, panel)
        ssiv = regress(ols_spec.with_estimator(Estimator.SPLIT_IV), panel)
        rows.append(
            PersistenceRow(
                stat_kind=kind,
                ols=ols.coefficient(lag),
                ssiv=ssiv.coefficient(lag),
                reliability=first_stage(kind, panel).slope,
            )
        )
        _LOGGER.info(
            f"Persistence {kind.value}: OLS {rows[-1].ols:.3f}, "
            f"split-IV {rows[-1].ssiv:.3f}"
        )
    return rows


def sorting_battery(
    panel: pd.DataFrame,
    inequality: StatKind = StatKind.FATHER_SD,
    child_inequality: StatKind = StatKind.SD,
) -> dict[str, RegressionResult]:
    """Child dispersion on sorting and sorting on parental dispersion."""
    results: dict[str, RegressionResult] = {}
    designs = {
        f"{child_inequality.value}_on_am": (child_inequality, StatKind.AM),
        f"am_on_{inequality.value}": (StatKind.AM, inequality),
    }
    for label, (dependent, regressor) in designs.items():
        spec = RegressionSpec(dependent=dependent, regressors=(Regressor(regressor),))
        results[f"{label}_ols"] = regress(spec, panel)
        results[f"{label}_ssiv"] = regress(
            spec.with_estimator(Estimator.SPLIT_IV), panel
        )
    return results


def gatsby_summary(
    panel: pd.DataFrame,
    inequality: StatKind = StatKind.FATHER_SD,
    level: StatKind = StatKind.FATHER_MEAN,
    dependent: StatKind = StatKind.IGC,
) -> GatsbyReport:
    """Inequality-immobility regressions and the share mediated by sorting.

    Levels and first differences of IGC on parental mean, dispersion and
    both. The mediation share is ``1 - b_with / b_without`` where the ``b``
    are split-IV dispersion coefficients with and without conditioning on
    assortative mating.
    """
    available = set(panel["stat_kind"].unique())
    regressor_sets: list[tuple[StatKind, ...]] = [(inequality,)]
    if level.value in available:
        regressor_sets = [(level,), (inequality,), (level, inequality)]
    else:
        _LOGGER.info(f"Panel has no {level.value}; running dispersion columns only")

    tables: dict[Design, list[RegressionResult]] = {}
    for design in (Design.LEVELS, Design.FIRST_DIFFERENCE):
        tables[design] = [
            regress(
                RegressionSpec(
                    dependent=dependent,
                    regressors=tuple(Regressor(k) for k in kinds),
                    design=design,
                ),
                panel,
            )
            for kinds in regressor_sets
        ]

    dispersion = Regressor(inequality)
    sorting = Regressor(StatKind.AM)
    without = regress(
        RegressionSpec(
            dependent=dependent,
            regressors=(dispersion,),
            estimator=Estimator.SPLIT_IV,
            instrumented=(dispersion,),
        ),
        panel,
    )
    with_sorting = regress(
        RegressionSpec(
            dependent=dependent,
            regressors=(dispersion, sorting),
            estimator=Estimator.SPLIT_IV,
            instrumented=(dispersion, sorting),
        ),
        panel,
    )
    b_without = without.coefficient(dispersion)
    b_with = with_sorting.coefficient(dispersion)
    share = 1.0 - b_with / b_without if b_without != 0.0 else math.nan
    _LOGGER.info(
        f"Dispersion coefficient {b_without:.4f} -> {b_with:.4f} with sorting "
        f"(mediated share {share:.3f})"
    )
    return GatsbyReport(
        levels=tuple(tables[Design.LEVELS]),
        changes=tuple(tables[Design.FIRST_DIFFERENCE]),
        without_sorting=without,
        with_sorting=with_sorting,
        mediation_share=share,
    )


def noise_sd_for_reliability(signal: pd.Series, reliability: float) -> float:
    """Half-sample noise SD giving a target first-stage slope.

    Reliability is measured against the within-period variance of the
    signal, which is what a regression with period effects sees.
    """
    if not 0.0 < reliability <= 1.0:
        raise ValidationError(f"Reliability must lie in (0, 1], got {reliability}")
    within = signal - signal.groupby(level="period").transform("mean")
    signal_var = float(within.var(ddof=1))
    return math.sqrt(signal_var * (1.0 - reliability) / reliability)


def simulate_noisy_panel(
    truth: pd.DataFrame,
    reliability: Mapping[StatKind, float],
    seed: int | np.random.Generator = 0,
    *,
    full_value: str = "mean",
    cell_size: int = 200,
) -> pd.DataFrame:
    """Turn true regional values into a panel with noisy half replicates.

    Args:
        truth: Index (region_id, period), one column per statistic value.
        reliability: First-stage reliability of each statistic; 1 means the
            halves equal the truth.
        seed: Seed or generator for the measurement noise.
        full_value: ``"mean"`` reports the average of the halves as the
            full-sample value, ``"first_half"`` reports half A.
        cell_size: Nominal ``n`` written to every cell.

    Returns:
        Long panel table.
    """
    if full_value not in ("mean", "first_half"):
        raise ValidationError(f"Unknown full_value rule {full_value!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    frames = []
    for kind in sorted(reliability, key=lambda k: k.value):
        signal = truth[kind.value]
        sd = noise_sd_for_reliability(signal, reliability[kind])
        a = signal + sd * rng.standard_normal(len(signal))
        b = signal + sd * rng.standard_normal(len(signal))
        value = (a + b) / 2.0 if full_value == "mean" else a
        frames.append(
            pd.DataFrame(
                {
                    "stat_kind": kind.value,
                    "value": value,
                    "n": cell_size,
                    "half_a": a,
                    "half_b": b,
                },
                index=truth.index,
            ).reset_index()
        )
    panel = pd.concat(frames, ignore_index=True)
    panel = panel[list(PANEL_COLUMNS)]
    return panel.sort_values(["region_id", "period", "stat_kind"], ignore_index=True)


def _cell_index(n_regions: int, n_periods: int) -> pd.MultiIndex:
    regions = [f"r{i:03d}" for i in range(n_regions)]
    periods = list(range(n_periods))
    return pd.MultiIndex.from_product([regions, periods], names=PANEL_INDEX)


def attenuation_experiment(
    reliability: float,
    beta: float = 0.5,
    *,
    n_regions: int = 50,
    n_periods: int = 10,
    reps: int = 500,
    seed: int = 0,
) -> AttenuationReport:
    """Single-regressor Monte Carlo of attenuation and its split-IV repair.

    The regressor is observed on half A with the given reliability, so the
    OLS slope converges to ``beta * reliability`` while split IV stays
    centred on ``beta``.
    """
    index = _cell_index(n_regions, n_periods)
    x_kind, y_kind = StatKind.SD, StatKind.IGC
    regressor = Regressor(x_kind)
    ols_spec = RegressionSpec(dependent=y_kind, regressors=(regressor,))
    iv_spec = ols_spec.with_estimator(Estimator.SPLIT_IV)
    streams = np.random.SeedSequence(seed).spawn(reps)
    ols: list[float] = []
    iv: list[float] = []
    iv_se: list[float] = []
    stage: list[float] = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        period_effect = rng.standard_normal(n_periods)[index.codes[1]]
        x = rng.standard_normal(len(index))
        y = beta * x + period_effect + 0.5 * rng.standard_normal(len(index))
        truth = pd.DataFrame({x_kind.value: x, y_kind.value: y}, index=index)
        panel = simulate_noisy_panel(
            truth, {x_kind: reliability, y_kind: 1.0}, rng, full_value="first_half"
        )
        ols.append(regress(ols_spec, panel).coefficient(regressor))
        fit = regress(iv_spec, panel)
        iv.append(fit.coefficient(regressor))
        iv_se.append(fit.coefficients[regressor.name].se)
        stage.append(first_stage(x_kind, panel).slope)
    report = AttenuationReport(
        reliability=reliability,
        beta=beta,
        ols_mean=float(np.mean(ols)),
        ssiv_mean=float(np.mean(iv)),
        ssiv_se=float(np.mean(iv_se)),
        first_stage_mean=float(np.mean(stage)),
        reps=reps,
    )
    _LOGGER.info(
        f"Reliability {reliability}: OLS/beta {report.attenuation:.3f}, "
        f"split-IV {report.ssiv_mean:.3f} (beta {beta})"
    )
    return report


def contamination_experiment(
    beta_precise: float = 0.06,
    beta_noisy: float = 0.4,
    *,
    correlation: float = 0.5,
    reliability_precise: float = 0.96,
    reliability_noisy: float = 0.25,
    outcome_sd: float = 0.1,
    n_regions: int = 100,
    n_periods: int = 10,
    reps: int = 200,
    seed: int = 0,
) -> ContaminationReport:
    """Two correlated regressors, one precise and one noisy.

    OLS attenuates the noisy coefficient and lets the precise regressor
    absorb part of its effect; split IV recovers both. The oracle is the
    textbook probability limit ``inv(S_measured) @ S_true @ beta`` with
    variances measured within periods.
    """
    if not -1.0 < correlation < 1.0:
        raise ValidationError("correlation must lie in (-1, 1)")
    index = _cell_index(n_regions, n_periods)
    precise, noisy, outcome = StatKind.SD, StatKind.AM, StatKind.IGC
    regressors = (Regressor(precise), Regressor(noisy))
    ols_spec = RegressionSpec(dependent=outcome, regressors=regressors)
    iv_spec = ols_spec.with_estimator(Estimator.SPLIT_IV)
    beta = np.array([beta_precise, beta_noisy])
    s_true = np.array([[1.0, correlation], [correlation, 1.0]])
    noise_var = np.array(
        [
            (1.0 - reliability_precise) / reliability_precise,
            (1.0 - reliability_noisy) / reliability_noisy,
        ]
    )
    oracle = np.linalg.solve(s_true + np.diag(noise_var), s_true @ beta)

    ols: list[list[float]] = []
    iv: list[list[float]] = []
    iv_se: list[list[float]] = []
    for stream in np.random.SeedSequence(seed).spawn(reps):
        rng = np.random.default_rng(stream)
        x1 = rng.standard_normal(len(index))
        spread = math.sqrt(1.0 - correlation**2)
        x2 = correlation * x1 + spread * rng.standard_normal(len(index))
        y = beta[0] * x1 + beta[1] * x2 + outcome_sd * rng.standard_normal(len(index))
        truth = pd.DataFrame(
            {precise.value: x1, noisy.value: x2, outcome.value: y}, index=index
        )
        panel = simulate_noisy_panel(
            truth,
            {
                precise: reliability_precise,
                noisy: reliability_noisy,
                outcome: 1.0,
            },
            rng,
            full_value="first_half",
        )
        ols_fit = regress(ols_spec, panel)
        iv_fit = regress(iv_spec, panel)
        ols.append([ols_fit.coefficient(r) for r in regressors])
        iv.append([iv_fit.coefficient(r) for r in regressors])
        iv_se.append([iv_fit.coefficients[r.name].se for r in regressors])
    ols_mean = np.mean(ols, axis=0)
    iv_mean = np.mean(iv, axis=0)
    se_mean = np.mean(iv_se, axis=0)
    _LOGGER.info(
        f"Contamination: OLS {ols_mean.round(4)}, split-IV {iv_mean.round(4)}, "
        f"truth {beta}"
    )
    return ContaminationReport(
        truth=(float(beta[0]), float(beta[1])),
        ols=(float(ols_mean[0]), float(ols_mean[1])),
        ssiv=(float(iv_mean[0]), float(iv_mean[1])),
        ssiv_se=(float(se_mean[0]), float(se_mean[1])),
        oracle=(float(oracle[0]), float(oracle[1])),
        reps=reps,
    )
