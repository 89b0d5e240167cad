"""Experiment configuration.

A configuration is a YAML document read with ``yaml.safe_load`` and turned
into frozen dataclasses. Every section rejects keys it does not know, so a
typo fails before any work starts instead of silently falling back to a
default.
"""

from __future__ import annotations

import hashlib
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, TypeVar

import yaml

from .calibration import CORESIDENCE_AGES, CORESIDENCE_PERIODS, CORESIDENCE_SURVEY_YEARS
from .exceptions import ConfigError, ValidationError
from .model import (
    DEFAULT_COMPLETION_PROFILE,
    Design,
    Estimator,
    FeedbackKind,
    FeedbackSpec,
    LeaveHomeSchedule,
    MeanRule,
    ModelParams,
    ObservationRule,
    ParentVariable,
    PeriodScheme,
    PopulationConfig,
    RegressionSpec,
    Regressor,
    StatKind,
)
from .regional import DEFAULT_STRATA, MIN_CELL, MIN_HALF
from .registry import default_registry

_LOGGER = logging.getLogger(__name__)

_T = TypeVar("_T")
_E = TypeVar("_E", bound=Enum)

DEFAULT_OBSERVATION: tuple[ObservationRule, ...] = (ObservationRule(measure_age=30),)


@dataclass(frozen=True)
class ModelSection:
    """Dynamics run: first-generation parameters, feedback and paths."""

    params: ModelParams = field(
        default_factory=lambda: ModelParams(lam=0.6, rho=0.6, sigma_eps2=1.0)
    )
    feedback: FeedbackSpec = field(default_factory=FeedbackSpec)
    generations: int = 6
    initial_variance: float | None = None
    lambda_path: tuple[float, ...] | None = None
    slope_path: tuple[float, ...] | None = None


@dataclass(frozen=True)
class PanelSection:
    """How microdata become a regional panel."""

    scheme: PeriodScheme = field(default_factory=PeriodScheme)
    measure_age: int | None = None
    kinds: tuple[StatKind, ...] = tuple(StatKind)
    parent: ParentVariable = ParentVariable.FATHER
    min_cell: int = MIN_CELL
    min_half: int = MIN_HALF
    strata: tuple[str, ...] = DEFAULT_STRATA
    registry: Path | None = None


@dataclass(frozen=True)
class BiasLabSection:
    """Ages, survey years and windows of the coresidence bias lab."""

    ages: tuple[int, ...] = CORESIDENCE_AGES
    benchmark_age: int = 30
    survey_years: tuple[int, ...] = CORESIDENCE_SURVEY_YEARS
    periods: tuple[tuple[int, int], ...] = CORESIDENCE_PERIODS
    proxy_age: int = 16
    exact_shares: bool = False
    parent: ParentVariable = ParentVariable.FATHER


@dataclass(frozen=True)
class PanelDgpSection:
    """Synthetic panel used by ``regress`` when no panel file is given."""

    kind: str = "vicious_cycle"
    n_regions: int = 107
    n_periods: int = 40


@dataclass(frozen=True)
class Target:
    """A calibration target checked by ``report``.

    Either ``value`` with ``tolerance`` or a ``minimum``/``maximum`` bound.
    """

    metric: str
    value: float | None = None
    tolerance: float = 0.0
    minimum: float | None = None
    maximum: float | None = None

    def check(self, observed: float) -> bool:
        """Return True when ``observed`` satisfies the target."""
        if self.value is not None and abs(observed - self.value) > self.tolerance:
            return False
        if self.minimum is not None and observed < self.minimum:
            return False
        return self.maximum is None or observed <= self.maximum


_CALIBRATED_PERIOD = "-".join(str(year) for year in CORESIDENCE_PERIODS[0])

# Checked by `report` when a configuration declares no targets of its own.
DEFAULT_TARGETS: tuple[Target, ...] = (
    Target(
        f"bias-lab.argmin_abs_diff_igc_{_CALIBRATED_PERIOD}", minimum=23, maximum=27
    ),
    Target(f"bias-lab.min_abs_diff_igc_{_CALIBRATED_PERIOD}", maximum=0.03),
    Target("regress.mediation_share", value=0.5, tolerance=0.15),
)


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete experiment description."""

    seed: int = 0
    output_dir: Path = Path("runs")
    model: ModelSection = field(default_factory=ModelSection)
    population: PopulationConfig | None = None
    observation: tuple[ObservationRule, ...] = DEFAULT_OBSERVATION
    panel: PanelSection = field(default_factory=PanelSection)
    bias_lab: BiasLabSection = field(default_factory=BiasLabSection)
    regressions: tuple[RegressionSpec, ...] = ()
    panel_dgp: PanelDgpSection = field(default_factory=PanelDgpSection)
    targets: tuple[Target, ...] = ()
    digest: str = ""

    def with_overrides(
        self,
        seed: int | None = None,
        output_dir: str | Path | None = None,
    ) -> ExperimentConfig:
        """Apply command-line overrides of the seed and output directory."""
        config = self
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"seed must be non-negative, got {seed}")
            population = (
                replace(config.population, seed=seed)
                if config.population is not None
                else None
            )
            config = replace(config, seed=seed, population=population)
        if output_dir is not None:
            config = replace(config, output_dir=Path(output_dir))
        return config


PANEL_DGP_KINDS = (
    "vicious_cycle",
    "no_sorting",
    "persistent_regions",
    "model_feedback",
)


def _section(raw: Any, name: str, allowed: set[str]) -> dict[str, Any]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"Section '{name}' must be a mapping")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"Unknown key '{unknown[0]}' in section '{name}'")
    return dict(raw)


def _enum(kind: type[_E], value: Any, where: str) -> _E:
    try:
        return kind(value)
    except ValueError:
        choices = ", ".join(str(m.value) for m in kind)
        raise ConfigError(f"{where}: {value!r} is not one of {choices}") from None


def _build(where: str, factory: Callable[..., _T], **kwargs: Any) -> _T:
    try:
        return factory(**kwargs)
    except ConfigError:
        raise
    except (ValidationError, TypeError) as err:
        raise ConfigError(f"{where}: {err}") from err


def _int_range(raw: Any, where: str) -> tuple[int, ...]:
    """Accept a list of ints or ``{first, last}``."""
    if isinstance(raw, Mapping):
        bounds = _section(raw, where, {"first", "last"})
        try:
            return tuple(range(int(bounds["first"]), int(bounds["last"]) + 1))
        except KeyError as err:
            raise ConfigError(f"{where}: missing '{err.args[0]}'") from None
    if isinstance(raw, list | tuple):
        return tuple(int(v) for v in raw)
    raise ConfigError(f"{where} must be a list or a first/last mapping")


def _hazards(raw: Any) -> dict[int, float]:
    """Hazard tables keyed by age or by an inclusive ``"a-b"`` range."""
    if not isinstance(raw, Mapping):
        raise ConfigError("population.leave_home.hazards must be a mapping")
    hazards: dict[int, float] = {}
    for key, value in raw.items():
        text = str(key)
        try:
            if "-" in text:
                lo, hi = (int(part) for part in text.split("-", 1))
                ages = range(lo, hi + 1)
            else:
                ages = range(int(text), int(text) + 1)
        except ValueError:
            raise ConfigError(f"Bad hazard age {key!r}") from None
        for age in ages:
            hazards[age] = float(value)
    return hazards


_PARAM_KEYS = {"lam", "rho", "sigma_eps2", "mu", "mean_rule", "drift"}
_FEEDBACK_KEYS = {
    "kind",
    "rho",
    "intercept",
    "slope",
    "lower",
    "upper",
    "steepness",
    "midpoint",
}


def _model_params(raw: Mapping[str, Any], where: str) -> ModelParams:
    values = {k: raw[k] for k in _PARAM_KEYS & set(raw)}
    if "mean_rule" in values:
        values["mean_rule"] = _enum(MeanRule, values["mean_rule"], where)
    missing = {"lam", "rho", "sigma_eps2"} - set(values)
    if missing:
        raise ConfigError(f"{where}: missing {sorted(missing)}")
    return _build(where, ModelParams, **values)


def _model(raw: Any) -> ModelSection:
    keys = _PARAM_KEYS | {
        "feedback",
        "generations",
        "initial_variance",
        "lambda_path",
        "slope_path",
    }
    data = _section(raw, "model", keys)
    if not data:
        return ModelSection()
    params = _model_params(data, "model")
    feedback_raw = _section(data.get("feedback"), "model.feedback", _FEEDBACK_KEYS)
    if "kind" in feedback_raw:
        feedback_raw["kind"] = _enum(
            FeedbackKind, feedback_raw["kind"], "model.feedback"
        )
    feedback = _build("model.feedback", FeedbackSpec, **feedback_raw)

    def path(name: str) -> tuple[float, ...] | None:
        value = data.get(name)
        return None if value is None else tuple(float(v) for v in value)

    initial = data.get("initial_variance")
    return ModelSection(
        params=params,
        feedback=feedback,
        generations=int(data.get("generations", 6)),
        initial_variance=None if initial is None else float(initial),
        lambda_path=path("lambda_path"),
        slope_path=path("slope_path"),
    )


def _population(raw: Any, model: ModelParams, seed: int) -> PopulationConfig | None:
    keys = {
        "n_per_region_cohort",
        "regions",
        "cohorts",
        "model_by_cohort",
        "parent_variance",
        "leave_home",
        "completion_profile",
        "completion_delay_probs",
    }
    data = _section(raw, "population", keys)
    if not data:
        return None
    regions = data.get("regions", "all")
    if regions == "all":
        region_ids = default_registry().ids
    elif isinstance(regions, list):
        region_ids = tuple(str(r) for r in regions)
    else:
        raise ConfigError("population.regions must be 'all' or a list of ids")

    by_cohort: dict[int, ModelParams] = {}
    for cohort, params in (data.get("model_by_cohort") or {}).items():
        where = f"population.model_by_cohort.{cohort}"
        by_cohort[int(cohort)] = _model_params(
            _section(params, where, _PARAM_KEYS), where
        )
    leave = _section(
        data.get("leave_home"),
        "population.leave_home",
        {"hazards", "education_gradient", "start_age", "max_age"},
    )
    if "hazards" in leave:
        leave["hazards"] = _hazards(leave["hazards"])
    profile = data.get("completion_profile")
    completion_profile = (
        dict(DEFAULT_COMPLETION_PROFILE)
        if profile is None
        else {int(k): int(v) for k, v in profile.items()}
    )
    probs = tuple(float(p) for p in data.get("completion_delay_probs", (1.0,)))
    parent_variance = data.get("parent_variance")
    return _build(
        "population",
        PopulationConfig,
        n_per_region_cohort=int(data.get("n_per_region_cohort", 1000)),
        regions=region_ids,
        cohorts=_int_range(data.get("cohorts", []), "population.cohorts"),
        model=model,
        model_by_cohort=by_cohort,
        parent_variance=None if parent_variance is None else float(parent_variance),
        leave_home=_build("population.leave_home", LeaveHomeSchedule, **leave),
        completion_profile=completion_profile,
        completion_delay_probs=probs,
        seed=seed,
    )


def _observation(raw: Any) -> tuple[ObservationRule, ...]:
    if raw is None:
        return DEFAULT_OBSERVATION
    if not isinstance(raw, list) or not raw:
        raise ConfigError("Section 'observation' must be a non-empty list")
    rules = []
    for i, item in enumerate(raw):
        where = f"observation[{i}]"
        data = _section(item, where, {"measure_age", "coresident_only", "survey_year"})
        rules.append(_build(where, ObservationRule, **data))
    return tuple(rules)


def _panel(raw: Any) -> PanelSection:
    keys = {
        "period_width",
        "period_origin",
        "measure_age",
        "kinds",
        "parent",
        "min_cell",
        "min_half",
        "strata",
        "registry",
    }
    data = _section(raw, "panel", keys)
    scheme = _build(
        "panel",
        PeriodScheme,
        width=int(data.get("period_width", 10)),
        origin=int(data.get("period_origin", 1900)),
    )
    kinds = tuple(
        _enum(StatKind, k, "panel.kinds") for k in data.get("kinds", [])
    ) or tuple(StatKind)
    registry = data.get("registry")
    measure_age = data.get("measure_age")
    return PanelSection(
        scheme=scheme,
        measure_age=None if measure_age is None else int(measure_age),
        kinds=kinds,
        parent=_enum(ParentVariable, data.get("parent", "father"), "panel.parent"),
        min_cell=int(data.get("min_cell", MIN_CELL)),
        min_half=int(data.get("min_half", MIN_HALF)),
        strata=tuple(str(s) for s in data.get("strata", DEFAULT_STRATA)),
        registry=None if registry is None else Path(registry),
    )


def _bias_lab(raw: Any) -> BiasLabSection:
    keys = {
        "ages",
        "benchmark_age",
        "survey_years",
        "periods",
        "proxy_age",
        "exact_shares",
        "parent",
    }
    data = _section(raw, "bias_lab", keys)
    defaults = BiasLabSection()
    periods = defaults.periods
    if "periods" in data:
        try:
            periods = tuple((int(lo), int(hi)) for lo, hi in data["periods"])
        except (TypeError, ValueError):
            message = "bias_lab.periods must list [first, last] pairs"
            raise ConfigError(message) from None
    ages = defaults.ages
    if "ages" in data:
        ages = _int_range(data["ages"], "bias_lab.ages")
    return BiasLabSection(
        ages=ages,
        benchmark_age=int(data.get("benchmark_age", defaults.benchmark_age)),
        survey_years=(
            _int_range(data["survey_years"], "bias_lab.survey_years")
            if "survey_years" in data
            else defaults.survey_years
        ),
        periods=periods,
        proxy_age=int(data.get("proxy_age", defaults.proxy_age)),
        exact_shares=bool(data.get("exact_shares", defaults.exact_shares)),
        parent=_enum(ParentVariable, data.get("parent", "father"), "bias_lab.parent"),
    )


def _regressor(raw: Any, where: str) -> Regressor:
    text = str(raw)
    lagged = text.endswith("_lag")
    kind = text[: -len("_lag")] if lagged else text
    return Regressor(_enum(StatKind, kind, where), lagged=lagged)


def _regressions(raw: Any) -> tuple[RegressionSpec, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError("Section 'regressions' must be a list")
    specs = []
    keys = {
        "dependent",
        "regressors",
        "design",
        "fixed_effects",
        "estimator",
        "instrumented",
    }
    for i, item in enumerate(raw):
        where = f"regressions[{i}]"
        data = _section(item, where, keys)
        if "dependent" not in data or "regressors" not in data:
            raise ConfigError(f"{where}: 'dependent' and 'regressors' are required")
        regressors = tuple(_regressor(r, where) for r in data["regressors"])
        estimator = _enum(Estimator, data.get("estimator", "ols"), where)
        instrumented_raw = data.get("instrumented")
        if instrumented_raw is None or instrumented_raw == "all":
            instrumented = regressors if estimator is Estimator.SPLIT_IV else ()
        else:
            instrumented = tuple(_regressor(r, where) for r in instrumented_raw)
        specs.append(
            _build(
                where,
                RegressionSpec,
                dependent=_enum(StatKind, data["dependent"], where),
                regressors=regressors,
                design=_enum(Design, data.get("design", "levels"), where),
                fixed_effects=tuple(data.get("fixed_effects", ["time"])),
                estimator=estimator,
                instrumented=instrumented,
            )
        )
    return tuple(specs)


def _panel_dgp(raw: Any) -> PanelDgpSection:
    data = _section(raw, "panel_dgp", {"kind", "n_regions", "n_periods"})
    section = PanelDgpSection(
        kind=str(data.get("kind", "vicious_cycle")),
        n_regions=int(data.get("n_regions", 107)),
        n_periods=int(data.get("n_periods", 40)),
    )
    if section.kind not in PANEL_DGP_KINDS:
        choices = ", ".join(PANEL_DGP_KINDS)
        raise ConfigError(f"panel_dgp.kind {section.kind!r} is not one of {choices}")
    return section


def _targets(raw: Any) -> tuple[Target, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError("Section 'targets' must be a list")
    targets = []
    for i, item in enumerate(raw):
        where = f"targets[{i}]"
        data = _section(item, where, {"metric", "value", "tolerance", "min", "max"})
        if "metric" not in data:
            raise ConfigError(f"{where}: 'metric' is required")
        if "value" not in data and "min" not in data and "max" not in data:
            raise ConfigError(f"{where}: give 'value' or a 'min'/'max' bound")
        targets.append(
            Target(
                metric=str(data["metric"]),
                value=None if data.get("value") is None else float(data["value"]),
                tolerance=float(data.get("tolerance", 0.0)),
                minimum=None if data.get("min") is None else float(data["min"]),
                maximum=None if data.get("max") is None else float(data["max"]),
            )
        )
    return tuple(targets)


_TOP_LEVEL = {
    "seed",
    "output_dir",
    "model",
    "population",
    "observation",
    "panel",
    "bias_lab",
    "regressions",
    "panel_dgp",
    "targets",
}


def parse_config(
    document: Mapping[str, Any] | None, digest: str = ""
) -> ExperimentConfig:
    """Validate a parsed YAML document.

    Raises:
        ConfigError: On the first unknown key or invalid value.
    """
    data = _section(document, "top level", _TOP_LEVEL)
    try:
        return _experiment(data, digest)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Invalid value: {err}") from err


def _experiment(data: Mapping[str, Any], digest: str) -> ExperimentConfig:
    seed = int(data.get("seed", 0))
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    model = _model(data.get("model"))
    return ExperimentConfig(
        seed=seed,
        output_dir=Path(data.get("output_dir", "runs")),
        model=model,
        population=_population(data.get("population"), model.params, seed),
        observation=_observation(data.get("observation")),
        panel=_panel(data.get("panel")),
        bias_lab=_bias_lab(data.get("bias_lab")),
        regressions=_regressions(data.get("regressions")),
        panel_dgp=_panel_dgp(data.get("panel_dgp")),
        targets=_targets(data.get("targets")),
        digest=digest,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a YAML experiment configuration.

    The returned config carries the SHA-256 digest of the file contents.

    Raises:
        ConfigError: If the file is not valid YAML or fails validation.
        OSError: If the file cannot be read.
    """
    raw = Path(path).read_bytes()
    try:
        document = yaml.safe_load(raw)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from err
    config = parse_config(document, hashlib.sha256(raw).hexdigest())
    _LOGGER.info(f"Loaded config {path} (digest {config.digest[:12]})")
    return config
