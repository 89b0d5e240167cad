"""Command-line driver for reproducible experiments.

Each subcommand reads a YAML configuration, writes CSV/JSON outputs into the
output directory and records their SHA-256 digests and headline metrics in
``manifest.json``. ``report`` re-hashes the recorded files and checks the
declared calibration targets, or the calibrated defaults when none are
declared.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or data
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from collections.abc import Callable, Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Any

import pandas as pd

from . import __version__
from .calibration import (
    model_feedback_panel,
    no_sorting_panel,
    persistent_regions_panel,
    vicious_cycle_panel,
)
from .config import DEFAULT_TARGETS, ExperimentConfig, Target, load_config
from .coresidence import (
    bias_by_age,
    bias_reduction_summary,
    bias_reports_frame,
    coresidence_share,
    hilger_comparison,
    parallel_trends_table,
    smooth_cohorts_check,
)
from .data_io import (
    atomic_write,
    read_microdata,
    read_panel,
    write_csv,
    write_microdata,
    write_panel,
)
from .dynamics import simulate_dynamics
from .estimators import moving_average_3yr, spousal_correlation
from .exceptions import EstimationError, MobilityLabError, ValidationError
from .model import AgeRule, ObservationRule, RegressionResult, Sex, StatKind
from .population import generate_population, observe
from .regional import (
    cell_statistic,
    compute_panel,
    first_stage,
    gatsby_summary,
    persistence_battery,
    regress,
)
from .registry import default_registry, read_registry

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

MANIFEST = "manifest.json"
TREND_KINDS = (StatKind.MEAN, StatKind.SD, StatKind.CV, StatKind.IGC, StatKind.IGR)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _clean(value: Any) -> Any:
    """Make a value JSON-safe: NaN becomes null, numpy scalars become floats."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _write_json(payload: Any, path: Path) -> None:
    text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def _read_manifest(out: Path) -> dict[str, Any]:
    path = out / MANIFEST
    if not path.exists():
        return {}
    data: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
    return data


def _record(
    config: ExperimentConfig,
    command: str,
    outputs: Sequence[Path],
    metrics: dict[str, Any],
) -> None:
    """Merge a command's outputs and metrics into the run manifest."""
    out = config.output_dir
    manifest = _read_manifest(out)
    manifest["config_digest"] = config.digest
    manifest["seed"] = config.seed
    manifest["targets"] = [asdict(t) for t in config.targets]
    commands = manifest.setdefault("commands", {})
    commands[command] = {
        "outputs": {p.name: _file_digest(p) for p in sorted(outputs)},
        "metrics": metrics,
    }
    _write_json(manifest, out / MANIFEST)
    for path in sorted(outputs):
        print(f"{path}  sha256={_file_digest(path)}")
    print(f"seed={config.seed} config_digest={config.digest}")


def _microdata(
    config: ExperimentConfig, path: str | None, threads: int
) -> pd.DataFrame:
    source = Path(path) if path else config.output_dir / "microdata.csv"
    if source.exists():
        return read_microdata(source)
    if config.population is None:
        raise ValidationError(
            f"No microdata at {source} and no population section to generate one"
        )
    _LOGGER.info(f"{source} not found; generating the configured population")
    return generate_population(config.population, threads=threads)


def cmd_simulate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Run the dynamics and, when configured, synthesize microdata."""
    out = config.output_dir
    section = config.model
    moments = simulate_dynamics(
        section.params,
        section.feedback,
        section.generations,
        initial_variance=section.initial_variance,
        lambda_path=section.lambda_path,
        slope_path=section.slope_path,
    )
    moments_path = out / "moments.csv"
    write_csv(pd.DataFrame([asdict(m) for m in moments]), moments_path)
    outputs = [moments_path]
    metrics: dict[str, Any] = {
        "variance_first": moments[0].variance,
        "variance_last": moments[-1].variance,
        "rho_first": moments[0].rho_used,
        "rho_last": moments[-1].rho_used,
        "slope_first": moments[0].slope_to_child,
        "slope_last": moments[-1].slope_to_child,
    }
    if config.population is not None:
        population = generate_population(config.population, threads=args.threads)
        microdata_path = out / "microdata.csv"
        write_microdata(population, microdata_path)
        outputs.append(microdata_path)
        metrics["population_rows"] = len(population)
        try:
            metrics["spousal_correlation_latent"] = spousal_correlation(
                population, column="edu_latent"
            ).value
        except EstimationError as err:
            _LOGGER.warning(f"Spousal correlation unavailable: {err}")
    _record(config, "simulate", outputs, metrics)
    return EXIT_OK


def _trend_rows(
    frame: pd.DataFrame, rule: ObservationRule, sex: str, cohort_am: dict[int, float]
) -> list[dict[str, Any]]:
    rows = []
    for cohort, group in frame.groupby("cohort", sort=True):
        row: dict[str, Any] = {
            "measure_age": rule.measure_age,
            "coresident_only": rule.coresident_only,
            "sex": sex,
            "cohort": int(cohort),
            "n": len(group),
        }
        for kind in TREND_KINDS:
            row[kind.value] = cell_statistic(group, kind)[0]
        row[StatKind.AM.value] = cohort_am.get(int(cohort), math.nan)
        rows.append(row)
    table = pd.DataFrame(rows)
    for kind in (*TREND_KINDS, StatKind.AM):
        series = {
            int(c): float(v)
            for c, v in zip(table["cohort"], table[kind.value], strict=True)
            if math.isfinite(v)
        }
        smoothed = moving_average_3yr(series)
        table[f"{kind.value}_ma3"] = [
            smoothed.get(int(c), math.nan) for c in table["cohort"]
        ]
    return list(table.to_dict("records"))


def cmd_estimate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Per-cohort national trends under every observation rule."""
    microdata = _microdata(config, args.microdata, args.threads)
    rows: list[dict[str, Any]] = []
    metrics: dict[str, Any] = {}
    for rule in config.observation:
        observed = observe(microdata, rule)
        if observed.empty:
            _LOGGER.warning(f"No rows observed at age {rule.measure_age}")
            continue
        cohort_am: dict[int, float] = {}
        for cohort in sorted(observed["cohort"].unique()):
            try:
                qualify = AgeRule(rule.measure_age, int(cohort) + rule.measure_age)
                cohort_am[int(cohort)] = spousal_correlation(microdata, qualify).value
            except EstimationError as err:
                _LOGGER.debug(f"No spousal correlation for cohort {cohort}: {err}")
        overall = _trend_rows(observed, rule, "all", cohort_am)
        rows += overall
        if args.by_sex:
            for sex, group in observed.groupby("sex", sort=True):
                rows += _trend_rows(group, rule, str(sex), cohort_am)
        suffix = "_coresident" if rule.coresident_only else ""
        label = f"age{rule.measure_age}{suffix}"
        igc_values = pd.Series([r["igc"] for r in overall], dtype=float)
        metrics[f"igc_mean_{label}"] = float(igc_values.mean())
    path = config.output_dir / "national_trends.csv"
    write_csv(pd.DataFrame(rows), path)
    _record(config, "estimate", [path], metrics)
    return EXIT_OK


SHARE_GROUPS: tuple[tuple[str, Sex | None], ...] = (
    ("all", None),
    ("male", Sex.MALE),
    ("female", Sex.FEMALE),
)


def _coresidence_shares(
    population: pd.DataFrame, ages: Sequence[int]
) -> pd.DataFrame:
    rows = []
    for age in sorted(ages):
        for label, sex in SHARE_GROUPS:
            try:
                share = coresidence_share(population, age, sex)
            except EstimationError:
                share = math.nan
            rows.append({"age": age, "sex": label, "share": share})
    return pd.DataFrame(rows, columns=["age", "sex", "share"])


def cmd_bias_lab(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Coresidence bias by age and the share-reweighting correction."""
    population = _microdata(config, args.microdata, args.threads)
    lab = config.bias_lab
    profile = config.population.completion_profile if config.population else None
    reports = bias_by_age(
        population,
        lab.ages,
        lab.benchmark_age,
        periods=lab.periods,
        parent=lab.parent,
        completion_profile=profile,
    )
    comparison = hilger_comparison(
        population,
        lab.ages,
        lab.survey_years,
        proxy_age=lab.proxy_age,
        exact_shares=lab.exact_shares,
        parent=lab.parent,
        completion_profile=profile,
    )
    trends = parallel_trends_table(
        population,
        lab.ages,
        lab.survey_years,
        parent=lab.parent,
        completion_profile=profile,
    )
    smooth = smooth_cohorts_check(
        population,
        lab.ages,
        lab.survey_years,
        proxy_age=lab.proxy_age,
        parent=lab.parent,
    )
    reduction = bias_reduction_summary(comparison)
    shares = _coresidence_shares(population, lab.ages)

    out = config.output_dir
    bias = bias_reports_frame(reports)
    tables = {
        "bias_by_age.csv": bias,
        "hilger_comparison.csv": comparison,
        "bias_reduction.csv": reduction,
        "parallel_trends.csv": trends,
        "smooth_cohorts.csv": smooth,
        "coresidence_shares.csv": shares,
    }
    for name, table in tables.items():
        write_csv(table, out / name)

    metrics: dict[str, Any] = {}
    for period, group in bias.groupby("period", sort=True):
        best = group.loc[group["abs_diff_igc"].idxmin()]
        metrics[f"argmin_abs_diff_igc_{period}"] = int(best["age"])
        metrics[f"min_abs_diff_igc_{period}"] = float(best["abs_diff_igc"])
        for _, row in group.iterrows():
            metrics[f"abs_diff_igc_{period}_age{int(row['age'])}"] = float(
                row["abs_diff_igc"]
            )
    if not comparison.empty:
        gap_dep = comparison["igr_dependent"] - comparison["igr_benchmark"]
        gap_cor = comparison["igr_corrected"] - comparison["igr_benchmark"]
        metrics["hilger_mean_abs_gap_dependent"] = float(gap_dep.abs().mean())
        metrics["hilger_mean_abs_gap_corrected"] = float(gap_cor.abs().mean())
        metrics["hilger_mean_reduction"] = float(reduction["reduction"].mean())
    if not trends.empty:
        t_gamma = (trends["gamma"] / trends["gamma_se"]).abs()
        metrics["parallel_trends_cells"] = len(trends)
        metrics["parallel_trends_gamma_rejections"] = int((t_gamma > 1.96).sum())
    if not smooth.empty:
        metrics["smooth_cohorts_max_share_gap"] = float(smooth["max_share_gap"].max())
    _record(config, "bias-lab", [out / name for name in tables], metrics)
    return EXIT_OK


def cmd_panel(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Regional panel with split-half replicates."""
    microdata = _microdata(config, args.microdata, args.threads)
    section = config.panel
    registry_path = args.registry or section.registry
    registry = read_registry(registry_path) if registry_path else default_registry()
    rule = ObservationRule(section.measure_age) if section.measure_age else None
    profile = config.population.completion_profile if config.population else None
    panel = compute_panel(
        microdata,
        registry,
        section.scheme,
        rule=rule,
        kinds=section.kinds,
        parent=section.parent,
        min_cell=section.min_cell,
        min_half=section.min_half,
        strata=section.strata,
        seed=config.seed,
        completion_profile=profile,
        threads=args.threads,
    )
    path = config.output_dir / "panel.csv"
    write_panel(panel, path)
    metrics: dict[str, Any] = {"cells": len(panel)}
    for kind in section.kinds:
        try:
            metrics[f"reliability_{kind.value}"] = first_stage(kind, panel).slope
        except EstimationError as err:
            _LOGGER.warning(f"No first stage for {kind.value}: {err}")
    _record(config, "panel", [path], metrics)
    return EXIT_OK


_PANEL_DGPS: dict[str, Callable[..., pd.DataFrame]] = {
    "vicious_cycle": vicious_cycle_panel,
    "no_sorting": no_sorting_panel,
    "persistent_regions": persistent_regions_panel,
}


def _regression_panel(config: ExperimentConfig, path: str | None) -> pd.DataFrame:
    source = Path(path) if path else config.output_dir / "panel.csv"
    if path or source.exists():
        return read_panel(source)
    dgp = config.panel_dgp
    _LOGGER.info(f"No panel at {source}; generating the {dgp.kind} panel")
    if dgp.kind == "model_feedback":
        return model_feedback_panel(
            dgp.n_regions,
            dgp.n_periods,
            params=config.model.params,
            feedback=config.model.feedback,
            seed=config.seed,
        )
    return _PANEL_DGPS[dgp.kind](dgp.n_regions, dgp.n_periods, seed=config.seed)


def regression_record(result: RegressionResult) -> dict[str, Any]:
    """JSON-ready view of a regression result."""
    spec = result.spec
    return {
        "dependent": spec.dependent.value,
        "regressors": [r.name for r in spec.regressors],
        "design": spec.design.value,
        "fixed_effects": list(spec.fixed_effects),
        "estimator": spec.estimator.value,
        "instrumented": [r.name for r in spec.instrumented],
        "coefficients": {k: asdict(v) for k, v in result.coefficients.items()},
        "standardized_betas": result.standardized_betas,
        "n": result.n,
        "r2": result.r2,
        "first_stage_coefficients": result.first_stage_coefficients,
        "first_stage_f": result.first_stage_f,
        "weak_first_stage": result.weak_first_stage,
    }


def _table_line(result: RegressionResult) -> str:
    spec = result.spec
    terms = ", ".join(
        f"{name} {est.value:.4f} ({est.se:.4f}) [{result.standardized_betas[name]:.3f}]"
        for name, est in result.coefficients.items()
    )
    flag = " weak-first-stage" if result.weak_first_stage else ""
    return (
        f"{spec.dependent.value:<12} {spec.design.value:<16} "
        f"{spec.estimator.value:<8} n={result.n:<6} {terms}{flag}"
    )


def cmd_regress(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Configured regressions plus the persistence and mediation batteries."""
    panel = _regression_panel(config, args.panel)
    kinds = {StatKind(k) for k in panel["stat_kind"].unique()}
    results = [regress(spec, panel) for spec in config.regressions]
    metrics: dict[str, Any] = {}
    for i, result in enumerate(results):
        for name, est in result.coefficients.items():
            metrics[f"spec{i}_{result.spec.estimator.value}_{name}"] = est.value

    if {StatKind.FATHER_SD, StatKind.AM, StatKind.IGC} <= kinds:
        report = gatsby_summary(panel)
        results += [*report.levels, *report.changes]
        results += [report.without_sorting, report.with_sorting]
        metrics["mediation_share"] = report.mediation_share
    try:
        for row in persistence_battery(panel):
            metrics[f"persistence_ols_{row.stat_kind.value}"] = row.ols
            metrics[f"persistence_ssiv_{row.stat_kind.value}"] = row.ssiv
            metrics[f"persistence_gap_{row.stat_kind.value}"] = row.gap
    except EstimationError as err:
        _LOGGER.warning(f"Persistence battery skipped: {err}")

    out = config.output_dir
    json_path = out / "regressions.json"
    text_path = out / "regressions.txt"
    _write_json([regression_record(r) for r in results], json_path)
    text = "\n".join(_table_line(r) for r in results) + "\n"
    atomic_write(text_path, lambda tmp: tmp.write_text(text, encoding="utf-8"))
    print(text, end="")
    _record(config, "regress", [json_path, text_path], metrics)
    return EXIT_OK


def cmd_report(out: Path) -> int:
    """Summarize the manifest, flag stale files and check targets."""
    manifest = _read_manifest(out)
    if not manifest.get("commands"):
        print("nothing to report")
        return EXIT_OK
    missing: list[str] = []
    stale: list[str] = []
    metrics: dict[str, Any] = {}
    for command, entry in sorted(manifest["commands"].items()):
        for name, digest in sorted(entry["outputs"].items()):
            path = out / name
            if not path.exists():
                missing.append(name)
            elif _file_digest(path) != digest:
                stale.append(name)
        for key, value in entry["metrics"].items():
            metrics[f"{command}.{key}"] = value

    declared = manifest.get("targets", [])
    source = "config" if declared else "default"
    targets = declared or [asdict(t) for t in DEFAULT_TARGETS if t.metric in metrics]
    checks = []
    for target in targets:
        metric = target["metric"]
        observed = metrics.get(metric)
        if observed is None:
            status = "missing"
        else:
            passed = Target(**target).check(float(observed))
            status = "pass" if passed else "fail"
        checks.append(
            {**target, "observed": observed, "status": status, "source": source}
        )

    summary = {
        "config_digest": manifest.get("config_digest"),
        "seed": manifest.get("seed"),
        "metrics": metrics,
        "checks": checks,
        "stale": stale,
        "missing": missing,
    }
    _write_json(summary, out / "report.json")
    print(f"config_digest={summary['config_digest']} seed={summary['seed']}")
    for key in sorted(metrics):
        print(f"  {key} = {metrics[key]}")
    for check in checks:
        print(f"  [{check['status']}] {check['metric']} = {check['observed']}")
    for name in stale:
        print(f"  STALE {name}: digest differs from manifest")
    if missing:
        print(f"  MISSING {', '.join(missing)}")
        return EXIT_RUNTIME
    return EXIT_OK


_COMMANDS: dict[str, Callable[[ExperimentConfig, argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bias-lab": cmd_bias_lab,
    "panel": cmd_panel,
    "regress": cmd_regress,
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline stage."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="override the output directory")
    common.add_argument(
        "--threads", type=int, default=1, help="worker threads (speed only)"
    )
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="mobility-lab",
        description="Synthetic-population laboratory for educational mobility.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="dynamics and microdata")
    estimate = sub.add_parser("estimate", parents=[common], help="national trends")
    estimate.add_argument("--microdata", help="microdata CSV")
    estimate.add_argument("--by-sex", action="store_true", help="split by sex")
    bias = sub.add_parser("bias-lab", parents=[common], help="coresidence bias")
    bias.add_argument("--microdata", help="microdata CSV")
    panel = sub.add_parser("panel", parents=[common], help="regional panel")
    panel.add_argument("--microdata", help="microdata CSV")
    panel.add_argument("--registry", type=Path, help="region registry CSV")
    regress_cmd = sub.add_parser("regress", parents=[common], help="regressions")
    regress_cmd.add_argument("--panel", help="panel CSV")
    sub.add_parser("report", parents=[common], help="summarize a run")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``mobility-lab`` script."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)8s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        if args.command == "report":
            if args.out is not None:
                out = args.out
            elif args.config is not None:
                out = load_config(args.config).output_dir
            else:
                out = Path("runs")
            return cmd_report(out)
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(seed=args.seed, output_dir=args.out)
        if args.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {args.threads}")
        return _COMMANDS[args.command](config, args)
    except ValidationError as err:
        _LOGGER.error(f"Invalid input: {err}")
        return EXIT_VALIDATION
    except (MobilityLabError, OSError) as err:
        _LOGGER.error(f"{type(err).__name__}: {err}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
