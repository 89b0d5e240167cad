"""File formats: schooling harmonization, microdata and panel CSVs.

All files are UTF-8, comma-separated, with an empty field for missing
values. Writers go through a temporary file in the target directory and an
atomic rename, so readers never see a partial file.
"""

from __future__ import annotations

import logging
import os
import tempfile
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from .exceptions import DuplicateKeyError, SchemaError, UnknownCategoryError
from .model import EDUCATION_GRID, EducationCategory, RegionalStat, Sex, StatKind

_LOGGER = logging.getLogger(__name__)

DEFAULT_SCHEME: dict[str, int] = {c.label: c.years for c in EducationCategory}

MICRODATA_COLUMNS: tuple[str, ...] = (
    "id",
    "region_id",
    "cohort",
    "sex",
    "edu_years",
    "father_edu_years",
    "mother_edu_years",
    "spouse_id",
    "leave_home_age",
    "edu_completion_age",
)
_REQUIRED_INT = ("id", "cohort", "edu_years", "leave_home_age", "edu_completion_age")
_OPTIONAL_INT = ("father_edu_years", "mother_edu_years", "spouse_id")
_GRID_COLUMNS = ("edu_years", "father_edu_years", "mother_edu_years")

PANEL_COLUMNS: tuple[str, ...] = (
    "region_id",
    "period",
    "stat_kind",
    "value",
    "n",
    "half_a",
    "half_b",
)


class JoinReport(NamedTuple):
    """Result of joining external statistics onto a panel."""

    joined: pd.DataFrame
    unmatched_panel: list[tuple[object, ...]]
    unmatched_external: list[tuple[object, ...]]


def harmonize(
    label: str, scheme: Mapping[str, int] | None = None, row: int | None = None
) -> int:
    """Map a survey schooling label to grid years.

    Args:
        label: Raw category label.
        scheme: Label to years mapping; defaults to the seven canonical
            labels.
        row: Row number reported on failure.

    Raises:
        UnknownCategoryError: If the label is not in the scheme.
    """
    mapping = DEFAULT_SCHEME if scheme is None else scheme
    try:
        return mapping[label]
    except KeyError:
        raise UnknownCategoryError(label, row) from None


def harmonize_column(
    labels: Iterable[str], scheme: Mapping[str, int] | None = None
) -> list[int]:
    """Harmonize a sequence of labels, reporting 1-based data rows."""
    return [harmonize(label, scheme, row=i) for i, label in enumerate(labels, 1)]


def atomic_write(path: str | Path, write: Callable[[Path], None]) -> None:
    """Run ``write`` on a temporary sibling of ``path`` and rename it into place."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        write(tmp)
        os.replace(tmp, target)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_csv(frame: pd.DataFrame, path: str | Path) -> None:
    """Write a table atomically as UTF-8 CSV with empty missing fields."""
    atomic_write(
        path,
        lambda tmp: frame.to_csv(
            tmp, index=False, encoding="utf-8", lineterminator="\n", na_rep=""
        ),
    )


def _fail_first(mask: pd.Series, message: str) -> None:
    if mask.any():
        index = int(np.flatnonzero(mask.to_numpy())[0])
        raise SchemaError(message, line=index + 2)


def _parse_int(raw: pd.Series, column: str, required: bool) -> pd.Series:
    empty = raw == ""
    if required:
        _fail_first(empty, f"missing value in {column}")
    _fail_first(~empty & ~raw.str.fullmatch(r"-?\d+"), f"non-integer {column}")
    return pd.to_numeric(raw.mask(empty), errors="raise").astype("Int64")


def _read_raw(path: str | Path, header: Sequence[str]) -> pd.DataFrame:
    raw = pd.read_csv(
        path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8"
    )
    if tuple(raw.columns) != tuple(header):
        raise SchemaError(f"expected header {','.join(header)}", line=1)
    return raw


def write_microdata(table: pd.DataFrame, path: str | Path) -> None:
    """Write the canonical microdata columns of ``table``.

    Extra columns (for example latent schooling) are not written.
    """
    missing = set(MICRODATA_COLUMNS) - set(table.columns)
    if missing:
        raise SchemaError(f"table lacks columns {sorted(missing)}")
    out = table.loc[:, list(MICRODATA_COLUMNS)].copy()
    for column in _REQUIRED_INT + _OPTIONAL_INT:
        out[column] = out[column].astype("Int64")
    write_csv(out, path)
    _LOGGER.info(f"Wrote {len(out)} microdata rows to {path}")


def read_microdata(path: str | Path) -> pd.DataFrame:
    """Read and validate a microdata file.

    Raises:
        SchemaError: On a wrong header or a malformed row, with its line.
        DuplicateKeyError: If an id appears twice.
    """
    raw = _read_raw(path, MICRODATA_COLUMNS)
    table = pd.DataFrame(index=raw.index)
    table["id"] = _parse_int(raw["id"], "id", required=True)
    _fail_first(raw["region_id"] == "", "missing region_id")
    table["region_id"] = raw["region_id"].astype(object)
    table["cohort"] = _parse_int(raw["cohort"], "cohort", required=True)
    sexes = {s.value for s in Sex}
    _fail_first(~raw["sex"].isin(sexes), "sex must be male or female")
    table["sex"] = raw["sex"].astype(object)
    for column in MICRODATA_COLUMNS[4:]:
        table[column] = _parse_int(raw[column], column, column in _REQUIRED_INT)
    for column in _GRID_COLUMNS:
        values = table[column]
        _fail_first(
            values.notna() & ~values.isin(EDUCATION_GRID),
            f"{column} is not on the schooling grid",
        )
    duplicated = table["id"].duplicated()
    if duplicated.any():
        raise DuplicateKeyError("ids", table.loc[duplicated, "id"].tolist())
    for column in _REQUIRED_INT:
        table[column] = table[column].astype(np.int64)
    _LOGGER.info(f"Read {len(table)} microdata rows from {path}")
    return table


def panel_frame(stats: Iterable[RegionalStat]) -> pd.DataFrame:
    """Tabulate panel cells in canonical column order."""
    rows = [
        (s.region_id, s.period, s.stat_kind.value, s.value, s.n, s.half_a, s.half_b)
        for s in stats
    ]
    frame = pd.DataFrame(rows, columns=list(PANEL_COLUMNS))
    return frame.astype({"period": np.int64, "n": np.int64, "value": np.float64})


def panel_stats(panel: pd.DataFrame) -> list[RegionalStat]:
    """Convert a panel table back into cells."""
    return [
        RegionalStat(
            region_id=str(row.region_id),
            period=int(row.period),
            stat_kind=StatKind(row.stat_kind),
            value=float(row.value),
            n=int(row.n),
            half_a=float(row.half_a),
            half_b=float(row.half_b),
        )
        for row in panel.itertuples(index=False)
    ]


def write_panel(panel: pd.DataFrame, path: str | Path) -> None:
    """Write a panel table; missing halves become empty fields."""
    write_csv(panel.loc[:, list(PANEL_COLUMNS)], path)
    _LOGGER.info(f"Wrote {len(panel)} panel cells to {path}")


def read_panel(path: str | Path) -> pd.DataFrame:
    """Read a panel table with exact float round trip.

    Raises:
        SchemaError: On a wrong header, unknown statistic or bad number.
    """
    _read_raw(path, PANEL_COLUMNS)
    panel = pd.read_csv(
        path,
        dtype={"region_id": str, "stat_kind": str},
        float_precision="round_trip",
        encoding="utf-8",
    )
    known = {k.value for k in StatKind}
    _fail_first(~panel["stat_kind"].isin(known), "unknown stat_kind")
    for column in ("period", "n"):
        numbers = pd.to_numeric(panel[column], errors="coerce")
        _fail_first(numbers.isna(), f"non-numeric {column}")
        panel[column] = numbers.astype(np.int64)
    for column in ("value", "half_a", "half_b"):
        numbers = pd.to_numeric(panel[column], errors="coerce")
        _fail_first(numbers.isna() & panel[column].notna(), f"non-numeric {column}")
        panel[column] = numbers.astype(np.float64)
    return panel


def join_external(
    panel: pd.DataFrame,
    external: pd.DataFrame | str | Path,
    keys: Sequence[str] = ("region_id",),
) -> JoinReport:
    """Inner-join external statistics onto a panel.

    Args:
        panel: Panel table.
        external: Table or CSV path keyed by ``keys``.
        keys: Join columns present in both tables.

    Returns:
        Joined rows plus the keys found on only one side. Clashing external
        columns get an ``_external`` suffix.

    Raises:
        SchemaError: If a key column is missing.
        DuplicateKeyError: If the external table repeats a key.
    """
    if not isinstance(external, pd.DataFrame):
        external = pd.read_csv(external, dtype={k: str for k in keys})
    key_list = list(keys)
    for name, table in (("panel", panel), ("external", external)):
        missing = set(key_list) - set(table.columns)
        if missing:
            raise SchemaError(f"{name} table lacks key columns {sorted(missing)}")
    duplicated = external.duplicated(subset=key_list)
    if duplicated.any():
        dupes = external.loc[duplicated, key_list].itertuples(index=False, name=None)
        raise DuplicateKeyError("external keys", list(dupes))

    panel_keys = set(panel[key_list].itertuples(index=False, name=None))
    external_keys = set(external[key_list].itertuples(index=False, name=None))
    joined = panel.merge(
        external, on=key_list, how="inner", suffixes=("", "_external"), sort=False
    )
    report = JoinReport(
        joined=joined.reset_index(drop=True),
        unmatched_panel=sorted(panel_keys - external_keys, key=str),
        unmatched_external=sorted(external_keys - panel_keys, key=str),
    )
    _LOGGER.info(
        f"Joined {len(joined)} rows; {len(report.unmatched_panel)} panel and "
        f"{len(report.unmatched_external)} external keys unmatched"
    )
    return report
