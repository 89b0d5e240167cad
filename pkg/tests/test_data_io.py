"""Tests for harmonization and the microdata and panel file formats."""

import math

import numpy as np
import pandas as pd
import pytest

from mobility_lab.data_io import (
    DEFAULT_SCHEME,
    MICRODATA_COLUMNS,
    PANEL_COLUMNS,
    harmonize,
    harmonize_column,
    join_external,
    panel_frame,
    panel_stats,
    read_microdata,
    read_panel,
    write_microdata,
    write_panel,
)
from mobility_lab.exceptions import (
    DuplicateKeyError,
    SchemaError,
    UnknownCategoryError,
)
from mobility_lab.model import (
    ModelParams,
    PopulationConfig,
    RegionalStat,
    StatKind,
)
from mobility_lab.population import generate_population

HEADER = ",".join(MICRODATA_COLUMNS)


@pytest.fixture
def population():
    """Generate a small population."""
    config = PopulationConfig(
        n_per_region_cohort=120,
        regions=("bilbao", "melilla"),
        cohorts=(1960, 1961),
        model=ModelParams(lam=0.6, rho=0.6, sigma_eps2=4.0),
        seed=8,
    )
    return generate_population(config)


@pytest.mark.parametrize(
    ("label", "years"),
    [
        ("Illiterate", 1),
        ("Literate", 3),
        ("Primary Schooling", 5),
        ("Secondary School", 8),
        ("Academic high school and professional studies", 11),
        ("Short college degree", 15),
        ("Long college degree", 18),
    ],
)
def test_harmonize_canonical_labels(label, years):
    """Test the seven labels map to their years."""
    assert harmonize(label) == years


def test_harmonize_scheme_is_bijective():
    """Test the default scheme is a bijection onto the grid."""
    assert len(DEFAULT_SCHEME) == 7
    assert len(set(DEFAULT_SCHEME.values())) == 7


def test_harmonize_unknown_label():
    """Test unknown labels fail with the label and row."""
    with pytest.raises(UnknownCategoryError) as excinfo:
        harmonize_column(["Illiterate", "PhD"])
    assert excinfo.value.label == "PhD"
    assert excinfo.value.row == 2


def test_harmonize_custom_scheme():
    """Test a custom mapping replaces the default."""
    assert harmonize("uni", {"uni": 15}) == 15
    with pytest.raises(UnknownCategoryError):
        harmonize("Illiterate", {"uni": 15})


def test_microdata_round_trip(tmp_path, population):
    """Test reading back written microdata, and rewriting byte-identically."""
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    write_microdata(population, first)
    table = read_microdata(first)
    assert tuple(table.columns) == MICRODATA_COLUMNS
    assert table["id"].tolist() == population["id"].tolist()
    assert table["edu_years"].tolist() == population["edu_years"].tolist()
    assert table["spouse_id"].isna().sum() == population["spouse_id"].isna().sum()
    write_microdata(table, second)
    assert first.read_bytes() == second.read_bytes()


def test_microdata_empty_table(tmp_path):
    """Test an empty table writes a header-only file."""
    path = tmp_path / "empty.csv"
    write_microdata(pd.DataFrame(columns=list(MICRODATA_COLUMNS)), path)
    assert path.read_text(encoding="utf-8") == HEADER + "\n"


def test_microdata_rejects_off_grid(tmp_path):
    """Test a non-grid schooling value names its line."""
    path = tmp_path / "bad.csv"
    path.write_text(
        HEADER
        + "\n1,madrid,1950,male,8,5,,2,99,15"
        + "\n2,madrid,1950,female,9,5,3,1,99,15\n",
        encoding="utf-8",
    )
    with pytest.raises(SchemaError) as excinfo:
        read_microdata(path)
    assert excinfo.value.line == 3
    assert "edu_years" in str(excinfo.value)


def test_microdata_rejects_malformed_rows(tmp_path):
    """Test bad integers, sexes and headers are schema errors."""
    path = tmp_path / "bad.csv"
    path.write_text(HEADER + "\nx,madrid,1950,male,8,,,,99,15\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_microdata(path)
    path.write_text(HEADER + "\n1,madrid,1950,other,8,,,,99,15\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_microdata(path)
    path.write_text("id,region\n1,madrid\n", encoding="utf-8")
    with pytest.raises(SchemaError) as excinfo:
        read_microdata(path)
    assert excinfo.value.line == 1


def test_microdata_duplicate_ids(tmp_path):
    """Test duplicate ids are rejected."""
    path = tmp_path / "dup.csv"
    row = "7,madrid,1950,male,8,,,,99,15"
    path.write_text(f"{HEADER}\n{row}\n{row}\n", encoding="utf-8")
    with pytest.raises(DuplicateKeyError):
        read_microdata(path)


def _panel():
    stats = [
        RegionalStat("madrid", 1950, StatKind.IGC, 0.1 + 0.2, 80, 0.31, 0.29),
        RegionalStat("madrid", 1950, StatKind.AM, 1 / 3, 60, math.nan, math.nan),
        RegionalStat("ceuta", 1960, StatKind.SD, 3.141592653589793, 55, 3.0, 3.2),
    ]
    return panel_frame(stats)


def test_panel_round_trip_is_exact(tmp_path):
    """Test floats and missing halves survive a write and read."""
    path = tmp_path / "panel.csv"
    panel = _panel()
    write_panel(panel, path)
    loaded = read_panel(path)
    assert tuple(loaded.columns) == PANEL_COLUMNS
    pd.testing.assert_frame_equal(loaded, panel, check_dtype=False)
    assert loaded.loc[0, "value"] == 0.1 + 0.2
    assert panel_stats(loaded)[1].stat_kind is StatKind.AM
    assert np.isnan(panel_stats(loaded)[1].half_a)


def test_read_panel_rejects_unknown_stat(tmp_path):
    """Test an unknown statistic name is a schema error."""
    path = tmp_path / "panel.csv"
    path.write_text(
        ",".join(PANEL_COLUMNS) + "\nmadrid,1950,gini,0.3,80,,\n", encoding="utf-8"
    )
    with pytest.raises(SchemaError) as excinfo:
        read_panel(path)
    assert excinfo.value.line == 2


def test_join_external_reports_unmatched():
    """Test the join keeps matches and lists keys found on one side."""
    panel = _panel()
    external = pd.DataFrame(
        {"region_id": ["madrid", "vigo"], "income": [21.0, 17.0]}
    )
    report = join_external(panel, external)
    assert len(report.joined) == 2
    assert set(report.joined["income"]) == {21.0}
    assert report.unmatched_panel == [("ceuta",)]
    assert report.unmatched_external == [("vigo",)]


def test_join_external_duplicate_keys():
    """Test repeated external keys are rejected."""
    external = pd.DataFrame({"region_id": ["madrid", "madrid"], "x": [1, 2]})
    with pytest.raises(DuplicateKeyError):
        join_external(_panel(), external)
    with pytest.raises(SchemaError):
        join_external(_panel(), external, keys=("province",))
