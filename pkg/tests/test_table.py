import json

import pytest

from factforge.naming import ColumnName
from factforge.table import (
    MISSING,
    DuplicateColumnError,
    SchemaMismatchError,
    Table,
    binary,
    label,
    number,
    read_snapshot,
    text,
    write_snapshot,
)


def small_table():
    return Table(
        ["aa", "bb"],
        [
            (ColumnName("num", "economy-gdp"), [number(1.5), MISSING]),
            (ColumnName("txt", "geography-climate"), [text("temperate"), text("arid")]),
        ],
        version="v1",
    )


def test_missing_stats_counts():
    stats = small_table().missing_stats()
    assert (stats.total_cells, stats.empty_cells, stats.filled_cells) == (4, 1, 3)


def test_missing_stats_all_missing():
    table = Table(
        ["aa", "bb", "cc"],
        [
            (ColumnName("num", f"economy-x{i}"), [MISSING, MISSING, MISSING])
            for i in range(3)
        ],
    )
    stats = table.missing_stats()
    assert (stats.total_cells, stats.empty_cells, stats.filled_cells) == (9, 9, 0)


def test_cell_constructors_validate():
    with pytest.raises(ValueError):
        number(float("nan"))
    with pytest.raises(ValueError):
        number(float("inf"))
    with pytest.raises(ValueError):
        binary(2)


def test_dtype_constrains_cells():
    with pytest.raises(ValueError):
        Table(["aa"], [(ColumnName("num", "economy-gdp"), [text("x")])])
    with pytest.raises(ValueError):
        Table(["aa"], [(ColumnName("enc", "region_x"), [number(1.0)])])


def test_duplicate_columns_and_rows_rejected():
    name = ColumnName("num", "economy-gdp")
    with pytest.raises(DuplicateColumnError):
        Table(["aa"], [(name, [number(1)]), (name, [number(2)])])
    with pytest.raises(ValueError):
        Table(["aa", "aa"])


def all_variant_table():
    return Table(
        ["aa", "bb", "cc"],
        [
            (
                ColumnName("num", "economy-gdp", subfield="per capita"),
                [number(-1234.5), number(0.1), MISSING],
            ),
            (
                ColumnName("txt", "geography-climate"),
                [text('tropical, "wet"'), MISSING, text("arid; hot")],
            ),
            (
                ColumnName("lbl", "Region", reserved=True),
                [label("europe"), label("east asia"), MISSING],
            ),
            (ColumnName("enc", "region_europe"), [binary(1), binary(0), binary(1)]),
            (
                ColumnName("num", "economy-gdp-growth", hist=True, mape=1.05),
                [number(2.5), MISSING, number(-0.5)],
            ),
        ],
        version="v3",
    )


def test_snapshot_round_trip(tmp_path):
    table = all_variant_table()
    path = tmp_path / "v3.csv"
    write_snapshot(table, path)
    assert read_snapshot(path) == table


def test_snapshot_byte_stability(tmp_path):
    table = all_variant_table()
    write_snapshot(table, tmp_path / "a.csv")
    write_snapshot(table, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (
        tmp_path / "a.schema.json"
    ).read_bytes() == (tmp_path / "b.schema.json").read_bytes()


def test_missing_round_trips_as_missing_not_text(tmp_path):
    table = small_table()
    path = tmp_path / "v1.csv"
    write_snapshot(table, path)
    back = read_snapshot(path)
    assert back.cell("num economy-gdp", "bb") is MISSING
    raw = path.read_text(encoding="utf-8")
    assert "aa,1.5,temperate" in raw


def test_binary_round_trips_as_binary(tmp_path):
    table = Table(["aa"], [(ColumnName("enc", "region_x"), [binary(1)])], version="v4")
    path = tmp_path / "v4.csv"
    write_snapshot(table, path)
    cell = read_snapshot(path).cell("enc region_x", "aa")
    assert cell.kind.value == "binary" and cell.value == 1


def test_float_17_digit_round_trip(tmp_path):
    values = [0.1, 1 / 3, 9007199254740993.0, 1e-12, -2.5e9]
    table = Table(
        ["aa"],
        [
            (ColumnName("num", f"economy-x{i}"), [number(v)])
            for i, v in enumerate(values)
        ],
    )
    path = tmp_path / "v1.csv"
    write_snapshot(table, path)
    back = read_snapshot(path)
    for i, v in enumerate(values):
        assert back.cell(f"num economy-x{i}", "aa").value == v


def test_schema_mismatch_on_tampered_sidecar(tmp_path):
    path = tmp_path / "v1.csv"
    write_snapshot(small_table(), path)
    sidecar = tmp_path / "v1.schema.json"
    schema = json.loads(sidecar.read_text())
    schema[1]["dtype"] = "txt"
    sidecar.write_text(json.dumps(schema))
    with pytest.raises(SchemaMismatchError):
        read_snapshot(path)


def test_schema_mismatch_on_column_count(tmp_path):
    path = tmp_path / "v1.csv"
    write_snapshot(small_table(), path)
    sidecar = tmp_path / "v1.schema.json"
    schema = json.loads(sidecar.read_text())
    sidecar.write_text(json.dumps(schema[:-1]))
    with pytest.raises(SchemaMismatchError):
        read_snapshot(path)


def test_version_inferred_from_stem(tmp_path):
    table = small_table().with_version("v2")
    write_snapshot(table, tmp_path / "v2.csv")
    assert read_snapshot(tmp_path / "v2.csv").version == "v2"
    write_snapshot(table, tmp_path / "other.csv")
    assert read_snapshot(tmp_path / "other.csv", version="v2").version == "v2"


def test_select_rows_and_without_columns():
    table = all_variant_table()
    subset = table.select_rows(["aa", "cc"])
    assert subset.row_index == ["aa", "cc"]
    assert subset.cell("enc region_europe", "cc").value == 1
    dropped = table.without_columns(["enc region_europe"])
    assert not dropped.has_column("enc region_europe")
    # original untouched
    assert table.has_column("enc region_europe")


def test_with_cells_replaces_only_named_rows():
    table = small_table()
    out = table.with_cells("num economy-gdp", {"bb": number(7.0)})
    assert out.cell("num economy-gdp", "bb").value == 7.0
    assert table.cell("num economy-gdp", "bb") is MISSING
