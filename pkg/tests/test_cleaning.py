import pytest

from factforge.cleaning import (
    MnarManifest,
    TypeMismatchError,
    clean,
    concat_group_columns,
    drop_nonstate_rows,
    drop_sparse_columns,
    fill_mnar,
    load_droplist,
)
from factforge.naming import ColumnName
from factforge.table import MISSING, Table, number, text


def sparse_table(n_rows, missing_in_col):
    cells = [MISSING] * missing_in_col + [number(1.0)] * (n_rows - missing_in_col)
    return Table(
        [f"r{i:02d}" for i in range(n_rows)],
        [
            (ColumnName("num", "economy-sparse"), cells),
            (ColumnName("num", "economy-dense"), [number(2.0)] * n_rows),
        ],
    )


class TestDropRows:
    def test_droplisted_and_population_missing_rows_removed(self, v1_table):
        out, dropped = drop_nonstate_rows(v1_table, load_droplist())
        assert out.row_index == ["aa", "bb", "cc", "dd"]
        assert {d["code"]: d["reason"] for d in dropped} == {
            "xx": "droplist",
            "ff": "no population figure",
        }

    def test_unknown_droplist_code_is_warning_only(self, v1_table, caplog):
        out, _ = drop_nonstate_rows(v1_table, ["xx", "qq"])
        assert "qq" in caplog.text
        assert "xx" not in out.row_index

    def test_missing_population_column_skips_rule(self, caplog):
        table = Table(["aa"], [(ColumnName("num", "economy-gdp"), [number(1)])])
        out, dropped = drop_nonstate_rows(table, [])
        assert out.row_index == ["aa"] and dropped == []
        assert "population" in caplog.text


class TestConcat:
    def test_valued_family(self, v1_table):
        out, count = concat_group_columns(
            v1_table,
            "num geography-land-boundaries-border-countries",
            "txt geography-land-boundaries-border-countries-overall",
            style="valued",
        )
        assert count == 3
        col = "txt geography-land-boundaries-border-countries-overall"
        assert out.cell(col, "bb").value == "khemed: 504.5; syldavia: 730"
        assert out.cell(col, "dd").value == "khemed: 742; wadesdah: 330"
        assert out.cell(col, "aa") is MISSING
        assert not out.has_column(
            "num geography-land-boundaries-border-countries syldavia"
        )

    def test_presence_family(self, v1_table):
        out, count = concat_group_columns(
            v1_table,
            "num terrorism-terrorist-groups-home-based",
            "txt terrorism-terrorist-groups-home-based-overall",
            style="presence",
        )
        assert count == 3
        col = "txt terrorism-terrorist-groups-home-based-overall"
        assert out.cell(col, "bb").value == "crab syndicate; iron guard"
        assert out.cell(col, "dd").value == "desert wolves; iron guard"
        assert out.cell(col, "cc") is MISSING

    def test_empty_family_is_noop(self, v1_table, caplog):
        out, count = concat_group_columns(
            v1_table, "num nothing-here", "txt nothing-here-overall"
        )
        assert count == 0
        assert out is v1_table or out == v1_table
        assert "empty column family" in caplog.text


class TestFillMnar:
    def test_fills_by_dtype(self):
        table = Table(
            ["aa", "bb"],
            [
                (ColumnName("num", "transportation-heliports"), [MISSING, number(3)]),
                (
                    ColumnName(
                        "txt",
                        "people-and-society-major-infectious-diseases",
                        subfield="food or waterborne diseases",
                    ),
                    [MISSING, text("cholera")],
                ),
                (ColumnName("num", "economy-gdp"), [MISSING, number(9)]),
            ],
        )
        manifest = MnarManifest(
            patterns=(
                "num transportation-heliports",
                "txt people-and-society-major-infectious-diseases food or waterborne diseases",
                "num economy-nothing-matches",
            )
        )
        out, filled, stale = fill_mnar(table, manifest)
        assert filled == 2
        assert out.cell("num transportation-heliports", "aa").value == 0.0
        assert (
            out.cell(
                "txt people-and-society-major-infectious-diseases food or waterborne diseases",
                "aa",
            ).value
            == "none"
        )
        # non-MNAR column untouched
        assert out.cell("num economy-gdp", "aa") is MISSING
        assert stale == ["num economy-nothing-matches"]

    def test_fill_without_zero_value_rejected(self):
        # enc columns have no missing-means-zero fill; such a pattern is a
        # manifest authoring error
        table = Table(["aa"], [(ColumnName("enc", "region_x"), [MISSING])])
        with pytest.raises(TypeMismatchError):
            fill_mnar(table, MnarManifest(patterns=("enc region_x",)))

    def test_covers_inherits_by_body_tail(self):
        manifest = MnarManifest.load()
        assert manifest.covers(ColumnName("sum", "transportation-pipelines"))
        assert manifest.covers(
            ColumnName("sum", "transportation-pipelines", subfield="gas")
        )
        assert manifest.covers(
            ColumnName("amount", "terrorism-terrorist-groups-home-based-overall")
        )
        assert not manifest.covers(ColumnName("num", "economy-gdp"))


class TestSparse:
    def test_above_threshold_dropped(self):
        out, dropped = drop_sparse_columns(sparse_table(25, 24), 0.95)
        assert dropped == ["num economy-sparse"]

    def test_exactly_at_threshold_kept(self):
        out, dropped = drop_sparse_columns(sparse_table(20, 19), 0.95)
        assert dropped == []

    def test_threshold_one_keeps_everything(self):
        out, dropped = drop_sparse_columns(sparse_table(20, 20), 1.0)
        assert dropped == []

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            drop_sparse_columns(sparse_table(4, 1), 0.0)


class TestClean:
    def test_fixture_v2_shape(self, v2_table):
        assert v2_table.version == "v2"
        assert v2_table.shape == (4, 32)
        assert v2_table.row_index == ["aa", "bb", "cc", "dd"]

    def test_report_numbers(self, v2_result):
        _, report = v2_result
        assert {d["code"] for d in report.rows_dropped} == {"xx", "ff"}
        assert report.columns_concatenated == {
            "txt geography-land-boundaries-border-countries-overall": 3,
            "txt terrorism-terrorist-groups-home-based-overall": 3,
        }
        assert report.mnar_cells_filled == 25
        assert report.columns_dropped == ["num economy-gwp"]
        assert report.stats_before.total_cells == 6 * 37
        assert report.stats_after.total_cells == 4 * 32

    def test_accounting_identity_exact(self, v2_result):
        _, report = v2_result
        assert report.stats_after.filled_cells == (
            report.stats_before.filled_cells
            - report.filled_lost_to_row_drops
            - report.filled_lost_to_column_drops
            + report.mnar_cells_filled
            + report.concat_filled_delta
        )

    def test_no_preexisting_value_altered(self, v1_table, v2_table):
        for name, cells in v2_table.iter_columns():
            formatted = name.formatted()
            if not v1_table.has_column(formatted):
                continue  # concatenation output
            for code, cell in zip(v2_table.row_index, cells):
                original = v1_table.cell(formatted, code)
                if not original.is_missing:
                    assert cell == original, (formatted, code)

    def test_second_application_is_fixed_point(self, v2_table):
        again, report = clean(v2_table)
        assert again.with_version("v2") == v2_table
        assert report.rows_dropped == []
        assert report.mnar_cells_filled == 0
        assert report.columns_dropped == []

    def test_mnar_fills_on_fixture(self, v2_table):
        assert v2_table.cell("num transportation-heliports", "aa").value == 0.0
        assert v2_table.cell("num geography-land-boundaries total", "aa").value == 0.0
        assert (
            v2_table.cell("txt government-dependency-status", "bb").value == "none"
        )
        assert (
            v2_table.cell(
                "txt people-and-society-major-infectious-diseases degree of risk", "cc"
            ).value
            == "none"
        )
        # constitution was an N/A token in v1, so MNAR refills it
        assert v2_table.cell("txt government-constitution", "cc").value == "none"
