"""Size reduction: v1 -> v2.

Four steps, applied strictly in this order:

1. drop rows for non-state entities (configured droplist) and rows with no
   official population figure,
2. concatenate per-item column families (terrorist groups, border
   countries) into one text column each,
3. fill columns assumed Missing-Not-At-Random with their zero value
   (0 / "None/NA" / "none" by dtype),
4. drop columns with more than 95% of their cells missing.

Non-missing values are never altered here; the CleaningReport carries the
exact cell accounting for the run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

from .naming import ColumnName, parse_column_name
from .table import MISSING, MissingStats, Table, label, number, text
from .validation import check_table

logger = logging.getLogger(__name__)

DEFAULT_POPULATION_COLUMN = "num people-and-society-population"

# Families of per-item columns to merge: presence families join the column
# titles carried by non-missing cells, valued families join "title: value"
# pairs.  Sources are sorted by title so output is deterministic.
DEFAULT_FAMILIES = (
    {
        "prefix": "num geography-land-boundaries-border-countries",
        "new_name": "txt geography-land-boundaries-border-countries-overall",
        "style": "valued",
    },
    {
        "prefix": "num terrorism-terrorist-groups-home-based",
        "new_name": "txt terrorism-terrorist-groups-home-based-overall",
        "style": "presence",
    },
    {
        "prefix": "num terrorism-terrorist-groups-foreign-based",
        "new_name": "txt terrorism-terrorist-groups-foreign-based-overall",
        "style": "presence",
    },
)

CONCAT_DELIMITER = "; "


class TypeMismatchError(ValueError):
    """A fill value conflicts with the dtype of a matched column."""


def _load_packaged(name: str) -> dict:
    with resources.files("factforge.data").joinpath(name).open(encoding="utf-8") as f:
        return json.load(f)


def load_droplist(path: Path | str | None = None) -> list[str]:
    payload = (
        json.loads(Path(path).read_text(encoding="utf-8"))
        if path
        else _load_packaged("droplist.json")
    )
    return list(payload["codes"])


@dataclass(frozen=True)
class MnarManifest:
    """Column-name patterns whose missing cells mean zero/none."""

    patterns: tuple[str, ...]

    @classmethod
    def load(cls, path: Path | str | None = None) -> "MnarManifest":
        payload = (
            json.loads(Path(path).read_text(encoding="utf-8"))
            if path
            else _load_packaged("mnar_manifest.json")
        )
        return cls(patterns=tuple(payload["columns"]))

    def fill_cell(self, dtype: str):
        if dtype in ("num", "sum", "amount"):
            return number(0.0)
        if dtype == "lbl":
            return label("None/NA")
        if dtype == "txt":
            return text("none")
        raise TypeMismatchError(f"no MNAR fill for dtype {dtype!r}")

    @staticmethod
    def _tail(name: ColumnName) -> str:
        return name.body + (f" {name.subfield}" if name.subfield else "")

    def covers(self, name: ColumnName) -> bool:
        """Dtype-agnostic inheritance check for columns generated later.

        A column inherits the assumption when some pattern's
        category-field(-subfield) tail is a prefix of its own.
        """
        tail = self._tail(name)
        for pattern in self.patterns:
            pattern_tail = self._tail(parse_column_name(pattern))
            if tail == pattern_tail or tail.startswith(pattern_tail):
                return True
        return False


@dataclass
class CleaningReport:
    rows_dropped: list[dict] = field(default_factory=list)
    columns_concatenated: dict[str, int] = field(default_factory=dict)
    mnar_cells_filled: int = 0
    columns_dropped: list[str] = field(default_factory=list)
    stats_before: MissingStats | None = None
    stats_after: MissingStats | None = None
    # step-by-step deltas backing the accounting identity
    filled_lost_to_row_drops: int = 0
    filled_lost_to_column_drops: int = 0
    concat_filled_delta: int = 0
    mnar_stale_patterns: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "rows_dropped": self.rows_dropped,
            "columns_concatenated": self.columns_concatenated,
            "mnar_cells_filled": self.mnar_cells_filled,
            "columns_dropped": self.columns_dropped,
            "stats_before": self.stats_before.as_dict() if self.stats_before else None,
            "stats_after": self.stats_after.as_dict() if self.stats_after else None,
            "filled_lost_to_row_drops": self.filled_lost_to_row_drops,
            "filled_lost_to_column_drops": self.filled_lost_to_column_drops,
            "concat_filled_delta": self.concat_filled_delta,
            "mnar_stale_patterns": self.mnar_stale_patterns,
        }


def drop_nonstate_rows(
    table: Table,
    droplist: list[str],
    population_column: str = DEFAULT_POPULATION_COLUMN,
) -> tuple[Table, list[dict]]:
    """Remove droplisted codes and rows without a numeric population."""
    droplist_set = set(droplist)
    for code in sorted(droplist_set - set(table.row_index)):
        logger.warning("droplist code %r not present in table", code)

    population = None
    if table.has_column(population_column):
        population = table.cells(population_column)
    else:
        logger.warning(
            "population column %r not found; population rule skipped",
            population_column,
        )

    dropped: list[dict] = []
    keep: list[str] = []
    for i, code in enumerate(table.row_index):
        if code in droplist_set:
            dropped.append({"code": code, "reason": "droplist"})
        elif population is not None and population[i].is_missing:
            dropped.append({"code": code, "reason": "no population figure"})
        else:
            keep.append(code)
    return table.select_rows(keep), dropped


def _column_title(name: ColumnName) -> str:
    return name.subfield if name.subfield else name.body


def _cell_as_text(cell) -> str:
    if cell.kind.value == "number":
        return format(cell.value, ".17g")
    return str(cell.value)


def concat_group_columns(
    table: Table, prefix: str, new_name: str, style: str = "presence"
) -> tuple[Table, int]:
    """Merge a prefix-matched column family into one text column.

    Presence style joins the titles of non-missing cells; valued style
    joins "title: value" pairs.  Returns the new table and the number of
    source columns merged (0 means the family was empty and nothing
    changed).
    """
    family = [
        f
        for f in table.formatted_names()
        if f.startswith(prefix) and f != new_name
    ]
    if not family:
        logger.warning("empty column family for prefix %r", prefix)
        return table, 0
    titled = sorted(
        ((_column_title(table.name_of(f)), f) for f in family), key=lambda x: x[0]
    )
    joined_cells = []
    for i in range(table.n_rows):
        parts = []
        for title, formatted in titled:
            cell = table.cells(formatted)[i]
            if cell.is_missing:
                continue
            if style == "valued":
                parts.append(f"{title}: {_cell_as_text(cell)}")
            else:
                parts.append(title)
        joined_cells.append(text(CONCAT_DELIMITER.join(parts)) if parts else MISSING)
    out = table.without_columns(family)
    out = out.with_column(parse_column_name(new_name), joined_cells)
    return out, len(family)


def fill_mnar(table: Table, manifest: MnarManifest) -> tuple[Table, int, list[str]]:
    """Fill missing cells of manifest-matched columns with their zero value.

    Matching is exact on formatted names, with a prefix fallback so
    concatenation-derived names are still covered.  Patterns matching no
    column are reported as stale.
    """
    out = table
    filled = 0
    stale = []
    for pattern in manifest.patterns:
        pattern_name = parse_column_name(pattern)
        matches = [
            f
            for f in table.formatted_names()
            if f == pattern or f.startswith(pattern)
        ]
        if not matches:
            stale.append(pattern)
            continue
        fill = manifest.fill_cell(pattern_name.dtype)
        for formatted in matches:
            column_name = out.name_of(formatted)
            if column_name.dtype != pattern_name.dtype:
                raise TypeMismatchError(
                    f"pattern {pattern!r} ({pattern_name.dtype}) matched "
                    f"{formatted!r} ({column_name.dtype})"
                )
            updates = {
                code: fill
                for code, cell in zip(out.row_index, out.cells(formatted))
                if cell.is_missing
            }
            if updates:
                out = out.with_cells(formatted, updates)
                filled += len(updates)
    if stale:
        logger.info("%d stale MNAR patterns (no matching column)", len(stale))
    return out, filled, stale


def drop_sparse_columns(
    table: Table, threshold: float = 0.95
) -> tuple[Table, list[str]]:
    """Drop columns whose missing fraction strictly exceeds the threshold."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    dropped = []
    for name, cells in table.iter_columns():
        if name.reserved:
            continue
        missing = sum(1 for c in cells if c.is_missing)
        if missing / len(cells) > threshold:
            dropped.append(name.formatted())
    return (table.without_columns(dropped) if dropped else table), dropped


def clean(
    table: Table,
    droplist: list[str] | None = None,
    manifest: MnarManifest | None = None,
    sparse_threshold: float = 0.95,
    population_column: str = DEFAULT_POPULATION_COLUMN,
    families: tuple[dict, ...] = DEFAULT_FAMILIES,
) -> tuple[Table, CleaningReport]:
    """Apply the four size-reduction steps in order and account for them."""
    droplist = droplist if droplist is not None else load_droplist()
    manifest = manifest if manifest is not None else MnarManifest.load()
    report = CleaningReport(stats_before=table.missing_stats())

    filled_before = report.stats_before.filled_cells
    out, report.rows_dropped = drop_nonstate_rows(table, droplist, population_column)
    report.filled_lost_to_row_drops = filled_before - out.missing_stats().filled_cells

    filled_before = out.missing_stats().filled_cells
    for family in families:
        out, count = concat_group_columns(
            out, family["prefix"], family["new_name"], family["style"]
        )
        if count:
            report.columns_concatenated[family["new_name"]] = count
    report.concat_filled_delta = out.missing_stats().filled_cells - filled_before

    out, report.mnar_cells_filled, report.mnar_stale_patterns = fill_mnar(
        out, manifest
    )

    filled_before = out.missing_stats().filled_cells
    out, report.columns_dropped = drop_sparse_columns(out, sparse_threshold)
    report.filled_lost_to_column_drops = (
        filled_before - out.missing_stats().filled_cells
    )

    out = out.with_version("v2")
    report.stats_after = out.missing_stats()
    return out, report


class TableCleaner(BaseEstimator, TransformerMixin):
    """Stage transformer wrapping :func:`clean`; report is ``report_``."""

    def __init__(
        self,
        droplist=None,
        manifest=None,
        sparse_threshold=0.95,
        population_column=DEFAULT_POPULATION_COLUMN,
        families=DEFAULT_FAMILIES,
    ):
        self.droplist = droplist
        self.manifest = manifest
        self.sparse_threshold = sparse_threshold
        self.population_column = population_column
        self.families = families

    def fit(self, X, y=None):
        check_table(X)
        return self

    def transform(self, X):
        check_table(X)
        out, self.report_ = clean(
            X,
            droplist=self.droplist,
            manifest=self.manifest,
            sparse_threshold=self.sparse_threshold,
            population_column=self.population_column,
            families=tuple(self.families),
        )
        return out
