"""Typed columnar table keyed by country code, with snapshot I/O.

Cells are tagged values (Missing / Number / Text / Label / Binary) and every
column carries a parsed :class:`~factforge.naming.ColumnName` whose dtype tag
constrains the cell variants it may hold.  Tables are treated as immutable:
all mutators return a new table, so any number of readers may share one.

Snapshots are a CSV data file plus a JSON schema sidecar.  The CSV's first
column is ``Country Code`` (the row index), the header row holds the
formatted column names, fields are RFC 4180 quoted UTF-8, and an empty field
means Missing.  The sidecar is an array of ``{name, dtype, hist, mape}``
records, one per CSV column, which lets Binary and Number cells round-trip
without ambiguity.  Floats are written with 17 significant digits so values
survive the trip bit-exactly.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .naming import (
    COUNTRY_CODE,
    ColumnName,
    format_column_name,
    parse_column_name,
)

VERSIONS = ("v1", "v2", "v3", "v4", "v5")


class SchemaMismatchError(ValueError):
    """Snapshot data file and schema sidecar disagree."""


class DuplicateColumnError(ValueError):
    pass


class CellKind(enum.Enum):
    MISSING = "missing"
    NUMBER = "number"
    TEXT = "text"
    LABEL = "label"
    BINARY = "binary"


@dataclass(frozen=True, slots=True)
class Cell:
    kind: CellKind
    value: object | None = None

    @property
    def is_missing(self) -> bool:
        return self.kind is CellKind.MISSING

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        if self.is_missing:
            return "Missing"
        return f"{self.kind.value.capitalize()}({self.value!r})"


MISSING = Cell(CellKind.MISSING)


def number(value: float) -> Cell:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"Number cells must be finite, got {value!r}")
    return Cell(CellKind.NUMBER, value)


def text(value: str) -> Cell:
    return Cell(CellKind.TEXT, str(value))


def label(value: str) -> Cell:
    return Cell(CellKind.LABEL, str(value))


def binary(value: int) -> Cell:
    if value not in (0, 1):
        raise ValueError(f"Binary cells must be 0 or 1, got {value!r}")
    return Cell(CellKind.BINARY, int(value))


# Cell variants each dtype tag may legally hold (besides Missing).
DTYPE_CELL_KINDS: Mapping[str, CellKind] = {
    "txt": CellKind.TEXT,
    "lbl": CellKind.LABEL,
    "enc": CellKind.BINARY,
    "num": CellKind.NUMBER,
    "sum": CellKind.NUMBER,
    "amount": CellKind.NUMBER,
}


@dataclass(frozen=True, slots=True)
class MissingStats:
    total_cells: int
    empty_cells: int
    filled_cells: int

    def as_dict(self) -> dict:
        return {
            "total_cells": self.total_cells,
            "empty_cells": self.empty_cells,
            "filled_cells": self.filled_cells,
        }


class Table:
    """Columnar table: ordered row codes x ordered named columns."""

    def __init__(
        self,
        row_index: Iterable[str],
        columns: Iterable[tuple[ColumnName, list[Cell]]] = (),
        version: str = "v1",
    ) -> None:
        if version not in VERSIONS:
            raise ValueError(f"unknown version {version!r}")
        self.version = version
        self.row_index: list[str] = list(row_index)
        if len(set(self.row_index)) != len(self.row_index):
            raise ValueError("row keys must be unique")
        self._row_pos = {code: i for i, code in enumerate(self.row_index)}
        self._order: list[str] = []
        self._columns: dict[str, tuple[ColumnName, list[Cell]]] = {}
        for name, cells in columns:
            self._insert(name, list(cells))

    # -- construction ----------------------------------------------------

    def _insert(self, name: ColumnName, cells: list[Cell]) -> None:
        formatted = format_column_name(name)
        if formatted in self._columns:
            raise DuplicateColumnError(f"duplicate column {formatted!r}")
        if len(cells) != len(self.row_index):
            raise ValueError(
                f"column {formatted!r} has {len(cells)} cells for "
                f"{len(self.row_index)} rows"
            )
        expected = DTYPE_CELL_KINDS[name.dtype]
        for cell in cells:
            if not cell.is_missing and cell.kind is not expected:
                raise ValueError(
                    f"column {formatted!r} ({name.dtype}) cannot hold "
                    f"{cell.kind.value} cells"
                )
        self._order.append(formatted)
        self._columns[formatted] = (name, cells)

    # -- basic accessors -------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.row_index)

    @property
    def n_cols(self) -> int:
        return len(self._order)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def formatted_names(self) -> list[str]:
        return list(self._order)

    def column_names(self) -> list[ColumnName]:
        return [self._columns[f][0] for f in self._order]

    def has_column(self, name: str) -> bool:
        return name in self._columns

    def name_of(self, formatted: str) -> ColumnName:
        return self._columns[formatted][0]

    def cells(self, formatted: str) -> list[Cell]:
        return list(self._columns[formatted][1])

    def cell(self, formatted: str, code: str) -> Cell:
        return self._columns[formatted][1][self._row_pos[code]]

    def row_position(self, code: str) -> int:
        return self._row_pos[code]

    def iter_columns(self) -> Iterator[tuple[ColumnName, list[Cell]]]:
        for formatted in self._order:
            name, cells = self._columns[formatted]
            yield name, list(cells)

    def numeric_values(self, formatted: str) -> np.ndarray:
        """Column as float array with NaN standing in for Missing."""
        _, cells = self._columns[formatted]
        out = np.full(len(cells), np.nan)
        for i, cell in enumerate(cells):
            if not cell.is_missing:
                out[i] = float(cell.value)  # Number or Binary
        return out

    # -- derived tables --------------------------------------------------

    def _clone(self, version: str | None = None) -> "Table":
        clone = Table.__new__(Table)
        clone.version = version or self.version
        clone.row_index = list(self.row_index)
        clone._row_pos = dict(self._row_pos)
        clone._order = list(self._order)
        clone._columns = dict(self._columns)
        return clone

    def with_version(self, version: str) -> "Table":
        return self._clone(version=version)

    def with_column(self, name: ColumnName, cells: list[Cell]) -> "Table":
        clone = self._clone()
        clone._insert(name, list(cells))
        return clone

    def with_columns(
        self, columns: Iterable[tuple[ColumnName, list[Cell]]]
    ) -> "Table":
        clone = self._clone()
        for name, cells in columns:
            clone._insert(name, list(cells))
        return clone

    def without_columns(self, formatted: Iterable[str]) -> "Table":
        drop = set(formatted)
        unknown = drop - set(self._order)
        if unknown:
            raise KeyError(f"no such columns: {sorted(unknown)}")
        clone = self._clone()
        clone._order = [f for f in clone._order if f not in drop]
        clone._columns = {f: clone._columns[f] for f in clone._order}
        return clone

    def select_rows(self, keep: Iterable[str]) -> "Table":
        keep_set = set(keep)
        codes = [c for c in self.row_index if c in keep_set]
        positions = [self._row_pos[c] for c in codes]
        clone = Table(codes, version=self.version)
        for formatted in self._order:
            name, cells = self._columns[formatted]
            clone._insert(name, [cells[p] for p in positions])
        return clone

    def with_cells(self, formatted: str, updates: Mapping[str, Cell]) -> "Table":
        """Replace individual cells of one column (keyed by row code)."""
        name, cells = self._columns[formatted]
        new_cells = list(cells)
        expected = DTYPE_CELL_KINDS[name.dtype]
        for code, cell in updates.items():
            if not cell.is_missing and cell.kind is not expected:
                raise ValueError(
                    f"column {formatted!r} ({name.dtype}) cannot hold "
                    f"{cell.kind.value} cells"
                )
            new_cells[self._row_pos[code]] = cell
        clone = self._clone()
        clone._columns[formatted] = (name, new_cells)
        return clone

    def rename_column(self, formatted: str, new_name: ColumnName) -> "Table":
        new_formatted = format_column_name(new_name)
        if new_formatted == formatted:
            return self
        if new_formatted in self._columns:
            raise DuplicateColumnError(f"duplicate column {new_formatted!r}")
        _, cells = self._columns[formatted]
        clone = self._clone()
        clone._order = [new_formatted if f == formatted else f for f in clone._order]
        del clone._columns[formatted]
        clone._columns[new_formatted] = (new_name, cells)
        return clone

    def map_cells(self, fn: Callable[[Cell], Cell]) -> "Table":
        clone = self._clone()
        for formatted in clone._order:
            name, cells = clone._columns[formatted]
            clone._columns[formatted] = (name, [fn(c) for c in cells])
        return clone

    # -- accounting --------------------------------------------------------

    def missing_stats(self) -> MissingStats:
        empty = 0
        for formatted in self._order:
            empty += sum(1 for c in self._columns[formatted][1] if c.is_missing)
        total = self.n_rows * self.n_cols
        return MissingStats(total, empty, total - empty)

    # -- equality ----------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        if self.version != other.version or self.row_index != other.row_index:
            return False
        if self._order != other._order:
            return False
        return all(
            self._columns[f] == other._columns[f] for f in self._order
        )

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Table({self.version}, {self.n_rows}x{self.n_cols})"


def _format_float(value: float) -> str:
    return format(value, ".17g")


def _cell_to_field(cell: Cell) -> str:
    if cell.is_missing:
        return ""
    if cell.kind is CellKind.NUMBER:
        return _format_float(cell.value)
    if cell.kind is CellKind.BINARY:
        return str(cell.value)
    return str(cell.value)


def _field_to_cell(field: str, dtype: str, where: str) -> Cell:
    if field == "":
        return MISSING
    kind = DTYPE_CELL_KINDS[dtype]
    if kind is CellKind.NUMBER:
        try:
            return number(float(field))
        except ValueError as exc:
            raise SchemaMismatchError(f"bad number {field!r} in {where}") from exc
    if kind is CellKind.BINARY:
        if field not in ("0", "1"):
            raise SchemaMismatchError(f"bad binary {field!r} in {where}")
        return binary(int(field))
    if kind is CellKind.TEXT:
        return text(field)
    return label(field)


def schema_sidecar_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".schema.json")


def write_snapshot(table: Table, csv_path: Path | str) -> None:
    """Write ``<name>.csv`` plus ``<name>.schema.json``, deterministically."""
    csv_path = Path(csv_path)
    schema = [{"name": COUNTRY_CODE, "dtype": "txt", "hist": False, "mape": None}]
    for name in table.column_names():
        schema.append(
            {
                "name": format_column_name(name),
                "dtype": name.dtype,
                "hist": name.hist,
                "mape": name.mape,
            }
        )
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([entry["name"] for entry in schema])
        columns = [cells for _, cells in table.iter_columns()]
        for i, code in enumerate(table.row_index):
            writer.writerow([code] + [_cell_to_field(cells[i]) for cells in columns])
    with open(schema_sidecar_path(csv_path), "w", encoding="utf-8") as handle:
        json.dump(schema, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def read_snapshot(csv_path: Path | str, version: str | None = None) -> Table:
    """Read a snapshot back; the version is inferred from a v1..v5 stem."""
    csv_path = Path(csv_path)
    with open(schema_sidecar_path(csv_path), encoding="utf-8") as handle:
        schema = json.load(handle)
    with open(csv_path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaMismatchError(f"{csv_path} is empty")
    header = rows[0]
    if len(header) != len(schema):
        raise SchemaMismatchError(
            f"{csv_path} has {len(header)} columns, sidecar lists {len(schema)}"
        )
    if header[0] != COUNTRY_CODE or schema[0]["name"] != COUNTRY_CODE:
        raise SchemaMismatchError(f"first column of {csv_path} must be Country Code")

    names: list[ColumnName] = []
    for entry, head in zip(schema[1:], header[1:]):
        if entry["name"] != head:
            raise SchemaMismatchError(
                f"header {head!r} does not match sidecar {entry['name']!r}"
            )
        name = parse_column_name(head)
        if name.dtype != entry["dtype"] or name.hist != bool(entry["hist"]):
            raise SchemaMismatchError(f"sidecar dtype disagrees for {head!r}")
        names.append(name)

    codes: list[str] = []
    cell_columns: list[list[Cell]] = [[] for _ in names]
    for row in rows[1:]:
        if len(row) != len(header):
            raise SchemaMismatchError(f"ragged row in {csv_path}: {row[:2]}...")
        codes.append(row[0])
        for j, field in enumerate(row[1:]):
            cell_columns[j].append(_field_to_cell(field, names[j].dtype, csv_path.name))

    if version is None:
        version = csv_path.stem if csv_path.stem in VERSIONS else "v1"
    return Table(codes, zip(names, cell_columns), version=version)
