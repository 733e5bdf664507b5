"""Input-validation helpers shared by the stage transformers."""

from __future__ import annotations

from .table import Table


def check_table(X, version: str | None = None) -> Table:
    """Validate that ``X`` is a Table (optionally of a given version)."""
    if not isinstance(X, Table):
        raise TypeError(f"expected a Table, got {type(X).__name__}")
    if version is not None and X.version != version:
        raise ValueError(f"expected a {version} table, got {X.version}")
    return X


def check_columns_exist(table: Table, names: list[str], context: str) -> None:
    missing = [n for n in names if not table.has_column(n)]
    if missing:
        raise KeyError(f"{context}: missing columns {missing}")
