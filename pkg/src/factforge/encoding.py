"""One-hot expansion of label columns: v3 -> v4.

Every lbl column spawns one binary enc column per distinct label (the
"None/NA" label included, so no baseline category is dropped); source
columns are retained.  The enc name appends "_<label>" to the source's
subfield (or body), e.g. ``enc ... degree of risk_high``.  Label sets are
ordered lexicographically so the expansion is deterministic, and for each
source column the generated columns sum to exactly 1 per row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

from .naming import ColumnName, parse_column_name
from .table import Table, binary
from .validation import check_table


class MissingLabelCellError(ValueError):
    """An lbl column still contains Missing cells (upstream contract)."""


@dataclass(frozen=True)
class EncodingPlan:
    """Per source column: ordered label set and the generated enc names."""

    columns: tuple[tuple[str, tuple[str, ...], tuple[str, ...]], ...]

    def as_dict(self) -> dict:
        return {
            source: {"labels": list(labels), "columns": list(names)}
            for source, labels, names in self.columns
        }

    def write(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=2, ensure_ascii=False)
            handle.write("\n")


def enc_column_name(source: ColumnName, label_value: str) -> ColumnName:
    base = source.body if source.subfield is None else f"{source.body} {source.subfield}"
    return parse_column_name(f"enc {base}_{label_value}")


def one_hot(table: Table) -> tuple[Table, EncodingPlan]:
    """Append binary indicator columns for every lbl column."""
    plan_entries = []
    generated = []
    for name, cells in table.iter_columns():
        if name.dtype != "lbl":
            continue
        formatted = name.formatted()
        for code, cell in zip(table.row_index, cells):
            if cell.is_missing:
                raise MissingLabelCellError(
                    f"lbl column {formatted!r} has a Missing cell at {code!r}"
                )
        labels = sorted({str(cell.value) for cell in cells})
        enc_names = []
        for label_value in labels:
            enc_name = enc_column_name(name, label_value)
            enc_names.append(enc_name.formatted())
            generated.append(
                (
                    enc_name,
                    [
                        binary(1 if str(cell.value) == label_value else 0)
                        for cell in cells
                    ],
                )
            )
        plan_entries.append((formatted, tuple(labels), tuple(enc_names)))
    out = table.with_columns(generated).with_version("v4")
    return out, EncodingPlan(columns=tuple(plan_entries))


class LabelOneHotEncoder(BaseEstimator, TransformerMixin):
    """Stage transformer; the learned label sets live in ``plan_``."""

    def fit(self, X, y=None):
        check_table(X)
        _, self.plan_ = one_hot(X)
        return self

    def transform(self, X):
        check_table(X)
        out, plan = one_hot(X)
        if hasattr(self, "plan_") and plan.columns != self.plan_.columns:
            raise ValueError("label sets differ from the fitted table")
        return out

    def fit_transform(self, X, y=None, **fit_params):
        check_table(X)
        out, self.plan_ = one_hot(X)
        return out
