"""Generate lbl/amount/sum columns from selected textual columns: v2 -> v3.

Each rule reads one source text column and emits one or more new columns
named by swapping the dtype tag (source columns are kept untouched).
Generic rule groups:

* label  - keyword map to a categorical value; missing -> "None/NA",
* amount - count of delimiter-separated items,
* sum    - sum of every number in the text, ranges "a-b" counting max(a, b).

Special per-column rules cover climate labelling, pipeline-type lengths,
conscription/service age, government type (with the totalitarian /
dictatorship override found in comment clauses), suffrage, and the
unimproved-conditions extraction for water/sanitation columns.

Columns whose source carries the missing-means-zero assumption inherit it,
so their generated columns come out data-complete.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

from .cleaning import MnarManifest
from .naming import ColumnName
from .table import MISSING, Cell, Table, label, number
from .validation import check_table

logger = logging.getLogger(__name__)

NONE_LABEL = "None/NA"

PIPELINE_TYPES = (
    "condensate",
    "refined products",
    "gas",
    "oil",
    "liquid petroleum gas",
    "oil/gas/water",
    "chemicals",
)

_YEAR_PAREN_RE = re.compile(r"\(\s*(?:19|20)\d{2}[^)]*\)")
_PAREN_RE = re.compile(r"\([^)]*\)")
_RANGE_RE = re.compile(
    r"(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)\s*-\s*"
    r"(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)"
)
_NUMBER_RE = re.compile(r"(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)")
_MAGNITUDE_RE = re.compile(r"\s*(million|billion|trillion)\b")
_MAGNITUDES = {"million": 1e6, "billion": 1e9, "trillion": 1e12}
_AGE_RE = re.compile(r"\b(\d{1,2})(?:\s*-\s*(\d{1,2}))?\s*years?\b")
_PIPELINE_CLAUSE_RE = re.compile(
    r"(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)\s*km\s+([a-z][a-z /\-]*)"
)
_UNIMPROVED_RE = re.compile(r"unimproved[^0-9]*(\d{1,3}(?:,\d{3})*(?:\.\d+)?)")


@dataclass(frozen=True)
class TransformRule:
    source: str
    group: str  # label | amount | sum | special
    keywords: tuple[tuple[str, str], ...] = ()
    delimiters: tuple[str, ...] = (";", ",")
    zero_keywords: tuple[str, ...] = ()
    after_colon: bool = False
    special: str | None = None


@dataclass(frozen=True)
class TransformRules:
    rules: tuple[TransformRule, ...]
    koppen_map: tuple[tuple[str, str], ...]
    climate_punctuation: tuple[str, ...] = (";", ":", ",")
    pipeline_type_map: tuple[tuple[str, str], ...] = ()


def load_transform_rules(path: Path | str | None = None) -> TransformRules:
    if path:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        with resources.files("factforge.data").joinpath(
            "transform_rules.json"
        ).open(encoding="utf-8") as handle:
            payload = json.load(handle)
    rules = tuple(
        TransformRule(
            source=entry["source"],
            group=entry["group"],
            keywords=tuple((k, v) for k, v in entry.get("keywords", [])),
            delimiters=tuple(entry.get("delimiters", [";", ","])),
            zero_keywords=tuple(entry.get("zero_keywords", [])),
            after_colon=entry.get("after_colon", False),
            special=entry.get("special"),
        )
        for entry in payload["rules"]
    )
    return TransformRules(
        rules=rules,
        koppen_map=tuple((k, v) for k, v in payload["koppen_map"]),
        climate_punctuation=tuple(payload.get("climate_punctuation", [";", ":", ","])),
        pipeline_type_map=tuple((k, v) for k, v in payload["pipeline_type_map"]),
    )


def match_keywords(
    text_value: str, keywords: tuple[tuple[str, str], ...]
) -> str | None:
    """First matching keyword wins; longer keywords take precedence."""
    lowered = text_value.lower()
    ordered = sorted(enumerate(keywords), key=lambda kv: (-len(kv[1][0]), kv[0]))
    for _, (keyword, output) in ordered:
        if keyword in lowered:
            return output
    return None


def to_label(cell: Cell, rule: TransformRule) -> tuple[str, str | None]:
    """Label for one cell, plus an audit reason when no keyword matched."""
    if cell.is_missing:
        return NONE_LABEL, None
    matched = match_keywords(str(cell.value), rule.keywords)
    if matched is None:
        return NONE_LABEL, "no keyword match"
    return matched, None


def _strip_year_parens(text_value: str) -> str:
    return _YEAR_PAREN_RE.sub(" ", text_value)


def count_items(cell: Cell, rule: TransformRule, mnar: bool) -> float | None:
    """Number of delimiter-separated items; None means the cell stays missing."""
    if cell.is_missing:
        return 0.0 if mnar else None
    text_value = str(cell.value).strip().lower()
    if text_value in ("", "none"):
        return 0.0
    for zero_keyword in rule.zero_keywords:
        if zero_keyword in text_value:
            return 0.0
    text_value = _PAREN_RE.sub(" ", text_value)
    if rule.after_colon and ":" in text_value:
        text_value = text_value.split(":", 1)[1]
    items = re.split("|".join(re.escape(d) for d in rule.delimiters), text_value)
    return float(sum(1 for item in items if item.strip()))


def _number_tokens(text_value: str) -> list[float]:
    """All numbers in the text; ranges contribute their larger bound and an
    adjoining million/billion/trillion word scales the token."""
    tokens: list[float] = []
    remaining = _strip_year_parens(text_value)
    position = 0
    while position < len(remaining):
        range_match = _RANGE_RE.match(remaining, position)
        if range_match is None:
            range_match = _RANGE_RE.search(remaining, position)
        number_match = _NUMBER_RE.search(remaining, position)
        if number_match is None:
            break
        if range_match is not None and range_match.start() == number_match.start():
            low = float(range_match.group(1).replace(",", ""))
            high = float(range_match.group(2).replace(",", ""))
            value = max(low, high)
            end = range_match.end()
        else:
            value = float(number_match.group(1).replace(",", ""))
            end = number_match.end()
        magnitude = _MAGNITUDE_RE.match(remaining, end)
        if magnitude:
            value *= _MAGNITUDES[magnitude.group(1)]
            end = magnitude.end()
        tokens.append(value)
        position = end
    return tokens


def sum_items(cell: Cell, rule: TransformRule, mnar: bool) -> float | None:
    """Sum of every number in the text (see :func:`_number_tokens`)."""
    if cell.is_missing:
        return 0.0 if mnar else None
    text_value = str(cell.value).strip().lower()
    if text_value in ("", "none"):
        return 0.0
    tokens = _number_tokens(text_value)
    if not tokens:
        return 0.0 if mnar else None
    return float(sum(tokens))


def climate_label(
    cell: Cell,
    koppen_map: tuple[tuple[str, str], ...],
    punctuation: tuple[str, ...] = (";", ":", ","),
) -> tuple[str, str | None]:
    """Climate class from the leading clause of a climate description.

    The text is split at the highest-priority punctuation present and the
    left-most segment searched for climate keywords in fixed map order.
    """
    if cell.is_missing:
        return NONE_LABEL, None
    text_value = str(cell.value).lower()
    for punct in punctuation:
        if punct in text_value:
            text_value = text_value.split(punct, 1)[0]
            break
    for keyword, climate in koppen_map:
        if keyword in text_value:
            return climate, None
    return NONE_LABEL, "no climate keyword"


def pipeline_columns(
    cell: Cell, type_map: tuple[tuple[str, str], ...]
) -> tuple[dict[str, float], list[str]]:
    """Total pipeline length per canonical type, in km.

    Raw type strings are folded into the canonical set via the first
    matching entry of ``type_map``; unrecognised types land in
    "oil/gas/water" and are reported back for the audit.
    """
    totals = {t: 0.0 for t in PIPELINE_TYPES}
    unknown: list[str] = []
    if cell.is_missing:
        return totals, unknown
    text_value = _strip_year_parens(str(cell.value).lower())
    # clause boundaries (";" or ",") fall outside the type charset, so the
    # full-text scan keeps thousands separators inside lengths intact
    for match in _PIPELINE_CLAUSE_RE.finditer(text_value):
        length = float(match.group(1).replace(",", ""))
        raw_type = match.group(2).strip()
        for keyword, canonical in type_map:
            if keyword in raw_type:
                totals[canonical] += length
                break
        else:
            totals["oil/gas/water"] += length
            unknown.append(raw_type)
    return totals, unknown


def service_age_and_conscription(cell: Cell) -> tuple[str, str]:
    """(conscription yes/no/None-NA, minimum service age as a label).

    "no conscription" / "no compulsory" win over a bare "compulsory";
    any age under 15 maps the service age to "none".
    """
    if cell.is_missing:
        return NONE_LABEL, NONE_LABEL
    text_value = str(cell.value).lower()
    if "no conscription" in text_value or "no compulsory" in text_value:
        conscription = "no"
    elif "compulsory" in text_value:
        conscription = "yes"
    else:
        conscription = NONE_LABEL
    ages: list[int] = []
    for match in _AGE_RE.finditer(text_value):
        ages.append(int(match.group(1)))
        if match.group(2):
            ages.append(int(match.group(2)))
    if not ages:
        return conscription, NONE_LABEL
    youngest = min(ages)
    return conscription, "none" if youngest < 15 else str(youngest)


def government_type_label(cell: Cell, rule: TransformRule) -> tuple[str, str | None]:
    """Government type with the comment-clause override.

    A "totalitarian" or "dictatorship" mention anywhere in the field text
    (including note clauses) wins over the main clause; "unresolved" maps
    to "in transition".
    """
    if cell.is_missing:
        return NONE_LABEL, None
    text_value = str(cell.value).lower()
    if "totalitarian" in text_value:
        return "totalitarian", None
    if "dictatorship" in text_value:
        return "dictatorship", None
    if "unresolved" in text_value:
        return "in transition", None
    matched = match_keywords(text_value, rule.keywords)
    if matched is None:
        return NONE_LABEL, "no keyword match"
    return matched, None


def suffrage_label(cell: Cell) -> str:
    if cell.is_missing:
        return NONE_LABEL
    text_value = str(cell.value).lower()
    if "universal" in text_value and "compulsory" in text_value:
        return "universal compulsory"
    if "universal" in text_value:
        return "universal"
    return "restricted"


def unimproved_value(cell: Cell) -> float | None:
    if cell.is_missing:
        return None
    match = _UNIMPROVED_RE.search(str(cell.value).lower())
    if not match:
        return None
    return float(match.group(1).replace(",", ""))


def _derived_name(source: ColumnName, dtype: str) -> ColumnName:
    return ColumnName(
        dtype, source.body, subfield=source.subfield, hist=source.hist
    )


def construct(
    table: Table,
    rules: TransformRules | None = None,
    manifest: MnarManifest | None = None,
) -> tuple[Table, list[dict]]:
    """Evaluate every rule against v2 and append the generated columns.

    Rules whose source column is absent, or that fail outright, are
    skipped with an audit entry; source columns are never modified.
    """
    rules = rules if rules is not None else load_transform_rules()
    manifest = manifest if manifest is not None else MnarManifest.load()
    audit: list[dict] = []
    out = table

    def note(column: str, entity: str | None, reason: str, raw: str = "") -> None:
        audit.append(
            {"column": column, "entity": entity, "reason": reason, "raw": raw[:200]}
        )

    for rule in rules.rules:
        if not out.has_column(rule.source):
            note(rule.source, None, "source column not present; rule skipped")
            continue
        source_name = out.name_of(rule.source)
        cells = out.cells(rule.source)
        mnar = manifest.covers(source_name)
        try:
            generated = _apply_rule(
                rule, rules, source_name, cells, out.row_index, mnar, manifest, note
            )
            out = out.with_columns(generated)
        except Exception as exc:  # a failing rule must not sink the stage
            note(rule.source, None, f"rule failed: {exc}")
            logger.warning("rule for %s failed: %s", rule.source, exc)
    return out.with_version("v3"), audit


def _apply_rule(
    rule: TransformRule,
    rules: TransformRules,
    source_name: ColumnName,
    cells: list[Cell],
    row_index: list[str],
    mnar: bool,
    manifest: MnarManifest,
    note,
) -> list[tuple[ColumnName, list[Cell]]]:
    if rule.group == "label":
        name = _derived_name(source_name, "lbl")
        out_cells = []
        for code, cell in zip(row_index, cells):
            value, reason = to_label(cell, rule)
            if reason:
                note(name.formatted(), code, reason, str(cell.value))
            out_cells.append(label(value))
        return [(name, out_cells)]

    if rule.group == "amount":
        name = _derived_name(source_name, "amount")
        mnar = mnar or manifest.covers(name)
        return [
            (
                name,
                [
                    MISSING if v is None else number(v)
                    for v in (count_items(c, rule, mnar) for c in cells)
                ],
            )
        ]

    if rule.group == "sum":
        name = _derived_name(source_name, "sum")
        mnar = mnar or manifest.covers(name)
        return [
            (
                name,
                [
                    MISSING if v is None else number(v)
                    for v in (sum_items(c, rule, mnar) for c in cells)
                ],
            )
        ]

    if rule.group == "special":
        return _apply_special(
            rule, rules, source_name, cells, row_index, mnar, note
        )

    raise ValueError(f"unknown rule group {rule.group!r}")


def _apply_special(
    rule: TransformRule,
    rules: TransformRules,
    source_name: ColumnName,
    cells: list[Cell],
    row_index: list[str],
    mnar: bool,
    note,
) -> list[tuple[ColumnName, list[Cell]]]:
    if rule.special == "climate":
        name = _derived_name(source_name, "lbl")
        out_cells = []
        for code, cell in zip(row_index, cells):
            value, reason = climate_label(
                cell, rules.koppen_map, rules.climate_punctuation
            )
            if reason:
                note(name.formatted(), code, reason, str(cell.value))
            out_cells.append(label(value))
        return [(name, out_cells)]

    if rule.special == "pipelines":
        total_name = _derived_name(source_name, "sum")
        columns: dict[str, list[Cell]] = {t: [] for t in PIPELINE_TYPES}
        totals_cells: list[Cell] = []
        for code, cell in zip(row_index, cells):
            totals, unknown = pipeline_columns(cell, rules.pipeline_type_map)
            for raw_type in unknown:
                note(total_name.formatted(), code, "unknown pipeline type", raw_type)
            for t in PIPELINE_TYPES:
                columns[t].append(number(totals[t]))
            totals_cells.append(number(sum(totals.values())))
        generated = [(total_name, totals_cells)]
        for t in PIPELINE_TYPES:
            generated.append((total_name.with_subfield(t), columns[t]))
        return generated

    if rule.special == "service_age":
        conscription_name = ColumnName("lbl", "military-and-security-conscription")
        age_name = ColumnName("lbl", "military-and-security-military-service-age")
        conscription_cells = []
        age_cells = []
        for cell in cells:
            conscription, age = service_age_and_conscription(cell)
            conscription_cells.append(label(conscription))
            age_cells.append(label(age))
        return [(conscription_name, conscription_cells), (age_name, age_cells)]

    if rule.special == "government_type":
        name = _derived_name(source_name, "lbl")
        out_cells = []
        for code, cell in zip(row_index, cells):
            value, reason = government_type_label(cell, rule)
            if reason:
                note(name.formatted(), code, reason, str(cell.value))
            out_cells.append(label(value))
        return [(name, out_cells)]

    if rule.special == "suffrage":
        name = _derived_name(source_name, "lbl")
        return [(name, [label(suffrage_label(cell)) for cell in cells])]

    if rule.special == "unimproved":
        name = _derived_name(source_name, "sum")
        out_cells = []
        for code, cell in zip(row_index, cells):
            value = unimproved_value(cell)
            if value is None and not cell.is_missing:
                note(name.formatted(), code, "no unimproved value", str(cell.value))
            if value is None:
                out_cells.append(number(0.0) if mnar else MISSING)
            else:
                out_cells.append(number(value))
        return [(name, out_cells)]

    raise ValueError(f"unknown special rule {rule.special!r}")


class FeatureConstructor(BaseEstimator, TransformerMixin):
    """Stage transformer wrapping :func:`construct`; audit is ``audit_``."""

    def __init__(self, rules=None, manifest=None):
        self.rules = rules
        self.manifest = manifest

    def fit(self, X, y=None):
        check_table(X)
        return self

    def transform(self, X):
        check_table(X)
        out, self.audit_ = construct(X, rules=self.rules, manifest=self.manifest)
        return out
