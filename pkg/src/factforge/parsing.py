"""Extract per-country data from a Factbook download into a v1 table.

Input is a directory of ``<code>.json`` files, one per geopolitical entity,
each holding the scraped page HTML under ``"html"`` plus ``name`` /
``region`` / ``code`` metadata.  The page markup is too distorted for a
proper HTML tree walk, so extraction is plain substring splitting on the
lowercased document:

* categories split at ``<div class="category `` (title from the enclosing
  element),
* fields split at ``<div class='category_data subfield`` (double-quote
  variant tried when the primary marker yields nothing; title from the
  nearest preceding field anchor),
* subfields located via ``subfield-`` spans.

Each subfield fragment is classified as Grouped, Historical, Numerical or
Textual and converted accordingly; failures degrade the cell to Missing and
are recorded in the parse audit rather than aborting the entity.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field as dataclass_field
from enum import Enum
from pathlib import Path

from .naming import ColumnName, format_column_name
from .table import MISSING, Cell, Table, label, number, text

logger = logging.getLogger(__name__)

CATEGORY_MARKER = '<div class="category '
FIELD_MARKER = "<div class='category_data subfield"
FIELD_MARKER_ALT = '<div class="category_data subfield'
GROUP_MARKER = 'subfield-name">'

NA_TOKENS = frozenset({"n/a", "na", "na%", "nan", "$na"})

_MAGNITUDES = {"million": 1e6, "billion": 1e9, "trillion": 1e12}

_NUMBER_RE = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?")
_MAGNITUDE_RE = re.compile(r"\s*(million|billion|trillion)\b")
_NOTE_RE = re.compile(r"\bnote\b")
_TAG_RE = re.compile(r"<[^>]*>")
_RANKORDER_RE = re.compile(r"<a[^>]*rankorder[^>]*>.*?</a>", re.DOTALL)
_SECTIONTITLE_RE = re.compile(r'sectiontitle="([^"]*)"')
_CATEGORY_ID_RE = re.compile(r'id="([a-z0-9\- ]+?)-category-section"')
_H2_RE = re.compile(r"<h2[^>]*>(.*?)</h2>", re.DOTALL)
_FIELD_ID_RE = re.compile(r'id="field-([a-z0-9\-]+)"')
_FIELD_TITLE_RE = re.compile(r"<h3[^>]*>(.*?)</h3>", re.DOTALL)
_NAME_SPAN_RE = re.compile(r'<span[^>]*subfield-name">[^<]*</span>')
_TITLE_RE = re.compile(r'subfield-name">([^<]*)<')
_SPAN_EVENT_RE = re.compile(r'subfield-(number|date)">([^<]*)<')
_YEAR_RE = re.compile(r"(?:19|20)\d{2}")
# Strict fallback for span-less pages: a number (with optional unit)
# immediately followed by a parenthesised year stamp.
_YEARSTAMP_RE = re.compile(
    r"([-+]?[\d][\d,.]*\s*%?(?:\s*(?:of gdp|sq km|km|m))?)\s*"
    r"\(\s*((?:19|20)\d{2})[^)]*\)"
)


class EmptyDirectoryError(ValueError):
    pass


class SubfieldKind(Enum):
    NUMERICAL = "numerical"
    TEXTUAL = "textual"
    HISTORICAL = "historical"
    GROUPED = "grouped"


@dataclass(frozen=True, slots=True)
class RawEntityDocument:
    country_code: str
    name: str
    region: str
    raw_html: str  # lowercased exactly once, on load
    source_path: str


@dataclass(frozen=True, slots=True)
class SubfieldRecord:
    entity: str
    category: str
    field: str
    subfield_title: str | None
    kind: SubfieldKind
    payload: str  # raw fragment kept for audit


@dataclass
class ParseAudit:
    """Per-run extraction log: degraded cells, filled-cell provenance."""

    degraded: list[dict] = dataclass_field(default_factory=list)
    filled: list[dict] = dataclass_field(default_factory=list)
    warnings: list[str] = dataclass_field(default_factory=list)

    def record_degraded(self, entity: str, column: str, reason: str, raw: str) -> None:
        self.degraded.append(
            {"entity": entity, "column": column, "reason": reason, "raw": raw[:200]}
        )

    def record_filled(self, entity: str, column: str, record: SubfieldRecord) -> None:
        self.filled.append(
            {
                "entity": entity,
                "column": column,
                "category": record.category,
                "field": record.field,
                "subfield": record.subfield_title,
                "kind": record.kind.value,
            }
        )

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(message)

    def write_degraded(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.degraded:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


def ingest_directory(
    directory: Path | str, audit: ParseAudit | None = None
) -> list[RawEntityDocument]:
    """Load every ``*.json`` entity file; unreadable files are skipped."""
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyDirectoryError(f"{directory} is not a directory")
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise EmptyDirectoryError(f"no entity files in {directory}")
    documents = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as handle:
                payload = json.load(handle)
            html = payload["html"]
            if not isinstance(html, str):
                raise TypeError("html payload is not a string")
        except (OSError, ValueError, KeyError, TypeError) as exc:
            message = f"skipping unreadable entity file {path.name}: {exc}"
            if audit is not None:
                audit.warn(message)
            else:
                logger.warning(message)
            continue
        code = str(payload.get("code") or path.stem).strip().lower()
        documents.append(
            RawEntityDocument(
                country_code=code,
                name=str(payload.get("name", "")).strip().lower(),
                region=str(payload.get("region", "")).strip().lower(),
                raw_html=html.lower(),
                source_path=str(path),
            )
        )
    return documents


def _slugify(title: str) -> str:
    return re.sub(r"\s+", "-", title.strip())


def _strip_tags(fragment: str) -> str:
    return re.sub(r"\s+", " ", _TAG_RE.sub(" ", fragment)).strip()


def split_categories(raw_html: str) -> list[tuple[str, str]]:
    """Split a lowercased page at the category marker.

    Content before the first marker is discarded.  Returns
    ``(title, fragment)`` pairs; an empty list means the entity
    contributes only its metadata columns.
    """
    parts = raw_html.split(CATEGORY_MARKER)
    categories = []
    for part in parts[1:]:
        head = part[:500]
        match = _SECTIONTITLE_RE.search(head)
        if match:
            title = match.group(1)
        else:
            match = _CATEGORY_ID_RE.search(head)
            if match:
                title = match.group(1)
            else:
                h2 = _H2_RE.search(part)
                title = _strip_tags(h2.group(1)).split("::")[0] if h2 else "unknown"
        categories.append((_slugify(title), part))
    return categories


def _field_markers(fragment: str) -> list[int]:
    positions = [m.start() for m in re.finditer(re.escape(FIELD_MARKER), fragment)]
    if not positions:
        positions = [
            m.start() for m in re.finditer(re.escape(FIELD_MARKER_ALT), fragment)
        ]
    return positions


def split_fields(category_fragment: str) -> list[tuple[str, str]]:
    """Split a category at the subfield-div marker.

    The field title comes from the nearest preceding ``id="field-..."``
    anchor (or ``<h3>`` heading); consecutive divs with no anchor between
    them belong to the same field and inherit its title.
    """
    positions = _field_markers(category_fragment)
    fields = []
    previous = 0
    title = "unknown"
    for i, start in enumerate(positions):
        gap = category_fragment[previous:start]
        anchors = _FIELD_ID_RE.findall(gap)
        if anchors:
            title = anchors[-1]
        else:
            headings = _FIELD_TITLE_RE.findall(gap)
            if headings:
                title = _slugify(_strip_tags(headings[-1]).rstrip(":"))
        end = positions[i + 1] if i + 1 < len(positions) else len(category_fragment)
        fields.append((title, category_fragment[start:end]))
        previous = start
    return fields


def _class_remainder(field_fragment: str) -> str:
    for marker in (FIELD_MARKER, FIELD_MARKER_ALT):
        if field_fragment.startswith(marker):
            rest = field_fragment[len(marker):]
            return rest.split(">", 1)[0]
    return ""


def _payload(field_fragment: str, drop_title_span: bool) -> str:
    body = field_fragment.split(">", 1)
    body = body[1] if len(body) == 2 else field_fragment
    if drop_title_span:
        body = _NAME_SPAN_RE.sub(" ", body, count=1)
    return body


def detect_subfields(
    field_fragment: str, entity: str, category: str, field: str
) -> list[SubfieldRecord]:
    """Classify one subfield div and wrap it as a record.

    A div with no ``subfield-`` title adopts its field's name (and the
    resulting column carries no subfield part).
    """
    class_str = _class_remainder(field_fragment)
    group_count = field_fragment.count(GROUP_MARKER)
    date_count = field_fragment.count('subfield-date">')

    if "grouped" in class_str or group_count >= 2:
        kind = SubfieldKind.GROUPED
    elif (
        "historic" in class_str
        or date_count >= 2
        or len(_YEARSTAMP_RE.findall(_strip_tags(field_fragment))) >= 2
    ):
        kind = SubfieldKind.HISTORICAL
    elif "numeric" in class_str or 'subfield-number">' in field_fragment:
        kind = SubfieldKind.NUMERICAL
    else:
        kind = SubfieldKind.TEXTUAL

    title: str | None = None
    if kind is not SubfieldKind.GROUPED:
        match = _TITLE_RE.search(field_fragment)
        if match:
            title = match.group(1).strip().rstrip(":").strip() or None

    payload = _payload(field_fragment, drop_title_span=title is not None)
    return [
        SubfieldRecord(
            entity=entity,
            category=category,
            field=field,
            subfield_title=title,
            kind=kind,
            payload=payload,
        )
    ]


def scrub_number(raw: str) -> float | None:
    """Pull one float out of a messy payload.

    Anything introduced by the word "note" is dropped, tags / currency /
    commas / percent signs / units are ignored, and an adjoining
    million/billion/trillion word scales the value.  None means no number
    survived.
    """
    cleaned = _strip_tags(raw)
    note = _NOTE_RE.search(cleaned)
    if note:
        cleaned = cleaned[: note.start()]
    match = _NUMBER_RE.search(cleaned)
    if not match:
        return None
    value = float(match.group(0).replace(",", ""))
    magnitude = _MAGNITUDE_RE.match(cleaned, match.end())
    if magnitude:
        value *= _MAGNITUDES[magnitude.group(1)]
    return value


def latest_historical(payload: str) -> float | None:
    """Value of the most recent year-stamped entry; same-year ties keep
    the later occurrence in document order."""
    pairs: list[tuple[int, int, str]] = []
    pending: str | None = None
    for order, match in enumerate(_SPAN_EVENT_RE.finditer(payload)):
        span_kind, content = match.groups()
        if span_kind == "number":
            pending = content
        elif pending is not None:
            year_match = _YEAR_RE.search(content)
            if year_match:
                pairs.append((int(year_match.group(0)), order, pending))
                pending = None
    if not pairs:
        stripped = _strip_tags(payload)
        for order, match in enumerate(_YEARSTAMP_RE.finditer(stripped)):
            value_text, year = match.groups()
            pairs.append((int(year), order, value_text))
    if not pairs:
        return None
    _, _, value_text = max(pairs, key=lambda item: (item[0], item[1]))
    return scrub_number(value_text)


def split_grouped(payload: str) -> list[tuple[str, float | None]]:
    """Explode a grouped payload into (group name, value) pairs."""
    groups = []
    for segment in payload.split(GROUP_MARKER)[1:]:
        name_part, _, rest = segment.partition("<")
        name = name_part.strip().rstrip(":").strip()
        if not name:
            continue
        groups.append((name, scrub_number(rest)))
    return groups


def clean_text(payload: str) -> str | None:
    """Textual payload: drop country-ranking anchors and leftover markup."""
    cleaned = _RANKORDER_RE.sub(" ", payload)
    cleaned = _strip_tags(cleaned)
    return cleaned or None


def normalize_na(cell: Cell) -> Cell:
    """Text/Label cells holding a placeholder token become Missing."""
    if cell.kind.value in ("text", "label"):
        if str(cell.value).strip().lower() in NA_TOKENS:
            return MISSING
    return cell


def extract_records(document: RawEntityDocument) -> list[SubfieldRecord]:
    records = []
    for category, fragment in split_categories(document.raw_html):
        for field_title, field_fragment in split_fields(fragment):
            records.extend(
                detect_subfields(
                    field_fragment, document.country_code, category, field_title
                )
            )
    return records


def _unique_name(name: ColumnName, seen: set[str]) -> ColumnName:
    """Resolve duplicate subfield titles within one entity with ' #2' tags."""
    candidate = name
    counter = 2
    while format_column_name(candidate) in seen:
        suffix = f"#{counter}"
        base = name.subfield or ""
        joined = f"{base} {suffix}".strip()
        candidate = name.with_subfield(joined)
        counter += 1
    return candidate


def build_table_v1(
    documents: list[RawEntityDocument], audit: ParseAudit | None = None
) -> Table:
    """Run the full marker cascade over every document and assemble v1.

    Documents are processed in sorted country-code order so runs are
    deterministic; per-cell failures degrade to Missing with an audit
    entry; columns that end up entirely Missing are dropped.
    """
    if not documents:
        raise EmptyDirectoryError("no entity documents to parse")
    audit = audit if audit is not None else ParseAudit()
    documents = sorted(documents, key=lambda d: d.country_code)
    codes = [d.country_code for d in documents]
    if len(set(codes)) != len(codes):
        raise ValueError("duplicate country codes in input")

    order: list[str] = []
    store: dict[str, tuple[ColumnName, dict[str, Cell]]] = {}

    def put(
        name: ColumnName,
        document: RawEntityDocument,
        cell: Cell,
        record: SubfieldRecord,
        seen: set[str],
    ) -> None:
        name = _unique_name(name, seen)
        formatted = format_column_name(name)
        seen.add(formatted)
        if formatted not in store:
            order.append(formatted)
            store[formatted] = (name, {})
        if cell.kind.value in ("text", "label"):
            cell = normalize_na(cell)
        store[formatted][1][document.country_code] = cell
        if not cell.is_missing:
            audit.record_filled(document.country_code, formatted, record)

    for document in documents:
        seen: set[str] = set()
        for record in extract_records(document):
            body = f"{record.category}-{record.field}"
            if record.kind is SubfieldKind.GROUPED:
                groups = split_grouped(record.payload)
                if not groups:
                    audit.record_degraded(
                        document.country_code,
                        f"num {body}",
                        "grouped payload with no groups",
                        record.payload,
                    )
                    continue
                for group_name, value in groups:
                    name = ColumnName("num", body, subfield=group_name)
                    if value is None:
                        cell = MISSING
                        audit.record_degraded(
                            document.country_code,
                            format_column_name(name),
                            "no numeric value in group",
                            record.payload,
                        )
                    else:
                        cell = number(value)
                    put(name, document, cell, record, seen)
                continue

            if record.kind is SubfieldKind.HISTORICAL:
                name = ColumnName(
                    "num", body, subfield=record.subfield_title, hist=True
                )
                value = latest_historical(record.payload)
            elif record.kind is SubfieldKind.NUMERICAL:
                name = ColumnName("num", body, subfield=record.subfield_title)
                value = scrub_number(record.payload)
            else:
                name = ColumnName("txt", body, subfield=record.subfield_title)
                value = clean_text(record.payload)

            if value is None:
                cell = MISSING
                audit.record_degraded(
                    document.country_code,
                    format_column_name(name),
                    "no parseable value",
                    record.payload,
                )
            elif record.kind is SubfieldKind.TEXTUAL:
                cell = text(value)
            else:
                cell = number(value)
            put(name, document, cell, record, seen)

    columns: list[tuple[ColumnName, list[Cell]]] = [
        (
            ColumnName("txt", "Country Name", reserved=True),
            [text(d.name) if d.name else MISSING for d in documents],
        ),
        (
            ColumnName("lbl", "Region", reserved=True),
            [label(d.region) if d.region else MISSING for d in documents],
        ),
    ]
    for formatted in order:
        name, by_code = store[formatted]
        cells = [by_code.get(code, MISSING) for code in codes]
        if all(cell.is_missing for cell in cells):
            continue
        columns.append((name, cells))

    return Table(codes, columns, version="v1")
