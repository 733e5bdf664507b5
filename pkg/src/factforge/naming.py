"""Column-name grammar for the country dataset.

Every column name is a single string of space-separated parts::

    <dtype> [(MAPE): <percent>] <body> [<subfield>] [hist]

``dtype`` is one of the six data-type tags (txt, num, lbl, enc, sum,
amount).  ``body`` is the hyphen-joined category-field part and is always a
single token; everything between the body and an optional trailing ``hist``
token is the subfield, which may itself contain spaces (e.g. ``degree of
risk_high``).  The optional ``(MAPE): <percent>`` pair marks columns whose
missing values were machine-filled and records the model's mean absolute
percentage error, written with two decimals.

Three reserved metadata names fall outside the grammar and are matched
verbatim: ``Country Code``, ``txt Country Name`` and ``lbl Region``.

Hyphens and spaces also occur *inside* real category/field/subfield names,
so the body/subfield boundary is resolved at the first space after the
dtype (and MAPE prefix, when present); multi-word subfields are preserved
verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

DTYPE_TAGS = ("txt", "num", "lbl", "enc", "sum", "amount")

MAPE_MARKER = "(MAPE):"
HIST_MARKER = "hist"

COUNTRY_CODE = "Country Code"
COUNTRY_NAME = "txt Country Name"
REGION = "lbl Region"
RESERVED_NAMES = (COUNTRY_CODE, COUNTRY_NAME, REGION)


class ColumnNameError(ValueError):
    """Base error for malformed column names."""


class UnknownDtypeError(ColumnNameError):
    pass


class MalformedMapeError(ColumnNameError):
    pass


@dataclass(frozen=True, slots=True)
class ColumnName:
    """Parsed form of a column name.

    ``mape`` is stored as the percent value written in the name
    (``1.05`` means 1.05%).  ``reserved`` marks the three metadata
    columns whose names are matched verbatim rather than by grammar.
    """

    dtype: str
    body: str
    subfield: str | None = None
    mape: float | None = None
    hist: bool = False
    reserved: bool = False

    def __post_init__(self) -> None:
        if self.dtype not in DTYPE_TAGS:
            raise UnknownDtypeError(f"unknown dtype tag {self.dtype!r}")
        if self.mape is not None and self.mape < 0:
            raise MalformedMapeError(f"negative MAPE {self.mape!r}")
        if not self.body:
            raise ColumnNameError("empty body")

    def with_mape(self, percent: float) -> "ColumnName":
        """Return a copy tagged with a (two-decimal) MAPE percentage."""
        return replace(self, mape=round(float(percent), 2))

    def with_subfield(self, subfield: str | None) -> "ColumnName":
        return replace(self, subfield=subfield)

    def formatted(self) -> str:
        return format_column_name(self)


_RESERVED_FORMS = {
    COUNTRY_CODE: ColumnName(dtype="txt", body=COUNTRY_CODE, reserved=True),
    COUNTRY_NAME: ColumnName(dtype="txt", body="Country Name", reserved=True),
    REGION: ColumnName(dtype="lbl", body="Region", reserved=True),
}


def parse_column_name(name: str) -> ColumnName:
    """Parse a formatted column name back into its parts.

    Raises UnknownDtypeError when the first token is not a dtype tag and
    the name is not reserved, MalformedMapeError when the MAPE marker is
    present without a parseable number, and ColumnNameError when no body
    remains.
    """
    if not name:
        raise ColumnNameError("empty column name")
    if name in _RESERVED_FORMS:
        return _RESERVED_FORMS[name]

    tokens = name.split(" ")
    dtype = tokens[0]
    if dtype not in DTYPE_TAGS:
        raise UnknownDtypeError(f"unknown dtype tag {dtype!r} in {name!r}")

    i = 1
    mape: float | None = None
    if i < len(tokens) and tokens[i] == MAPE_MARKER:
        if i + 1 >= len(tokens):
            raise MalformedMapeError(f"{MAPE_MARKER} without a number in {name!r}")
        try:
            mape = float(tokens[i + 1])
        except ValueError:
            raise MalformedMapeError(
                f"unparseable MAPE value {tokens[i + 1]!r} in {name!r}"
            ) from None
        if mape < 0:
            raise MalformedMapeError(f"negative MAPE in {name!r}")
        i += 2

    if i >= len(tokens) or not tokens[i]:
        raise ColumnNameError(f"missing body in {name!r}")
    body = tokens[i]
    i += 1

    rest = tokens[i:]
    hist = False
    if rest and rest[-1] == HIST_MARKER:
        hist = True
        rest = rest[:-1]
    subfield = " ".join(rest) if rest else None

    return ColumnName(dtype=dtype, body=body, subfield=subfield, mape=mape, hist=hist)


def format_column_name(column: ColumnName) -> str:
    """Inverse of :func:`parse_column_name`."""
    if column.reserved:
        if column.body == COUNTRY_CODE:
            return COUNTRY_CODE
        return f"{column.dtype} {column.body}"
    parts = [column.dtype]
    if column.mape is not None:
        parts.append(MAPE_MARKER)
        parts.append(f"{column.mape:.2f}")
    parts.append(column.body)
    if column.subfield:
        parts.append(column.subfield)
    if column.hist:
        parts.append(HIST_MARKER)
    return " ".join(parts)
