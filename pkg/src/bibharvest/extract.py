"""Label-table extraction for catalogue record pages.

Record pages list their metadata as table rows of the form::

    <tr><td class="label-row"><strong>Título</strong></td><td>...</td></tr>

Rows are located with XPath, labels are matched against a :class:`LabelMap`
and values land in a :class:`CatalogRecord`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence

from lxml import etree, html as lxml_html

RECORD_FIELDS: tuple[str, ...] = (
    "url",
    "author",
    "title",
    "placeOfPublication",
    "publisher",
    "publicationDate",
    "physicalDescription",
    "otherPhysicalCharacteristics",
    "dimensions",
    "materialType",
    "signature",
    "location",
    "headquarters",
)

# Every column except the always-present url.
CANONICAL_FIELDS: tuple[str, ...] = RECORD_FIELDS[1:]
DEFAULT_FIELD_SET: tuple[str, ...] = CANONICAL_FIELDS

_WHITESPACE_RUN = re.compile(r"[ \t\n\r\f\v]+")

_ROW_XPATH = etree.XPath("//tr")
_LABEL_XPATH = etree.XPath(
    "td[contains(concat(' ', normalize-space(@class), ' '), ' label-row ')]/strong"
)
_VALUE_XPATH = etree.XPath("td[2]")


class ExtractionError(Exception):
    """Base class for extraction failures."""


class UnparseableInput(ExtractionError):
    """The input cannot be interpreted as an HTML document."""


class EmptyFieldSet(ExtractionError):
    """A completion rate was requested over no fields."""


class UnknownField(ExtractionError):
    """A field key is not one of the canonical record fields."""


def clean_text(raw: str) -> str:
    """Trim and collapse every whitespace run to a single space."""
    return _WHITESPACE_RUN.sub(" ", raw).strip(" ")


def handle_null(value: Optional[str]) -> Optional[str]:
    """Map the empty string to ``None``; pass anything else through."""
    if value is None or value == "":
        return None
    return value


@dataclass(frozen=True)
class LabelMap:
    """Ordered alias -> canonical field mapping.

    Aliases are compared after :func:`clean_text`; accents and case are kept,
    so each spelling variant needs its own entry.
    """

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen: dict[str, str] = {}
        normalized = []
        for alias, key in self.entries:
            if key not in CANONICAL_FIELDS:
                raise UnknownField(f"label {alias!r} maps to unknown field {key!r}")
            alias = clean_text(alias)
            if not alias:
                raise ValueError("label alias must be non-empty")
            if alias in seen and seen[alias] != key:
                raise ValueError(
                    f"label {alias!r} maps to both {seen[alias]!r} and {key!r}"
                )
            seen[alias] = key
            normalized.append((alias, key))
        object.__setattr__(self, "entries", tuple(normalized))
        object.__setattr__(self, "_lookup", seen)

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "LabelMap":
        """Build from ``(alias, field)`` tuples or ``{"alias", "field"}`` dicts."""
        entries = []
        for item in pairs:
            if isinstance(item, dict):
                entries.append((item["alias"], item["field"]))
            else:
                alias, key = item
                entries.append((alias, key))
        return cls(tuple(entries))

    def lookup(self, label: str) -> Optional[str]:
        return self._lookup.get(clean_text(label))

    def aliases_for(self, key: str) -> list[str]:
        return [alias for alias, k in self.entries if k == key]

    def to_pairs(self) -> list[dict]:
        return [{"alias": alias, "field": key} for alias, key in self.entries]


# Spanish labels first (these are what the mock catalogue renders), then the
# bilingual variants. "Autor" has no counterpart in the original scraper.
DEFAULT_LABEL_MAP = LabelMap(
    (
        ("Autor", "author"),
        ("Título", "title"),
        ("Lugar de publicación", "placeOfPublication"),
        ("Editorial", "publisher"),
        ("Fecha de publicación", "publicationDate"),
        ("Descripción física o extensión", "physicalDescription"),
        ("Otras características físicas", "otherPhysicalCharacteristics"),
        ("Dimensiones", "dimensions"),
        ("Tipo de material", "materialType"),
        ("Signatura", "signature"),
        ("Localización", "location"),
        ("Sede", "headquarters"),
        ("Autor - Author", "author"),
        ("Título - Title", "title"),
        ("Lugar de publicación - Place of publication", "placeOfPublication"),
        ("Editorial - Publisher", "publisher"),
        ("Fecha de publicación - Publication date", "publicationDate"),
        ("Descripción física o extensión - Physical description", "physicalDescription"),
        (
            "Otras características físicas - Other physical characteristics",
            "otherPhysicalCharacteristics",
        ),
        ("Dimensiones - Dimensions", "dimensions"),
        ("Tipo de material - Material type", "materialType"),
        ("Signatura - Signature", "signature"),
        ("Localización - Location", "location"),
        ("Sede - Headquarter", "headquarters"),
    )
)


@dataclass
class CatalogRecord:
    url: str
    author: Optional[str] = None
    title: Optional[str] = None
    placeOfPublication: Optional[str] = None
    publisher: Optional[str] = None
    publicationDate: Optional[str] = None
    physicalDescription: Optional[str] = None
    otherPhysicalCharacteristics: Optional[str] = None
    dimensions: Optional[str] = None
    materialType: Optional[str] = None
    signature: Optional[str] = None
    location: Optional[str] = None
    headquarters: Optional[str] = None

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in RECORD_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "CatalogRecord":
        unknown = set(data) - set(RECORD_FIELDS)
        if unknown:
            raise UnknownField(f"unknown record fields: {sorted(unknown)}")
        return cls(**{name: data.get(name) for name in RECORD_FIELDS})

    def populated(self) -> list[tuple[str, str]]:
        """``(field, value)`` pairs for non-empty canonical fields, in schema order."""
        out = []
        for name in CANONICAL_FIELDS:
            value = handle_null(getattr(self, name))
            if value is not None:
                out.append((name, value))
        return out


assert tuple(f.name for f in fields(CatalogRecord)) == RECORD_FIELDS


@dataclass
class ExtractionResult:
    record: CatalogRecord
    unknown_labels: list[str] = field(default_factory=list)
    matched_rows: int = 0
    duplicate_labels: int = 0


def _parse_document(html: str):
    if html is None or not html.strip():
        raise UnparseableInput("empty document")
    data = html.encode("utf-8") if isinstance(html, str) else html
    parser = lxml_html.HTMLParser(encoding="utf-8", recover=True)
    try:
        root = lxml_html.document_fromstring(data, parser=parser)
    except (etree.ParserError, ValueError) as exc:
        raise UnparseableInput(str(exc)) from exc
    if root is None:
        raise UnparseableInput("no document element")
    return root


def extract_record(
    html: str, url: str, label_map: LabelMap = DEFAULT_LABEL_MAP
) -> ExtractionResult:
    """Extract one catalogue record from a label-table page.

    For each ``<tr>`` whose label cell carries the ``label-row`` class and
    wraps its label in ``<strong>``, the second ``<td>`` of the row supplies
    the value. Unknown labels are collected rather than dropped silently. When
    a label repeats, the last row wins.

    Raises:
        UnparseableInput: ``html`` is empty or not a document at all.
    """
    root = _parse_document(html)
    record = CatalogRecord(url=url)
    result = ExtractionResult(record=record)
    assigned: set[str] = set()
    for row in _ROW_XPATH(root):
        labels = _LABEL_XPATH(row)
        values = _VALUE_XPATH(row)
        if not labels or not values:
            continue
        label_text = clean_text(labels[0].text_content())
        value_text = clean_text(values[0].text_content())
        result.matched_rows += 1
        key = label_map.lookup(label_text)
        if key is None:
            result.unknown_labels.append(label_text)
            continue
        if key in assigned:
            result.duplicate_labels += 1
        assigned.add(key)
        setattr(record, key, handle_null(value_text))
    return result


def is_persistable(record: CatalogRecord) -> bool:
    """A record is stored only when it has a title."""
    return handle_null(record.title) is not None


def completion_rate(
    record: CatalogRecord, field_set: Sequence[str] = DEFAULT_FIELD_SET
) -> float:
    """Fraction of ``field_set`` that is populated in ``record``."""
    if not field_set:
        raise EmptyFieldSet("field_set must name at least one field")
    for key in field_set:
        if key not in CANONICAL_FIELDS:
            raise UnknownField(f"{key!r} is not a canonical field")
    present = sum(1 for key in field_set if handle_null(getattr(record, key)) is not None)
    return present / len(field_set)
