"""In-memory relational datasets: tables, attributes, identifier links.

All containers are frozen dataclasses over tuples. A missing cell is the
``MISSING`` singleton, never a sentinel number.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Optional, Sequence

from .errors import InvalidDataset, UnknownTable


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


def is_missing(value) -> bool:
    return value is MISSING


class Kind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    DATETIME = "datetime"
    IDENTIFIER = "identifier"


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: Kind
    domain: Optional[tuple] = None
    unique: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.domain is not None:
            object.__setattr__(self, "domain", tuple(self.domain))


@dataclass(frozen=True)
class TableData:
    name: str
    attributes: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))

    @property
    def attribute_names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(f"table {self.name!r} has no attribute {name!r}")

    def attribute(self, name: str) -> AttributeSpec:
        return self.attributes[self.index_of(name)]

    def column(self, name: str) -> list:
        i = self.index_of(name)
        return [r[i] for r in self.rows]

    def __len__(self):
        return len(self.rows)

    def with_rows(self, rows: Iterable[Sequence]) -> "TableData":
        return TableData(self.name, self.attributes, tuple(rows))


@dataclass(frozen=True)
class Link:
    """``secondary`` rows reference ``primary`` rows through ``identifier``."""

    primary: str
    identifier: str
    secondary: str


@dataclass(frozen=True)
class RelationalDataset:
    tables: tuple
    links: tuple
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "links", tuple(self.links))

    @classmethod
    def single_primary(cls, tables, primary: str, identifier: str, name="dataset"):
        """Link every non-primary table to ``primary`` through ``identifier``."""
        tables = tuple(tables)
        links = tuple(Link(primary, identifier, t.name) for t in tables if t.name != primary)
        return cls(tables, links, name)

    @property
    def primary_table(self) -> str:
        if not self.links:
            raise InvalidDataset("dataset has no identifier links")
        return self.links[0].primary

    @property
    def identifier_attribute(self) -> str:
        if not self.links:
            raise InvalidDataset("dataset has no identifier links")
        return self.links[0].identifier

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def table(self, name: str) -> TableData:
        for t in self.tables:
            if t.name == name:
                return t
        raise UnknownTable(name)

    def table_index(self, name: str) -> int:
        for i, t in enumerate(self.tables):
            if t.name == name:
                return i
        raise UnknownTable(name)

    def replace_tables(self, tables) -> "RelationalDataset":
        return RelationalDataset(tuple(tables), self.links, self.name)


def identifier_key(value):
    """Hash key for identifier tokens: exact type and value, no coercion."""
    return (type(value), value)


@dataclass(frozen=True)
class Violation:
    condition: str
    message: str
    table: Optional[str] = None
    row: Optional[int] = None

    def __str__(self):
        where = ""
        if self.table is not None:
            where = f" [table {self.table}"
            where += f", row {self.row}]" if self.row is not None else "]"
        return f"{self.condition}{where}: {self.message}"


def _value_ok(kind: Kind, value: Any) -> bool:
    if kind is Kind.NUMERIC:
        return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if kind is Kind.CATEGORICAL:
        return isinstance(value, str)
    if kind is Kind.DATETIME:
        return isinstance(value, datetime)
    return isinstance(value, (str, int)) and not isinstance(value, bool)


def _check_table(table: TableData, out: list):
    names = table.attribute_names
    seen = set()
    for n in names:
        if n in seen:
            out.append(Violation("schema", f"duplicate attribute {n!r}", table.name))
        seen.add(n)
    width = len(names)
    for r, row in enumerate(table.rows):
        if len(row) != width:
            out.append(Violation("schema", f"row has {len(row)} values, expected {width}", table.name, r))
            continue
        for a, v in zip(table.attributes, row):
            if v is MISSING:
                continue
            if not _value_ok(a.kind, v):
                out.append(Violation("type", f"value {v!r} is not a valid {a.kind.value} for {a.name!r}",
                                     table.name, r))
            elif a.domain is not None and a.kind is Kind.CATEGORICAL and v not in a.domain:
                out.append(Violation("domain", f"value {v!r} outside declared domain of {a.name!r}",
                                     table.name, r))
    for i, a in enumerate(table.attributes):
        if a.unique:
            _check_unique(table, i, "uniqueness", out)


def _check_unique(table: TableData, col: int, condition: str, out: list):
    name = table.attributes[col].name
    first_seen = {}
    for r, row in enumerate(table.rows):
        if col >= len(row):
            continue
        v = row[col]
        if v is MISSING:
            out.append(Violation(condition, f"unique attribute {name!r} is undefined", table.name, r))
            continue
        key = identifier_key(v)
        if key in first_seen:
            out.append(Violation(condition, f"duplicate value {v!r} of unique attribute {name!r} "
                                            f"(first at row {first_seen[key]})", table.name, r))
        else:
            first_seen[key] = r


def validate(dataset: RelationalDataset) -> list[Violation]:
    """Return every violated relational condition; an empty list means valid."""
    out: list[Violation] = []
    tables = {}
    for t in dataset.tables:
        if t.name in tables:
            out.append(Violation("schema", f"duplicate table name {t.name!r}", t.name))
        tables[t.name] = t
        _check_table(t, out)

    if len(dataset.tables) < 2:
        out.append(Violation("condition 1", f"dataset has {len(dataset.tables)} table(s), needs at least two"))
    if not dataset.links:
        out.append(Violation("condition 2", "no primary table / identifier attribute declared"))

    checked_primary = set()
    for link in dataset.links:
        prim, sec = tables.get(link.primary), tables.get(link.secondary)
        if prim is None or sec is None:
            missing = link.primary if prim is None else link.secondary
            out.append(Violation("schema", f"link references unknown table {missing!r}"))
            continue
        if link.primary == link.secondary:
            out.append(Violation("schema", f"table {link.primary!r} linked to itself"))
            continue
        ok = True
        for t in (prim, sec):
            if link.identifier not in t.attribute_names:
                out.append(Violation("condition 3" if t is sec else "condition 2",
                                     f"identifier attribute {link.identifier!r} absent", t.name))
                ok = False
            elif t.attribute(link.identifier).kind is not Kind.IDENTIFIER:
                out.append(Violation("schema", f"link attribute {link.identifier!r} must have identifier kind",
                                     t.name))
        if not ok:
            continue
        pcol = prim.index_of(link.identifier)
        if (link.primary, link.identifier) not in checked_primary:
            checked_primary.add((link.primary, link.identifier))
            if not prim.attribute(link.identifier).unique:
                _check_unique(prim, pcol, "condition 2", out)
        keys = {identifier_key(row[pcol]) for row in prim.rows if pcol < len(row) and row[pcol] is not MISSING}
        scol = sec.index_of(link.identifier)
        for r, row in enumerate(sec.rows):
            if scol >= len(row):
                continue
            v = row[scol]
            if v is MISSING or identifier_key(v) not in keys:
                out.append(Violation("condition 3", f"{link.identifier}={v!r} has no match in primary table "
                                                    f"{link.primary!r}", sec.name, r))
    return out


def _link_for(dataset: RelationalDataset, secondary: str) -> Link:
    for link in dataset.links:
        if link.secondary == secondary:
            return link
    if secondary in dataset.table_names:
        raise UnknownTable(f"{secondary!r} is not a secondary table")
    raise UnknownTable(secondary)


def join_on_identifier(dataset: RelationalDataset, secondary: str, check: bool = True) -> TableData:
    """Attach each secondary row to its primary row.

    Attribute order is the primary's attributes followed by the secondary's
    minus the identifier. Secondary attribute names that collide with a
    primary attribute are prefixed with ``<secondary>.``.
    """
    link = _link_for(dataset, secondary)
    if check:
        report = validate(dataset)
        if report:
            raise InvalidDataset(f"cannot join an invalid dataset ({len(report)} violation(s)), first: {report[0]}")
    prim = dataset.table(link.primary)
    sec = dataset.table(secondary)
    pcol = prim.index_of(link.identifier)
    scol = sec.index_of(link.identifier)
    by_key = {identifier_key(row[pcol]): row for row in prim.rows}

    taken = set(prim.attribute_names)
    attrs = list(prim.attributes)
    keep = []
    for i, a in enumerate(sec.attributes):
        if i == scol:
            continue
        name = a.name if a.name not in taken else f"{secondary}.{a.name}"
        taken.add(name)
        attrs.append(AttributeSpec(name, a.kind, a.domain, False))
        keep.append(i)
    rows = []
    for row in sec.rows:
        parent = by_key[identifier_key(row[scol])]
        rows.append(tuple(parent) + tuple(row[i] for i in keep))
    return TableData(f"{link.primary}+{secondary}", tuple(attrs), tuple(rows))


@dataclass(frozen=True)
class DatasetShape:
    """Rows and attribute counts per table, in dataset order."""

    rows: tuple = field(default_factory=tuple)
    attributes: tuple = field(default_factory=tuple)


def shape_of(dataset: RelationalDataset) -> DatasetShape:
    return DatasetShape(tuple(len(t) for t in dataset.tables),
                        tuple(len(t.attributes) for t in dataset.tables))


def schema_fingerprint(dataset: RelationalDataset) -> str:
    """SHA-256 over table names, attribute names/kinds/uniqueness/domains and links."""
    doc = {
        "tables": [{"name": t.name,
                    "attributes": [[a.name, a.kind.value, a.unique,
                                    list(a.domain) if a.domain is not None else None]
                                   for a in t.attributes]}
                   for t in dataset.tables],
        "links": [[l.primary, l.identifier, l.secondary] for l in dataset.links],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
