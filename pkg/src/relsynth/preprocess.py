"""Invertible table encodings.

``encode_table``/``decode_table`` map a typed table to a matrix of numbers in
[0, 1] and back. ``merge_tables``/``split_tables`` stack the encoded tables of a
dataset into one zero-filled matrix carrying each row's adjacency list, and
undo the stacking.

Column layout per attribute: the value span (one column for numeric and
datetime, one-hot columns for categoricals) followed by a missingness flag
column when the attribute was nullable at fit time. Identifier attributes are
structural and get no columns; their values ride along beside the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

import numpy as np

from .errors import GraphRowMismatch, MissingOriginTag, ShapeMismatch, UnseenCategory
from .graph import RelationalGraph
from .relational import MISSING, AttributeSpec, Kind, TableData

EDGE_LIST_ATTRIBUTE = "__adjacency__"
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def to_epoch_seconds(dt: datetime) -> float:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - _EPOCH).total_seconds()


def from_epoch_seconds(seconds: float, tz_aware: bool, resolution: float = 1e-6) -> datetime:
    if resolution >= 1.0:
        seconds = round(seconds)
    dt = _EPOCH + timedelta(seconds=float(seconds))
    return dt if tz_aware else dt.replace(tzinfo=None)


@dataclass(frozen=True)
class ColumnCodec:
    """Fitted encoding of one attribute.

    Numeric uses ``low``/``high`` as min/max. DateTime uses ``low`` as the
    epoch offset and ``high - low`` as the scale. Categorical uses
    ``categories`` in first-appearance order (or the declared domain order).
    """

    name: str
    kind: Kind
    nullable: bool = False
    low: float = 0.0
    high: float = 0.0
    categories: tuple = ()
    tz_aware: bool = False
    resolution: float = 1e-6

    @property
    def value_width(self) -> int:
        return len(self.categories) if self.kind is Kind.CATEGORICAL else 1

    @property
    def width(self) -> int:
        return self.value_width + int(self.nullable)

    @property
    def offset(self) -> float:
        return self.low

    @property
    def scale(self) -> float:
        return self.high - self.low

    def _scalar(self, v) -> float:
        return to_epoch_seconds(v) if self.kind is Kind.DATETIME else float(v)

    def encode_into(self, values, out: np.ndarray, lenient: bool = False):
        """Write the encoding of ``values`` into ``out`` (rows × width, zeroed)."""
        w = self.value_width
        index = {c: i for i, c in enumerate(self.categories)} if self.kind is Kind.CATEGORICAL else None
        span = self.high - self.low
        for r, v in enumerate(values):
            if v is MISSING:
                if self.nullable:
                    out[r, w] = 1.0
                elif not lenient:
                    raise UnseenCategory(f"attribute {self.name!r} was not nullable when fitted")
                continue
            if index is not None:
                i = index.get(v)
                if i is None:
                    if lenient:
                        continue
                    raise UnseenCategory(f"value {v!r} not among the fitted categories of {self.name!r}")
                out[r, i] = 1.0
            else:
                x = self._scalar(v)
                out[r, 0] = 0.5 if span == 0 else (x - self.low) / span

    def decode(self, block: np.ndarray) -> list:
        w = self.value_width
        out = []
        for row in block:
            if self.nullable and row[w] >= 0.5:
                out.append(MISSING)
                continue
            if self.kind is Kind.CATEGORICAL:
                out.append(self.categories[int(np.argmax(row[:w]))] if w else MISSING)
                continue
            x = min(max(float(row[0]), 0.0), 1.0)
            value = self.low if self.high == self.low else self.low + x * (self.high - self.low)
            value = min(max(value, self.low), self.high)
            if self.kind is Kind.DATETIME:
                value = from_epoch_seconds(value, self.tz_aware, self.resolution)
            out.append(value)
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind.value, "nullable": self.nullable,
                "low": self.low, "high": self.high, "categories": list(self.categories),
                "tz_aware": self.tz_aware, "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnCodec":
        return cls(d["name"], Kind(d["kind"]), d["nullable"], d["low"], d["high"],
                   tuple(d["categories"]), d["tz_aware"], d["resolution"])


def fit_column(attr: AttributeSpec, values) -> ColumnCodec:
    defined = [v for v in values if v is not MISSING]
    nullable = len(defined) < len(values)
    if attr.kind is Kind.CATEGORICAL:
        cats = list(attr.domain) if attr.domain is not None else []
        seen = set(cats)
        for v in defined:
            if v not in seen:
                seen.add(v)
                cats.append(v)
        return ColumnCodec(attr.name, attr.kind, nullable, categories=tuple(cats))
    if attr.kind is Kind.DATETIME:
        secs = [to_epoch_seconds(v) for v in defined]
        tz_aware = any(v.tzinfo is not None for v in defined)
        whole = all(v.microsecond == 0 for v in defined)
        lo, hi = (min(secs), max(secs)) if secs else (0.0, 0.0)
        return ColumnCodec(attr.name, attr.kind, nullable, lo, hi, tz_aware=tz_aware,
                           resolution=1.0 if whole else 1e-6)
    xs = [float(v) for v in defined]
    lo, hi = (min(xs), max(xs)) if xs else (0.0, 0.0)
    return ColumnCodec(attr.name, attr.kind, nullable, lo, hi)


@dataclass(frozen=True)
class TableCodec:
    """Codecs for every non-identifier attribute of one table."""

    table: str
    attributes: tuple
    columns: tuple

    @property
    def spans(self) -> dict:
        spans, start = {}, 0
        for c in self.columns:
            spans[c.name] = (start, start + c.width)
            start += c.width
        return spans

    @property
    def width(self) -> int:
        return sum(c.width for c in self.columns)

    @property
    def identifier_names(self) -> list[str]:
        return [a.name for a in self.attributes if a.kind is Kind.IDENTIFIER]

    def column(self, name: str) -> ColumnCodec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def column_kinds(self) -> list[tuple]:
        """``(kind, start, stop)`` groups: ``scalar`` columns, ``flag`` columns, ``onehot`` spans."""
        out, start = [], 0
        for c in self.columns:
            if c.kind is Kind.CATEGORICAL:
                if c.value_width:
                    out.append(("onehot", start, start + c.value_width))
            else:
                out.append(("scalar", start, start + 1))
            if c.nullable:
                out.append(("flag", start + c.value_width, start + c.width))
            start += c.width
        return out

    def to_dict(self) -> dict:
        return {"table": self.table,
                "attributes": [{"name": a.name, "kind": a.kind.value, "unique": a.unique,
                                "domain": list(a.domain) if a.domain is not None else None}
                               for a in self.attributes],
                "columns": [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, d: dict) -> "TableCodec":
        attrs = tuple(AttributeSpec(a["name"], Kind(a["kind"]), a["domain"], a["unique"])
                      for a in d["attributes"])
        return cls(d["table"], attrs, tuple(ColumnCodec.from_dict(c) for c in d["columns"]))


def fit_table_codec(table: TableData) -> TableCodec:
    cols = tuple(fit_column(a, table.column(a.name))
                 for a in table.attributes if a.kind is not Kind.IDENTIFIER)
    return TableCodec(table.name, table.attributes, cols)


@dataclass(frozen=True)
class EncodedTable:
    name: str
    matrix: np.ndarray
    spans: dict
    identifiers: dict = field(default_factory=dict)

    def __len__(self):
        return self.matrix.shape[0]


def encode_table(table: TableData, codec: Optional[TableCodec] = None,
                 lenient: bool = False) -> tuple[EncodedTable, TableCodec]:
    """Encode ``table``; fits a codec first unless one is given.

    With ``lenient=True`` unseen categories and unexpected Missing values
    encode as all-zero spans instead of raising. Values outside a pre-fitted
    numeric range encode outside [0, 1].
    """
    if codec is None:
        codec = fit_table_codec(table)
    n = len(table.rows)
    matrix = np.zeros((n, codec.width))
    spans = codec.spans
    for c in codec.columns:
        a, b = spans[c.name]
        c.encode_into(table.column(c.name), matrix[:, a:b], lenient)
    identifiers = {name: tuple(table.column(name)) for name in codec.identifier_names
                   if name in table.attribute_names}
    return EncodedTable(table.name, matrix, spans, identifiers), codec


def decode_table(encoded: EncodedTable, codec: TableCodec,
                 identifiers: Optional[dict] = None) -> TableData:
    """Invert ``encode_table``. ``identifiers`` overrides the carried identifier values."""
    n, width = encoded.matrix.shape
    if width != codec.width:
        raise ShapeMismatch(f"table {codec.table!r}: matrix has {width} columns, codec expects {codec.width}")
    ids = dict(encoded.identifiers)
    if identifiers:
        ids.update(identifiers)
    spans = codec.spans
    columns = {}
    for c in codec.columns:
        a, b = spans[c.name]
        columns[c.name] = c.decode(encoded.matrix[:, a:b])
    for name in codec.identifier_names:
        vals = ids.get(name)
        if vals is None or len(vals) != n:
            raise ShapeMismatch(f"table {codec.table!r}: no identifier values for {name!r}")
        columns[name] = list(vals)
    rows = tuple(tuple(columns[a.name][r] for a in codec.attributes) for r in range(n))
    return TableData(codec.table, codec.attributes, rows)


@dataclass(frozen=True)
class MergedTable:
    """All encoded rows stacked into one matrix.

    ``origin[i]`` is ``(table index, row index)`` of row ``i``; each table
    owns the contiguous column block ``column_blocks[table]``; foreign
    columns are zero. ``adjacency`` is the edge-list attribute in row indices.
    """

    matrix: np.ndarray
    origin: Optional[np.ndarray]
    adjacency: tuple
    attributes: tuple
    spans: dict
    table_names: tuple
    table_spans: tuple
    column_blocks: tuple
    identifiers: dict

    @property
    def attribute_count(self) -> int:
        return len(self.attributes)


def merge_tables(encoded_tables, graph: RelationalGraph) -> MergedTable:
    encoded_tables = list(encoded_tables)
    if len(encoded_tables) != len(graph.table_offsets):
        raise GraphRowMismatch(f"{len(encoded_tables)} encoded tables for a graph over "
                               f"{len(graph.table_offsets)} tables")
    bounds = list(graph.table_offsets) + [graph.n_vertices]
    for i, enc in enumerate(encoded_tables):
        if len(enc) != bounds[i + 1] - bounds[i]:
            raise GraphRowMismatch(f"table {enc.name!r} has {len(enc)} rows, graph expects "
                                   f"{bounds[i + 1] - bounds[i]}")

    n = graph.n_vertices
    width = sum(e.matrix.shape[1] for e in encoded_tables)
    matrix = np.zeros((n, width))
    origin = np.zeros((n, 2), dtype=np.int64)
    attributes, spans, blocks = [], {}, []
    identifiers: dict = {}
    col = 0
    for i, enc in enumerate(encoded_tables):
        r0, r1 = bounds[i], bounds[i + 1]
        w = enc.matrix.shape[1]
        matrix[r0:r1, col:col + w] = enc.matrix
        origin[r0:r1, 0] = i
        origin[r0:r1, 1] = np.arange(r1 - r0)
        blocks.append((col, col + w))
        for name in enc.identifiers:
            if name not in identifiers:
                identifiers[name] = [MISSING] * n
                attributes.append(name)
            identifiers[name][r0:r1] = list(enc.identifiers[name])
        for name, (a, b) in sorted(enc.spans.items(), key=lambda kv: kv[1]):
            qualified = f"{enc.name}.{name}"
            attributes.append(qualified)
            spans[qualified] = (col + a, col + b)
        col += w
    attributes.append(EDGE_LIST_ATTRIBUTE)
    return MergedTable(matrix, origin, graph.adjacency, tuple(attributes), spans,
                       tuple(e.name for e in encoded_tables), tuple(e.spans for e in encoded_tables),
                       tuple(blocks), {k: tuple(v) for k, v in identifiers.items()})


def split_tables(merged: MergedTable, matrix: Optional[np.ndarray] = None) -> list[EncodedTable]:
    """Return each row to its origin table, keeping only that table's columns.

    ``matrix`` substitutes a same-shape matrix (e.g. decoder output) for the
    merged one while reusing its layout.
    """
    if merged.origin is None:
        raise MissingOriginTag("merged table carries no origin tags")
    m = merged.matrix if matrix is None else matrix
    if m.shape != merged.matrix.shape:
        raise ShapeMismatch(f"matrix shape {m.shape} differs from merged layout {merged.matrix.shape}")
    out = []
    for i, name in enumerate(merged.table_names):
        rows = np.flatnonzero(merged.origin[:, 0] == i)
        rows = rows[np.argsort(merged.origin[rows, 1], kind="stable")]
        a, b = merged.column_blocks[i]
        ids = {k: tuple(v[r] for r in rows) for k, v in merged.identifiers.items()
               if all(v[r] is not MISSING for r in rows)}
        out.append(EncodedTable(name, m[rows, a:b].copy(), dict(merged.table_spans[i]), ids))
    return out


def expected_attribute_count(attribute_counts, n_tables: Optional[int] = None) -> int:
    """Merged attribute count for tables sharing one identifier: sum - |D| + 2."""
    counts = list(attribute_counts)
    return sum(counts) - (len(counts) if n_tables is None else n_tables) + 2
