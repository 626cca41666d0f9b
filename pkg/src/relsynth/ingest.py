"""CSV + JSON schema loading, synthetic CSV output, and model checkpoints.

Schema config (JSON, ``format_version`` 1)::

    {
      "format_version": 1,
      "name": "shop",
      "tables": {
        "customers": {
          "csv": "customers.csv",
          "attributes": {"customer_id": "identifier", "segment": "categorical", "age": "numeric"},
          "unique": ["customer_id"]
        },
        "orders": {
          "csv": "orders.csv",
          "attributes": {"customer_id": "identifier", "amount": "numeric", "placed": "datetime"}
        }
      },
      "links": [{"primary": "customers", "identifier": "customer_id", "secondary": "orders"}]
    }

An attribute may also be given as ``{"kind": "categorical", "domain": [...]}``.
CSV paths are relative to the config file. Attribute order follows the CSV
header, which must name exactly the configured attributes.

CSV dialect: comma separated, double-quote escaping, mandatory header, UTF-8.
Empty cells are Missing. Numbers are written with the shortest repr that
round-trips; datetimes as ISO-8601.

Checkpoint layout (little-endian)::

    b"RSYNCKPT"                  8-byte magic
    uint32 format_version        currently 1
    uint64 header_length
    header                       UTF-8 JSON, sorted keys
    payload                      float64 arrays back to back

The header holds ``fingerprint``, ``config``, ``seed``, ``codecs`` and an
``arrays`` list of ``{"name", "shape", "offset"}`` (offset in bytes into
the payload). Nothing time-dependent is written, so identical models give
identical files.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (FileNotFound, IoError, ParseError, SchemaError, SchemaFingerprintMismatch,
                     ValidationFailed, VersionMismatch)
from .model import GraphVaeModel, TrainConfig
from .preprocess import TableCodec
from .relational import (MISSING, AttributeSpec, Kind, Link, RelationalDataset, TableData,
                         schema_fingerprint, validate)

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"RSYNCKPT"


@dataclass(frozen=True)
class TableSpec:
    csv: str
    attributes: dict
    unique: tuple = ()
    domains: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SchemaConfig:
    name: str
    tables: dict
    links: tuple
    base_dir: Path = Path(".")

    def csv_path(self, table: str) -> Path:
        p = Path(self.tables[table].csv)
        return p if p.is_absolute() else self.base_dir / p

    def with_csv_dir(self, directory) -> "SchemaConfig":
        """Same schema, with every table read from ``<directory>/<table>.csv``."""
        directory = Path(directory)
        tables = {name: TableSpec(f"{name}.csv", spec.attributes, spec.unique, spec.domains)
                  for name, spec in self.tables.items()}
        return SchemaConfig(self.name, tables, self.links, directory)

    def to_dict(self) -> dict:
        tables = {}
        for name, spec in self.tables.items():
            attrs = {}
            for a, kind in spec.attributes.items():
                dom = spec.domains.get(a)
                attrs[a] = {"kind": kind.value, "domain": list(dom)} if dom is not None else kind.value
            entry = {"csv": spec.csv, "attributes": attrs}
            if spec.unique:
                entry["unique"] = list(spec.unique)
            tables[name] = entry
        return {"format_version": SCHEMA_VERSION, "name": self.name, "tables": tables,
                "links": [{"primary": l.primary, "identifier": l.identifier, "secondary": l.secondary}
                          for l in self.links]}


def parse_schema(doc: dict, base_dir=".") -> SchemaConfig:
    if doc.get("format_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise VersionMismatch(f"schema format_version {doc.get('format_version')}, expected {SCHEMA_VERSION}")
    try:
        tables = {}
        for name, entry in doc["tables"].items():
            attrs, domains = {}, {}
            for a, kind in entry["attributes"].items():
                if isinstance(kind, dict):
                    if kind.get("domain") is not None:
                        domains[a] = tuple(kind["domain"])
                    kind = kind["kind"]
                attrs[a] = Kind(kind)
            unique = tuple(entry.get("unique", ()))
            for u in unique:
                if u not in attrs:
                    raise SchemaError(f"table {name!r}: unique attribute {u!r} is not declared")
            tables[name] = TableSpec(entry["csv"], attrs, unique, domains)
        links = tuple(Link(l["primary"], l["identifier"], l["secondary"]) for l in doc["links"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed schema config: {exc!r}") from exc
    except ValueError as exc:
        raise SchemaError(f"malformed schema config: {exc}") from exc
    if not links:
        raise SchemaError("schema config needs at least one link")
    for l in links:
        for t in (l.primary, l.secondary):
            if t not in tables:
                raise SchemaError(f"link references undeclared table {t!r}")
    return SchemaConfig(doc.get("name", "dataset"), tables, links, Path(base_dir))


def load_schema(path) -> SchemaConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise FileNotFound(f"schema config not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    return parse_schema(doc, path.parent)


def schema_for(dataset: RelationalDataset, csv_dir=".") -> SchemaConfig:
    """Schema config describing ``dataset`` with one ``<table>.csv`` per table."""
    tables = {}
    for t in dataset.tables:
        tables[t.name] = TableSpec(f"{t.name}.csv", {a.name: a.kind for a in t.attributes},
                                   tuple(a.name for a in t.attributes if a.unique),
                                   {a.name: a.domain for a in t.attributes if a.domain is not None})
    return SchemaConfig(dataset.name, tables, dataset.links, Path(csv_dir))


def parse_datetime(text: str) -> datetime:
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _parse_cell(text: str, kind: Kind):
    if text == "":
        return MISSING
    if kind is Kind.NUMERIC:
        x = float(text)
        if not math.isfinite(x):
            raise ValueError(f"non-finite number {text!r}")
        return x
    if kind is Kind.DATETIME:
        return parse_datetime(text)
    return text


def format_cell(value) -> str:
    if value is MISSING:
        return ""
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_table(name: str, spec: TableSpec, path: Path) -> TableData:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise FileNotFound(f"table {name!r}: CSV not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, None, "missing header row") from None
        except UnicodeDecodeError as exc:
            raise ParseError(path, 1, None, f"not UTF-8: {exc}") from None
        if len(set(header)) != len(header):
            raise ParseError(path, 1, None, "duplicate column names in header")
        unknown = [h for h in header if h not in spec.attributes]
        absent = [a for a in spec.attributes if a not in header]
        if unknown or absent:
            raise ParseError(path, 1, (unknown or absent)[0],
                             f"header/config mismatch: unconfigured {unknown}, missing {absent}")
        kinds = [spec.attributes[h] for h in header]
        rows = []
        try:
            for line_no, cells in enumerate(reader, start=2):
                if len(cells) != len(header):
                    raise ParseError(path, line_no, None, f"{len(cells)} cells, header has {len(header)}")
                row = []
                for h, kind, cell in zip(header, kinds, cells):
                    try:
                        row.append(_parse_cell(cell, kind))
                    except ValueError as exc:
                        raise ParseError(path, line_no, h, f"cannot parse {cell!r} as {kind.value}: {exc}") from None
                rows.append(tuple(row))
        except UnicodeDecodeError as exc:
            raise ParseError(path, reader.line_num + 1, None, f"not UTF-8: {exc}") from None
        except csv.Error as exc:
            raise ParseError(path, reader.line_num, None, str(exc)) from None
    attrs = tuple(AttributeSpec(h, spec.attributes[h], spec.domains.get(h), h in spec.unique) for h in header)
    return TableData(name, attrs, tuple(rows))


def load_dataset(config) -> RelationalDataset:
    """Read every table of ``config`` (a SchemaConfig or a path) and validate."""
    if not isinstance(config, SchemaConfig):
        config = load_schema(config)
    tables = tuple(read_table(name, spec, config.csv_path(name)) for name, spec in config.tables.items())
    dataset = RelationalDataset(tables, config.links, config.name)
    report = validate(dataset)
    if report:
        raise ValidationFailed(report)
    return dataset


def write_table(table: TableData, path: Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.attribute_names)
        for row in table.rows:
            w.writerow([format_cell(v) for v in row])


def write_synthetic_dataset(dataset: RelationalDataset, directory) -> Path:
    """Write ``<table>.csv`` per table plus a ``schema.json`` describing them."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for t in dataset.tables:
            write_table(t, directory / f"{t.name}.csv")
        schema = schema_for(dataset, directory)
        with open(directory / "schema.json", "w", encoding="utf-8") as fh:
            json.dump(schema.to_dict(), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write synthetic dataset to {directory}: {exc}") from exc
    return directory / "schema.json"


def save_checkpoint(model: GraphVaeModel, path):
    arrays, blobs, offset = [], [], 0
    for name, value in model.state_dict().items():
        data = np.ascontiguousarray(value, dtype="<f8").tobytes()
        arrays.append({"name": name, "shape": list(value.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "fingerprint": model.fingerprint,
        "config": model.config.to_dict(),
        "seed": model.seed,
        "codecs": [c.to_dict() for c in model.codecs],
        "arrays": arrays,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(head)))
            fh.write(head)
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path, dataset: RelationalDataset = None) -> GraphVaeModel:
    """Read a checkpoint; with ``dataset`` given, refuse a schema mismatch."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise FileNotFound(f"checkpoint not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != CHECKPOINT_MAGIC or len(raw) < 20:
        raise IoError(f"{path} is not a checkpoint file")
    version, head_len = struct.unpack("<IQ", raw[8:20])
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint format_version {version}, expected {CHECKPOINT_VERSION}")
    header = json.loads(raw[20:20 + head_len].decode("utf-8"))
    if dataset is not None and schema_fingerprint(dataset) != header["fingerprint"]:
        raise SchemaFingerprintMismatch(f"checkpoint {path} was trained on a different schema")
    payload = memoryview(raw)[20 + head_len:]
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    codecs = [TableCodec.from_dict(c) for c in header["codecs"]]
    model = GraphVaeModel(codecs, TrainConfig.from_dict(header["config"]), header["fingerprint"],
                          seed=header["seed"])
    model.load_state_dict(arrays)
    return model


def write_loss_trace(trace, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "total", "reconstruction", "kl"])
            for r in trace:
                w.writerow([r.epoch, repr(float(r.total)), repr(float(r.reconstruction)), repr(float(r.kl))])
    except OSError as exc:
        raise IoError(f"cannot write loss trace {path}: {exc}") from exc
