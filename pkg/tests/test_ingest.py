import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relsynth.errors import (FileNotFound, IoError, ParseError, SchemaError, SchemaFingerprintMismatch,
                             ValidationFailed, VersionMismatch)
from relsynth.ingest import (load_checkpoint, load_dataset, load_schema, parse_datetime, save_checkpoint,
                             write_loss_trace, write_synthetic_dataset)
from relsynth.model import LossRecord, TrainConfig, train_model
from relsynth.relational import MISSING, Kind
from relsynth.toy import make_toy_dataset

from helpers import random_dataset, shaped_dataset

SCHEMA = {
    "format_version": 1,
    "name": "shop",
    "tables": {
        "customers": {"csv": "customers.csv", "unique": ["customer_id"],
                      "attributes": {"customer_id": "identifier", "segment": "categorical", "age": "numeric"}},
        "orders": {"csv": "orders.csv",
                   "attributes": {"customer_id": "identifier", "amount": "numeric", "placed": "datetime"}},
    },
    "links": [{"primary": "customers", "identifier": "customer_id", "secondary": "orders"}],
}


def write_shop(tmp_path, customers, orders, schema=SCHEMA):
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    (tmp_path / "customers.csv").write_text(customers)
    (tmp_path / "orders.csv").write_text(orders)
    return tmp_path / "schema.json"


def test_load_small_dataset(tmp_path):
    path = write_shop(tmp_path, "customer_id,segment,age\nc1,gold,41\nc2,,\n",
                      "amount,customer_id,placed\n9.5,c1,2023-01-02T03:04:05Z\n1,c2,2023-02-01\n")
    d = load_dataset(path)
    assert d.table("customers").rows == (("c1", "gold", 41.0), ("c2", MISSING, MISSING))
    orders = d.table("orders")
    assert orders.attribute_names == ["amount", "customer_id", "placed"]
    assert orders.rows[0][2].tzinfo is not None and orders.rows[1][2].tzinfo is None
    assert d.table("customers").attribute("customer_id").unique


def test_parse_error_reports_line(tmp_path):
    path = write_shop(tmp_path, "customer_id,segment,age\nc1,gold,41\nc2,x,old\n",
                      "customer_id,amount,placed\n")
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == 3 and info.value.column == "age"


def test_ragged_row(tmp_path):
    path = write_shop(tmp_path, "customer_id,segment,age\nc1,gold\n", "customer_id,amount,placed\n")
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_header_mismatch(tmp_path):
    path = write_shop(tmp_path, "customer_id,segment\nc1,gold\n", "customer_id,amount,placed\n")
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == 1


def test_dangling_reference_fails_validation(tmp_path):
    path = write_shop(tmp_path, "customer_id,segment,age\nc1,gold,41\n",
                      "customer_id,amount,placed\nc9,1,2023-01-01\n")
    with pytest.raises(ValidationFailed) as info:
        load_dataset(path)
    assert [v.condition for v in info.value.report] == ["condition 3"]


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFound):
        load_schema(tmp_path / "nope.json")
    (tmp_path / "schema.json").write_text(json.dumps(SCHEMA))
    with pytest.raises(IoError):
        load_dataset(tmp_path / "schema.json")


@pytest.mark.parametrize("mutate", [
    lambda s: s["tables"]["customers"]["attributes"].update(age="float"),
    lambda s: s.update(links=[]),
    lambda s: s["links"][0].update(primary="ghost"),
    lambda s: s["tables"]["customers"].update(unique=["ghost"]),
])
def test_malformed_schema(tmp_path, mutate):
    schema = json.loads(json.dumps(SCHEMA))
    mutate(schema)
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    with pytest.raises(SchemaError):
        load_schema(tmp_path / "schema.json")


def test_schema_version(tmp_path):
    (tmp_path / "schema.json").write_text(json.dumps(dict(SCHEMA, format_version=2)))
    with pytest.raises(VersionMismatch):
        load_schema(tmp_path / "schema.json")


def test_declared_domain(tmp_path):
    schema = json.loads(json.dumps(SCHEMA))
    schema["tables"]["customers"]["attributes"]["segment"] = {"kind": "categorical", "domain": ["gold", "tin"]}
    path = write_shop(tmp_path, "customer_id,segment,age\nc1,lead,1\n", "customer_id,amount,placed\n", schema)
    with pytest.raises(ValidationFailed):
        load_dataset(path)


def test_parse_datetime_zulu():
    assert parse_datetime("2020-01-01T00:00:00Z").utcoffset().total_seconds() == 0


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_write_then_load_round_trip(tmp_path_factory, seed):
    d = random_dataset(np.random.default_rng(seed), max_secondaries=3)
    out = tmp_path_factory.mktemp("rt")
    loaded = load_dataset(write_synthetic_dataset(d, out))
    assert loaded.tables == d.tables and loaded.links == d.links


def test_basketball_shape_writes_three_csvs(tmp_path):
    d = shaped_dataset((50, 16, 237), (4, 7, 6))
    write_synthetic_dataset(d, tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.csv")) == ["t0.csv", "t1.csv", "t2.csv"]


def test_empty_secondary_is_header_only(tmp_path):
    d = shaped_dataset((3, 0), (2, 3))
    write_synthetic_dataset(d, tmp_path)
    assert (tmp_path / "t1.csv").read_text() == "id,x0,x1\n"
    assert len(load_dataset(tmp_path / "schema.json").table("t1")) == 0


@pytest.fixture(scope="module")
def fitted():
    d = make_toy_dataset(n_primary=12, children=2, seed=0)
    model, trace = train_model(d, TrainConfig(k1=1, k2=1, hidden_dim=4, epochs=2))
    return d, model, trace


def test_checkpoint_bit_exact(tmp_path, fitted):
    d, model, _ = fitted
    save_checkpoint(model, tmp_path / "a.ckpt")
    loaded = load_checkpoint(tmp_path / "a.ckpt", d)
    for (n1, a), (n2, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert n1 == n2 and a.tobytes() == b.tobytes()
    assert loaded.codecs == model.codecs and loaded.config == model.config
    save_checkpoint(loaded, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_version_and_fingerprint(tmp_path, fitted, tiny_dataset):
    d, model, _ = fitted
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    with pytest.raises(SchemaFingerprintMismatch):
        load_checkpoint(path, tiny_dataset)
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)
    path.write_bytes(b"garbage")
    with pytest.raises(IoError):
        load_checkpoint(path)


def test_loss_trace_csv(tmp_path):
    write_loss_trace([LossRecord(0, 3.5, 3.0, 0.5)], tmp_path / "loss.csv")
    assert (tmp_path / "loss.csv").read_text() == "epoch,total,reconstruction,kl\n0,3.5,3.0,0.5\n"
