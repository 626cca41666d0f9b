"""Random dataset generator and brute-force oracles shared by the tests."""

from datetime import datetime, timedelta, timezone

import numpy as np

from relsynth.relational import MISSING, AttributeSpec, Kind, RelationalDataset, TableData, identifier_key

KINDS = (Kind.NUMERIC, Kind.CATEGORICAL, Kind.DATETIME)


def _value(kind, rng, scale, pool, tz):
    if kind is Kind.NUMERIC:
        return float(rng.normal() * scale) if rng.random() < 0.7 else float(rng.integers(-50, 50))
    if kind is Kind.CATEGORICAL:
        return pool[int(rng.integers(len(pool)))]
    dt = datetime(1950, 1, 1) + timedelta(seconds=int(rng.integers(0, 100 * 365 * 86400)))
    return dt.replace(tzinfo=timezone.utc) if tz else dt


def random_table(rng, name, n_rows, n_attrs, ids, unique_id, missing_rate=0.15):
    attrs = [AttributeSpec("id", Kind.IDENTIFIER, unique=unique_id)]
    makers = []
    for j in range(n_attrs - 1):
        kind = KINDS[int(rng.integers(len(KINDS)))]
        attrs.append(AttributeSpec(f"a{j}", kind))
        scale = 10.0 ** rng.integers(-3, 6)
        pool = [f"v{k}" for k in range(int(rng.integers(1, 5)))] + ['comma,"quote"']
        makers.append((kind, scale, pool, bool(rng.random() < 0.3), rng.random() < 0.5))
    rows = []
    for r in range(n_rows):
        row = [ids[r]]
        for kind, scale, pool, tz, nullable in makers:
            if nullable and rng.random() < missing_rate:
                row.append(MISSING)
            else:
                row.append(_value(kind, rng, scale, pool, tz))
        rows.append(tuple(row))
    return TableData(name, tuple(attrs), tuple(rows))


def random_dataset(rng, max_rows=50, max_attrs=6, max_secondaries=2, allow_empty=True) -> RelationalDataset:
    """Valid single-primary dataset with mixed kinds and Missing values."""
    total = int(rng.integers(4 if not allow_empty else 0, max_rows + 1))
    n_sec = int(rng.integers(1, max_secondaries + 1))
    n_primary = int(rng.integers(1 if total else 0, max(total // 3, 1) + 1)) if total else 0
    remaining = total - n_primary
    cuts = np.sort(rng.integers(0, remaining + 1, size=n_sec - 1)) if n_sec > 1 else np.array([], dtype=int)
    sizes = np.diff(np.concatenate([[0], cuts, [remaining]])).astype(int)
    if n_primary == 0:
        sizes[:] = 0
    pids = [f"p{i}" for i in rng.permutation(n_primary)]
    tables = [random_table(rng, "primary", n_primary, int(rng.integers(1, max_attrs + 1)), pids, True)]
    for k, size in enumerate(sizes):
        ids = [pids[int(rng.integers(n_primary))] for _ in range(size)]
        tables.append(random_table(rng, f"secondary{k}", int(size), int(rng.integers(1, max_attrs + 1)), ids, False))
    return RelationalDataset.single_primary(tables, "primary", "id")


def brute_force_edges(dataset: RelationalDataset) -> set:
    """Edge set straight from the definition: all primary/secondary pairs with equal identifiers."""
    offsets, acc = {}, 0
    for t in dataset.tables:
        offsets[t.name] = acc
        acc += len(t.rows)
    edges = set()
    for link in dataset.links:
        prim, sec = dataset.table(link.primary), dataset.table(link.secondary)
        pc, sc = prim.index_of(link.identifier), sec.index_of(link.identifier)
        for i, s in enumerate(prim.rows):
            for j, t in enumerate(sec.rows):
                if identifier_key(s[pc]) == identifier_key(t[sc]):
                    u, v = offsets[prim.name] + i, offsets[sec.name] + j
                    edges.add((min(u, v), max(u, v)))
    return edges


def nested_loop_join(dataset: RelationalDataset, secondary: str) -> list:
    prim = dataset.table(dataset.primary_table)
    sec = dataset.table(secondary)
    key = dataset.identifier_attribute
    pc, sc = prim.index_of(key), sec.index_of(key)
    out = []
    for t in sec.rows:
        for s in prim.rows:
            if s[pc] == t[sc]:
                out.append(tuple(s) + tuple(v for i, v in enumerate(t) if i != sc))
    return out


def numeric_gradient(f, param, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``param.value``."""
    grad = np.zeros_like(param.value)
    it = np.nditer(param.value, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = param.value[i]
        param.value[i] = old + h
        a = f()
        param.value[i] = old - h
        b = f()
        param.value[i] = old
        grad[i] = (a - b) / (2 * h)
    return grad


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def values_close(a, b, lo=None, hi=None, rel=1e-9, seconds=1.0):
    """Round-trip equality: exact for labels and Missing, scale-aware for numbers, 1 s for datetimes."""
    if a is MISSING or b is MISSING:
        return a is b
    if isinstance(a, datetime):
        return isinstance(b, datetime) and abs((a - b).total_seconds()) <= seconds and (
            (a.tzinfo is None) == (b.tzinfo is None))
    if isinstance(a, float) or isinstance(b, float):
        scale = max(abs(a), abs(b), abs(hi - lo) if lo is not None else 0.0)
        return abs(a - b) <= rel * scale
    return a == b


def shaped_dataset(rows, attrs, seed=0) -> RelationalDataset:
    """Numeric filler with given per-table row and attribute counts; first table is primary."""
    rng = np.random.default_rng(seed)
    pids = [f"p{i}" for i in range(rows[0])]
    tables = []
    for k, (n, a) in enumerate(zip(rows, attrs)):
        ids = pids if k == 0 else [pids[int(i)] for i in rng.integers(rows[0], size=n)]
        vals = np.round(rng.normal(size=(n, a - 1)), 3)
        spec = (AttributeSpec("id", Kind.IDENTIFIER, unique=k == 0),) + tuple(
            AttributeSpec(f"x{j}", Kind.NUMERIC) for j in range(a - 1))
        tables.append(TableData(f"t{k}", spec, tuple((i,) + tuple(map(float, v)) for i, v in zip(ids, vals))))
    return RelationalDataset.single_primary(tables, "t0", "id", name="shaped")


BASKETBALL_ROWS = (5062, 1608, 23751)
BASKETBALL_ATTRS = (4, 7, 6)
