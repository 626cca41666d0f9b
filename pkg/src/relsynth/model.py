"""Graph variational autoencoder over a relational graph.

Data flow per vertex batch: merged row features -> linear projection ->
``k1`` message-passing layers -> per-table encoder (Gaussian head of size
``n_i``) -> reparameterized sample -> per-table decoder -> ``k2``
message-passing layers over the same adjacency -> shared output head whose
columns each vertex reads only within its own table's block.

Synthesis reuses the real topology: one prior sample per real vertex,
decoded and passed through the post-decoder layers over the real edges.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (ConfigMismatch, InvalidDataset, NonFiniteLoss, SchemaFingerprintMismatch,
                     ShapeMismatch)
from .graph import RelationalGraph, build_graph
from .nn import (MLP, Adam, GRUCell, Linear, Module, Param, clamp_mask, glorot, kl_backward,
                 kl_per_row, reparameterize, reparameterize_backward, sigmoid, softplus,
                 LOGVAR_MAX, LOGVAR_MIN)
from .preprocess import (EncodedTable, TableCodec, decode_table, encode_table, fit_table_codec,
                         merge_tables, split_tables)
from .relational import Kind, RelationalDataset, identifier_key, schema_fingerprint, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    k1: int = 4
    k2: int = 4
    latent: Optional[tuple] = None
    beta: Optional[tuple] = None
    hidden_dim: int = 32
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    obs_noise: float = 0.1
    seed: int = 0

    def resolved(self, n_tables: int) -> "TrainConfig":
        """Broadcast unset per-table vectors and check every field."""
        latent = tuple(int(x) for x in self.latent) if self.latent is not None else (8,) * n_tables
        beta = tuple(float(x) for x in self.beta) if self.beta is not None else (1.0,) * n_tables
        if len(latent) != n_tables:
            raise ConfigMismatch(f"latent has {len(latent)} entries for {n_tables} tables")
        if len(beta) != n_tables:
            raise ConfigMismatch(f"beta has {len(beta)} entries for {n_tables} tables")
        if self.k1 < 0 or self.k2 < 0:
            raise ConfigMismatch("k1 and k2 must be >= 0")
        if min(latent) < 1:
            raise ConfigMismatch("latent dimensions must be >= 1")
        if min(beta) < 0:
            raise ConfigMismatch("beta entries must be >= 0")
        if self.hidden_dim < 1 or self.epochs < 0 or self.batch_size < 0:
            raise ConfigMismatch("hidden_dim >= 1, epochs >= 0 and batch_size >= 0 required")
        if not self.learning_rate > 0 or not self.obs_noise > 0:
            raise ConfigMismatch("learning_rate and obs_noise must be positive")
        return replace(self, latent=latent, beta=beta)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("latent", "beta"):
            d[k] = list(d[k]) if d[k] is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigMismatch(f"unknown training options: {sorted(unknown)}")
        d = dict(d)
        for k in ("latent", "beta"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


class MessagePassingLayer(Module):
    """Sum of ``h_s @ A`` over neighbors, then a GRU update of the vertex state.

    Edges carry the constant feature 1, so the edge-feature map reduces to a
    single learned ``d_h x d_h`` operator ``A``.
    """

    def __init__(self, d_h: int, rng: np.random.Generator = None):
        self.d_h = d_h
        self.A = Param(glorot(rng, d_h, d_h) if rng is not None else np.zeros((d_h, d_h)))
        self.gru = GRUCell(d_h, d_h, rng)

    def forward(self, H, adj):
        if H.ndim != 2 or H.shape[1] != self.d_h or adj.shape != (H.shape[0], H.shape[0]):
            raise ShapeMismatch(f"message passing expects ({adj.shape[0]}, {self.d_h}) states, got {H.shape}")
        S = adj @ H
        M = S @ self.A.value
        H_new, gcache = self.gru.forward(M, H)
        return H_new, (S, gcache)

    def backward(self, dH_new, cache, adj):
        S, gcache = cache
        dM, dH = self.gru.backward(dH_new, gcache)
        self.A.grad += S.T @ dM
        dH = dH + adj.T @ (dM @ self.A.value.T)
        return dH

    def named_params(self, prefix=""):
        return [(prefix + "A", self.A)] + self.gru.named_params(prefix + "gru.")


def _as_adjacency(adjacency):
    if isinstance(adjacency, RelationalGraph):
        return adjacency.adjacency_matrix()
    return sp.csr_matrix(adjacency)


def message_pass(H, adjacency, layers):
    """Apply ``layers`` in order; every vertex updates from the previous layer's states."""
    adj = _as_adjacency(adjacency)
    for layer in layers:
        H, _ = layer.forward(H, adj)
    return H


@dataclass
class LossParts:
    total: float
    reconstruction: float
    kl: float
    n_vertices: int


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    total: float
    reconstruction: float
    kl: float


class GraphVaeModel(Module):
    def __init__(self, codecs, config: TrainConfig, fingerprint: str, rng=None, seed: int = 0):
        self.codecs = list(codecs)
        self.config = config.resolved(len(self.codecs))
        self.fingerprint = fingerprint
        self.seed = seed
        cfg, d_h = self.config, self.config.hidden_dim
        self.blocks = []
        col = 0
        for c in self.codecs:
            self.blocks.append((col, col + c.width))
            col += c.width
        self.width = col
        self._groups = [self._table_groups(i) for i in range(len(self.codecs))]

        self.input = Linear(self.width, d_h, rng)
        self.mp_pre = [MessagePassingLayer(d_h, rng) for _ in range(cfg.k1)]
        self.encoders = [MLP([d_h, d_h, 2 * n], rng) for n in cfg.latent]
        self.decoders = [MLP([n, d_h, d_h], rng) for n in cfg.latent]
        self.mp_post = [MessagePassingLayer(d_h, rng) for _ in range(cfg.k2)]
        self.output = Linear(d_h, self.width, rng)

    @property
    def table_names(self) -> list[str]:
        return [c.table for c in self.codecs]

    def _table_groups(self, i):
        a0 = self.blocks[i][0]
        scalar, flag, onehot = [], [], []
        for kind, a, b in self.codecs[i].column_kinds():
            if kind == "scalar":
                scalar.append(a0 + a)
            elif kind == "flag":
                flag.append(a0 + a)
            else:
                onehot.append((a0 + a, a0 + b))
        return np.array(scalar, dtype=np.int64), np.array(flag, dtype=np.int64), onehot

    def named_params(self, prefix=""):
        out = self.input.named_params("input.")
        for l, layer in enumerate(self.mp_pre):
            out += layer.named_params(f"mp_pre.{l}.")
        for i, (enc, dec) in enumerate(zip(self.encoders, self.decoders)):
            out += enc.named_params(f"encoder.{i}.")
            out += dec.named_params(f"decoder.{i}.")
        for l, layer in enumerate(self.mp_post):
            out += layer.named_params(f"mp_post.{l}.")
        out += self.output.named_params("output.")
        return [(prefix + n, p) for n, p in out]

    def _rows_by_table(self, tables):
        return [np.flatnonzero(tables == i) for i in range(len(self.codecs))]

    def draw_eps(self, tables, rng):
        """One standard-normal draw per vertex, sized by its table's latent dimension."""
        return [rng.standard_normal((len(rows), n))
                for rows, n in zip(self._rows_by_table(tables), self.config.latent)]

    def _reconstruction(self, Y, X, rows_by_table):
        """Per-vertex negative log-likelihood and its gradient w.r.t. the logits ``Y``."""
        n = X.shape[0]
        loss = np.zeros(n)
        dY = np.zeros_like(Y)
        inv_var = 1.0 / self.config.obs_noise ** 2
        for rows, (scalar, flag, onehot) in zip(rows_by_table, self._groups):
            if not len(rows):
                continue
            if len(scalar):
                y, x = Y[np.ix_(rows, scalar)], X[np.ix_(rows, scalar)]
                p = sigmoid(y)
                loss[rows] += 0.5 * inv_var * np.sum((p - x) ** 2, axis=1)
                dY[np.ix_(rows, scalar)] = inv_var * (p - x) * p * (1.0 - p)
            if len(flag):
                y, x = Y[np.ix_(rows, flag)], X[np.ix_(rows, flag)]
                loss[rows] += np.sum(softplus(y) - x * y, axis=1)
                dY[np.ix_(rows, flag)] = sigmoid(y) - x
            for a, b in onehot:
                y, x = Y[rows, a:b], X[rows, a:b]
                m = y.max(axis=1, keepdims=True)
                e = np.exp(y - m)
                s = e.sum(axis=1, keepdims=True)
                lse = m + np.log(s)
                mass = x.sum(axis=1, keepdims=True)
                loss[rows] += (mass * lse).ravel() - np.sum(x * y, axis=1)
                dY[rows, a:b] = e / s * mass - x
        return loss, dY

    def loss_and_grad(self, X, tables, adj, eps, scale: float = 1.0, backward: bool = True) -> LossParts:
        """Loss summed over vertices; accumulates ``scale`` times its gradient."""
        adj = _as_adjacency(adj)
        tables = np.asarray(tables)
        n, d_h = X.shape[0], self.config.hidden_dim
        if X.shape[1] != self.width:
            raise ShapeMismatch(f"features have {X.shape[1]} columns, model expects {self.width}")
        rows_by_table = self._rows_by_table(tables)

        H, c_in = self.input.forward(X)
        c_pre = []
        for layer in self.mp_pre:
            H, c = layer.forward(H, adj)
            c_pre.append(c)

        D = np.zeros((n, d_h))
        kl = np.zeros(n)
        betas = np.zeros(n)
        c_vae = []
        for i, rows in enumerate(rows_by_table):
            k = self.config.latent[i]
            out, c_e = self.encoders[i].forward(H[rows])
            mu, raw_lv = out[:, :k], out[:, k:]
            lv = np.clip(raw_lv, LOGVAR_MIN, LOGVAR_MAX)
            z = reparameterize(mu, lv, eps[i])
            d, c_d = self.decoders[i].forward(z)
            D[rows] = d
            kl[rows] = kl_per_row(mu, lv)
            betas[rows] = self.config.beta[i]
            c_vae.append((c_e, mu, raw_lv, lv, c_d))

        c_post = []
        for layer in self.mp_post:
            D, c = layer.forward(D, adj)
            c_post.append(c)
        Y, c_out = self.output.forward(D)
        recon, dY = self._reconstruction(Y, X, rows_by_table)
        total = float(np.sum(recon) + np.sum(betas * kl))
        parts = LossParts(total, float(np.sum(recon)), float(np.sum(kl)), n)
        if not backward:
            return parts
        if not np.isfinite(total):
            raise NonFiniteLoss(f"loss is {total}")

        dD = self.output.backward(dY * scale, c_out)
        for layer, c in zip(reversed(self.mp_post), reversed(c_post)):
            dD = layer.backward(dD, c, adj)
        dH = np.zeros((n, d_h))
        for i, rows in enumerate(rows_by_table):
            c_e, mu, raw_lv, lv, c_d = c_vae[i]
            dz = self.decoders[i].backward(dD[rows], c_d)
            dmu, dlv = reparameterize_backward(dz, lv, eps[i])
            kmu, klv = kl_backward(mu, lv)
            w = self.config.beta[i] * scale
            dmu = dmu + w * kmu
            dlv = (dlv + w * klv) * clamp_mask(raw_lv)
            dH[rows] = self.encoders[i].backward(np.hstack([dmu, dlv]), c_e)
        for layer, c in zip(reversed(self.mp_pre), reversed(c_pre)):
            dH = layer.backward(dH, c, adj)
        self.input.backward(dH, c_in)
        return parts

    def generate(self, tables, adj, rng) -> np.ndarray:
        """Decode one prior sample per vertex into a merged-layout matrix.

        Each row holds output probabilities in its own table's column block
        (sigmoid for scalar and flag columns, softmax per one-hot span) and
        zeros elsewhere.
        """
        adj = _as_adjacency(adj)
        tables = np.asarray(tables)
        n = len(tables)
        rows_by_table = self._rows_by_table(tables)
        D = np.zeros((n, self.config.hidden_dim))
        for i, rows in enumerate(rows_by_table):
            z = rng.standard_normal((len(rows), self.config.latent[i]))
            D[rows], _ = self.decoders[i].forward(z)
        D = message_pass(D, adj, self.mp_post)
        Y, _ = self.output.forward(D)
        out = np.zeros_like(Y)
        for rows, (scalar, flag, onehot) in zip(rows_by_table, self._groups):
            cols = np.concatenate([scalar, flag])
            if len(rows) and len(cols):
                out[np.ix_(rows, cols)] = sigmoid(Y[np.ix_(rows, cols)])
            for a, b in onehot:
                y = Y[rows, a:b]
                e = np.exp(y - y.max(axis=1, keepdims=True))
                out[rows, a:b] = e / e.sum(axis=1, keepdims=True)
        return out

    def state_dict(self) -> dict:
        return {name: p.value for name, p in self.named_params()}

    def load_state_dict(self, arrays: dict):
        named = dict(self.named_params())
        if set(named) != set(arrays):
            missing = sorted(set(named) - set(arrays))
            extra = sorted(set(arrays) - set(named))
            raise ShapeMismatch(f"parameter layout differs; missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in named.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ShapeMismatch(f"{name}: shape {value.shape}, expected {p.value.shape}")
            p.value = value.copy()
            p.grad = np.zeros_like(p.value)


@dataclass
class TrainingData:
    """Everything the training loop needs, derived once from a dataset."""

    codecs: list
    graph: RelationalGraph
    features: np.ndarray
    tables: np.ndarray
    adjacency: sp.csr_matrix
    components: list = field(default_factory=list)


def prepare(dataset: RelationalDataset, codecs=None) -> TrainingData:
    report = validate(dataset)
    if report:
        raise InvalidDataset(f"cannot train on an invalid dataset: {report[0]}")
    if codecs is None:
        codecs = [fit_table_codec(t) for t in dataset.tables]
    encoded = [encode_table(t, c)[0] for t, c in zip(dataset.tables, codecs)]
    graph = build_graph(dataset, check=False)
    merged = merge_tables(encoded, graph)
    return TrainingData(list(codecs), graph, merged.matrix, graph.table_of.copy(),
                        graph.adjacency_matrix(), graph.components())


def _batches(components, batch_size, rng):
    order = rng.permutation(len(components))
    size = len(components) if batch_size == 0 else batch_size
    for start in range(0, len(order), size):
        picked = [components[j] for j in order[start:start + size]]
        yield np.sort(np.concatenate(picked))


def train_model(dataset: RelationalDataset, config: TrainConfig):
    """Fit a model to ``dataset``; returns ``(model, loss_trace)``.

    Mini-batches are unions of connected components of the relational
    graph, so message passing inside a batch is exact. The trace holds one
    record per epoch with losses summed over all vertices.
    """
    cfg = config.resolved(len(dataset.tables))
    data = prepare(dataset)
    rng = np.random.default_rng(cfg.seed)
    model = GraphVaeModel(data.codecs, cfg, schema_fingerprint(dataset), rng, seed=cfg.seed)
    opt = Adam(model.params(), lr=cfg.learning_rate)
    trace = []
    for epoch in range(cfg.epochs):
        total = recon = kl = 0.0
        for idx in _batches(data.components, cfg.batch_size, rng):
            sub = data.adjacency[idx][:, idx]
            tables = data.tables[idx]
            eps = model.draw_eps(tables, rng)
            opt.zero_grad()
            parts = model.loss_and_grad(data.features[idx], tables, sub, eps, scale=1.0 / len(idx))
            opt.step()
            total += parts.total
            recon += parts.reconstruction
            kl += parts.kl
        trace.append(LossRecord(epoch, total, recon, kl))
        log.debug("epoch %d loss %.6f (reconstruction %.6f, kl %.6f)", epoch, total, recon, kl)
    return model, trace


def _fresh_identifiers(dataset: RelationalDataset) -> list[dict]:
    """Sequential tokens per table; linked identifiers copy the parent's new token."""
    foreign = {(l.secondary, l.identifier): l.primary for l in dataset.links}
    fresh = []
    for t in dataset.tables:
        ids = {}
        for a in t.attributes:
            if a.kind is Kind.IDENTIFIER and (t.name, a.name) not in foreign:
                ids[a.name] = tuple(str(r + 1) for r in range(len(t.rows)))
        fresh.append(ids)
    for ti, t in enumerate(dataset.tables):
        for a in t.attributes:
            parent_name = foreign.get((t.name, a.name))
            if a.kind is not Kind.IDENTIFIER or parent_name is None:
                continue
            pi = dataset.table_index(parent_name)
            parent = dataset.tables[pi]
            pcol = parent.index_of(a.name)
            row_of = {identifier_key(row[pcol]): r for r, row in enumerate(parent.rows)}
            tokens = fresh[pi][a.name]
            scol = t.index_of(a.name)
            fresh[ti][a.name] = tuple(tokens[row_of[identifier_key(row[scol])]] for row in t.rows)
    return fresh


def synthesize(model: GraphVaeModel, dataset: RelationalDataset, seed: int) -> RelationalDataset:
    """Generate a dataset with the topology and row counts of ``dataset``."""
    if schema_fingerprint(dataset) != model.fingerprint:
        raise SchemaFingerprintMismatch("model was trained on a dataset with a different schema")
    report = validate(dataset)
    if report:
        raise InvalidDataset(f"cannot synthesize over an invalid dataset: {report[0]}")
    graph = build_graph(dataset, check=False)
    rng = np.random.default_rng(seed)
    out = model.generate(graph.table_of, graph.adjacency_matrix(), rng)
    layout = [EncodedTable(c.table, np.zeros((len(t), c.width)), c.spans, {})
              for c, t in zip(model.codecs, dataset.tables)]
    merged = merge_tables(layout, graph)
    fresh = _fresh_identifiers(dataset)
    tables = [decode_table(enc, codec, ids)
              for enc, codec, ids in zip(split_tables(merged, out), model.codecs, fresh)]
    return RelationalDataset(tuple(tables), dataset.links, dataset.name)
