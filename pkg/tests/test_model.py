from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from relsynth.errors import ConfigMismatch, SchemaFingerprintMismatch, ShapeMismatch
from relsynth.graph import build_graph
from relsynth.model import (GraphVaeModel, MessagePassingLayer, TrainConfig, message_pass, prepare, synthesize,
                            train_model)
from relsynth.nn import Adam, Param
from relsynth.relational import Kind, schema_fingerprint, shape_of, validate
from relsynth.toy import make_toy_dataset

from helpers import numeric_gradient, relative_error

END_TO_END_TOL = 1e-3


def _star_adjacency():
    # vertex 0 linked to 1 and 2, vertex 3 isolated
    rows, cols = [0, 1, 0, 2], [1, 0, 2, 0]
    return sp.csr_matrix((np.ones(4), (rows, cols)), shape=(4, 4))


def test_isolated_vertex_gets_zero_message(rng):
    layer = MessagePassingLayer(3, rng)
    H = rng.normal(size=(4, 3))
    out, _ = layer.forward(H, _star_adjacency())
    alone, _ = layer.gru.forward(np.zeros((1, 3)), H[3:])
    assert np.allclose(out[3], alone[0], rtol=0, atol=1e-15)


def test_message_pass_matches_per_edge_loop(rng):
    layers = [MessagePassingLayer(3, rng) for _ in range(2)]
    adj = _star_adjacency()
    H = rng.normal(size=(4, 3))
    expected = H.copy()
    nbrs = [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(4)]
    for layer in layers:
        prev = expected.copy()
        for t in range(4):
            m = np.zeros(3)
            for s in nbrs[t]:
                m += prev[s] @ layer.A.value
            expected[t] = layer.gru.forward(m[None], prev[t][None])[0][0]
    assert np.max(np.abs(message_pass(H, adj, layers) - expected)) <= 1e-12


def test_message_pass_is_sequential_composition(rng):
    layers = [MessagePassingLayer(2, rng) for _ in range(3)]
    H = rng.normal(size=(4, 2))
    step = H
    for layer in layers:
        step = message_pass(step, _star_adjacency(), [layer])
    assert np.array_equal(message_pass(H, _star_adjacency(), layers), step)


def test_message_pass_permutation_equivariance(rng):
    layers = [MessagePassingLayer(2, rng)]
    adj = _star_adjacency().toarray()
    H = rng.normal(size=(4, 2))
    perm = np.array([2, 0, 3, 1])
    P = np.eye(4)[perm]
    lhs = message_pass(H[perm], P @ adj @ P.T, layers)
    assert np.allclose(lhs, message_pass(H, adj, layers)[perm], atol=1e-14)


def test_message_passing_layer_gradients(rng):
    layer = MessagePassingLayer(3, rng)
    adj = _star_adjacency()
    H = Param(rng.normal(size=(4, 3)))
    R = rng.normal(size=(4, 3))
    loss = lambda: float(np.sum(R * layer.forward(H.value, adj)[0]))
    _, cache = layer.forward(H.value, adj)
    dH = layer.backward(R, cache, adj)
    for name, p in layer.named_params():
        assert relative_error(p.grad, numeric_gradient(loss, p)) < 1e-4, name
    assert relative_error(dH, numeric_gradient(loss, H)) < 1e-4


def test_message_passing_shape_check(rng):
    with pytest.raises(ShapeMismatch):
        MessagePassingLayer(3, rng).forward(np.zeros((4, 2)), _star_adjacency())


def _tiny_model(tiny_dataset, **kw):
    data = prepare(tiny_dataset)
    cfg = TrainConfig(k1=2, k2=2, hidden_dim=4, latent=(2, 3), beta=(1.0, 0.5), **kw)
    model = GraphVaeModel(data.codecs, cfg, schema_fingerprint(tiny_dataset), np.random.default_rng(3))
    return model, data


def test_end_to_end_gradient(tiny_dataset):
    model, data = _tiny_model(tiny_dataset)
    assert data.features.shape == (5, 6)
    eps = model.draw_eps(data.tables, np.random.default_rng(4))
    loss = lambda: model.loss_and_grad(data.features, data.tables, data.adjacency, eps, backward=False).total
    for p in model.params():
        p.zero_grad()
    model.loss_and_grad(data.features, data.tables, data.adjacency, eps)
    for name, p in model.named_params():
        assert relative_error(p.grad, numeric_gradient(loss, p)) < END_TO_END_TOL, name


def test_zero_beta_is_pure_reconstruction(tiny_dataset):
    model, data = _tiny_model(tiny_dataset)
    model.config = replace(model.config, beta=(0.0, 0.0))
    eps = model.draw_eps(data.tables, np.random.default_rng(0))
    parts = model.loss_and_grad(data.features, data.tables, data.adjacency, eps, backward=False)
    assert parts.total == parts.reconstruction and parts.kl > 0


def test_one_adam_step_decreases_loss(tiny_dataset):
    model, data = _tiny_model(tiny_dataset)
    eps = model.draw_eps(data.tables, np.random.default_rng(0))
    opt = Adam(model.params(), lr=1e-3)
    before = model.loss_and_grad(data.features, data.tables, data.adjacency, eps).total
    opt.step()
    after = model.loss_and_grad(data.features, data.tables, data.adjacency, eps, backward=False).total
    assert after < before


def test_table_configs_expressible():
    TrainConfig(k1=4, k2=4, latent=(8, 10, 10), beta=(1, 1, 1)).resolved(3)
    TrainConfig(latent=(8, 8), beta=(5, 5)).resolved(2)
    with pytest.raises(ConfigMismatch):
        TrainConfig(latent=(8, 8), beta=(5, 5, 5)).resolved(2)


@pytest.mark.parametrize("bad", [dict(k1=-1), dict(latent=(0, 1)), dict(beta=(-1, 1)), dict(learning_rate=0),
                                 dict(obs_noise=0), dict(epochs=-1)])
def test_config_rejects_invalid(bad):
    with pytest.raises(ConfigMismatch):
        TrainConfig(**bad).resolved(2)


def test_config_dict_round_trip():
    cfg = TrainConfig(latent=(2, 3), beta=(1.0, 0.5), epochs=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigMismatch):
        TrainConfig.from_dict({"nope": 1})


def test_zero_epochs_gives_empty_trace(tiny_dataset):
    _, trace = train_model(tiny_dataset, TrainConfig(epochs=0, hidden_dim=4))
    assert trace == []


def test_training_is_deterministic_and_reduces_loss():
    d = make_toy_dataset(n_primary=30, children=2, seed=1)
    cfg = TrainConfig(k1=1, k2=1, hidden_dim=8, epochs=15, seed=5, learning_rate=1e-2)
    m1, t1 = train_model(d, cfg)
    m2, t2 = train_model(d, cfg)
    assert [r.total for r in t1] == [r.total for r in t2]
    assert all(np.array_equal(a, b) for a, b in zip(m1.state_dict().values(), m2.state_dict().values()))
    assert t1[-1].total < t1[0].total


@pytest.fixture(scope="module")
def small_fit():
    d = make_toy_dataset(n_primary=30, children=2, seed=2)
    model, _ = train_model(d, TrainConfig(k1=1, k2=1, hidden_dim=8, epochs=5, seed=0))
    return d, model


def test_synthesize_preserves_shape_and_validates(small_fit):
    d, model = small_fit
    s = synthesize(model, d, seed=11)
    assert shape_of(s) == shape_of(d)
    assert validate(s) == []
    assert build_graph(s).edges == build_graph(d).edges
    assert s.table("customers").column("customer_id")[:3] == ["1", "2", "3"]
    for t_real, t_syn in zip(d.tables, s.tables):
        for a in t_real.attributes:
            if a.kind is Kind.CATEGORICAL:
                assert set(t_syn.column(a.name)) <= set(t_real.column(a.name))
            if a.kind is Kind.NUMERIC:
                col = t_real.column(a.name)
                assert min(col) <= min(t_syn.column(a.name)) and max(t_syn.column(a.name)) <= max(col)


def test_synthesize_deterministic_per_seed(small_fit):
    d, model = small_fit
    assert synthesize(model, d, 1) == synthesize(model, d, 1)
    assert synthesize(model, d, 1) != synthesize(model, d, 2)


def test_synthesize_rejects_other_schema(small_fit, tiny_dataset):
    _, model = small_fit
    with pytest.raises(SchemaFingerprintMismatch):
        synthesize(model, tiny_dataset, 0)
