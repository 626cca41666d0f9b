import numpy as np
import pytest
from hypothesis import given, strategies as st

from relsynth.errors import InvalidDataset
from relsynth.graph import build_graph, edge_list_attribute
from relsynth.relational import AttributeSpec, Kind, RelationalDataset, TableData

from helpers import BASKETBALL_ATTRS, BASKETBALL_ROWS, brute_force_edges, random_dataset, shaped_dataset


def _ids(prim, sec):
    p = TableData("p", (AttributeSpec("id", Kind.IDENTIFIER, unique=True),), tuple((i,) for i in prim))
    s = TableData("s", (AttributeSpec("id", Kind.IDENTIFIER),), tuple((i,) for i in sec))
    return RelationalDataset.single_primary([p, s], "p", "id")


def test_small_example():
    g = build_graph(_ids([1, 2], [1, 1, 2]))
    # vertices: p1=0, p2=1, s1=2, s2=3, s3=4
    assert g.edges == ((0, 2), (0, 3), (1, 4))
    assert g.degree(0) == 2
    assert edge_list_attribute(g)[(0, 0)] == ((1, 0), (1, 1))


def test_empty_secondary_leaves_primaries_isolated():
    g = build_graph(_ids([1, 2], []))
    assert g.n_edges == 0 and g.adjacency == ((), ())
    assert edge_list_attribute(g) == {(0, 0): (), (0, 1): ()}


def test_int_and_string_identifiers_do_not_match():
    with pytest.raises(InvalidDataset):
        build_graph(_ids([1], ["1"]))


def test_basketball_shape_counts():
    g = build_graph(shaped_dataset(BASKETBALL_ROWS, BASKETBALL_ATTRS))
    assert g.n_vertices == 30421
    assert g.n_edges == 1608 + 23751


@given(st.integers(0, 2**32 - 1))
def test_matches_brute_force_and_handshake(seed):
    d = random_dataset(np.random.default_rng(seed), max_rows=120, max_secondaries=3)
    g = build_graph(d)
    assert set(g.edges) == brute_force_edges(d)
    assert sum(len(a) for a in g.adjacency) == 2 * g.n_edges
    assert (g.adjacency_matrix() != g.adjacency_matrix().T).nnz == 0


def test_deterministic(rng):
    d = random_dataset(rng, max_rows=80)
    assert build_graph(d) == build_graph(d)


def test_components_partition_vertices(rng):
    d = random_dataset(rng, max_rows=80, allow_empty=False)
    g = build_graph(d)
    comps = g.components()
    assert np.array_equal(np.sort(np.concatenate(comps)), np.arange(g.n_vertices))
    for c in comps:
        members = set(c.tolist())
        assert all(set(g.adjacency[v]) <= members for v in c)
