"""Relational graph: one vertex per row, one edge per identifier match."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidDataset
from .relational import RelationalDataset, identifier_key, validate


@dataclass(frozen=True)
class RelationalGraph:
    """Vertices are ``(table, row)`` pairs, numbered in dataset order.

    ``edges`` holds sorted ``(u, v)`` index pairs with ``u < v``;
    ``adjacency[i]`` is the sorted neighbor tuple of vertex ``i``.
    """

    vertices: tuple
    table_offsets: tuple
    edges: tuple
    adjacency: tuple

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex_index(self, table_idx: int, row: int) -> int:
        return self.table_offsets[table_idx] + row

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    @cached_property
    def table_of(self) -> np.ndarray:
        return np.array([t for t, _ in self.vertices], dtype=np.int64)

    def adjacency_matrix(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR matrix; row ``t`` sums messages over N(t)."""
        n = self.n_vertices
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=np.float64)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        m.sort_indices()
        return m

    def components(self) -> list[np.ndarray]:
        """Connected components as sorted vertex-index arrays, ordered by smallest member."""
        n_comp, labels = sp.csgraph.connected_components(self.adjacency_matrix(), directed=False)
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(n_comp + 1))
        comps = [order[bounds[c]:bounds[c + 1]] for c in range(n_comp)]
        comps.sort(key=lambda c: c[0])
        return comps


def build_graph(dataset: RelationalDataset, check: bool = True) -> RelationalGraph:
    """Hash-join every link's identifier to connect primary and secondary rows."""
    if check:
        report = validate(dataset)
        if report:
            raise InvalidDataset(f"cannot build graph: {report[0]}")
    offsets = []
    vertices = []
    for ti, t in enumerate(dataset.tables):
        offsets.append(len(vertices))
        vertices.extend((ti, r) for r in range(len(t.rows)))

    edges = set()
    for link in dataset.links:
        pi = dataset.table_index(link.primary)
        si = dataset.table_index(link.secondary)
        prim, sec = dataset.tables[pi], dataset.tables[si]
        pcol, scol = prim.index_of(link.identifier), sec.index_of(link.identifier)
        index = {identifier_key(row[pcol]): offsets[pi] + r for r, row in enumerate(prim.rows)}
        for r, row in enumerate(sec.rows):
            u = index.get(identifier_key(row[scol]))
            if u is None:
                continue
            v = offsets[si] + r
            edges.add((min(u, v), max(u, v)))
    edges = tuple(sorted(edges))
    adj = [[] for _ in vertices]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    adjacency = tuple(tuple(sorted(a)) for a in adj)
    return RelationalGraph(tuple(vertices), tuple(offsets), edges, adjacency)


def edge_list_attribute(graph: RelationalGraph) -> dict:
    """Neighbor list of every vertex, keyed and valued by ``(table, row)``."""
    return {graph.vertices[i]: tuple(graph.vertices[j] for j in nbrs)
            for i, nbrs in enumerate(graph.adjacency)}
