"""Typed schema graph: nodes are schema items, edges come in three sets.

Column-table membership contributes both directions to the bidirectional
set. Each foreign key (c_f, c_p) contributes the column pair and the owning
table pair to the forward set, and their reverses to the backward set; two
foreign keys between the same tables therefore yield a table multi-edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .schema import Schema

EDGE_FORWARD = "fwd"
EDGE_BACKWARD = "back"
EDGE_BIDIR = "bidir"
EDGE_SETS = (EDGE_FORWARD, EDGE_BACKWARD, EDGE_BIDIR)


@dataclass(frozen=True)
class SchemaGraph:
    n_nodes: int
    edges_bidir: tuple[tuple[int, int], ...]
    edges_fwd: tuple[tuple[int, int], ...]
    edges_back: tuple[tuple[int, int], ...]

    def edges(self, edge_set: str) -> tuple[tuple[int, int], ...]:
        if edge_set == EDGE_FORWARD:
            return self.edges_fwd
        if edge_set == EDGE_BACKWARD:
            return self.edges_back
        if edge_set == EDGE_BIDIR:
            return self.edges_bidir
        raise ValueError(f"unknown edge set '{edge_set}'")


def build_graph(schema: Schema) -> SchemaGraph:
    n_tables = schema.n_tables
    bidir = []
    for c in schema.columns:
        cn = schema.column_node(c.id)
        tn = schema.table_node(c.table_index)
        bidir.append((cn, tn))
        bidir.append((tn, cn))
    fwd = []
    back = []
    for cf, cp in schema.foreign_keys:
        cfn, cpn = schema.column_node(cf), schema.column_node(cp)
        tfn = schema.table_node(schema.columns[cf].table_index)
        tpn = schema.table_node(schema.columns[cp].table_index)
        fwd.append((cfn, cpn))
        fwd.append((tfn, tpn))
        back.append((cpn, cfn))
        back.append((tpn, tfn))
    return SchemaGraph(n_nodes=schema.n_nodes, edges_bidir=tuple(bidir),
                       edges_fwd=tuple(fwd), edges_back=tuple(back))


def incoming(graph: SchemaGraph, node: int, edge_set: str) -> list[int]:
    """Sources of edges into ``node`` in one edge set, in declaration order,
    with multiplicity."""
    if not (0 <= node < graph.n_nodes):
        raise IndexError(f"node {node} out of range for graph with {graph.n_nodes} nodes")
    return [u for (u, v) in graph.edges(edge_set) if v == node]


@lru_cache(maxsize=256)
def incoming_count_matrix(graph: SchemaGraph, edge_set: str) -> np.ndarray:
    """A[v, u] = multiplicity of edge (u, v); the GNN message aggregation is
    then A @ messages."""
    a = np.zeros((graph.n_nodes, graph.n_nodes))
    for u, v in graph.edges(edge_set):
        a[v, u] += 1.0
    return a


def in_degrees(graph: SchemaGraph, edge_set: str) -> np.ndarray:
    return incoming_count_matrix(graph, edge_set).sum(axis=1)
