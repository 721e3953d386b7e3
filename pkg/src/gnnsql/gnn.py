"""Gated graph network over the schema graph.

Node states start from the base item embeddings scaled by their relevance
scores, then run a fixed number of rounds: sum typed linear messages over
incoming edges (one weight/bias block per edge set, bias added once per
edge), then apply a shared GRU update per node.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import EDGE_BACKWARD, EDGE_BIDIR, EDGE_FORWARD, SchemaGraph, in_degrees, \
    incoming_count_matrix
from .linking import Vocab, name_token_matrix
from .nn import ParamStore, gru_cell, register_gru
from .schema import Schema, TYPE_ORDER

# Instrumentation for the no-GNN ablation: bumped on every run_gnn call.
RUN_GNN_CALLS = 0

_EDGE_PARAM = {EDGE_FORWARD: "fwd", EDGE_BACKWARD: "back", EDGE_BIDIR: "bidir"}


def register_gnn(store: ParamStore, dim: int) -> None:
    for tag in _EDGE_PARAM.values():
        store.matrix(f"gnn.w_{tag}", dim, dim)
        store.bias(f"gnn.b_{tag}", dim)
    register_gru(store, "gnn.gru", dim)


def register_node_embeddings(store: ParamStore, dim: int, word_dim: int) -> None:
    store.embedding("embed.type", len(TYPE_ORDER), dim)
    store.matrix("node.w_r", dim, dim + 2 * word_dim)
    store.bias("node.b_r", dim)


def neighbor_mean_matrix(graph: SchemaGraph) -> np.ndarray:
    """Row-normalized bidirectional adjacency: averages each node's
    column/table neighbors."""
    a = incoming_count_matrix(graph, EDGE_BIDIR).copy()
    deg = a.sum(axis=1, keepdims=True)
    deg[deg == 0] = 1.0
    return a / deg


def base_embeddings(schema: Schema, graph: SchemaGraph, store: ParamStore,
                    vocab: Vocab, name_means: Tensor | None = None) -> Tensor:
    """r[v]: learned projection of [type embedding ; mean name-token
    embedding of v ; mean name-token embedding of v's table/column
    neighbors]."""
    if name_means is None:
        name_means = ad.matmul(ad.constant(name_token_matrix(schema, vocab)),
                               store["embed.word"])
    type_idx = np.array([TYPE_ORDER.index(schema.node_type(v))
                         for v in range(schema.n_nodes)], dtype=np.intp)
    type_emb = ad.embedding_lookup(store["embed.type"], type_idx)
    nbr_means = ad.matmul(ad.constant(neighbor_mean_matrix(graph)), name_means)
    feats = ad.concat([type_emb, name_means, nbr_means], axis=1)
    return ad.add(ad.matmul(feats, ad.transpose(store["node.w_r"])), store["node.b_r"])


def init_node_states(r: Tensor, rho: Tensor) -> Tensor:
    """h0[v] = r[v] * rho[v] (each row scaled by its relevance)."""
    if r.shape[0] != rho.shape[0]:
        raise ad.ShapeError(
            f"init_node_states: {r.shape[0]} embeddings vs {rho.shape[0]} relevance scores")
    return ad.mul(r, ad.reshape(rho, (rho.shape[0], 1)))


def message_pass(graph: SchemaGraph, h: Tensor, store: ParamStore) -> Tensor:
    """a[v] = sum over edge sets and incoming edges (u, v) of W h[u] + b."""
    total = None
    for edge_set, tag in _EDGE_PARAM.items():
        adj = ad.constant(incoming_count_matrix(graph, edge_set))
        deg = ad.constant(in_degrees(graph, edge_set).reshape(-1, 1))
        msg = ad.matmul(adj, ad.matmul(h, ad.transpose(store[f"gnn.w_{tag}"])))
        msg = ad.add(msg, ad.matmul(deg, ad.reshape(store[f"gnn.b_{tag}"], (1, -1))))
        total = msg if total is None else ad.add(total, msg)
    return total


def run_gnn(graph: SchemaGraph, r: Tensor, rho: Tensor, store: ParamStore,
            steps: int = 2) -> Tensor:
    """phi = node states after ``steps`` message-pass + GRU rounds."""
    global RUN_GNN_CALLS
    RUN_GNN_CALLS += 1
    h = init_node_states(r, rho)
    for _ in range(steps):
        a = message_pass(graph, h, store)
        h = gru_cell(h, a, store, "gnn.gru")
    return h
