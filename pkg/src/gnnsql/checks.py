"""Finite-difference verification suite covering every differentiable module.

Each component builds a tiny fixture (dims <= 8) and compares backward()
against central differences. The full-model fixture uses a two-word
question over a two-table schema whose gold query decodes three schema
items, so the self-attention path carries gradient as well.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import gnn
from .autodiff import Tensor
from .config import RunConfig
from .data import Example, preprocess_query
from .gradcheck import CheckReport, gradient_report
from .grammar import sql_grammar
from .graph import SchemaGraph
from .linking import Question, Vocab, link_distribution, link_scores, register_linking
from .model import ParserModel
from .nn import ParamStore, birnn_encode, gru_cell, register_birnn, register_gru
from .schema import load_schema


def _gru_check(seed: int) -> CheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore(np.random.default_rng(seed + 1))
    register_gru(store, "gru", 3)
    h = Tensor(rng.normal(size=3), requires_grad=True)
    x = Tensor(rng.normal(size=3), requires_grad=True)
    w = ad.constant(rng.normal(size=3))

    def loss_fn():
        return ad.matmul(gru_cell(h, x, store, "gru"), w)

    params = {n: store[n] for n in store.names()} | {"h": h, "x": x}
    return gradient_report(loss_fn, params)


def _birnn_check(seed: int) -> CheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore(np.random.default_rng(seed + 1))
    register_birnn(store, "enc", 3, 3)
    xs = [Tensor(rng.normal(size=3), requires_grad=True) for _ in range(3)]
    w = ad.constant(rng.normal(size=6))

    def loss_fn():
        total = None
        for out in birnn_encode(xs, store, "enc", 3):
            term = ad.matmul(out, w)
            total = term if total is None else ad.add(total, term)
        return total

    params = {n: store[n] for n in store.names()}
    params |= {f"x{i}": x for i, x in enumerate(xs)}
    return gradient_report(loss_fn, params)


def _tiny_schema():
    return load_schema({
        "db_id": "check",
        "tables": [
            {"name": "team", "columns": [
                {"name": "team_id", "value_type": "number", "is_primary": True},
                {"name": "name", "value_type": "text"},
                {"name": "wins", "value_type": "number"}]},
            {"name": "player", "columns": [
                {"name": "player_id", "value_type": "number", "is_primary": True},
                {"name": "team_id", "value_type": "number"}]},
        ],
        "foreign_keys": [[4, 0]],
    })


def _linking_check(seed: int) -> CheckReport:
    schema = _tiny_schema()
    q = Question.from_text("team wins")
    vocab = Vocab.build([q], [schema])
    store = ParamStore(np.random.default_rng(seed))
    store.embedding("embed.word", len(vocab), 3)
    register_linking(store)

    def loss_fn():
        s = link_scores(q, schema, store, vocab)
        lm = link_distribution(s, schema)
        return ad.sum_reduce(ad.mul(lm.p, lm.p))

    return gradient_report(loss_fn, {n: store[n] for n in store.names()})


def _gnn_check(seed: int) -> CheckReport:
    rng = np.random.default_rng(seed)
    graph = SchemaGraph(n_nodes=5,
                        edges_bidir=((0, 1), (1, 0), (2, 3), (3, 2)),
                        edges_fwd=((1, 2), (4, 0)),
                        edges_back=((2, 1), (0, 4)))
    store = ParamStore(np.random.default_rng(seed + 2))
    gnn.register_gnn(store, 3)
    r = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    rho = ad.constant(rng.uniform(0.1, 0.9, size=5))
    w = ad.constant(rng.normal(size=(5, 3)))

    def loss_fn():
        return ad.sum_reduce(ad.mul(gnn.run_gnn(graph, r, rho, store, 2), w))

    params = {n: store[n] for n in store.names()} | {"r": r}
    return gradient_report(loss_fn, params)


def full_model_check(seed: int) -> CheckReport:
    """Gradient check of the complete training loss at tiny dimensions."""
    schema = _tiny_schema()
    q = Question.from_text("team wins")
    vocab = Vocab.build([q], [schema])
    cfg = RunConfig(word_dim=4, node_dim=4, enc_hidden=4, dec_hidden=4, att_dim=3,
                    ff_hidden=4, gnn_steps=2, seed=seed).validate()
    model = ParserModel(cfg, sql_grammar(), vocab)
    gold = preprocess_query("SELECT team.name FROM team WHERE team.wins > 'value'", schema)
    example = Example(question=q, gold_sql=gold, db_id=schema.db_id)
    ctx = model.example_context(example, schema)

    def loss_fn():
        return model.loss(ctx)

    return gradient_report(loss_fn, {n: model.store[n] for n in model.store.names()})


COMPONENTS = {
    "gru_cell": _gru_check,
    "birnn_encode": _birnn_check,
    "linking": _linking_check,
    "gnn": _gnn_check,
    "full_model": full_model_check,
}


def full_gradient_suite(seed: int = 0) -> list[tuple[str, CheckReport]]:
    return [(name, fn(seed)) for name, fn in COMPONENTS.items()]
