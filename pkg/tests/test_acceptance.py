"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. The learning and
ablation criteria train real models and dominate the runtime.
"""

import json
import os
import time

import numpy as np
import pytest

from gnnsql import autodiff as ad
from gnnsql import gnn as gnn_mod
from gnnsql.checks import full_gradient_suite, full_model_check
from gnnsql.cli import EXIT_OK, main
from gnnsql.config import RunConfig
from gnnsql.corpus import alias_corpus, corpus_queries, corpus_schemas
from gnnsql.data import (evaluate_pair, filter_beam, join_badness, preprocess_query,
                         split_single_multi)
from gnnsql.grammar import (Grammar, derivation_to_sql, legal_actions, random_derivation,
                            sql_grammar, sql_to_derivation)
from gnnsql.graph import SchemaGraph
from gnnsql.linking import Question, Vocab, link_distribution, relevance, type_partition
from gnnsql.model import ParserModel
from gnnsql.nn import ParamStore
from gnnsql.schema import load_schema
from gnnsql.synth import generate_synthetic
from gnnsql.train import exact_match, prepare_contexts, train

from test_gnn import brute_force_gnn, graph_distances, make_store, random_graph
from test_schema_graph import make_doc

GRAMMAR = sql_grammar()
SCHEMAS = corpus_schemas()


def report(criterion: int, detail: str) -> None:
    print(f"\n[acceptance] criterion {criterion}: PASS ({detail})")


# ---------------------------------------------------------------------------

def test_criterion_1_gradient_soundness():
    t0 = time.time()
    suite = full_gradient_suite(seed=0)
    for name, rep in suite:
        assert rep.ok, f"{name}: " + ", ".join(
            e.name for e in rep.entries if not e.ok)
    full = dict(suite)["full_model"]
    n_coords = "all parameters"
    elapsed = time.time() - t0
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s"
    worst = max(e.worst_abs for e in full.entries)
    report(1, f"full-model and module gradients match finite differences "
              f"in {elapsed:.0f}s, worst abs err {worst:.1e}, {n_coords} checked")


def test_criterion_2_gnn_oracle_equivalence():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        graph = random_graph(rng)
        store = make_store(4, seed=int(rng.integers(1 << 30)))
        r = rng.normal(size=(graph.n_nodes, 4))
        rho = rng.uniform(size=graph.n_nodes)
        steps = int(rng.integers(0, 3))
        phi = gnn_mod.run_gnn(graph, ad.constant(r), ad.constant(rho), store,
                              steps=steps).data
        expected = brute_force_gnn(graph, r, rho, store, steps)
        worst = max(worst, float(np.max(np.abs(phi - expected))))
        assert worst < 1e-10

    # locality: zeroing inputs beyond graph distance L leaves phi bit-unchanged
    for _ in range(10):
        graph = random_graph(rng, 7)
        store = make_store(3, seed=int(rng.integers(1 << 30)))
        r = rng.normal(size=(7, 3))
        rho = rng.uniform(size=7)
        dist = graph_distances(graph, 7)
        phi = gnn_mod.run_gnn(graph, ad.constant(r), ad.constant(rho), store, 2).data
        for v in range(7):
            far = [u for u in range(7) if dist[v, u] > 2]
            if far:
                r2 = r.copy()
                r2[far] = 0.0
                phi2 = gnn_mod.run_gnn(graph, ad.constant(r2), ad.constant(rho),
                                       store, 2).data
                assert np.array_equal(phi[v], phi2[v])

    # permutation equivariance
    for _ in range(10):
        n = int(rng.integers(3, 10))
        graph = random_graph(rng, n)
        store = make_store(4, seed=int(rng.integers(1 << 30)))
        r = rng.normal(size=(n, 4))
        rho = rng.uniform(size=n)
        perm = rng.permutation(n)
        permuted = SchemaGraph(
            n_nodes=n,
            edges_bidir=tuple((int(perm[u]), int(perm[v])) for u, v in graph.edges_bidir),
            edges_fwd=tuple((int(perm[u]), int(perm[v])) for u, v in graph.edges_fwd),
            edges_back=tuple((int(perm[u]), int(perm[v])) for u, v in graph.edges_back))
        rp = np.empty_like(r)
        rp[perm] = r
        rhop = np.empty_like(rho)
        rhop[perm] = rho
        a = gnn_mod.run_gnn(graph, ad.constant(r), ad.constant(rho), store, 2).data
        b = gnn_mod.run_gnn(permuted, ad.constant(rp), ad.constant(rhop), store, 2).data
        assert np.max(np.abs(b[perm] - a)) < 1e-12
    report(2, f"100 random graphs within 1e-10 of the dense oracle "
              f"(worst {worst:.1e}); locality bit-exact; equivariance within 1e-12")


def test_criterion_3_linking_normalization():
    rng = np.random.default_rng(7)
    docs = [SCHEMAS[k] for k in sorted(SCHEMAS)]
    worst = 0.0
    for i in range(1000):
        schema = docs[i % len(docs)]
        n_words = int(rng.integers(1, 8))
        s = ad.constant(rng.normal(size=(schema.n_nodes, n_words)) * 5)
        lm = link_distribution(s, schema)
        for row, (t, nodes) in enumerate(type_partition(schema)):
            mass = lm.null_mass.data[row].copy()
            if nodes:
                mass += lm.p.data[nodes].sum(axis=0)
            worst = max(worst, float(np.max(np.abs(mass - 1.0))))
            assert worst < 1e-9
        rho = relevance(lm).rho.data
        brute = np.array([max(lm.p.data[v, i] for i in range(n_words))
                          for v in range(schema.n_nodes)])
        assert np.array_equal(rho, brute)
    report(3, f"1000 instances: per-(word,type) mass within {worst:.1e} of 1; "
              f"relevance equals brute-force row max exactly")


def test_criterion_4_grammar_round_trip_and_rollouts():
    queries = corpus_queries()
    assert len(queries) >= 50
    for db_id, sql in queries:
        schema = SCHEMAS[db_id]
        d = sql_to_derivation(sql, schema, GRAMMAR)
        printed = derivation_to_sql(d, schema)
        d2 = sql_to_derivation(printed, schema, GRAMMAR)
        assert derivation_to_sql(d2, schema) == printed
        assert d2.actions == d.actions

    rng = np.random.default_rng(99)
    schemas = [SCHEMAS[k] for k in sorted(SCHEMAS)]
    for i in range(1000):
        schema = schemas[i % len(schemas)]
        d = random_derivation(GRAMMAR, schema, rng)
        sql = derivation_to_sql(d, schema)
        sql_to_derivation(sql, schema, GRAMMAR)  # must parse
    report(4, f"{len(queries)} corpus queries are parse-print-parse fixpoints; "
              f"1000 legality-constrained rollouts all print parseable SQL")


def test_criterion_5_preprocessing():
    pairs = alias_corpus()
    assert len(pairs) >= 10
    n_alias = 0
    n_bare = 0
    for db_id, raw, expected in pairs:
        schema = SCHEMAS[db_id]
        got = preprocess_query(raw, schema)
        assert got == expected, f"{raw!r}: {got!r} != {expected!r}"
        assert preprocess_query(got, schema) == got
        if " as " in raw.lower():
            n_alias += 1
        if got != raw:
            n_bare += 1
    for db_id, sql in corpus_queries():
        schema = SCHEMAS[db_id]
        once = preprocess_query(sql, schema)
        assert preprocess_query(once, schema) == once
    report(5, f"{len(pairs)} alias-corpus pairs transform as specified "
              f"({n_alias} alias removals); idempotent on all corpus queries")


# ---------------------------------------------------------------------------
# learning and ablation criteria share datasets and trained models

def _multi_subset(examples, schemas):
    return [e for e in examples
            if split_single_multi(e.gold_sql, schemas[e.db_id]) == "multi"]


def _train_variant(ds, vocab, seed, epochs, **flags):
    cfg = RunConfig(word_dim=24, node_dim=24, enc_hidden=48, dec_hidden=48, att_dim=24,
                    ff_hidden=48, epochs=epochs, eval_every=5, train_em_stop=0.92,
                    seed=seed, **flags).validate()
    model = ParserModel(cfg, GRAMMAR, vocab)
    result = train(model, ds.train, ds.dev, ds.schemas, cfg)
    model.store.load_data(result.best_params)
    return model


def _score_multi(model, ds, beam_size=10):
    multi = _multi_subset(ds.test, ds.schemas)
    contexts, _ = prepare_contexts(model, multi, ds.schemas)
    hits = 0
    n_join = 0
    n_bad = 0
    for ctx in contexts:
        outcome = model.beam_search(ctx, beam_size=beam_size)
        if not outcome.candidates:
            continue
        sql = outcome.candidates[0].sql
        schema = ctx.schema_ctx.schema
        if evaluate_pair(sql, ctx.example.gold_sql, schema):
            hits += 1
        verdict = join_badness(sql, schema)
        if verdict.has_join:
            n_join += 1
            n_bad += not verdict.ok
    em = hits / max(1, len(contexts))
    bad_rate = n_bad / n_join if n_join else 0.0
    return em, bad_rate


@pytest.fixture(scope="module")
def ablation_runs():
    ds = generate_synthetic(seed=21, n_train_schemas=12, per_schema=10,
                            n_test_schemas=4, n_dev_schemas=2, per_eval_schema=10)
    vocab = Vocab.build([e.question for e in ds.train],
                        [ds.schemas[db] for db in sorted({e.db_id for e in ds.train})])
    rows = []
    for seed in (1, 2, 3):
        row = {}
        for name, flags in (("gnn", {}), ("no_gnn", {"no_gnn": True}),
                            ("oracle", {"oracle_relevance": True})):
            model = _train_variant(ds, vocab, seed=seed, epochs=30, **flags)
            row[name] = _score_multi(model, ds)
        rows.append(row)
    return ds, rows


def test_criterion_6_desk_scale_learning(tmp_path):
    t0 = time.time()
    data_dir = str(tmp_path / "data")
    run_dir = str(tmp_path / "run")
    assert main(["gen-data", "--out", data_dir, "--seed", "11", "--n-schemas", "20",
                 "--per-schema", "10", "--test-schemas", "5",
                 "--dev-schemas", "2"]) == EXIT_OK
    assert main(["train", "--data", data_dir, "--out", run_dir, "--seed", "11",
                 "--epochs", "50", "--eval-every", "2",
                 "--train-em-stop", "0.9"]) == EXIT_OK

    from gnnsql.cli import load_model
    from gnnsql.data import load_examples
    from gnnsql.schema import load_schemas_jsonl

    schemas = load_schemas_jsonl(os.path.join(data_dir, "schemas.jsonl"))
    train_ex = load_examples(os.path.join(data_dir, "train.jsonl"), schemas).examples
    test_ex = load_examples(os.path.join(data_dir, "test.jsonl"), schemas).examples

    # final-epoch parameters must memorize the training schemas ...
    model_final, _ = load_model(os.path.join(run_dir, "model_final.ckpt"))
    train_ctx, _ = prepare_contexts(model_final, train_ex, schemas)
    train_em = exact_match(model_final, train_ctx)
    assert train_em >= 0.9, f"train exact match {train_em:.3f} < 0.9"

    # ... and the dev-selected checkpoint must generalize to unseen schemas
    model_best, _ = load_model(os.path.join(run_dir, "model.ckpt"))
    test_ctx, _ = prepare_contexts(model_best, test_ex, schemas)
    test_em = exact_match(model_best, test_ctx, beam_size=10)
    assert test_em > 0.0, "no exact matches on unseen schemas"

    elapsed = time.time() - t0
    assert elapsed < 1800, f"desk-scale run took {elapsed:.0f}s"
    report(6, f"train EM {train_em:.1%}, unseen-schema test EM {test_em:.1%} "
              f"in {elapsed / 60:.1f} min")


def test_criterion_7_directional_ablation(ablation_runs):
    _, rows = ablation_runs
    gnn_em = float(np.mean([r["gnn"][0] for r in rows]))
    no_gnn_em = float(np.mean([r["no_gnn"][0] for r in rows]))
    oracle_em = float(np.mean([r["oracle"][0] for r in rows]))
    assert gnn_em >= no_gnn_em, f"GNN {gnn_em:.3f} < NoGNN {no_gnn_em:.3f}"
    assert oracle_em >= gnn_em, f"oracle {oracle_em:.3f} < learned {gnn_em:.3f}"
    report(7, f"multi-subset EM over 3 seeds: GNN {gnn_em:.3f} >= "
              f"NoGNN {no_gnn_em:.3f}; oracle {oracle_em:.3f} >= learned {gnn_em:.3f}")


def test_criterion_8_join_analysis(ablation_runs):
    ds, rows = ablation_runs
    gnn_bad = float(np.mean([r["gnn"][1] for r in rows]))
    no_gnn_bad = float(np.mean([r["no_gnn"][1] for r in rows]))
    assert gnn_bad <= no_gnn_bad, f"GNN bad-join {gnn_bad:.3f} > NoGNN {no_gnn_bad:.3f}"

    # filter_beam removes exactly the condition-(a) candidates and never the
    # gold-equivalent ones
    vocab = Vocab.build([e.question for e in ds.train],
                        [ds.schemas[db] for db in sorted({e.db_id for e in ds.train})])
    model = _train_variant(ds, vocab, seed=1, epochs=2)
    multi = _multi_subset(ds.test, ds.schemas)[:10]
    contexts, _ = prepare_contexts(model, multi, ds.schemas)
    for ctx in contexts:
        schema = ctx.schema_ctx.schema
        beam = model.beam_search(ctx, beam_size=10).candidates
        kept = filter_beam(beam, schema)
        removed = [c for c in beam if c not in kept]
        for c in removed:
            assert join_badness(c.sql, schema).same_table_condition
        for c in kept:
            assert not join_badness(c.sql, schema).same_table_condition
        gold_hits = sum(evaluate_pair(c.sql, ctx.example.gold_sql, schema) for c in beam)
        kept_hits = sum(evaluate_pair(c.sql, ctx.example.gold_sql, schema) for c in kept)
        assert kept_hits == gold_hits  # gold joins are never condition-(a)
    report(8, f"bad-join rate over 3 seeds: GNN {gnn_bad:.3f} <= NoGNN "
              f"{no_gnn_bad:.3f}; filtering removes exactly condition-(a) candidates")


def test_criterion_9_beam_properties():
    schema = load_schema(make_doc(
        [("team", [("team_id", "number", True), ("name", "text", False),
                   ("wins", "number", False)]),
         ("player", [("player_id", "number", True), ("label", "text", False),
                     ("team_id", "number", False)])],
        [[5, 0]]))
    questions = ["show the name of the team", "how many players are there",
                 "list the label of players with the highest team id"]

    # beam_size=1 equals greedy bit-exactly, and top-1 beam >= greedy, on 100
    # random models
    n_checked = 0
    for seed in range(100):
        q = Question.from_text(questions[seed % len(questions)])
        vocab = Vocab.build([q], [schema])
        cfg = RunConfig(word_dim=4, node_dim=4, enc_hidden=4, dec_hidden=4, att_dim=3,
                        ff_hidden=5, seed=seed, max_decode_steps=60).validate()
        model = ParserModel(cfg, GRAMMAR, vocab)
        from gnnsql.data import Example
        ex = Example(question=q, gold_sql="SELECT team.name FROM team", db_id=schema.db_id)
        ctx = model.example_context(ex, schema, with_gold=False)
        greedy = model.greedy(ctx)
        beam1 = model.beam_search(ctx, beam_size=1, merge_greedy=False)
        assert greedy.sql == beam1.candidates[0].sql
        assert greedy.logprob == beam1.candidates[0].logprob
        beam = model.beam_search(ctx, beam_size=5)
        assert beam.candidates[0].logprob >= greedy.logprob
        n_checked += 1

    # a beam at least as large as the number of paths enumerates exhaustively
    toy = Grammar([
        ("query", ("step", "step", "step")),
        ("step", ("A",)),
        ("step", ("B",)),
    ])
    q = Question.from_text("show the name of the team")
    vocab = Vocab.build([q], [schema])
    cfg = RunConfig(word_dim=4, node_dim=4, enc_hidden=4, dec_hidden=4, att_dim=3,
                    ff_hidden=5, seed=0).validate()
    model = ParserModel(cfg, toy, vocab)
    from gnnsql.data import Example
    ex = Example(question=q, gold_sql="SELECT team.name FROM team", db_id=schema.db_id)
    ctx = model.example_context(ex, schema, with_gold=False)
    outcome = model.beam_search(ctx, beam_size=8)
    assert len(outcome.candidates) == 8
    lps = [c.logprob for c in outcome.candidates]
    assert lps == sorted(lps, reverse=True)
    assert abs(sum(np.exp(lps)) - 1.0) < 1e-9  # all 8 paths, total mass 1
    report(9, f"beam1 == greedy bit-exact and top-1 beam >= greedy on "
              f"{n_checked} random inputs; exhaustive toy beam covers all paths")


def test_criterion_10_reproducibility(tmp_path):
    def run_all(tag):
        data = str(tmp_path / f"data_{tag}")
        run = str(tmp_path / f"run_{tag}")
        pred = str(tmp_path / f"pred_{tag}.jsonl")
        ev = str(tmp_path / f"eval_{tag}.json")
        assert main(["gen-data", "--out", data, "--seed", "17", "--n-schemas", "2",
                     "--per-schema", "3", "--test-schemas", "1", "--dev-schemas", "1",
                     "--per-eval-schema", "2"]) == EXIT_OK
        assert main(["train", "--data", data, "--out", run, "--seed", "17",
                     "--epochs", "1", "--word-dim", "8", "--node-dim", "8",
                     "--enc-hidden", "10", "--dec-hidden", "10", "--att-dim", "8",
                     "--ff-hidden", "10", "--eval-every", "0"]) == EXIT_OK
        assert main(["predict", "--checkpoint", os.path.join(run, "model.ckpt"),
                     "--data", data, "--split", "test", "--out", pred,
                     "--beam-size", "3"]) == EXIT_OK
        assert main(["evaluate", "--pred", pred, "--data", data, "--split", "test",
                     "--out", ev]) == EXIT_OK
        files = {f"data/{f}": os.path.join(data, f) for f in
                 ("schemas.jsonl", "train.jsonl", "dev.jsonl", "test.jsonl")}
        files |= {f"run/{f}": os.path.join(run, f) for f in
                  ("model.ckpt", "model_final.ckpt", "metrics.jsonl")}
        files |= {"pred.jsonl": pred, "eval.json": ev}
        return {key: open(path, "rb").read() for key, path in files.items()}

    a = run_all("a")
    b = run_all("b")
    assert a.keys() == b.keys()
    for key in a:
        assert a[key] == b[key], f"output differs: {key}"
    report(10, f"{len(a)} artifacts byte-identical across reruns "
               f"(datasets, checkpoints, metrics, predictions, reports)")
