"""Command-line entry points.

Commands: gen-data, train, predict, evaluate, analyze-joins, gradcheck.
Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .autodiff import NonFiniteError
from .checks import full_gradient_suite
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .data import (evaluate_dataset, filter_beam, join_badness, load_examples,
                   render_report, save_examples)
from .grammar import sql_grammar
from .linking import Vocab
from .model import ParserModel
from .nn import ParamError, load_checkpoint, save_checkpoint
from .schema import Schema, SchemaError, load_schemas_jsonl, save_schemas_jsonl
from .sqlast import SqlError
from .synth import generate_synthetic
from .train import prepare_contexts, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_CONFIG_FLAGS = {
    "word_dim": int, "node_dim": int, "enc_hidden": int, "dec_hidden": int,
    "att_dim": int, "ff_hidden": int, "gnn_steps": int, "beam_size": int,
    "max_decode_steps": int, "lr": float, "epochs": int, "grad_accum": int,
    "eval_every": int, "train_em_stop": float, "seed": int,
}
_ABLATION_FLAGS = ["no_gnn", "no_self_attend", "only_self_attend", "no_relevance",
                   "oracle_relevance", "filter_beam"]


def _add_config_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for name, kind in _CONFIG_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)
    for name in _ABLATION_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, action="store_true",
                       default=None)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    keys = set(_CONFIG_FLAGS) | set(_ABLATION_FLAGS)
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return load_config(getattr(args, "config", None), overrides)


def _load_split(data_dir: str, split: str, schemas: dict[str, Schema]):
    path = os.path.join(data_dir, f"{split}.jsonl")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset split file not found: {path}")
    return load_examples(path, schemas)


def _load_schemas(data_dir: str) -> dict[str, Schema]:
    path = os.path.join(data_dir, "schemas.jsonl")
    if not os.path.exists(path):
        raise FileNotFoundError(f"schema file not found: {path}")
    return load_schemas_jsonl(path)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    if args.n_schemas < 1 or args.per_schema < 1 or args.test_schemas < 1:
        print("gen-data: --n-schemas, --per-schema and --test-schemas must be positive",
              file=sys.stderr)
        return EXIT_CONFIG
    ds = generate_synthetic(seed=args.seed, n_train_schemas=args.n_schemas,
                            per_schema=args.per_schema, n_test_schemas=args.test_schemas,
                            n_dev_schemas=args.dev_schemas,
                            per_eval_schema=args.per_eval_schema)
    os.makedirs(args.out, exist_ok=True)
    save_schemas_jsonl(os.path.join(args.out, "schemas.jsonl"),
                       [ds.schemas[k] for k in sorted(ds.schemas)])
    for split, examples in (("train", ds.train), ("dev", ds.dev), ("test", ds.test)):
        save_examples(os.path.join(args.out, f"{split}.jsonl"), examples)
    print(f"wrote {len(ds.schemas)} schemas, {len(ds.train)}/{len(ds.dev)}/"
          f"{len(ds.test)} train/dev/test examples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    schemas = _load_schemas(args.data)
    train_report = _load_split(args.data, "train", schemas)
    dev_report = _load_split(args.data, "dev", schemas)
    for db_id, sql, reason in train_report.skipped + dev_report.skipped:
        print(f"skipped [{db_id}] {sql!r}: {reason}", file=sys.stderr)
    print(f"grammar coverage: {len(train_report.examples)} of "
          f"{len(train_report.examples) + len(train_report.skipped)} training examples")

    questions = [ex.question for ex in train_report.examples]
    train_schemas = [schemas[db] for db in sorted({ex.db_id for ex in train_report.examples})]
    vocab = Vocab.build(questions, train_schemas)
    model = ParserModel(cfg, sql_grammar(), vocab)

    result = train(model, train_report.examples, dev_report.examples, schemas, cfg,
                   log=print)
    os.makedirs(args.out, exist_ok=True)
    extra = {"config": cfg.to_dict(), "vocab": vocab.tokens}
    save_checkpoint(os.path.join(args.out, "model.ckpt"), model.store, seed=cfg.seed,
                    extra=extra, arrays=result.best_params)
    save_checkpoint(os.path.join(args.out, "model_final.ckpt"), model.store,
                    seed=cfg.seed, extra=extra, arrays=result.final_params)
    with open(os.path.join(args.out, "metrics.jsonl"), "w", encoding="utf-8") as f:
        for entry in result.metrics:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    print(f"best dev exact match: {result.best_dev_em:.3f}")
    if result.aborted:
        print("training aborted on non-finite loss; last good checkpoint kept",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def load_model(checkpoint: str, overrides: dict | None = None
               ) -> tuple[ParserModel, RunConfig]:
    arrays, manifest = load_checkpoint(checkpoint)
    extra = manifest.get("extra", {})
    if "config" not in extra or "vocab" not in extra:
        raise ParamError(f"checkpoint {checkpoint} lacks config/vocab manifest entries")
    doc = dict(extra["config"])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("word_dim", "node_dim", "enc_hidden", "dec_hidden", "att_dim",
                   "ff_hidden") and value != doc.get(key):
            raise ParamError(
                f"checkpoint {checkpoint} was trained with {key}={doc.get(key)}, "
                f"requested {key}={value}")
        doc[key] = value
    cfg = config_from_dict(doc)
    model = ParserModel(cfg, sql_grammar(), Vocab.from_tokens(extra["vocab"]))
    model.store.load_data(arrays)
    return model, cfg


def cmd_predict(args) -> int:
    overrides = {k: getattr(args, k) for k in ("beam_size", "max_decode_steps", "seed")
                 if getattr(args, k, None) is not None}
    for name in _ABLATION_FLAGS:
        if getattr(args, name, None):
            overrides[name] = True
    model, cfg = load_model(args.checkpoint, overrides)
    schemas = _load_schemas(args.data)
    report = _load_split(args.data, args.split, schemas)
    contexts, skipped = prepare_contexts(model, report.examples, schemas)
    if skipped:
        print(f"warning: {skipped} examples without gold derivations", file=sys.stderr)
    n_out = 0
    with open(args.out, "w", encoding="utf-8") as f:
        for ctx in contexts:
            schema = ctx.schema_ctx.schema
            outcome = model.beam_search(ctx, beam_size=cfg.beam_size)
            cands = outcome.candidates
            if cfg.filter_beam and cands:
                kept = filter_beam(cands, schema)
                cands = kept if kept else cands[:1]
            record = {
                "db_id": ctx.example.db_id,
                "question": ctx.example.question.raw,
                "gold_sql": ctx.example.gold_sql,
                "dropped_candidates": outcome.dropped,
                "candidates": [],
            }
            for c in cands[:args.top_k]:
                verdict = join_badness(c.sql, schema)
                record["candidates"].append({
                    "sql": c.sql, "logprob": c.logprob,
                    "join_badness": {
                        "same_table_condition": verdict.same_table_condition,
                        "unconnected_tables": verdict.unconnected_tables,
                        "ok": verdict.ok,
                    },
                })
            f.write(json.dumps(record, sort_keys=True) + "\n")
            n_out += 1
    print(f"wrote {n_out} prediction records to {args.out}")
    return EXIT_OK


def _read_predictions(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def cmd_evaluate(args) -> int:
    schemas = _load_schemas(args.data)
    report = _load_split(args.data, args.split, schemas)
    records = _read_predictions(args.pred)
    by_key = {(r["db_id"], r["question"]): r for r in records}
    preds = []
    for ex in report.examples:
        rec = by_key.get((ex.db_id, ex.question.raw))
        if rec and rec["candidates"]:
            preds.append(rec["candidates"][0]["sql"])
        else:
            preds.append(None)
    result = evaluate_dataset(preds, report.examples, schemas)
    print(render_report(result, name=args.name))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")
    return EXIT_OK


def cmd_analyze_joins(args) -> int:
    schemas = _load_schemas(args.data)
    records = _read_predictions(args.pred)

    def rates(use_filter: bool):
        n_join = n_a = n_b = n_bad = 0
        for rec in records:
            cands = rec["candidates"]
            if not cands:
                continue
            if use_filter:
                kept = [c for c in cands
                        if not c["join_badness"]["same_table_condition"]]
                top = kept[0] if kept else cands[0]
            else:
                top = cands[0]
            v = join_badness(top["sql"], schemas[rec["db_id"]])
            if v.has_join:
                n_join += 1
                n_a += v.same_table_condition
                n_b += v.unconnected_tables
                n_bad += not v.ok
        div = n_join if n_join else 1
        return {"with_join": n_join, "condition_a": n_a / div,
                "condition_b": n_b / div, "bad": n_bad / div}

    raw = rates(use_filter=False)
    filtered = rates(use_filter=True)
    out = {"unfiltered": raw, "filtered": filtered}
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failures = 0
    for name, report in full_gradient_suite(seed=args.seed):
        worst = report.worst()
        status = "PASS" if report.ok else "FAIL"
        detail = (f"worst {worst.name}: rel {worst.worst_rel:.2e} abs {worst.worst_abs:.2e}"
                  if worst else "no parameters")
        print(f"{status} {name:<12} {detail}")
        if not report.ok:
            failures += 1
            for e in report.entries:
                if not e.ok:
                    print(f"     {e.name}: rel {e.worst_rel:.2e} abs {e.worst_abs:.2e}")
    if failures:
        print(f"{failures} component(s) failed gradient verification", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnnsql",
                                description="schema-aware text-to-SQL toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-schemas", dest="n_schemas", type=int, default=20)
    g.add_argument("--per-schema", dest="per_schema", type=int, default=10)
    g.add_argument("--test-schemas", dest="test_schemas", type=int, default=5)
    g.add_argument("--dev-schemas", dest="dev_schemas", type=int, default=2)
    g.add_argument("--per-eval-schema", dest="per_eval_schema", type=int, default=None)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a parser")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    _add_config_arguments(t)
    t.set_defaults(fn=cmd_train)

    pr = sub.add_parser("predict", help="decode a dataset split")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--split", default="test", choices=["train", "dev", "test"])
    pr.add_argument("--out", required=True)
    pr.add_argument("--top-k", dest="top_k", type=int, default=10)
    pr.add_argument("--beam-size", dest="beam_size", type=int, default=None)
    pr.add_argument("--max-decode-steps", dest="max_decode_steps", type=int, default=None)
    pr.add_argument("--seed", type=int, default=None)
    for name in _ABLATION_FLAGS:
        pr.add_argument(f"--{name.replace('_', '-')}", dest=name, action="store_true",
                        default=None)
    pr.set_defaults(fn=cmd_predict)

    e = sub.add_parser("evaluate", help="score predictions against gold")
    e.add_argument("--pred", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=["train", "dev", "test"])
    e.add_argument("--out", default=None)
    e.add_argument("--name", default="model")
    e.set_defaults(fn=cmd_evaluate)

    a = sub.add_parser("analyze-joins", help="bad-join rates with/without beam filtering")
    a.add_argument("--pred", required=True)
    a.add_argument("--data", required=True)
    a.set_defaults(fn=cmd_analyze_joins)

    gc = sub.add_parser("gradcheck", help="finite-difference verification suite")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, SqlError, FileNotFoundError, ParamError, json.JSONDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
