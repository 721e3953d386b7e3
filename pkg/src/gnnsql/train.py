"""Per-example training with gradient accumulation, dev-based checkpoint
selection and deterministic metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .config import RunConfig
from .data import Example, evaluate_pair, filter_beam
from .model import ExampleContext, ParserModel
from .nn import Adam
from .schema import Schema
from .sqlast import SqlError


@dataclass
class TrainResult:
    metrics: list[dict]
    best_params: dict[str, np.ndarray]
    final_params: dict[str, np.ndarray]
    best_dev_em: float
    aborted: bool = False
    skipped_examples: int = 0


def prepare_contexts(model: ParserModel, examples: list[Example],
                     schemas: dict[str, Schema]) -> tuple[list[ExampleContext], int]:
    """Build per-example contexts; out-of-grammar golds are dropped and counted."""
    contexts = []
    skipped = 0
    for ex in examples:
        try:
            contexts.append(model.example_context(ex, schemas[ex.db_id]))
        except SqlError:
            skipped += 1
    return contexts, skipped


def predictions(model: ParserModel, contexts: list[ExampleContext],
                beam_size: int = 1, use_filter: bool = False) -> list[Optional[str]]:
    out = []
    for ctx in contexts:
        outcome = model.beam_search(ctx, beam_size=beam_size)
        cands = outcome.candidates
        if use_filter and cands:
            kept = filter_beam(cands, ctx.schema_ctx.schema)
            cands = kept if kept else cands[:1]  # fall back to unfiltered top-1
        out.append(cands[0].sql if cands else None)
    return out


def exact_match(model: ParserModel, contexts: list[ExampleContext],
                beam_size: int = 1, use_filter: bool = False) -> float:
    if not contexts:
        return 0.0
    preds = predictions(model, contexts, beam_size=beam_size, use_filter=use_filter)
    hits = 0
    for pred, ctx in zip(preds, contexts):
        if pred is not None and evaluate_pair(pred, ctx.example.gold_sql,
                                              ctx.schema_ctx.schema):
            hits += 1
    return hits / len(contexts)


def train(model: ParserModel, train_examples: list[Example], dev_examples: list[Example],
          schemas: dict[str, Schema], cfg: RunConfig,
          log: Optional[Callable[[str], None]] = None) -> TrainResult:
    contexts, skipped = prepare_contexts(model, train_examples, schemas)
    dev_contexts, dev_skipped = prepare_contexts(model, dev_examples, schemas)
    skipped += dev_skipped
    opt = Adam(model.store, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)

    def say(msg: str) -> None:
        if log:
            log(msg)

    metrics: list[dict] = []
    best_dev = exact_match(model, dev_contexts) if dev_contexts else 0.0
    best_params = model.store.clone_data()
    last_good = model.store.clone_data()
    aborted = False

    metrics.append({"epoch": 0, "train_loss": None, "dev_em": best_dev, "train_em": None})
    say(f"epoch 0 (init): dev_em={best_dev:.3f}")

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(contexts))
        total = 0.0
        pending = 0
        try:
            model.store.zero_grad()
            for step, idx in enumerate(order):
                ad.reset_tape()
                loss = model.loss(contexts[int(idx)])
                total += float(loss.data)
                ad.backward(loss)
                pending += 1
                if pending == cfg.grad_accum:
                    opt.step()
                    pending = 0
            if pending:
                opt.step()
        except NonFiniteError as e:
            say(f"epoch {epoch}: non-finite value ({e}); restoring last good parameters")
            model.store.load_data(last_good)
            aborted = True
            metrics.append({"epoch": epoch, "train_loss": None, "dev_em": None,
                            "train_em": None, "aborted": True})
            break
        ad.reset_tape()
        last_good = model.store.clone_data()
        mean_loss = total / max(1, len(contexts))

        dev_em = exact_match(model, dev_contexts) if dev_contexts else 0.0
        if dev_em >= best_dev:
            best_dev = dev_em
            best_params = model.store.clone_data()

        train_em = None
        if cfg.eval_every and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            train_em = exact_match(model, contexts)
        metrics.append({"epoch": epoch, "train_loss": mean_loss, "dev_em": dev_em,
                        "train_em": train_em})
        say(f"epoch {epoch}: loss={mean_loss:.4f} dev_em={dev_em:.3f}" +
            (f" train_em={train_em:.3f}" if train_em is not None else ""))
        if train_em is not None and cfg.train_em_stop and train_em >= cfg.train_em_stop:
            say(f"epoch {epoch}: train exact match reached "
                f"{train_em:.3f} >= {cfg.train_em_stop}; stopping")
            break

    return TrainResult(metrics=metrics, best_params=best_params,
                       final_params=model.store.clone_data(), best_dev_em=best_dev,
                       aborted=aborted, skipped_examples=skipped)
