"""Dataset records, preprocessing, equivalence evaluation and join analysis.

Queries are compared by component sets on their parsed forms, not by string
equality: select lists, join conditions, where/having conjuncts and group-by
columns are order-free, ORDER BY stays ordered. Preprocessing removes table
aliases, qualifies bare columns and normalizes literals by parsing and
reprinting canonically, so it is idempotent by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .linking import Question, RelevanceScores
from .schema import Schema
from .sqlast import (Agg, BoolPair, ColumnRef, Comparison, HavingCmp, Query, SelectCore,
                     SqlError, SubqueryCond, all_cores, parse_sql, print_sql,
                     referenced_columns, referenced_tables)


@dataclass(frozen=True)
class Example:
    question: Question
    gold_sql: str  # canonical form
    db_id: str


def preprocess_query(sql: str, schema: Schema) -> str:
    """Canonicalize a raw query: aliases removed, every column qualified,
    literals replaced by the placeholder."""
    return print_sql(parse_sql(sql, schema))


# ---------------------------------------------------------------------------
# equivalence

def _normal_item(item) -> tuple:
    if isinstance(item, ColumnRef):
        return ("col", item.table, item.column)
    return ("agg", item.op, item.distinct,
            _normal_item(item.arg) if item.arg is not None else ("star",))


def _flatten(cond, op: str) -> list:
    if isinstance(cond, BoolPair) and cond.op == op:
        return [cond.left] + _flatten(cond.right, op)
    return [cond]


def _normal_cond(cond) -> tuple:
    if isinstance(cond, BoolPair):
        parts = [_normal_cond(c) for c in _flatten(cond, cond.op)]
        return (cond.op.lower(), tuple(sorted(parts, key=repr)))
    if isinstance(cond, Comparison):
        return ("cmp", _normal_item(cond.left), cond.op)
    if isinstance(cond, HavingCmp):
        return ("hcmp", _normal_item(cond.agg), cond.op)
    if isinstance(cond, SubqueryCond):
        return ("in", _normal_item(cond.left), cond.negated, _normal_query(cond.query))
    raise AssertionError(type(cond))


def _normal_core(core: SelectCore) -> tuple:
    select = tuple(sorted((_normal_item(i) for i in core.items), key=repr))
    tables = tuple(sorted([core.table] + [j.table for j in core.joins]))
    join_conds = tuple(sorted(
        (tuple(sorted([_normal_item(j.left), _normal_item(j.right)], key=repr))
         for j in core.joins), key=repr))
    where = _normal_cond(core.where) if core.where is not None else None
    group = tuple(sorted((_normal_item(g) for g in core.group_by), key=repr))
    having = _normal_cond(core.having) if core.having is not None else None
    order = None
    if core.order is not None:
        order = (tuple(_normal_item(k) for k in core.order.keys),
                 core.order.direction, core.order.limit)
    return ("core", core.distinct, select, tables, join_conds, where, group, having, order)


def _normal_query(q: Query) -> tuple:
    head = _normal_core(q.core)
    if q.setop is None:
        return ("q", head)
    rest = _normal_query(q.rest)
    if q.setop in ("UNION", "INTERSECT"):
        left, right = sorted([("q", head), rest], key=repr)
        return ("setop", q.setop, left, right)
    return ("setop", q.setop, ("q", head), rest)


def evaluate_pair(pred: str, gold: str, schema: Schema) -> bool:
    """Component-set equivalence of two queries; an unparseable side counts
    as non-equivalent."""
    try:
        pq = parse_sql(pred, schema)
        gq = parse_sql(gold, schema)
    except SqlError:
        return False
    return _normal_query(pq) == _normal_query(gq)


def split_single_multi(gold_sql: str, schema: Schema) -> str:
    """"multi" when the query (subqueries included) draws on two or more
    distinct tables."""
    q = parse_sql(gold_sql, schema)
    return "multi" if len(referenced_tables(q)) >= 2 else "single"


# ---------------------------------------------------------------------------
# join analysis

@dataclass(frozen=True)
class JoinVerdict:
    same_table_condition: bool
    unconnected_tables: bool
    has_join: bool

    @property
    def ok(self) -> bool:
        return not self.has_join or not (self.same_table_condition or self.unconnected_tables)


def join_badness(sql: str, schema: Schema) -> JoinVerdict:
    """Condition (a): an ON clause compares two columns of one table.
    Condition (b): an ON column pair is not a declared foreign key in either
    direction."""
    q = parse_sql(sql, schema)
    fk_pairs = set()
    for cf, cp in schema.foreign_keys:
        a = (schema.columns[cf].table_index, schema.columns[cf].name)
        b = (schema.columns[cp].table_index, schema.columns[cp].name)
        fk_pairs.add((a, b))
        fk_pairs.add((b, a))

    def key(ref: ColumnRef):
        return (schema.table_by_name(ref.table), ref.column)

    same_table = False
    unconnected = False
    has_join = False
    for core in all_cores(q):
        for j in core.joins:
            has_join = True
            if j.left.table == j.right.table:
                same_table = True
            elif (key(j.left), key(j.right)) not in fk_pairs:
                unconnected = True
    return JoinVerdict(same_table_condition=same_table, unconnected_tables=unconnected,
                       has_join=has_join)


def filter_beam(candidates: Sequence, schema: Schema, sql_of=lambda c: c.sql) -> list:
    """Drop exactly the candidates whose join condition reuses one table;
    order is preserved and an empty result is allowed."""
    out = []
    for c in candidates:
        try:
            verdict = join_badness(sql_of(c), schema)
        except SqlError:
            out.append(c)
            continue
        if not verdict.same_table_condition:
            out.append(c)
    return out


def oracle_relevance(gold_sql: str, schema: Schema) -> RelevanceScores:
    """rho = 1 exactly on the schema items the gold query references."""
    q = parse_sql(gold_sql, schema)
    rho = np.zeros(schema.n_nodes)
    for t in referenced_tables(q):
        rho[schema.table_node(schema.table_by_name(t))] = 1.0
    for ref in referenced_columns(q):
        ti = schema.table_by_name(ref.table)
        col = schema.column_by_name(ti, ref.column)
        rho[schema.column_node(col.id)] = 1.0
        rho[schema.table_node(ti)] = 1.0
    return RelevanceScores(rho=ad.constant(rho))


def uniform_relevance(schema: Schema) -> RelevanceScores:
    """The no-relevance ablation: rho = 1 everywhere."""
    return RelevanceScores(rho=ad.constant(np.ones(schema.n_nodes)))


# ---------------------------------------------------------------------------
# dataset files: one JSON record per line

@dataclass
class LoadReport:
    examples: list[Example]
    skipped: list[tuple[str, str, str]]  # (db_id, sql, reason)

    @property
    def coverage(self) -> float:
        total = len(self.examples) + len(self.skipped)
        return len(self.examples) / total if total else 1.0


def load_examples(path: str, schemas: dict[str, Schema]) -> LoadReport:
    """Read (question, gold_sql, db_id) records; gold queries are
    canonicalized on load, out-of-grammar ones are skipped and reported."""
    examples = []
    skipped = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            db_id = doc["db_id"]
            if db_id not in schemas:
                skipped.append((db_id, doc["gold_sql"], "unknown db_id"))
                continue
            try:
                canonical = preprocess_query(doc["gold_sql"], schemas[db_id])
            except SqlError as e:
                skipped.append((db_id, doc["gold_sql"], str(e)))
                continue
            examples.append(Example(question=Question.from_text(doc["question"]),
                                    gold_sql=canonical, db_id=db_id))
    return LoadReport(examples=examples, skipped=skipped)


def save_examples(path: str, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({"db_id": ex.db_id, "question": ex.question.raw,
                                "gold_sql": ex.gold_sql}, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# evaluation report

@dataclass
class EvalReport:
    n_total: int
    n_single: int
    n_multi: int
    accuracy: float
    single_accuracy: float
    multi_accuracy: float
    verdicts: list[bool]
    condition_a_rate: float
    condition_b_rate: float
    bad_join_rate: float
    n_with_join: int
    coverage_failures: int

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total, "n_single": self.n_single, "n_multi": self.n_multi,
            "accuracy": self.accuracy, "single_accuracy": self.single_accuracy,
            "multi_accuracy": self.multi_accuracy,
            "condition_a_rate": self.condition_a_rate,
            "condition_b_rate": self.condition_b_rate,
            "bad_join_rate": self.bad_join_rate, "n_with_join": self.n_with_join,
            "coverage_failures": self.coverage_failures,
            "verdicts": self.verdicts,
        }


def evaluate_dataset(predictions: list[Optional[str]], examples: list[Example],
                     schemas: dict[str, Schema]) -> EvalReport:
    verdicts = []
    single = []
    multi = []
    n_with_join = 0
    n_a = 0
    n_b = 0
    n_bad = 0
    coverage_failures = 0
    for pred, ex in zip(predictions, examples):
        schema = schemas[ex.db_id]
        ok = False
        if pred is not None:
            ok = evaluate_pair(pred, ex.gold_sql, schema)
        else:
            coverage_failures += 1
        verdicts.append(ok)
        (multi if split_single_multi(ex.gold_sql, schema) == "multi" else single).append(ok)
        if pred is not None:
            try:
                v = join_badness(pred, schema)
            except SqlError:
                v = None
            if v is not None and v.has_join:
                n_with_join += 1
                n_a += v.same_table_condition
                n_b += v.unconnected_tables
                n_bad += not v.ok

    def rate(n, d):
        return n / d if d else 0.0

    return EvalReport(
        n_total=len(verdicts), n_single=len(single), n_multi=len(multi),
        accuracy=rate(sum(verdicts), len(verdicts)),
        single_accuracy=rate(sum(single), len(single)),
        multi_accuracy=rate(sum(multi), len(multi)),
        verdicts=verdicts,
        condition_a_rate=rate(n_a, n_with_join),
        condition_b_rate=rate(n_b, n_with_join),
        bad_join_rate=rate(n_bad, n_with_join),
        n_with_join=n_with_join,
        coverage_failures=coverage_failures,
    )


def render_report(report: EvalReport, name: str = "model") -> str:
    lines = [
        f"{'Model':<24}{'Acc.':>8}{'Single':>9}{'Multi':>9}",
        f"{name:<24}{report.accuracy:>7.1%}{report.single_accuracy:>8.1%}"
        f"{report.multi_accuracy:>8.1%}",
        f"examples: {report.n_total} ({report.n_single} single / {report.n_multi} multi), "
        f"coverage failures: {report.coverage_failures}",
        f"bad joins: {report.bad_join_rate:.1%} of {report.n_with_join} joined predictions "
        f"(condition a {report.condition_a_rate:.1%}, condition b {report.condition_b_rate:.1%})",
    ]
    return "\n".join(lines)
