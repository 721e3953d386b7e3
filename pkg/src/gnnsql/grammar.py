"""Typed SQL grammar, derivation states and SQL <-> derivation conversion.

Rules are schema-independent productions over nonterminals and canonical
terminal tokens. Three frontier symbols are schema-typed and are expanded by
schema items instead of rules: ``table_ref`` (any table), ``col_any`` (any
column) and ``col_num`` (number columns only). Schema-specific expansions are
therefore generated per schema on demand and never stored in the grammar.

A derivation records its action sequence (leftmost-first) plus the frontier
of unexpanded nonterminals; complete derivations linearize to canonical SQL.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import sqlast
from .schema import ItemType, Schema
from .sqlast import (Agg, BoolPair, ColumnRef, Comparison, HavingCmp, OutOfGrammarError,
                     Query, SelectCore, SubqueryCond, UnknownSchemaItemError)


class GrammarError(Exception):
    pass


TABLE_HEAD = "table_ref"
COL_ANY_HEAD = "col_any"
COL_NUM_HEAD = "col_num"
SCHEMA_HEADS = (TABLE_HEAD, COL_ANY_HEAD, COL_NUM_HEAD)

_NT_SHAPE = re.compile(r"[a-z_]+$")

# Actions are ("rule", rule_id) for global productions and
# ("item", node_index) for schema-typed heads.
Action = tuple[str, int]


@dataclass(frozen=True)
class GrammarRule:
    id: int
    lhs: str
    rhs: tuple[str, ...]
    kind: str = "global"

    def __str__(self) -> str:
        return f"{self.lhs} -> {' '.join(self.rhs) if self.rhs else 'ε'}"


class Grammar:
    def __init__(self, productions: list[tuple[str, tuple[str, ...]]], start: str = "query"):
        self.start = start
        self.rules: tuple[GrammarRule, ...] = tuple(
            GrammarRule(id=i, lhs=lhs, rhs=rhs) for i, (lhs, rhs) in enumerate(productions))
        self.by_lhs: dict[str, list[GrammarRule]] = {}
        for r in self.rules:
            self.by_lhs.setdefault(r.lhs, []).append(r)
        self.rule_index = {(r.lhs, r.rhs): r.id for r in self.rules}
        self.nonterminals = set(self.by_lhs) | set(SCHEMA_HEADS)
        if start not in self.by_lhs:
            raise GrammarError(f"start symbol '{start}' has no productions")
        # Lowercase word symbols are nonterminals by convention; every one
        # used on a right-hand side must have productions (or be schema-typed).
        for r in self.rules:
            for s in r.rhs:
                if _NT_SHAPE.match(s) and s not in self.nonterminals:
                    raise GrammarError(f"nonterminal '{s}' has no productions")
        self.min_steps = self._min_completion_steps()

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    def is_nonterminal(self, symbol: str) -> bool:
        return symbol in self.nonterminals

    def _min_completion_steps(self) -> dict[str, int]:
        """Fewest actions needed to fully expand each nonterminal."""
        inf = 10 ** 9
        cost = {nt: 1 for nt in SCHEMA_HEADS}
        cost.update({nt: inf for nt in self.by_lhs})
        changed = True
        while changed:
            changed = False
            for r in self.rules:
                c = 1
                for s in r.rhs:
                    if s in self.nonterminals:
                        c += cost.get(s, inf)
                if c < cost[r.lhs]:
                    cost[r.lhs] = c
                    changed = True
        dead = [nt for nt, c in cost.items() if c >= inf]
        if dead:
            raise GrammarError(f"nonterminals cannot complete: {sorted(dead)}")
        return cost

    def rule_completion_cost(self, rule_id: int) -> int:
        """Fewest further actions implied by applying one rule (its own
        nonterminals only)."""
        return sum(self.min_steps[s] for s in self.rules[rule_id].rhs
                   if self.is_nonterminal(s))

    def frontier_completion_cost(self, frontier: tuple[str, ...]) -> int:
        return sum(self.min_steps[s] for s in frontier)

    def realizable_nonterminals(self, schema: Schema) -> frozenset[str]:
        return _realizable(self, bool(schema.nodes_of_type(ItemType.NUMBER_COLUMN)))


@lru_cache(maxsize=64)
def _realizable(grammar: Grammar, has_number_columns: bool) -> frozenset[str]:
    """Nonterminals expandable to completion on a schema (fixpoint).

    Only ``col_num`` depends on the schema: every valid schema has at least
    one table and one column.
    """
    good = {TABLE_HEAD, COL_ANY_HEAD}
    if has_number_columns:
        good.add(COL_NUM_HEAD)
    changed = True
    while changed:
        changed = False
        for r in grammar.rules:
            if r.lhs in good:
                continue
            if all(s in good for s in r.rhs if grammar.is_nonterminal(s)):
                good.add(r.lhs)
                changed = True
    return frozenset(good)


@dataclass(frozen=True)
class LegalActions:
    global_rules: tuple[int, ...]
    schema_items: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.global_rules) + len(self.schema_items)

    def as_actions(self) -> list[Action]:
        return [("rule", r) for r in self.global_rules] + \
            [("item", v) for v in self.schema_items]

    def index_of(self, action: Action) -> int:
        return self.as_actions().index(action)


@dataclass(frozen=True)
class Derivation:
    grammar: Grammar = field(compare=False)
    actions: tuple[Action, ...]
    frontier: tuple[str, ...]

    @classmethod
    def start(cls, grammar: Grammar) -> "Derivation":
        return cls(grammar=grammar, actions=(), frontier=(grammar.start,))

    @property
    def complete(self) -> bool:
        return not self.frontier


def legal_actions(derivation: Derivation, schema: Schema) -> LegalActions:
    """Actions allowed at the leftmost frontier nonterminal.

    Schema-typed heads admit schema items of the right kind; other heads
    admit their productions, filtered to those realizable on this schema.
    """
    if derivation.complete:
        raise GrammarError("legal_actions: derivation is complete")
    head = derivation.frontier[0]
    if head == TABLE_HEAD:
        return LegalActions((), tuple(range(schema.n_tables)))
    if head == COL_ANY_HEAD:
        return LegalActions((), tuple(range(schema.n_tables, schema.n_nodes)))
    if head == COL_NUM_HEAD:
        return LegalActions((), tuple(schema.nodes_of_type(ItemType.NUMBER_COLUMN)))
    grammar = derivation.grammar
    good = grammar.realizable_nonterminals(schema)
    rules = tuple(r.id for r in grammar.by_lhs[head]
                  if all(s in good for s in r.rhs if grammar.is_nonterminal(s)))
    if not rules:
        raise GrammarError(f"no realizable production for '{head}' on schema '{schema.db_id}'")
    return LegalActions(rules, ())


def apply_rule(derivation: Derivation, action: Action, schema: Schema) -> Derivation:
    """Expand the leftmost frontier nonterminal; returns a new derivation."""
    legal = legal_actions(derivation, schema)
    head = derivation.frontier[0]
    kind, idx = action
    if kind == "rule":
        if idx not in legal.global_rules:
            rule = derivation.grammar.rules[idx] if idx < derivation.grammar.n_rules else None
            raise GrammarError(
                f"rule {rule or idx} is not legal here (expanding '{head}')")
        rhs = derivation.grammar.rules[idx].rhs
        new_frontier = tuple(s for s in rhs if derivation.grammar.is_nonterminal(s)) \
            + derivation.frontier[1:]
    elif kind == "item":
        if idx not in legal.schema_items:
            raise GrammarError(
                f"schema item {idx} is not legal here (expanding '{head}')")
        new_frontier = derivation.frontier[1:]
    else:
        raise GrammarError(f"unknown action kind '{kind}'")
    return Derivation(grammar=derivation.grammar,
                      actions=derivation.actions + (action,),
                      frontier=new_frontier)


def derivation_to_sql(derivation: Derivation, schema: Schema) -> str:
    """Linearize a complete derivation to its canonical SQL string."""
    if not derivation.complete:
        raise GrammarError("derivation_to_sql: derivation is incomplete")
    grammar = derivation.grammar
    it = iter(derivation.actions)

    def expand(symbol: str) -> list[str]:
        if symbol in SCHEMA_HEADS:
            kind, node = next(it)
            assert kind == "item"
            return [schema.qualified_name(node)]
        if not grammar.is_nonterminal(symbol):
            return [symbol]
        kind, rid = next(it)
        assert kind == "rule"
        rule = grammar.rules[rid]
        assert rule.lhs == symbol, f"action {rule} does not expand '{symbol}'"
        out: list[str] = []
        for s in rule.rhs:
            out.extend(expand(s))
        return out

    tokens = expand(grammar.start)
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# the covered-SQL grammar

def sql_grammar() -> Grammar:
    prods: list[tuple[str, tuple[str, ...]]] = []

    def p(lhs: str, *rhs: str) -> None:
        prods.append((lhs, tuple(rhs)))

    p("query", "select_core")
    p("query", "select_core", "UNION", "query")
    p("query", "select_core", "INTERSECT", "query")
    p("query", "select_core", "EXCEPT", "query")
    p("select_core", "SELECT", "select_list", "from_clause", "where_clause",
      "group_clause", "order_clause")
    p("select_list", "sel_items")
    p("select_list", "DISTINCT", "sel_items")
    p("sel_items", "sel_item")
    p("sel_items", "sel_item", ",", "sel_items")
    p("sel_item", COL_ANY_HEAD)
    p("sel_item", "agg")
    p("agg", "COUNT", "(", "count_arg", ")")
    p("agg", "SUM", "(", COL_NUM_HEAD, ")")
    p("agg", "AVG", "(", COL_NUM_HEAD, ")")
    p("agg", "MIN", "(", COL_ANY_HEAD, ")")
    p("agg", "MAX", "(", COL_ANY_HEAD, ")")
    p("count_arg", "*")
    p("count_arg", COL_ANY_HEAD)
    p("count_arg", "DISTINCT", COL_ANY_HEAD)
    p("from_clause", "FROM", TABLE_HEAD, "joins")
    p("joins")
    p("joins", "JOIN", TABLE_HEAD, "ON", COL_ANY_HEAD, "=", COL_ANY_HEAD, "joins")
    p("where_clause")
    p("where_clause", "WHERE", "cond")
    p("cond", "pred")
    p("cond", "pred", "AND", "cond")
    p("cond", "pred", "OR", "cond")
    p("pred", COL_ANY_HEAD, "cmp", "value")
    p("pred", COL_ANY_HEAD, "IN", "(", "query", ")")
    p("pred", COL_ANY_HEAD, "NOT", "IN", "(", "query", ")")
    for op in sqlast.CMP_OPS:
        p("cmp", op)
    p("value", sqlast.LITERAL_TOKEN)
    p("group_clause")
    p("group_clause", "GROUP", "BY", "group_cols", "having_clause")
    p("group_cols", COL_ANY_HEAD)
    p("group_cols", COL_ANY_HEAD, ",", "group_cols")
    p("having_clause")
    p("having_clause", "HAVING", "hcond")
    p("hcond", "hpred")
    p("hcond", "hpred", "AND", "hcond")
    p("hcond", "hpred", "OR", "hcond")
    p("hpred", "agg", "cmp", "value")
    p("order_clause")
    p("order_clause", "ORDER", "BY", "order_keys", "direction", "limit_clause")
    p("order_keys", "order_key")
    p("order_keys", "order_key", ",", "order_keys")
    p("order_key", COL_ANY_HEAD)
    p("order_key", "agg")
    p("direction", "ASC")
    p("direction", "DESC")
    p("limit_clause")
    p("limit_clause", "LIMIT", "value")
    return Grammar(prods)


# ---------------------------------------------------------------------------
# AST -> derivation (the parsing side of sql_to_derivation)

class _Emitter:
    def __init__(self, grammar: Grammar, schema: Schema):
        self.grammar = grammar
        self.schema = schema
        self.actions: list[Action] = []

    def rule(self, lhs: str, *rhs: str) -> None:
        rid = self.grammar.rule_index.get((lhs, tuple(rhs)))
        if rid is None:
            raise OutOfGrammarError("missing-rule", f"{lhs} -> {' '.join(rhs)}")
        self.actions.append(("rule", rid))

    def table(self, name: str) -> None:
        ti = self.schema.table_by_name(name)
        if ti is None:
            raise UnknownSchemaItemError(f"unknown table '{name}'")
        self.actions.append(("item", self.schema.table_node(ti)))

    def column(self, ref: ColumnRef, number_only: bool = False) -> None:
        ti = self.schema.table_by_name(ref.table)
        if ti is None:
            raise UnknownSchemaItemError(f"unknown table '{ref.table}'")
        col = self.schema.column_by_name(ti, ref.column)
        if col is None:
            raise UnknownSchemaItemError(f"unknown column '{ref.table}.{ref.column}'")
        if number_only and col.item_type != ItemType.NUMBER_COLUMN:
            raise OutOfGrammarError(
                "aggregate-type", f"SUM/AVG over non-number column '{ref.table}.{ref.column}'")
        self.actions.append(("item", self.schema.column_node(col.id)))

    # --- recursive emitters mirror the production structure ---

    def query(self, q: Query) -> None:
        if q.setop is None:
            self.rule("query", "select_core")
            self.core(q.core)
        else:
            self.rule("query", "select_core", q.setop, "query")
            self.core(q.core)
            self.query(q.rest)

    def core(self, c: SelectCore) -> None:
        self.rule("select_core", "SELECT", "select_list", "from_clause",
                  "where_clause", "group_clause", "order_clause")
        if c.distinct:
            self.rule("select_list", "DISTINCT", "sel_items")
        else:
            self.rule("select_list", "sel_items")
        self.sel_items(list(c.items))
        self.rule("from_clause", "FROM", TABLE_HEAD, "joins")
        self.table(c.table)
        for j in c.joins:
            self.rule("joins", "JOIN", TABLE_HEAD, "ON", COL_ANY_HEAD, "=",
                      COL_ANY_HEAD, "joins")
            self.table(j.table)
            self.column(j.left)
            self.column(j.right)
        self.rule("joins")
        if c.where is None:
            self.rule("where_clause")
        else:
            self.rule("where_clause", "WHERE", "cond")
            self.cond(c.where, "cond", "pred")
        if not c.group_by:
            self.rule("group_clause")
        else:
            self.rule("group_clause", "GROUP", "BY", "group_cols", "having_clause")
            for i, g in enumerate(c.group_by):
                if i < len(c.group_by) - 1:
                    self.rule("group_cols", COL_ANY_HEAD, ",", "group_cols")
                else:
                    self.rule("group_cols", COL_ANY_HEAD)
                self.column(g)
            if c.having is None:
                self.rule("having_clause")
            else:
                self.rule("having_clause", "HAVING", "hcond")
                self.cond(c.having, "hcond", "hpred")
        if c.order is None:
            self.rule("order_clause")
        else:
            self.rule("order_clause", "ORDER", "BY", "order_keys", "direction",
                      "limit_clause")
            for i, k in enumerate(c.order.keys):
                if i < len(c.order.keys) - 1:
                    self.rule("order_keys", "order_key", ",", "order_keys")
                else:
                    self.rule("order_keys", "order_key")
                if isinstance(k, Agg):
                    self.rule("order_key", "agg")
                    self.agg(k)
                else:
                    self.rule("order_key", COL_ANY_HEAD)
                    self.column(k)
            self.rule("direction", c.order.direction)
            if c.order.limit:
                self.rule("limit_clause", "LIMIT", "value")
                self.rule("value", sqlast.LITERAL_TOKEN)
            else:
                self.rule("limit_clause")

    def sel_items(self, items: list) -> None:
        for i, item in enumerate(items):
            if i < len(items) - 1:
                self.rule("sel_items", "sel_item", ",", "sel_items")
            else:
                self.rule("sel_items", "sel_item")
            if isinstance(item, Agg):
                self.rule("sel_item", "agg")
                self.agg(item)
            else:
                self.rule("sel_item", COL_ANY_HEAD)
                self.column(item)

    def agg(self, a: Agg) -> None:
        if a.op == "COUNT":
            self.rule("agg", "COUNT", "(", "count_arg", ")")
            if a.arg is None:
                self.rule("count_arg", "*")
            elif a.distinct:
                self.rule("count_arg", "DISTINCT", COL_ANY_HEAD)
                self.column(a.arg)
            else:
                self.rule("count_arg", COL_ANY_HEAD)
                self.column(a.arg)
        elif a.op in ("SUM", "AVG"):
            self.rule("agg", a.op, "(", COL_NUM_HEAD, ")")
            self.column(a.arg, number_only=True)
        else:
            self.rule("agg", a.op, "(", COL_ANY_HEAD, ")")
            self.column(a.arg)

    def cond(self, c, chain_nt: str, pred_nt: str) -> None:
        if isinstance(c, BoolPair):
            self.rule(chain_nt, pred_nt, c.op, chain_nt)
            self.pred(c.left, pred_nt)
            self.cond(c.right, chain_nt, pred_nt)
        else:
            self.rule(chain_nt, pred_nt)
            self.pred(c, pred_nt)

    def pred(self, c, pred_nt: str) -> None:
        if isinstance(c, Comparison):
            self.rule(pred_nt, COL_ANY_HEAD, "cmp", "value")
            self.column(c.left)
            self.rule("cmp", c.op)
            self.rule("value", sqlast.LITERAL_TOKEN)
        elif isinstance(c, SubqueryCond):
            if c.negated:
                self.rule(pred_nt, COL_ANY_HEAD, "NOT", "IN", "(", "query", ")")
            else:
                self.rule(pred_nt, COL_ANY_HEAD, "IN", "(", "query", ")")
            self.column(c.left)
            self.query(c.query)
        elif isinstance(c, HavingCmp):
            self.rule(pred_nt, "agg", "cmp", "value")
            self.agg(c.agg)
            self.rule("cmp", c.op)
            self.rule("value", sqlast.LITERAL_TOKEN)
        else:
            raise OutOfGrammarError("predicate", str(type(c)))


def ast_to_derivation(q: Query, schema: Schema, grammar: Grammar) -> Derivation:
    em = _Emitter(grammar, schema)
    em.query(q)
    d = Derivation.start(grammar)
    for action in em.actions:
        d = apply_rule(d, action, schema)
    if not d.complete:
        raise GrammarError("emitted action sequence left an incomplete derivation")
    return d


def sql_to_derivation(sql: str, schema: Schema, grammar: Grammar) -> Derivation:
    """Parse canonical-or-raw SQL into its unique derivation."""
    ast = sqlast.parse_sql(sql, schema)
    return ast_to_derivation(ast, schema, grammar)


def random_derivation(grammar: Grammar, schema: Schema, rng: np.random.Generator,
                      soft_cap: int = 60) -> Derivation:
    """Legality-constrained random rollout.

    Uniform over legal actions until ``soft_cap`` actions, then always the
    cheapest-completion action so recursion terminates.
    """
    d = Derivation.start(grammar)
    while not d.complete:
        legal = legal_actions(d, schema)
        options = legal.as_actions()
        if len(d.actions) < soft_cap:
            action = options[int(rng.integers(len(options)))]
        else:
            def cost(a: Action) -> int:
                if a[0] == "item":
                    return 1
                return 1 + sum(grammar.min_steps[s] for s in grammar.rules[a[1]].rhs
                               if grammar.is_nonterminal(s))
            action = min(options, key=cost)
        d = apply_rule(d, action, schema)
    return d
