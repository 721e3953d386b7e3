"""Tokenizer, AST, tolerant parser and canonical printer for the covered SQL
subset.

The parser accepts raw queries with table aliases (``team AS T1``), bare
columns, arbitrary keyword case and concrete literals; it resolves aliases
and bare columns against the schema and normalizes every literal to the
placeholder. Printing an AST yields the canonical form: uppercase keywords,
lowercase identifiers, every column table-qualified, tokens single-space
separated, ``'value'`` for all literals, ORDER BY direction always explicit.

Covered constructs: SELECT [DISTINCT] with COUNT/SUM/AVG/MIN/MAX, multi-way
JOIN with two-column ON equality, WHERE and/or chains over comparisons and
(NOT) IN subqueries, GROUP BY with HAVING, ORDER BY with LIMIT, and
UNION/INTERSECT/EXCEPT.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .schema import Schema


class SqlError(Exception):
    pass


class OutOfGrammarError(SqlError):
    """Construct outside the covered subset; carries a construct tag."""

    def __init__(self, construct: str, detail: str = ""):
        self.construct = construct
        super().__init__(f"out of grammar ({construct})" + (f": {detail}" if detail else ""))


class UnknownSchemaItemError(SqlError):
    pass


class AmbiguousColumnError(SqlError):
    pass


KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "JOIN", "ON", "WHERE", "AND", "OR", "NOT", "IN",
    "GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC", "LIMIT",
    "UNION", "INTERSECT", "EXCEPT", "AS",
    "COUNT", "SUM", "AVG", "MIN", "MAX",
}

AGG_OPS = ("COUNT", "SUM", "AVG", "MIN", "MAX")
CMP_OPS = ("=", "!=", "<", ">", "<=", ">=")
SET_OPS = ("UNION", "INTERSECT", "EXCEPT")

LITERAL_TOKEN = "'value'"

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<str>'[^']*'|"[^"]*")
      | (?P<num>\d+(?:\.\d+)?)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op><=|>=|!=|<>|=|<|>)
      | (?P<punct>[(),.*])
    )""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # kw | ident | lit | op | punct
    text: str


def tokenize(sql: str) -> list[Token]:
    sql = sql.strip().rstrip(";")
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            rest = sql[pos:].strip()
            if not rest:
                break
            raise OutOfGrammarError("lexical", f"cannot tokenize at {rest[:20]!r}")
        pos = m.end()
        text = m.group(m.lastgroup)
        if m.lastgroup == "str" or m.lastgroup == "num":
            tokens.append(Token("lit", LITERAL_TOKEN))
        elif m.lastgroup == "word":
            up = text.upper()
            if up in KEYWORDS:
                tokens.append(Token("kw", up))
            elif text.lower() == "value":
                tokens.append(Token("lit", LITERAL_TOKEN))
            else:
                tokens.append(Token("ident", text.lower()))
        elif m.lastgroup == "op":
            tokens.append(Token("op", "!=" if text == "<>" else text))
        else:
            tokens.append(Token("punct", text))
    return tokens


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class ColumnRef:
    table: str
    column: str


@dataclass(frozen=True)
class Agg:
    op: str
    arg: Optional[ColumnRef]  # None means *
    distinct: bool = False


SelectItem = Union[ColumnRef, Agg]


@dataclass(frozen=True)
class Comparison:
    left: ColumnRef
    op: str  # right side is always the literal placeholder


@dataclass(frozen=True)
class SubqueryCond:
    left: ColumnRef
    negated: bool
    query: "Query"


@dataclass(frozen=True)
class HavingCmp:
    agg: Agg
    op: str


@dataclass(frozen=True)
class BoolPair:
    """Right-branching and/or chain node."""
    op: str  # AND | OR
    left: Union[Comparison, SubqueryCond, HavingCmp]
    right: "Cond"


Cond = Union[Comparison, SubqueryCond, HavingCmp, BoolPair]


@dataclass(frozen=True)
class Join:
    table: str
    left: ColumnRef
    right: ColumnRef


@dataclass(frozen=True)
class OrderBy:
    keys: tuple[Union[ColumnRef, Agg], ...]
    direction: str  # ASC | DESC, always explicit
    limit: bool


@dataclass(frozen=True)
class SelectCore:
    distinct: bool
    items: tuple[SelectItem, ...]
    table: str
    joins: tuple[Join, ...]
    where: Optional[Cond]
    group_by: tuple[ColumnRef, ...]
    having: Optional[Cond]
    order: Optional[OrderBy]


@dataclass(frozen=True)
class Query:
    core: SelectCore
    setop: Optional[str] = None
    rest: Optional["Query"] = None


# ---------------------------------------------------------------------------
# parsing

@dataclass
class _RawRef:
    qualifier: Optional[str]
    name: str


@dataclass
class _Scope:
    tables: list[str] = field(default_factory=list)
    aliases: dict[str, str] = field(default_factory=dict)


class _Parser:
    def __init__(self, tokens: list[Token], schema: Schema):
        self.toks = tokens
        self.schema = schema
        self.pos = 0

    # --- token plumbing ---

    def peek(self, ahead: int = 0) -> Optional[Token]:
        i = self.pos + ahead
        return self.toks[i] if i < len(self.toks) else None

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            raise OutOfGrammarError("truncated", "unexpected end of query")
        self.pos += 1
        return t

    def at_kw(self, *kws: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == "kw" and t.text in kws

    def expect_kw(self, kw: str) -> None:
        t = self.next()
        if t.kind != "kw" or t.text != kw:
            raise OutOfGrammarError("syntax", f"expected {kw}, found {t.text!r}")

    def expect_punct(self, p: str) -> None:
        t = self.next()
        if t.kind != "punct" or t.text != p:
            raise OutOfGrammarError("syntax", f"expected {p!r}, found {t.text!r}")

    def expect_ident(self) -> str:
        t = self.next()
        if t.kind != "ident":
            raise OutOfGrammarError("syntax", f"expected identifier, found {t.text!r}")
        return t.text

    def expect_literal(self) -> None:
        t = self.next()
        if t.kind != "lit":
            raise OutOfGrammarError("literal", f"expected a literal, found {t.text!r}")

    # --- grammar ---

    def parse_query(self) -> Query:
        core = self.parse_core()
        if self.at_kw(*SET_OPS):
            op = self.next().text
            if self.at_kw("ALL"):
                raise OutOfGrammarError("set-op-all")
            rest = self.parse_query()
            return Query(core=core, setop=op, rest=rest)
        return Query(core=core)

    def parse_core(self) -> SelectCore:
        self.expect_kw("SELECT")
        distinct = False
        if self.at_kw("DISTINCT"):
            self.next()
            distinct = True
        raw_items = [self.parse_select_item()]
        while self._at_punct(","):
            self.next()
            raw_items.append(self.parse_select_item())

        self.expect_kw("FROM")
        scope = _Scope()
        self._parse_table(scope)
        raw_joins = []
        while self.at_kw("JOIN"):
            self.next()
            jt = self._parse_table(scope)
            self.expect_kw("ON")
            left = self.parse_ref()
            t = self.next()
            if t.kind != "op" or t.text != "=":
                raise OutOfGrammarError("join-on", "ON clause must be a two-column equality")
            right = self.parse_ref()
            if not isinstance(right, _RawRef) or not isinstance(left, _RawRef):
                raise OutOfGrammarError("join-on")
            raw_joins.append((jt, left, right))
        if self._at_punct(","):
            raise OutOfGrammarError("implicit-join", "comma-separated FROM list")

        where = None
        if self.at_kw("WHERE"):
            self.next()
            where = self.parse_cond(having=False)

        group_by: list[_RawRef] = []
        having = None
        if self.at_kw("GROUP"):
            self.next()
            self.expect_kw("BY")
            group_by.append(self._ref_only())
            while self._at_punct(","):
                self.next()
                group_by.append(self._ref_only())
            if self.at_kw("HAVING"):
                self.next()
                having = self.parse_cond(having=True)

        order = None
        if self.at_kw("ORDER"):
            self.next()
            self.expect_kw("BY")
            keys = [self.parse_order_key()]
            while self._at_punct(","):
                self.next()
                keys.append(self.parse_order_key())
            direction = "ASC"
            if self.at_kw("ASC", "DESC"):
                direction = self.next().text
            limit = False
            if self.at_kw("LIMIT"):
                self.next()
                self.expect_literal()
                limit = True
            order = OrderBy(keys=tuple(keys), direction=direction, limit=limit)
        elif self.at_kw("LIMIT"):
            raise OutOfGrammarError("bare-limit", "LIMIT without ORDER BY")

        return self._resolve_core(scope, distinct, raw_items, raw_joins, where,
                                  group_by, having, order)

    def _at_punct(self, p: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == "punct" and t.text == p

    def _parse_table(self, scope: _Scope) -> str:
        name = self.expect_ident()
        if self.schema.table_by_name(name) is None:
            raise UnknownSchemaItemError(
                f"unknown table '{name}' in schema '{self.schema.db_id}'")
        if self.at_kw("AS"):
            self.next()
            alias = self.expect_ident()
            scope.aliases[alias] = name
        elif self.peek() is not None and self.peek().kind == "ident":
            alias = self.expect_ident()
            scope.aliases[alias] = name
        scope.tables.append(name)
        return name

    def parse_select_item(self):
        if self.at_kw(*AGG_OPS):
            return self.parse_agg()
        if self._at_punct("*"):
            raise OutOfGrammarError("select-star")
        return self._ref_only()

    def parse_agg(self) -> tuple:
        op = self.next().text
        self.expect_punct("(")
        distinct = False
        arg = None
        if self._at_punct("*"):
            self.next()
            if op != "COUNT":
                raise OutOfGrammarError("agg-star", f"{op}(*) is not COUNT(*)")
        else:
            if self.at_kw("DISTINCT"):
                if op != "COUNT":
                    raise OutOfGrammarError("agg-distinct", f"DISTINCT inside {op}")
                self.next()
                distinct = True
            arg = self._ref_only()
        self.expect_punct(")")
        return ("agg", op, arg, distinct)

    def parse_order_key(self):
        if self.at_kw(*AGG_OPS):
            return self.parse_agg()
        return self._ref_only()

    def _ref_only(self) -> _RawRef:
        ref = self.parse_ref()
        if not isinstance(ref, _RawRef):
            raise OutOfGrammarError("expression")
        return ref

    def parse_ref(self) -> _RawRef:
        first = self.expect_ident()
        if self._at_punct("."):
            self.next()
            second = self.expect_ident()
            return _RawRef(qualifier=first, name=second)
        return _RawRef(qualifier=None, name=first)

    def parse_cond(self, having: bool) -> tuple:
        left = self.parse_pred(having)
        if self.at_kw("AND", "OR"):
            op = self.next().text
            right = self.parse_cond(having)
            return ("bool", op, left, right)
        return left

    def parse_pred(self, having: bool) -> tuple:
        if having:
            if not self.at_kw(*AGG_OPS):
                raise OutOfGrammarError("having", "HAVING predicates must compare aggregates")
            agg = self.parse_agg()
            t = self.next()
            if t.kind != "op":
                raise OutOfGrammarError("having", f"expected comparison, found {t.text!r}")
            self.expect_literal()
            return ("hcmp", agg, t.text)
        ref = self._ref_only()
        if self.at_kw("NOT"):
            self.next()
            self.expect_kw("IN")
            return ("in", ref, True, self._parse_subquery())
        if self.at_kw("IN"):
            self.next()
            return ("in", ref, False, self._parse_subquery())
        t = self.next()
        if t.kind != "op":
            raise OutOfGrammarError("predicate", f"expected comparison, found {t.text!r}")
        nxt = self.peek()
        if nxt is not None and nxt.kind == "ident":
            raise OutOfGrammarError("column-comparison",
                                    "column-to-column comparison outside ON")
        self.expect_literal()
        return ("cmp", ref, t.text)

    def _parse_subquery(self) -> Query:
        self.expect_punct("(")
        q = self.parse_query()
        self.expect_punct(")")
        return q

    # --- resolution against the schema ---

    def _resolve_core(self, scope, distinct, raw_items, raw_joins, where,
                      group_by, having, order) -> SelectCore:
        def table_of(qualifier: str) -> str:
            if qualifier in scope.aliases:
                return scope.aliases[qualifier]
            if self.schema.table_by_name(qualifier) is not None:
                return qualifier
            raise UnknownSchemaItemError(
                f"'{qualifier}' is not a table or an alias defined in this FROM clause")

        def resolve(ref: _RawRef) -> ColumnRef:
            if ref.qualifier is not None:
                table = table_of(ref.qualifier)
                ti = self.schema.table_by_name(table)
                if self.schema.column_by_name(ti, ref.name) is None:
                    raise UnknownSchemaItemError(f"unknown column '{table}.{ref.name}'")
                return ColumnRef(table=table, column=ref.name)
            owners = []
            for t in dict.fromkeys(scope.tables):
                ti = self.schema.table_by_name(t)
                if self.schema.column_by_name(ti, ref.name) is not None:
                    owners.append(t)
            if not owners:
                raise UnknownSchemaItemError(
                    f"column '{ref.name}' not found in FROM tables {sorted(set(scope.tables))}")
            if len(owners) > 1:
                raise AmbiguousColumnError(
                    f"column '{ref.name}' is ambiguous: candidates "
                    + ", ".join(f"{t}.{ref.name}" for t in owners))
            return ColumnRef(table=owners[0], column=ref.name)

        def resolve_item(item):
            if isinstance(item, _RawRef):
                return resolve(item)
            _, op, arg, d = item
            return Agg(op=op, arg=resolve(arg) if arg is not None else None, distinct=d)

        def resolve_cond(c):
            if c is None:
                return None
            tag = c[0]
            if tag == "bool":
                _, op, left, right = c
                return BoolPair(op=op, left=resolve_cond(left), right=resolve_cond(right))
            if tag == "cmp":
                return Comparison(left=resolve(c[1]), op=c[2])
            if tag == "in":
                return SubqueryCond(left=resolve(c[1]), negated=c[2], query=c[3])
            if tag == "hcmp":
                return HavingCmp(agg=resolve_item(c[1]), op=c[2])
            raise AssertionError(tag)

        joins = tuple(Join(table=jt, left=resolve(l), right=resolve(r))
                      for jt, l, r in raw_joins)
        order_res = None
        if order is not None:
            order_res = OrderBy(keys=tuple(resolve_item(k) for k in order.keys),
                                direction=order.direction, limit=order.limit)
        return SelectCore(
            distinct=distinct,
            items=tuple(resolve_item(i) for i in raw_items),
            table=scope.tables[0],
            joins=joins,
            where=resolve_cond(where),
            group_by=tuple(resolve(g) for g in group_by),
            having=resolve_cond(having),
            order=order_res,
        )


def parse_sql(sql: str, schema: Schema) -> Query:
    """Parse one query (tolerant of aliases, bare columns and literal case)."""
    parser = _Parser(tokenize(sql), schema)
    q = parser.parse_query()
    if parser.peek() is not None:
        raise OutOfGrammarError("trailing", f"unexpected token {parser.peek().text!r}")
    return q


# ---------------------------------------------------------------------------
# canonical printing

def _ref_token(r: ColumnRef) -> str:
    return f"{r.table}.{r.column}"


def _item_tokens(item: SelectItem) -> list[str]:
    if isinstance(item, ColumnRef):
        return [_ref_token(item)]
    out = [item.op, "("]
    if item.arg is None:
        out.append("*")
    else:
        if item.distinct:
            out.append("DISTINCT")
        out.append(_ref_token(item.arg))
    out.append(")")
    return out


def _cond_tokens(c: Cond) -> list[str]:
    if isinstance(c, BoolPair):
        return _cond_tokens(c.left) + [c.op] + _cond_tokens(c.right)
    if isinstance(c, Comparison):
        return [_ref_token(c.left), c.op, LITERAL_TOKEN]
    if isinstance(c, HavingCmp):
        return _item_tokens(c.agg) + [c.op, LITERAL_TOKEN]
    if isinstance(c, SubqueryCond):
        out = [_ref_token(c.left)]
        if c.negated:
            out.append("NOT")
        out += ["IN", "("] + query_tokens(c.query) + [")"]
        return out
    raise AssertionError(type(c))


def _comma_join(parts: list[list[str]]) -> list[str]:
    out: list[str] = []
    for i, p in enumerate(parts):
        if i:
            out.append(",")
        out.extend(p)
    return out


def core_tokens(c: SelectCore) -> list[str]:
    out = ["SELECT"]
    if c.distinct:
        out.append("DISTINCT")
    out += _comma_join([_item_tokens(i) for i in c.items])
    out += ["FROM", c.table]
    for j in c.joins:
        out += ["JOIN", j.table, "ON", _ref_token(j.left), "=", _ref_token(j.right)]
    if c.where is not None:
        out += ["WHERE"] + _cond_tokens(c.where)
    if c.group_by:
        out += ["GROUP", "BY"] + _comma_join([[_ref_token(g)] for g in c.group_by])
        if c.having is not None:
            out += ["HAVING"] + _cond_tokens(c.having)
    if c.order is not None:
        out += ["ORDER", "BY"] + _comma_join([_item_tokens(k) for k in c.order.keys])
        out.append(c.order.direction)
        if c.order.limit:
            out += ["LIMIT", LITERAL_TOKEN]
    return out


def query_tokens(q: Query) -> list[str]:
    out = core_tokens(q.core)
    if q.setop is not None:
        out += [q.setop] + query_tokens(q.rest)
    return out


def print_sql(q: Query) -> str:
    return " ".join(query_tokens(q))


def all_cores(q: Query) -> list[SelectCore]:
    """Every SELECT core in the query, including subqueries, outermost first."""
    cores = []

    def walk_query(query: Query):
        walk_core(query.core)
        if query.rest is not None:
            walk_query(query.rest)

    def walk_cond(c):
        if isinstance(c, BoolPair):
            walk_cond(c.left)
            walk_cond(c.right)
        elif isinstance(c, SubqueryCond):
            walk_query(c.query)

    def walk_core(core: SelectCore):
        cores.append(core)
        if core.where is not None:
            walk_cond(core.where)
        if core.having is not None:
            walk_cond(core.having)

    walk_query(q)
    return cores


def referenced_columns(q: Query) -> set[ColumnRef]:
    """Every column mentioned anywhere in the query, subqueries included."""
    refs: set[ColumnRef] = set()

    def add_item(item):
        if isinstance(item, ColumnRef):
            refs.add(item)
        elif isinstance(item, Agg) and item.arg is not None:
            refs.add(item.arg)

    def walk_cond(c):
        if isinstance(c, BoolPair):
            walk_cond(c.left)
            walk_cond(c.right)
        elif isinstance(c, Comparison):
            refs.add(c.left)
        elif isinstance(c, HavingCmp):
            add_item(c.agg)
        elif isinstance(c, SubqueryCond):
            refs.add(c.left)

    for core in all_cores(q):
        for item in core.items:
            add_item(item)
        for j in core.joins:
            refs.add(j.left)
            refs.add(j.right)
        if core.where is not None:
            walk_cond(core.where)
        for g in core.group_by:
            refs.add(g)
        if core.having is not None:
            walk_cond(core.having)
        if core.order is not None:
            for k in core.order.keys:
                add_item(k)
    return refs


def referenced_tables(q: Query) -> set[str]:
    """Tables named in any FROM/JOIN clause, subqueries included."""
    tables: set[str] = set()
    for core in all_cores(q):
        tables.add(core.table)
        for j in core.joins:
            tables.add(j.table)
    return tables
