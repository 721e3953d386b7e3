"""Seeded synthetic schema and question/SQL generator.

Schemas mix 2-4 entity tables with optional direct foreign keys and an
optional many-to-many bridge table. Attribute columns are drawn without
replacement inside a schema, so question words identify them; primary/foreign
key ids repeat across tables (``x_id`` in both endpoints), so join columns
cannot be resolved by name alone. Questions are templated with synonym
variation but always mention the relevant table/column name parts.

Gold queries only join along declared foreign keys and always parse in the
covered grammar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Example, preprocess_query
from .linking import Question
from .schema import Schema, load_schema

ENTITIES = [
    "student", "teacher", "team", "player", "coach", "city", "product", "customer",
    "airline", "airport", "singer", "concert", "dog", "owner", "pet", "car", "driver",
    "employee", "department", "project", "book", "author", "store", "member", "club",
    "course", "event", "hotel", "guest", "movie",
]

NUMBER_ATTRS = ["age", "price", "salary", "budget", "capacity", "weight", "rank",
                "score", "level", "height", "rating", "mileage", "duration"]
TEXT_ATTRS = ["name", "country", "kind", "color", "title", "address", "status",
              "category", "label", "region"]

SHOW = ["show", "list", "give me", "find", "display", "what is", "return"]
EACH = ["all", "each", "every", "the"]
MOST = ["most", "largest number of", "highest count of"]


@dataclass(frozen=True)
class FkLink:
    child: str       # table holding the foreign key
    fk_col: str
    parent: str
    pk_col: str


def _words(name: str) -> str:
    return name.replace("_", " ")


def _plural(word: str) -> str:
    return word if word.endswith("s") else word + "s"


class SchemaSketch:
    """Mutable builder resolved into a schema document."""

    def __init__(self, db_id: str):
        self.db_id = db_id
        self.tables: list[tuple[str, list[tuple[str, str, bool]]]] = []
        self.fks: list[tuple[str, str]] = []  # ("t.c", "t.c")

    def add_table(self, name: str, cols: list[tuple[str, str, bool]]) -> None:
        self.tables.append((name, cols))

    def add_fk(self, child: str, parent: str) -> None:
        self.fks.append((child, parent))

    def to_schema(self) -> Schema:
        ids = {}
        n = 0
        tdocs = []
        for tname, cols in self.tables:
            cdocs = []
            for cname, vt, pk in cols:
                ids[f"{tname}.{cname}"] = n
                n += 1
                cdocs.append({"name": cname, "value_type": vt, "is_primary": pk})
            tdocs.append({"name": tname, "columns": cdocs})
        return load_schema({
            "db_id": self.db_id,
            "tables": tdocs,
            "foreign_keys": [[ids[a], ids[b]] for a, b in self.fks],
        })


def generate_schema(db_id: str, rng: np.random.Generator) -> tuple[Schema, list[FkLink]]:
    sketch = SchemaSketch(db_id)
    n_base = int(rng.integers(2, 5))
    entities = [ENTITIES[i] for i in rng.choice(len(ENTITIES), size=n_base, replace=False)]
    num_pool = list(rng.permutation(NUMBER_ATTRS))
    text_pool = list(rng.permutation(TEXT_ATTRS))
    links: list[FkLink] = []

    for ent in entities:
        cols = [(f"{ent}_id", "number", True)]
        n_attrs = int(rng.integers(2, 5))
        for _ in range(n_attrs):
            if rng.random() < 0.5 and num_pool:
                cols.append((num_pool.pop(), "number", False))
            elif text_pool:
                cols.append((text_pool.pop(), "text", False))
            elif num_pool:
                cols.append((num_pool.pop(), "number", False))
        sketch.add_table(ent, cols)

    # Direct foreign keys: child table points at a parent's primary key.
    n_direct = int(rng.integers(0, 3)) if n_base >= 2 else 0
    pairs = [(c, p) for c in entities for p in entities if c != p]
    for idx in rng.permutation(len(pairs))[:n_direct]:
        child, parent = pairs[idx]
        fk_col = f"{parent}_id"
        tcols = dict(sketch.tables)[child]
        if any(c[0] == fk_col for c in tcols):
            continue
        tcols.append((fk_col, "number", False))
        sketch.add_fk(f"{child}.{fk_col}", f"{parent}.{parent}_id")
        links.append(FkLink(child=child, fk_col=fk_col, parent=parent,
                            pk_col=f"{parent}_id"))

    # One bridge table describing a many-to-many relation.
    if n_base >= 2 and rng.random() < 0.8:
        a, b = [entities[i] for i in rng.choice(len(entities), size=2, replace=False)]
        bridge = f"{a}_{b}"
        sketch.add_table(bridge, [(f"{a}_id", "number", False),
                                  (f"{b}_id", "number", False)])
        sketch.add_fk(f"{bridge}.{a}_id", f"{a}.{a}_id")
        sketch.add_fk(f"{bridge}.{b}_id", f"{b}.{b}_id")
        links.append(FkLink(child=bridge, fk_col=f"{a}_id", parent=a, pk_col=f"{a}_id"))
        links.append(FkLink(child=bridge, fk_col=f"{b}_id", parent=b, pk_col=f"{b}_id"))

    if not links:  # join templates need at least one relation
        child, parent = entities[0], entities[1]
        fk_col = f"{parent}_id"
        dict(sketch.tables)[child].append((fk_col, "number", False))
        sketch.add_fk(f"{child}.{fk_col}", f"{parent}.{parent}_id")
        links.append(FkLink(child=child, fk_col=fk_col, parent=parent,
                            pk_col=f"{parent}_id"))

    return sketch.to_schema(), links


# ---------------------------------------------------------------------------
# question/SQL templates

def _attrs(schema: Schema, table: str, value_type=None) -> list[str]:
    ti = schema.table_by_name(table)
    out = []
    for c in schema.tables[ti].columns:
        if c.is_primary or c.name.endswith("_id"):
            continue
        if value_type is None or c.value_type == value_type:
            out.append(c.name)
    return out


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _bridges(schema: Schema, links: list[FkLink]) -> list[tuple[FkLink, FkLink]]:
    by_child: dict[str, list[FkLink]] = {}
    for l in links:
        by_child.setdefault(l.child, []).append(l)
    out = []
    for child, ls in by_child.items():
        for i in range(len(ls)):
            for j in range(len(ls)):
                if i != j and ls[i].parent != ls[j].parent:
                    out.append((ls[i], ls[j]))
    return out


def _template_projection(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    attrs = _attrs(schema, t)
    if not attrs:
        return None
    c = _pick(rng, attrs)
    q = f"{_pick(rng, SHOW)} the {_words(c)} of {_pick(rng, EACH)} {_plural(_words(t))}"
    return q, f"SELECT {t}.{c} FROM {t}"


def _template_filtered(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    attrs = _attrs(schema, t)
    nums = _attrs(schema, t, "number")
    if not attrs or not nums:
        return None
    c = _pick(rng, attrs)
    f = _pick(rng, nums)
    op, phrase = _pick(rng, [(">", "more than"), (">", "above"), ("<", "less than"),
                             ("<", "below"), ("=", "equal to")])
    q = (f"{_pick(rng, SHOW)} the {_words(c)} of {_plural(_words(t))} "
         f"with {_words(f)} {phrase} some value")
    return q, f"SELECT {t}.{c} FROM {t} WHERE {t}.{f} {op} 'value'"


def _template_count(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    q = _pick(rng, [f"how many {_plural(_words(t))} are there",
                    f"count the {_plural(_words(t))}",
                    f"what is the number of {_plural(_words(t))}"])
    return q, f"SELECT COUNT ( * ) FROM {t}"


def _template_aggregate(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    nums = _attrs(schema, t, "number")
    if not nums:
        return None
    c = _pick(rng, nums)
    op, word = _pick(rng, [("AVG", "average"), ("MAX", "maximum"), ("MAX", "highest"),
                           ("MIN", "minimum"), ("MIN", "lowest"), ("SUM", "total")])
    q = f"what is the {word} {_words(c)} of {_pick(rng, EACH)} {_plural(_words(t))}"
    return q, f"SELECT {op} ( {t}.{c} ) FROM {t}"


def _template_order_limit(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    attrs = _attrs(schema, t)
    nums = _attrs(schema, t, "number")
    if not attrs or not nums:
        return None
    c = _pick(rng, attrs)
    o = _pick(rng, nums)
    if c == o and len(attrs) == 1 and len(nums) == 1:
        return None
    direction, word = _pick(rng, [("DESC", "highest"), ("DESC", "largest"),
                                  ("ASC", "lowest"), ("ASC", "smallest")])
    q = f"{_pick(rng, SHOW)} the {_words(c)} of the {_words(t)} with the {word} {_words(o)}"
    return q, f"SELECT {t}.{c} FROM {t} ORDER BY {t}.{o} {direction} LIMIT 1"


def _template_join(rng, schema, links):
    if not links:
        return None
    l = _pick(rng, links)
    child_attrs = _attrs(schema, l.child)
    parent_attrs = _attrs(schema, l.parent)
    if not child_attrs or not parent_attrs:
        return None
    cc = _pick(rng, child_attrs)
    pc = _pick(rng, parent_attrs)
    q = (f"{_pick(rng, SHOW)} the {_words(cc)} of {_pick(rng, EACH)} "
         f"{_words(l.child)} together with the {_words(pc)} of its {_words(l.parent)}")
    sql = (f"SELECT {l.child}.{cc} , {l.parent}.{pc} FROM {l.child} "
           f"JOIN {l.parent} ON {l.child}.{l.fk_col} = {l.parent}.{l.pk_col}")
    return q, sql


def _template_bridge_join(rng, schema, links):
    bridges = _bridges(schema, links)
    if not bridges:
        return None
    la, lb = _pick(rng, bridges)
    a_attrs = _attrs(schema, la.parent)
    b_attrs = _attrs(schema, lb.parent)
    if not a_attrs or not b_attrs:
        return None
    ca = _pick(rng, a_attrs)
    cb = _pick(rng, b_attrs)
    q = (f"{_pick(rng, SHOW)} the {_words(ca)} of {_pick(rng, EACH)} "
         f"{_words(la.parent)} and the {_words(cb)} of its "
         f"{_plural(_words(lb.parent))}")
    sql = (f"SELECT {la.parent}.{ca} , {lb.parent}.{cb} FROM {la.parent} "
           f"JOIN {la.child} ON {la.parent}.{la.pk_col} = {la.child}.{la.fk_col} "
           f"JOIN {lb.parent} ON {la.child}.{lb.fk_col} = {lb.parent}.{lb.pk_col}")
    return q, sql


def _template_not_in(rng, schema, links):
    if not links:
        return None
    l = _pick(rng, links)
    parent_attrs = _attrs(schema, l.parent)
    if not parent_attrs:
        return None
    pc = _pick(rng, parent_attrs)
    q = _pick(rng, [
        f"which {_plural(_words(l.parent))} do not have a {_words(l.child)} record",
        f"find the {_words(pc)} of {_plural(_words(l.parent))} with no {_words(l.child)}",
        f"{_pick(rng, SHOW)} the {_words(pc)} of {_plural(_words(l.parent))} "
        f"that appear in no {_words(l.child)}",
    ])
    sql = (f"SELECT {l.parent}.{pc} FROM {l.parent} WHERE {l.parent}.{l.pk_col} "
           f"NOT IN ( SELECT {l.child}.{l.fk_col} FROM {l.child} )")
    return q, sql


def _template_group_count(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    texts = _attrs(schema, t, "text")
    if not texts:
        return None
    g = _pick(rng, texts)
    q = f"how many {_plural(_words(t))} are there for each {_words(g)}"
    return q, f"SELECT {t}.{g} , COUNT ( * ) FROM {t} GROUP BY {t}.{g}"


def _template_group_argmax(rng, schema, links):
    t = _pick(rng, [tb.name for tb in schema.tables])
    texts = _attrs(schema, t, "text")
    if not texts:
        return None
    g = _pick(rng, texts)
    q = f"which {_words(g)} has the {_pick(rng, MOST)} {_plural(_words(t))}"
    return q, (f"SELECT {t}.{g} FROM {t} GROUP BY {t}.{g} "
               f"ORDER BY COUNT ( * ) DESC LIMIT 1")


TEMPLATES = [
    (_template_projection, 2.0),
    (_template_filtered, 1.5),
    (_template_count, 1.0),
    (_template_aggregate, 1.5),
    (_template_order_limit, 1.0),
    (_template_join, 2.0),
    (_template_bridge_join, 1.5),
    (_template_not_in, 1.5),
    (_template_group_count, 1.0),
    (_template_group_argmax, 1.0),
]


def generate_examples(schema: Schema, links: list[FkLink], n: int,
                      rng: np.random.Generator,
                      templates: list[tuple] | None = None) -> list[Example]:
    templates = templates if templates is not None else TEMPLATES
    if not templates:
        raise ValueError("template set is empty")
    weights = np.array([w for _, w in templates])
    weights = weights / weights.sum()
    out = []
    seen = set()
    attempts = 0
    while len(out) < n and attempts < 200 * n:
        attempts += 1
        tpl = templates[int(rng.choice(len(templates), p=weights))][0]
        made = tpl(rng, schema, links)
        if made is None:
            continue
        question, sql = made
        canonical = preprocess_query(sql, schema)
        key = (question, canonical)
        if key in seen:
            continue
        seen.add(key)
        out.append(Example(question=Question.from_text(question),
                           gold_sql=canonical, db_id=schema.db_id))
    return out


@dataclass
class SyntheticDataset:
    schemas: dict[str, Schema]
    train: list[Example]
    dev: list[Example]
    test: list[Example]


def generate_synthetic(seed: int, n_train_schemas: int, per_schema: int,
                       n_test_schemas: int, n_dev_schemas: int = 2,
                       per_eval_schema: int | None = None,
                       templates: list[tuple] | None = None) -> SyntheticDataset:
    """Train/dev/test with pairwise-disjoint schema sets (zero-shot split)."""
    if n_train_schemas < 1:
        raise ValueError("need at least one training schema")
    rng = np.random.default_rng(seed)
    schemas: dict[str, Schema] = {}
    splits = {"train": [], "dev": [], "test": []}
    plan = [("train", n_train_schemas, per_schema),
            ("dev", n_dev_schemas, per_eval_schema or per_schema),
            ("test", n_test_schemas, per_eval_schema or per_schema)]
    for split, n_schemas, n_examples in plan:
        for i in range(n_schemas):
            db_id = f"syn_{split}_{i:03d}"
            schema, links = generate_schema(db_id, rng)
            schemas[db_id] = schema
            splits[split].extend(
                generate_examples(schema, links, n_examples, rng, templates=templates))
    return SyntheticDataset(schemas=schemas, train=splits["train"],
                            dev=splits["dev"], test=splits["test"])
