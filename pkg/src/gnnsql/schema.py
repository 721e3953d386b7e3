"""Relational schema data model and loading.

A schema document is one JSON object:

    {"db_id": "pets",
     "tables": [{"name": "student",
                 "columns": [{"name": "student_id", "value_type": "number",
                              "is_primary": true}, ...]}, ...],
     "foreign_keys": [[from_column_id, to_column_id], ...]}

Column ids are implicit: they number all columns 0.. in declaration order
across tables. Schema items (tables then columns, declaration order) form
the node list of the schema graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum


class SchemaError(Exception):
    pass


class ItemType(Enum):
    TABLE = "table"
    TEXT_COLUMN = "text_column"
    NUMBER_COLUMN = "number_column"
    TIME_COLUMN = "time_column"
    BOOLEAN_COLUMN = "boolean_column"
    OTHER_COLUMN = "other_column"


TYPE_ORDER: tuple[ItemType, ...] = tuple(ItemType)

VALUE_TYPES = {
    "text": ItemType.TEXT_COLUMN,
    "number": ItemType.NUMBER_COLUMN,
    "time": ItemType.TIME_COLUMN,
    "boolean": ItemType.BOOLEAN_COLUMN,
    "other": ItemType.OTHER_COLUMN,
}


@dataclass(frozen=True)
class Column:
    id: int
    name: str
    table_index: int
    value_type: str
    is_primary: bool = False

    @property
    def item_type(self) -> ItemType:
        return VALUE_TYPES[self.value_type]


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]


@dataclass(frozen=True)
class Schema:
    db_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[tuple[int, int], ...]
    columns: tuple[Column, ...] = field(init=False, repr=False)

    def __post_init__(self):
        cols = tuple(c for t in self.tables for c in t.columns)
        object.__setattr__(self, "columns", cols)
        self._validate()

    def _validate(self) -> None:
        if not self.tables:
            raise SchemaError(f"schema '{self.db_id}': no tables")
        seen = set()
        for t in self.tables:
            key = t.name.lower()
            if key in seen:
                raise SchemaError(f"schema '{self.db_id}': duplicate table name '{t.name}'")
            seen.add(key)
            if not t.columns:
                raise SchemaError(f"schema '{self.db_id}': table '{t.name}' has no columns")
            names = set()
            for c in t.columns:
                if c.name.lower() in names:
                    raise SchemaError(
                        f"schema '{self.db_id}': duplicate column '{c.name}' in table '{t.name}'")
                names.add(c.name.lower())
        ids = [c.id for c in self.columns]
        if ids != list(range(len(ids))):
            raise SchemaError(f"schema '{self.db_id}': column ids must be 0..n-1 in order")
        n = len(self.columns)
        for cf, cp in self.foreign_keys:
            for cid in (cf, cp):
                if not (0 <= cid < n):
                    raise SchemaError(
                        f"schema '{self.db_id}': foreign key references missing column id {cid}")
            if self.columns[cf].table_index == self.columns[cp].table_index:
                raise SchemaError(
                    f"schema '{self.db_id}': foreign key ({cf}, {cp}) links columns of one table")

    # --- node indexing: tables occupy 0..|T|-1, then columns in id order ---

    @property
    def n_tables(self) -> int:
        return len(self.tables)

    @property
    def n_nodes(self) -> int:
        return len(self.tables) + len(self.columns)

    def table_node(self, table_index: int) -> int:
        return table_index

    def column_node(self, column_id: int) -> int:
        return len(self.tables) + column_id

    def is_table_node(self, node: int) -> bool:
        return node < len(self.tables)

    def node_column(self, node: int) -> Column:
        return self.columns[node - len(self.tables)]

    def node_name(self, node: int) -> str:
        if self.is_table_node(node):
            return self.tables[node].name
        return self.node_column(node).name

    def node_type(self, node: int) -> ItemType:
        if self.is_table_node(node):
            return ItemType.TABLE
        return self.node_column(node).item_type

    def qualified_name(self, node: int) -> str:
        if self.is_table_node(node):
            return self.tables[node].name
        c = self.node_column(node)
        return f"{self.tables[c.table_index].name}.{c.name}"

    def table_by_name(self, name: str) -> int | None:
        key = name.lower()
        for i, t in enumerate(self.tables):
            if t.name.lower() == key:
                return i
        return None

    def column_by_name(self, table_index: int, name: str) -> Column | None:
        key = name.lower()
        for c in self.tables[table_index].columns:
            if c.name.lower() == key:
                return c
        return None

    def nodes_of_type(self, item_type: ItemType) -> list[int]:
        return [v for v in range(self.n_nodes) if self.node_type(v) == item_type]


def load_schema(document: str | dict) -> Schema:
    """Parse and validate one schema document (JSON text or parsed dict)."""
    doc = json.loads(document) if isinstance(document, str) else document
    db_id = doc.get("db_id", "<missing db_id>")
    tables = []
    next_id = 0
    for ti, tdoc in enumerate(doc.get("tables", [])):
        cols = []
        for cdoc in tdoc.get("columns", []):
            vt = cdoc.get("value_type", "")
            if vt not in VALUE_TYPES:
                raise SchemaError(
                    f"schema '{db_id}': column '{cdoc.get('name')}' has unknown value_type '{vt}'")
            cols.append(Column(id=next_id, name=str(cdoc["name"]).lower(),
                               table_index=ti, value_type=vt,
                               is_primary=bool(cdoc.get("is_primary", False))))
            next_id += 1
        tables.append(Table(name=str(tdoc["name"]).lower(), columns=tuple(cols)))
    fks = tuple((int(a), int(b)) for a, b in doc.get("foreign_keys", []))
    return Schema(db_id=db_id, tables=tuple(tables), foreign_keys=fks)


def schema_to_dict(schema: Schema) -> dict:
    return {
        "db_id": schema.db_id,
        "tables": [
            {"name": t.name,
             "columns": [{"name": c.name, "value_type": c.value_type,
                          "is_primary": c.is_primary} for c in t.columns]}
            for t in schema.tables
        ],
        "foreign_keys": [list(fk) for fk in schema.foreign_keys],
    }


def load_schemas_jsonl(path: str) -> dict[str, Schema]:
    """Load a one-document-per-line schema file; keyed (uniquely) by db_id."""
    schemas: dict[str, Schema] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            s = load_schema(line)
            if s.db_id in schemas:
                raise SchemaError(f"duplicate db_id '{s.db_id}' in {path}")
            schemas[s.db_id] = s
    return schemas


def save_schemas_jsonl(path: str, schemas: list[Schema]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in schemas:
            f.write(json.dumps(schema_to_dict(s), sort_keys=True) + "\n")
