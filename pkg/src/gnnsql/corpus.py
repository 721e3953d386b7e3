"""Access to the bundled corpus assets (schemas, queries, alias pairs)."""

from __future__ import annotations

import json
from importlib import resources

from .schema import Schema, load_schema


def _lines(name: str) -> list[dict]:
    text = resources.files("gnnsql.assets").joinpath(name).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def corpus_schemas() -> dict[str, Schema]:
    return {doc["db_id"]: load_schema(doc) for doc in _lines("corpus_schemas.jsonl")}


def corpus_queries() -> list[tuple[str, str]]:
    return [(doc["db_id"], doc["sql"]) for doc in _lines("corpus_queries.jsonl")]


def alias_corpus() -> list[tuple[str, str, str]]:
    return [(doc["db_id"], doc["raw"], doc["canonical"])
            for doc in _lines("alias_corpus.jsonl")]
