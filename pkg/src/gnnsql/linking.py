"""Soft alignment between question words and schema items.

Per word and per item type, the similarity scores are normalized together
with a null element of fixed score 0, so every (word, type) group carries an
explicit "links to nothing" probability. The relevance of an item is its
best linking probability over the question words.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import ParamStore
from .schema import ItemType, Schema, TYPE_ORDER

_TOKEN_RE = re.compile(r"[a-z0-9_]+")

N_FEATURES = 7
UNK = 0


@dataclass(frozen=True)
class Question:
    raw: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, raw: str) -> "Question":
        tokens = tuple(_TOKEN_RE.findall(raw.lower()))
        if not tokens:
            raise ValueError(f"question has no word tokens: {raw!r}")
        return cls(raw=raw, tokens=tokens)


class Vocab:
    """Word index with a shared UNK slot at 0."""

    def __init__(self, tokens: list[str]):
        self.tokens = ["<unk>"] + sorted(set(tokens))
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index.get(t, UNK) for t in tokens], dtype=np.intp)

    @classmethod
    def build(cls, questions: list[Question], schemas: list[Schema]) -> "Vocab":
        toks: list[str] = []
        for q in questions:
            toks.extend(q.tokens)
        for s in schemas:
            for v in range(s.n_nodes):
                toks.extend(name_parts(s.node_name(v)))
        return cls(toks)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocab":
        """Restore a saved vocabulary verbatim (index 0 is the UNK slot)."""
        v = cls.__new__(cls)
        v.tokens = list(tokens)
        v.index = {t: i for i, t in enumerate(v.tokens)}
        return v


def name_parts(name: str) -> list[str]:
    return [p for p in name.lower().split("_") if p]


def edit_distance(a: str, b: str) -> int:
    if len(a) > len(b):
        a, b = b, a
    prev = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        cur = [j]
        for i, ca in enumerate(a, start=1):
            cur.append(min(prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def featurize(word: str, node: int, schema: Schema) -> np.ndarray:
    """Fixed 7-feature lexical/structural vector for one (word, item) pair.

    Order: exact match vs any underscore part, exact match vs whole name,
    word is a prefix (len >= 3) of a part, a part (len >= 3) is a prefix of
    the word, edit distance to a part <= 2, item is a primary key, item is a
    table.
    """
    name = schema.node_name(node).lower()
    parts = name_parts(name)
    f = np.zeros(N_FEATURES)
    f[0] = float(word in parts)
    f[1] = float(word == name)
    f[2] = float(len(word) >= 3 and any(p.startswith(word) for p in parts))
    f[3] = float(any(len(p) >= 3 and word.startswith(p) for p in parts))
    f[4] = float(any(edit_distance(word, p) <= 2 for p in parts))
    if schema.is_table_node(node):
        f[6] = 1.0
    else:
        f[5] = float(schema.node_column(node).is_primary)
    return f


def feature_tensor(question: Question, schema: Schema) -> np.ndarray:
    """[n_nodes * n_words, 7] feature block, row-major by (node, word)."""
    rows = [featurize(w, v, schema)
            for v in range(schema.n_nodes) for w in question.tokens]
    return np.asarray(rows)


def name_token_matrix(schema: Schema, vocab: Vocab) -> np.ndarray:
    """Averaging matrix A with A[v] = uniform weights over v's name tokens,
    so A @ E yields per-item mean name embeddings."""
    a = np.zeros((schema.n_nodes, len(vocab)))
    for v in range(schema.n_nodes):
        ids = vocab.encode(name_parts(schema.node_name(v)))
        for i in ids:
            a[v, i] += 1.0 / len(ids)
    return a


def register_linking(store: ParamStore) -> None:
    store.vector("link.w_feat", N_FEATURES, fan_in=N_FEATURES)
    store.scalar("link.w_sim", 1.0)


def _row_normalize(m: Tensor) -> Tensor:
    norms = ad.sqrt(ad.sum_reduce(ad.mul(m, m), axis=1, keepdims=True))
    return ad.div(m, norms)


def link_scores(question: Question, schema: Schema, store: ParamStore, vocab: Vocab,
                features: np.ndarray | None = None,
                name_means: Tensor | None = None) -> Tensor:
    """Similarity matrix s[v, i] = w_feat . features(v, i) + w_sim * cosine.

    ``name_means`` (mean name-token embeddings per item) can be passed in to
    share work with the node embedding construction.
    """
    if features is None:
        features = feature_tensor(question, schema)
    if name_means is None:
        name_means = ad.matmul(ad.constant(name_token_matrix(schema, vocab)),
                               store["embed.word"])
    word_emb = ad.embedding_lookup(store["embed.word"], vocab.encode(question.tokens))
    cos = ad.matmul(_row_normalize(name_means), ad.transpose(_row_normalize(word_emb)))
    feat_part = ad.reshape(ad.matmul(ad.constant(features), store["link.w_feat"]),
                           (schema.n_nodes, len(question.tokens)))
    return ad.add(feat_part, ad.mul(cos, store["link.w_sim"]))


@dataclass
class LinkingMatrix:
    s: Tensor            # [n_nodes, n_words] similarity scores
    p: Tensor            # [n_nodes, n_words] per-(word, type) probabilities
    null_mass: Tensor    # [n_types, n_words] probability of linking nothing


@dataclass
class RelevanceScores:
    rho: Tensor          # [n_nodes]


def type_partition(schema: Schema) -> list[tuple[ItemType, list[int]]]:
    return [(t, schema.nodes_of_type(t)) for t in TYPE_ORDER]


def link_distribution(s: Tensor, schema: Schema) -> LinkingMatrix:
    """Per-(word, type) softmax of the score rows plus a zero-score null."""
    n_words = s.shape[1]
    zero_row = ad.constant(np.zeros((1, n_words)))
    blocks = []
    null_rows = []
    order: list[int] = []
    for _, nodes in type_partition(schema):
        if nodes:
            block = ad.gather(s, nodes, axis=0)
            probs = ad.softmax(ad.concat([block, zero_row], axis=0), axis=0)
            blocks.append(ad.narrow(probs, 0, 0, len(nodes)))
            null_rows.append(ad.narrow(probs, 0, len(nodes), len(nodes) + 1))
            order.extend(nodes)
        else:
            null_rows.append(ad.constant(np.ones((1, n_words))))
    stacked = ad.concat(blocks, axis=0)
    inverse = np.empty(len(order), dtype=np.intp)
    inverse[np.asarray(order, dtype=np.intp)] = np.arange(len(order))
    p = ad.gather(stacked, inverse, axis=0)
    return LinkingMatrix(s=s, p=p, null_mass=ad.concat(null_rows, axis=0))


def relevance(linking: LinkingMatrix) -> RelevanceScores:
    """rho[v] = max over words of p[v, word]; gradient flows through the
    winning entry only."""
    return RelevanceScores(rho=ad.max_reduce(linking.p, axis=1))
