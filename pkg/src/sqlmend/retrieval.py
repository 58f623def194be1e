"""Demonstration selection: Okapi BM25 over the pool questions.

Documents and queries are tokenized by lowercasing and splitting on runs of
non-alphanumeric characters. IDF uses the plus-one form
``ln((N - df + 0.5) / (df + 0.5) + 1)`` so scores are never negative.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .alignment import Alignment
from .errors import EmptyPoolError, MalformedDatasetError

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass
class Demonstration:
    question: str
    sql: str
    db_id: str
    alignment: Alignment | None = None


def load_demonstration_pool(path: str | Path) -> list[Demonstration]:
    """Read a JSON array of {question, query, db_id} records (the Spider
    training-set shape; ``sql`` is accepted as a synonym for ``query``)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedDatasetError(f"{path}: cannot parse pool file: {exc}") from exc
    if not isinstance(raw, list):
        raise MalformedDatasetError(f"{path}: expected a top-level array")
    pool = []
    for index, record in enumerate(raw):
        if not isinstance(record, dict):
            raise MalformedDatasetError(f"{path}: entry {index} is not an object")
        question = record.get("question", "")
        sql = record.get("query", record.get("sql", ""))
        db_id = record.get("db_id", "")
        if not question or not sql:
            raise MalformedDatasetError(
                f"{path}: entry {index} is missing question or query"
            )
        pool.append(Demonstration(question=question, sql=sql, db_id=db_id))
    return pool


def bm25_tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass
class Bm25Index:
    documents: list[list[str]]
    document_frequencies: dict[str, int]
    average_document_length: float
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    term_frequencies: list[Counter] = field(default_factory=list)


def build_index(
    pool: list[Demonstration], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> Bm25Index:
    if not pool:
        raise EmptyPoolError("demonstration pool is empty")
    documents = [bm25_tokenize(demo.question) for demo in pool]
    frequencies: dict[str, int] = {}
    for doc in documents:
        for term in set(doc):
            frequencies[term] = frequencies.get(term, 0) + 1
    average = sum(len(d) for d in documents) / len(documents)
    return Bm25Index(
        documents=documents,
        document_frequencies=frequencies,
        average_document_length=average,
        k1=k1,
        b=b,
        term_frequencies=[Counter(d) for d in documents],
    )


def top_k(index: Bm25Index, query: str, k: int) -> list[tuple[int, float]]:
    """Rank pool documents against the query, descending score, ties broken
    by ascending pool index; returns min(k, N) items."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = bm25_tokenize(query)
    total = len(index.documents)
    scored = []
    for doc_index, tf in enumerate(index.term_frequencies):
        length = len(index.documents[doc_index])
        norm = index.k1 * (
            1 - index.b + index.b * length / index.average_document_length
        )
        score = 0.0
        for term in terms:
            f = tf.get(term, 0)
            if not f:
                continue
            df = index.document_frequencies[term]
            idf = math.log((total - df + 0.5) / (df + 0.5) + 1.0)
            score += idf * (f * (index.k1 + 1)) / (f + norm)
        scored.append((doc_index, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: min(k, total)]
