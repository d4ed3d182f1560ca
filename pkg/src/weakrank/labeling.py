"""Weak labels from per-query score rankings, and the label matrix.

Each labeling function scores a query's candidates, ranks them, and labels
the top-1 passage +1, the bottom half (floor(m/2) passages) -1, and the rest
0 (abstain). Scores are never compared across queries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Dataset, Query
from .embeddings import EmbeddingStore, pair_similarity
from .lexical import (
    DEFAULT_B,
    DEFAULT_K1,
    CorpusStats,
    TokenizerConfig,
    bm25_score,
    tfidf_score,
    tokenize,
)

logger = logging.getLogger(__name__)

POSITIVE = 1
NEGATIVE = -1
ABSTAIN = 0

Scorer = Callable[[Query, Sequence[str]], Sequence[float]]


@dataclass(frozen=True)
class LabelingFunction:
    """A named score source; labels are derived from its per-query ranking."""

    name: str
    scorer: Scorer


def bm25_function(stats: CorpusStats, config: TokenizerConfig = TokenizerConfig(),
                  k1: float = DEFAULT_K1, b: float = DEFAULT_B,
                  name: str = "bm25") -> LabelingFunction:
    def scorer(query: Query, passage_ids: Sequence[str]) -> list[float]:
        q_tokens = tokenize(query.text, config)
        return [bm25_score(q_tokens, pid, stats, k1=k1, b=b) for pid in passage_ids]

    return LabelingFunction(name=name, scorer=scorer)


def tfidf_function(stats: CorpusStats, config: TokenizerConfig = TokenizerConfig(),
                   name: str = "tfidf") -> LabelingFunction:
    def scorer(query: Query, passage_ids: Sequence[str]) -> list[float]:
        q_tokens = tokenize(query.text, config)
        return [tfidf_score(q_tokens, pid, stats) for pid in passage_ids]

    return LabelingFunction(name=name, scorer=scorer)


def embedding_function(store: EmbeddingStore, name: str) -> LabelingFunction:
    def scorer(query: Query, passage_ids: Sequence[str]) -> list[float]:
        return [pair_similarity(store, query.id, pid) for pid in passage_ids]

    return LabelingFunction(name=name, scorer=scorer)


def scores_to_labels(scores: Sequence[tuple[str, float]]) -> dict[str, int]:
    """Apply the top-1 / bottom-half / neutral rule to one query's scores.

    Ties rank by ascending passage id (higher rank wins), so the output is
    deterministic and invariant under any strictly increasing transform of
    the scores. A single candidate gets +1 and nothing gets -1.
    """
    if not scores:
        raise ValueError("scores_to_labels requires a non-empty score list")
    for pid, s in scores:
        if not math.isfinite(s):
            raise ValueError(f"non-finite score for passage {pid!r}")
    ranked = sorted(scores, key=lambda ps: (-ps[1], ps[0]))
    m = len(ranked)
    labels = {pid: ABSTAIN for pid, _ in ranked}
    labels[ranked[0][0]] = POSITIVE
    for pid, _ in ranked[m - m // 2:]:
        labels[pid] = NEGATIVE
    return labels


@dataclass
class LabelMatrix:
    """n (query, passage) pairs x k labeling functions, entries in {-1,0,1}.

    Row order is the dataset's candidate enumeration order: queries in file
    order, passages in candidate order.
    """

    pairs: tuple[tuple[str, str], ...]
    function_names: tuple[str, ...]
    labels: np.ndarray  # (n, k) int8

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.shape != (len(self.pairs), len(self.function_names)):
            raise ValueError(
                f"label array shape {self.labels.shape} does not match "
                f"{len(self.pairs)} pairs x {len(self.function_names)} functions"
            )
        bad = set(np.unique(self.labels)) - {-1, 0, 1}
        if bad:
            raise ValueError(f"labels outside {{-1,0,1}}: {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def k(self) -> int:
        return len(self.function_names)

    def query_groups(self) -> list[tuple[str, list[int]]]:
        """Row indices grouped by query, preserving row order."""
        groups: dict[str, list[int]] = {}
        order: list[str] = []
        for i, (qid, _) in enumerate(self.pairs):
            if qid not in groups:
                groups[qid] = []
                order.append(qid)
            groups[qid].append(i)
        return [(qid, groups[qid]) for qid in order]

    def to_tsv(self, path: str | Path) -> None:
        lines = ["\t".join(self.function_names)]
        for (qid, pid), row in zip(self.pairs, self.labels):
            lines.append("\t".join([qid, pid] + [str(int(v)) for v in row]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_tsv(cls, path: str | Path) -> "LabelMatrix":
        text = Path(path).read_text(encoding="utf-8")
        lines = [ln for ln in text.split("\n") if ln]
        if not lines:
            raise ValueError(f"{path}: empty label matrix file")
        names = tuple(lines[0].split("\t"))
        pairs: list[tuple[str, str]] = []
        rows: list[list[int]] = []
        for lineno, ln in enumerate(lines[1:], start=2):
            cells = ln.split("\t")
            if len(cells) != 2 + len(names):
                raise ValueError(f"{path}: line {lineno} has {len(cells)} fields, "
                                 f"expected {2 + len(names)}")
            pairs.append((cells[0], cells[1]))
            rows.append([int(v) for v in cells[2:]])
        return cls(pairs=tuple(pairs), function_names=names,
                   labels=np.array(rows, dtype=np.int8))


def apply_labeling_functions(dataset: Dataset,
                             functions: Sequence[LabelingFunction]) -> LabelMatrix:
    """Label every (query, candidate) pair with every function.

    Row order follows the dataset; column j is the per-query rule applied to
    function j's scores. Queries with a single candidate are labeled +1 and
    logged, since they can never produce a training triplet.
    """
    if not functions:
        raise ValueError("need at least one labeling function")
    names = [f.name for f in functions]
    if len(set(names)) != len(names):
        raise ValueError(f"labeling function names must be unique, got {names}")

    pairs: list[tuple[str, str]] = []
    columns: list[list[int]] = [[] for _ in functions]
    singleton_queries = 0
    for cs in dataset.candidate_sets:
        query = dataset.queries[cs.query_id]
        if len(cs.passage_ids) == 1:
            singleton_queries += 1
        for j, fn in enumerate(functions):
            scores = fn.scorer(query, cs.passage_ids)
            if len(scores) != len(cs.passage_ids):
                raise ValueError(
                    f"function {fn.name!r} returned {len(scores)} scores for "
                    f"{len(cs.passage_ids)} candidates of query {cs.query_id!r}"
                )
            labels = scores_to_labels(list(zip(cs.passage_ids, scores)))
            for pid in cs.passage_ids:
                columns[j].append(labels[pid])
        for pid in cs.passage_ids:
            pairs.append((cs.query_id, pid))
    if singleton_queries:
        logger.warning("%d queries have a single candidate; they get a +1 label "
                       "but produce no triplets", singleton_queries)

    labels = np.array(columns, dtype=np.int8).T if pairs else np.zeros((0, len(functions)), np.int8)
    return LabelMatrix(pairs=tuple(pairs), function_names=tuple(names), labels=labels)
