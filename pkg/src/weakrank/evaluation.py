"""Ranking metrics (MAP, MRR, P@k) and pseudo-label quality (P@1, R@1, AUC).

Conventions, pinned here because the upstream protocol leaves them open:
queries with zero gold-relevant candidates are excluded from MAP/MRR/P@k
averages; the P@k divisor is k even when fewer than k candidates exist; AUC
pools all (query, passage) pairs and handles ties by average rank; a gold
map's missing keys count as non-relevant, while queries with no gold map at
all are excluded from every metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Dataset


class UndefinedMetric(ValueError):
    """The metric is undefined for this input (e.g. AP with no relevant item)."""


@dataclass(frozen=True)
class RankedList:
    query_id: str
    passage_ids: tuple[str, ...]
    relevant: tuple[bool, ...]

    def __post_init__(self):
        if len(self.passage_ids) != len(self.relevant):
            raise ValueError("passage_ids and relevance flags differ in length")
        if not self.passage_ids:
            raise ValueError("ranked list must have at least one entry")


def average_precision(ranked: RankedList) -> float:
    """Mean over relevant items of the precision at their ranks."""
    hits = 0
    total = 0.0
    for i, rel in enumerate(ranked.relevant, start=1):
        if rel:
            hits += 1
            total += hits / i
    if hits == 0:
        raise UndefinedMetric(f"query {ranked.query_id!r} has no relevant item")
    return total / hits


def reciprocal_rank(ranked: RankedList) -> float:
    for i, rel in enumerate(ranked.relevant, start=1):
        if rel:
            return 1.0 / i
    return 0.0


def precision_at_k(ranked: RankedList, k: int) -> float:
    """Relevant count in the top min(k, n), divided by k (k stays the divisor)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(ranked.relevant[:k]) / k


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(scores: Sequence[float], gold: Sequence[int]) -> float:
    """Mann-Whitney AUC with average-rank tie handling."""
    s = np.asarray(scores, dtype=np.float64)
    g = np.asarray(gold)
    if s.shape != g.shape or s.ndim != 1:
        raise ValueError("scores and gold must be 1-D and equal length")
    pos = g == 1
    n_pos = int(pos.sum())
    n_neg = len(g) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs at least one positive and one negative pair")
    ranks = _average_ranks(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _gold_lookup(dataset: Dataset) -> dict[str, Mapping[str, int]]:
    return {cs.query_id: cs.gold for cs in dataset.candidate_sets
            if cs.gold is not None}


def pseudo_label_quality(dataset: Dataset,
                         pairs: Sequence[tuple[str, str]],
                         labels: Sequence[int],
                         scores: Sequence[float] | None = None) -> dict[str, float]:
    """Compare per-pair weak labels against gold.

    P@1: fraction of gold-covered queries whose +1-labeled passage is
    gold-relevant (any, if the aggregator produced several).
    R@1: +1-labeled gold-relevant pairs over all gold-relevant pairs.
    AUC: over the pooled pair set, using ``scores`` (defaults to the labels).
    """
    gold = _gold_lookup(dataset)
    if not gold:
        raise UndefinedMetric("dataset has no gold labels")
    if scores is None:
        scores = [float(v) for v in labels]
    if not (len(pairs) == len(labels) == len(scores)):
        raise ValueError("pairs, labels and scores must align")

    hit_queries: set[str] = set()
    relevant_hits = 0
    pooled_scores: list[float] = []
    pooled_gold: list[int] = []
    for (qid, pid), label, sc in zip(pairs, labels, scores):
        qgold = gold.get(qid)
        if qgold is None:
            continue
        rel = qgold.get(pid, 0) == 1
        pooled_scores.append(float(sc))
        pooled_gold.append(1 if rel else 0)
        if label == 1 and rel:
            hit_queries.add(qid)
            relevant_hits += 1

    covered_queries = {qid for qid, _ in pairs if qid in gold}
    total_relevant = sum(
        1 for qid in covered_queries for v in gold[qid].values() if v == 1
    )
    p_at_1 = len(hit_queries) / len(covered_queries) if covered_queries else 0.0
    r_at_1 = relevant_hits / total_relevant if total_relevant else 0.0
    return {
        "p_at_1": p_at_1,
        "r_at_1": r_at_1,
        "auc": auc(pooled_scores, pooled_gold),
    }


@dataclass
class MetricReport:
    map: float
    mrr: float
    p_at_1: float
    p_at_5: float
    n_queries: int
    per_query: list[dict]

    def to_dict(self) -> dict:
        return {"MAP": self.map, "MRR": self.mrr, "P@1": self.p_at_1,
                "P@5": self.p_at_5, "n_queries": self.n_queries,
                "per_query": self.per_query}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True),
                              encoding="utf-8")

    def to_table(self) -> str:
        header = f"{'MAP':>8} {'MRR':>8} {'P@1':>8} {'P@5':>8}"
        row = f"{self.map:8.4f} {self.mrr:8.4f} {self.p_at_1:8.4f} {self.p_at_5:8.4f}"
        return header + "\n" + row


ScoreFn = Callable[[str, Sequence[str]], Sequence[float]]


def evaluate_ranker(score_fn: ScoreFn, dataset: Dataset) -> MetricReport:
    """Score every candidate, rank per query, and average the metrics over
    queries with at least one gold-relevant candidate.

    Ties in score break by ascending passage id, matching the ranker.
    """
    gold = _gold_lookup(dataset)
    if not gold:
        raise UndefinedMetric("dataset has no gold labels")
    per_query: list[dict] = []
    aps: list[float] = []
    rrs: list[float] = []
    p1s: list[float] = []
    p5s: list[float] = []
    for cs in dataset.candidate_sets:
        qgold = gold.get(cs.query_id)
        if qgold is None:
            continue
        if not any(v == 1 for v in qgold.values()):
            continue
        scores = score_fn(cs.query_id, cs.passage_ids)
        if len(scores) != len(cs.passage_ids):
            raise ValueError(f"scorer returned {len(scores)} scores for "
                             f"{len(cs.passage_ids)} candidates of {cs.query_id!r}")
        order = sorted(zip(cs.passage_ids, scores), key=lambda ps: (-ps[1], ps[0]))
        ranked = RankedList(
            query_id=cs.query_id,
            passage_ids=tuple(pid for pid, _ in order),
            relevant=tuple(qgold.get(pid, 0) == 1 for pid, _ in order),
        )
        ap = average_precision(ranked)
        rr = reciprocal_rank(ranked)
        p1 = precision_at_k(ranked, 1)
        p5 = precision_at_k(ranked, 5)
        aps.append(ap)
        rrs.append(rr)
        p1s.append(p1)
        p5s.append(p5)
        per_query.append({"query_id": cs.query_id, "AP": ap, "RR": rr,
                          "P@1": p1, "P@5": p5})
    if not aps:
        raise UndefinedMetric("no query has a gold-relevant candidate")
    mean = lambda xs: float(np.mean(xs))
    return MetricReport(map=mean(aps), mrr=mean(rrs), p_at_1=mean(p1s),
                        p_at_5=mean(p5s), n_queries=len(aps), per_query=per_query)
