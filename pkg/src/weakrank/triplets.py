"""Confidence-weighted (query, positive, negative) training instances.

Positive and negative pairs sharing a query are combined by uniform sampling
without replacement from their cross product; the triplet confidence is the
geometric mean of the two pair confidences. Abstained pairs are invisible.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .label_model import AggregatedLabel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    query_id: str
    pos_id: str
    neg_id: str
    confidence: float

    def __post_init__(self):
        if self.pos_id == self.neg_id:
            raise ValueError("positive and negative passage must differ")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")


def _query_rng(seed: int, query_id: str) -> np.random.Generator:
    # Stable per-query stream: sampling for one query is independent of how
    # many other queries exist or in which order they are processed.
    digest = hashlib.blake2b(query_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(digest, "little")])
    )


def generate_triplets(aggregated: Sequence[tuple[tuple[str, str], AggregatedLabel | None]],
                      per_query_samples: int = 4, seed: int = 0) -> list[Triplet]:
    """Sample up to ``per_query_samples`` triplets per query.

    For each query with at least one positive and one negative pair, draws
    min(per_query_samples, #pos * #neg) distinct (pos, neg) combinations
    uniformly without replacement. Queries lacking either side are skipped
    and counted. Output is ordered by query (input order) then draw order,
    and is identical for identical seeds.
    """
    if per_query_samples < 1:
        raise ValueError("per_query_samples must be >= 1")

    order: list[str] = []
    pos: dict[str, list[tuple[str, float]]] = {}
    neg: dict[str, list[tuple[str, float]]] = {}
    for (qid, pid), agg in aggregated:
        if qid not in pos:
            order.append(qid)
            pos[qid] = []
            neg[qid] = []
        if agg is None:
            continue
        if agg.label == 1:
            pos[qid].append((pid, agg.confidence))
        else:
            neg[qid].append((pid, agg.confidence))

    triplets: list[Triplet] = []
    skipped = 0
    for qid in order:
        p, n = pos[qid], neg[qid]
        if not p or not n:
            skipped += 1
            continue
        total = len(p) * len(n)
        take = min(per_query_samples, total)
        rng = _query_rng(seed, qid)
        chosen = rng.choice(total, size=take, replace=False)
        for idx in chosen:
            (pos_id, s_pos) = p[idx // len(n)]
            (neg_id, s_neg) = n[idx % len(n)]
            triplets.append(Triplet(query_id=qid, pos_id=pos_id, neg_id=neg_id,
                                    confidence=math.sqrt(s_pos * s_neg)))
    if skipped:
        logger.info("%d queries lacked a positive or a negative pair and were skipped",
                    skipped)
    return triplets


def write_triplets(triplets: Sequence[Triplet], path: str | Path) -> None:
    lines = ["query_id\tpos_id\tneg_id\tconfidence"]
    for t in triplets:
        lines.append(f"{t.query_id}\t{t.pos_id}\t{t.neg_id}\t{t.confidence!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_triplets(path: str | Path) -> list[Triplet]:
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if not lines or lines[0] != "query_id\tpos_id\tneg_id\tconfidence":
        raise ValueError(f"{path}: not a triplet file")
    out = []
    for ln in lines[1:]:
        qid, pos_id, neg_id, conf = ln.split("\t")
        out.append(Triplet(query_id=qid, pos_id=pos_id, neg_id=neg_id,
                           confidence=float(conf)))
    return out
