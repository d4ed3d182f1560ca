"""Tokenization, corpus statistics, and the BM25 / TF-IDF scorers.

Statistics are built once over the union of candidate passages of a dataset;
both scorers are pure functions over the frozen stats, so per-query scoring
is safe to run concurrently.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    min_token_len: int = 1
    # hook only; scoring defaults to no stopword removal
    stopwords: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.min_token_len < 1:
            raise ValueError("min_token_len must be >= 1")


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Deterministic tokenizer: NFKC normalize, case-fold, drop punctuation
    characters, split on whitespace, filter by length and stopword set.

    Punctuation stripping deletes characters in Unicode category P*, so
    "A-1" becomes the single token "a1" rather than splitting.
    """
    text = unicodedata.normalize("NFKC", text)
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        text = "".join(
            c for c in text if not unicodedata.category(c).startswith("P")
        )
    tokens = text.split()
    return [
        t for t in tokens
        if len(t) >= config.min_token_len and t not in config.stopwords
    ]


@dataclass
class CorpusStats:
    """Frozen document statistics over one candidate pool."""

    n_docs: int
    avg_doc_len: float
    doc_freq: dict[str, int]
    doc_len: dict[str, int]
    term_freqs: dict[str, dict[str, int]]


def build_stats(passages: Mapping[str, str],
                config: TokenizerConfig = TokenizerConfig()) -> CorpusStats:
    """Tokenize every passage and accumulate df / length tables.

    The result is independent of passage iteration order.
    """
    if not passages:
        raise ValueError("cannot build stats over an empty passage collection")
    doc_freq: Counter[str] = Counter()
    doc_len: dict[str, int] = {}
    term_freqs: dict[str, dict[str, int]] = {}
    for pid, text in passages.items():
        tokens = tokenize(text, config)
        counts = Counter(tokens)
        term_freqs[pid] = dict(counts)
        doc_len[pid] = len(tokens)
        doc_freq.update(counts.keys())
    n = len(doc_len)
    avg = sum(doc_len.values()) / n
    return CorpusStats(
        n_docs=n,
        avg_doc_len=avg,
        doc_freq=dict(doc_freq),
        doc_len=doc_len,
        term_freqs=term_freqs,
    )


def idf(term: str, stats: CorpusStats) -> float:
    """ln((N - df + 0.5) / (df + 0.5) + 1); the +1 keeps idf non-negative."""
    df = stats.doc_freq.get(term, 0)
    return math.log((stats.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def bm25_score(query_tokens: Sequence[str], passage_id: str, stats: CorpusStats,
               k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> float:
    """Okapi BM25 of a tokenized query against one passage in the pool.

    Each query token occurrence contributes
    idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len)).
    """
    if passage_id not in stats.term_freqs:
        raise KeyError(f"passage {passage_id!r} not in corpus stats")
    tf_map = stats.term_freqs[passage_id]
    dl = stats.doc_len[passage_id]
    norm = k1 * (1.0 - b + b * dl / stats.avg_doc_len) if stats.avg_doc_len > 0 else k1
    score = 0.0
    for t in query_tokens:
        tf = tf_map.get(t)
        if not tf:
            continue
        score += idf(t, stats) * tf * (k1 + 1.0) / (tf + norm)
    return score


def _tfidf_weights(counts: Mapping[str, int], stats: CorpusStats) -> dict[str, float]:
    return {t: math.log1p(tf) * idf(t, stats) for t, tf in counts.items() if tf > 0}


def _cosine_of_weights(wa: Mapping[str, float], wb: Mapping[str, float]) -> float:
    na = math.sqrt(sum(v * v for v in wa.values()))
    nb = math.sqrt(sum(v * v for v in wb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    if len(wb) < len(wa):
        wa, wb = wb, wa
    dot = sum(v * wb[t] for t, v in wa.items() if t in wb)
    return min(1.0, max(0.0, dot / (na * nb)))


def tfidf_similarity(tokens_a: Sequence[str], tokens_b: Sequence[str],
                     stats: CorpusStats) -> float:
    """Cosine of ln(1+tf)*idf vectors built from two token multisets.

    Symmetric in its two arguments; 0 when either side has a zero vector.
    """
    return _cosine_of_weights(
        _tfidf_weights(Counter(tokens_a), stats),
        _tfidf_weights(Counter(tokens_b), stats),
    )


def tfidf_score(query_tokens: Sequence[str], passage_id: str,
                stats: CorpusStats) -> float:
    """TF-IDF cosine of the query against a passage's stored term counts."""
    if passage_id not in stats.term_freqs:
        raise KeyError(f"passage {passage_id!r} not in corpus stats")
    return _cosine_of_weights(
        _tfidf_weights(Counter(query_tokens), stats),
        _tfidf_weights(stats.term_freqs[passage_id], stats),
    )


def dump_stats(stats: CorpusStats, path: str | Path) -> None:
    """Debug dump; not consumed by any other module."""
    payload = {
        "n_docs": stats.n_docs,
        "avg_doc_len": stats.avg_doc_len,
        "doc_freq": dict(sorted(stats.doc_freq.items())),
        "doc_len": dict(sorted(stats.doc_len.items())),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
