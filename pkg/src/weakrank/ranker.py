"""Feedforward scorer trained on triplets with the pairwise hinge loss.

The scorer is a d -> 100 -> 10 -> 1 MLP with ReLU after the two hidden
layers and a linear output. For a triplet the positive passage is first by
construction, so the loss reduces to max{0, margin - (s_pos - s_neg)}; with
noise-aware training each instance is weighted by its confidence (a plain
weighted mean, never renormalized). Gradients are exact backpropagation with
subgradient 0 at the hinge and ReLU kinks.

Feature vectors concatenate the dense blocks of one designated embedding
store, [query | passage | elementwise product], with standardized scalar
scores [bm25, tfidf, one cosine per configured store]; the standardization
constants are computed once from the training split and frozen.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Dataset, Query
from .embeddings import EmbeddingStore
from .lexical import (
    DEFAULT_B,
    DEFAULT_K1,
    CorpusStats,
    TokenizerConfig,
    bm25_score,
    tfidf_score,
    tokenize,
)
from .triplets import Triplet
from .validation import check_feature_array, check_unit_interval

HIDDEN = (100, 10)
CHECKPOINT_MAGIC = b"WRK1"


class TrainingError(RuntimeError):
    """Non-finite loss or gradient during training."""


@dataclass(frozen=True)
class TrainOptions:
    margin: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    noise_aware: bool = False
    seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass
class ScorerParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> tuple[int, int]:
        return (self.w1.shape[0], self.w2.shape[0])

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def copy(self) -> "ScorerParams":
        return ScorerParams(*[a.copy() for a in self.arrays()])


def init_params(input_dim: int, seed_or_rng, hidden: tuple[int, int] = HIDDEN,
                init_scale: float = 1.0) -> ScorerParams:
    """Symmetric uniform init, bound init_scale * sqrt(6/(fan_in+fan_out));
    biases start at zero."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) \
        else np.random.default_rng(seed_or_rng)
    h1, h2 = hidden

    def layer(fan_out, fan_in):
        bound = init_scale * np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return ScorerParams(
        w1=layer(h1, input_dim), b1=np.zeros(h1),
        w2=layer(h2, h1), b2=np.zeros(h2),
        w3=layer(1, h2), b3=np.zeros(1),
    )


def _forward(params: ScorerParams, x: np.ndarray):
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    out = (a2 @ params.w3.T + params.b3)[:, 0]
    return out, (x, z1, a1, z2, a2)


def score_batch(params: ScorerParams, x: np.ndarray) -> np.ndarray:
    x = check_feature_array(x, params.input_dim)
    return _forward(params, x)[0]


def score(params: ScorerParams, x: np.ndarray) -> float:
    """Forward pass for a single feature vector."""
    return float(score_batch(params, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def hinge_loss(s_pos: float, s_neg: float, margin: float = 1.0) -> float:
    """max{0, margin - (s_pos - s_neg)}; zero iff the margin is satisfied."""
    return max(0.0, margin - (s_pos - s_neg))


def _weights(confidence, n: int, noise_aware: bool) -> np.ndarray:
    if not noise_aware:
        return np.ones(n)
    if confidence is None:
        raise ValueError("noise-aware training needs per-triplet confidences")
    return check_unit_interval(confidence, "confidence")


def batch_loss(params: ScorerParams, x_pos: np.ndarray, x_neg: np.ndarray,
               confidence=None, margin: float = 1.0,
               noise_aware: bool = False) -> float:
    """Mean hinge loss over the batch, confidence-weighted when noise_aware."""
    x_pos = check_feature_array(x_pos, params.input_dim)
    x_neg = check_feature_array(x_neg, params.input_dim)
    sp, _ = _forward(params, x_pos)
    sn, _ = _forward(params, x_neg)
    losses = np.maximum(0.0, margin - (sp - sn))
    losses = losses * _weights(confidence, len(losses), noise_aware)
    return float(losses.mean())


def _backprop(params: ScorerParams, cache, dy: np.ndarray) -> ScorerParams:
    x, z1, a1, z2, a2 = cache
    d3 = dy[:, None]
    dw3 = d3.T @ a2
    db3 = d3.sum(axis=0)
    dz2 = (d3 @ params.w3) * (z2 > 0)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.w2) * (z1 > 0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return ScorerParams(w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3)


def gradient(params: ScorerParams, x_pos: np.ndarray, x_neg: np.ndarray,
             confidence=None, margin: float = 1.0,
             noise_aware: bool = False) -> ScorerParams:
    """Exact gradient of batch_loss, shaped like ScorerParams.

    Triplets with a satisfied margin contribute nothing; the subgradient at
    the hinge kink is 0 (strict inequality activates the loss).
    """
    x_pos = check_feature_array(x_pos, params.input_dim)
    x_neg = check_feature_array(x_neg, params.input_dim)
    n = x_pos.shape[0]
    sp, cache_p = _forward(params, x_pos)
    sn, cache_n = _forward(params, x_neg)
    active = (margin - (sp - sn)) > 0
    w = _weights(confidence, n, noise_aware)
    upstream = np.where(active, w, 0.0) / n
    g_pos = _backprop(params, cache_p, -upstream)
    g_neg = _backprop(params, cache_n, upstream)
    return ScorerParams(*[gp + gn for gp, gn in zip(g_pos.arrays(), g_neg.arrays())])


@dataclass(frozen=True)
class LossTraceRow:
    epoch: int
    loss: float


def fit_arrays(x_pos: np.ndarray, x_neg: np.ndarray, confidence=None,
               opts: TrainOptions = TrainOptions(),
               hidden: tuple[int, int] = HIDDEN,
               ) -> tuple[ScorerParams, list[LossTraceRow]]:
    """Mini-batch gradient descent on pre-featurized triplets.

    Deterministic for a given seed: one rng drives the weight init and the
    per-epoch shuffles. The trace records the full-set loss at epoch 0 and
    after every epoch.
    """
    x_pos = check_feature_array(x_pos)
    x_neg = check_feature_array(x_neg, x_pos.shape[1])
    if x_pos.shape[0] != x_neg.shape[0]:
        raise ValueError("positive and negative feature arrays differ in length")
    n = x_pos.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty triplet list")
    conf = None if confidence is None else check_unit_interval(confidence, "confidence")
    if conf is not None and len(conf) != n:
        raise ValueError("confidence length does not match triplet count")

    rng = np.random.default_rng(opts.seed)
    params = init_params(x_pos.shape[1], rng, hidden, opts.init_scale)

    def full_loss() -> float:
        return batch_loss(params, x_pos, x_neg, conf, opts.margin, opts.noise_aware)

    trace = [LossTraceRow(0, full_loss())]
    for epoch in range(1, opts.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, opts.batch_size):
            idx = perm[start:start + opts.batch_size]
            g = gradient(params, x_pos[idx], x_neg[idx],
                         None if conf is None else conf[idx],
                         opts.margin, opts.noise_aware)
            for p_arr, g_arr in zip(params.arrays(), g.arrays()):
                p_arr -= opts.learning_rate * g_arr
        loss = full_loss()
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}; lower the learning rate "
                f"(current {opts.learning_rate})"
            )
        trace.append(LossTraceRow(epoch, loss))
    return params, trace


def write_loss_trace(trace: Sequence[LossTraceRow], path: str | Path) -> None:
    lines = ["epoch,loss"] + [f"{r.epoch},{r.loss!r}" for r in trace]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Featurization


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


@dataclass
class FeatureResources:
    """Everything featurize needs: query texts, corpus stats, and stores.

    ``block_store`` names the store whose vectors fill the dense blocks;
    every store contributes one cosine scalar, in insertion order.
    """

    queries: Mapping[str, Query]
    stats: CorpusStats
    stores: dict[str, EmbeddingStore]
    block_store: str
    tok_config: TokenizerConfig = TokenizerConfig()
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    scaler: Standardizer | None = None

    def __post_init__(self):
        if self.block_store not in self.stores:
            raise ValueError(f"block store {self.block_store!r} not among stores "
                             f"{list(self.stores)}")

    @property
    def embedding_dim(self) -> int:
        return self.stores[self.block_store].dim

    @property
    def scalar_names(self) -> list[str]:
        return ["bm25", "tfidf"] + [f"cos:{name}" for name in self.stores]

    @property
    def feature_dim(self) -> int:
        return 3 * self.embedding_dim + len(self.scalar_names)


def _store_vector(store: EmbeddingStore, vid: str, role: str) -> np.ndarray:
    if vid not in store.vectors:
        raise KeyError(f"{role} id {vid!r} missing from embedding store "
                       f"{store.provenance or '(unnamed)'}")
    return store.vectors[vid].astype(np.float64)


def raw_scalars(query_id: str, passage_id: str, res: FeatureResources) -> np.ndarray:
    from .embeddings import pair_similarity

    query = res.queries.get(query_id)
    if query is None:
        raise KeyError(f"query {query_id!r} not in feature resources")
    q_tokens = tokenize(query.text, res.tok_config)
    values = [
        bm25_score(q_tokens, passage_id, res.stats, k1=res.k1, b=res.b),
        tfidf_score(q_tokens, passage_id, res.stats),
    ]
    values += [pair_similarity(store, query_id, passage_id)
               for store in res.stores.values()]
    return np.array(values, dtype=np.float64)


def fit_standardizer(dataset: Dataset, res: FeatureResources) -> Standardizer:
    """Mean/std of the raw scalar features over every training pair.

    Constant features get std 1 so standardization never divides by zero.
    """
    rows = [raw_scalars(cs.query_id, pid, res)
            for cs in dataset.candidate_sets for pid in cs.passage_ids]
    arr = np.array(rows)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    std[std == 0.0] = 1.0
    return Standardizer(mean=mean, std=std)


def featurize(query_id: str, passage_id: str, res: FeatureResources) -> np.ndarray:
    """[q_emb | p_emb | q_emb * p_emb | standardized scalars]."""
    if res.scaler is None:
        raise ValueError("feature resources have no standardizer; run fit_standardizer")
    block = res.stores[res.block_store]
    vq = _store_vector(block, query_id, "query")
    vp = _store_vector(block, passage_id, "passage")
    scalars = res.scaler.apply(raw_scalars(query_id, passage_id, res))
    return np.concatenate([vq, vp, vq * vp, scalars])


def triplet_features(triplets: Sequence[Triplet], res: FeatureResources):
    x_pos = np.array([featurize(t.query_id, t.pos_id, res) for t in triplets])
    x_neg = np.array([featurize(t.query_id, t.neg_id, res) for t in triplets])
    conf = np.array([t.confidence for t in triplets])
    return x_pos, x_neg, conf


def train(triplets: Sequence[Triplet], res: FeatureResources,
          opts: TrainOptions = TrainOptions(),
          ) -> tuple[ScorerParams, list[LossTraceRow]]:
    """Featurize the triplets and run mini-batch gradient descent."""
    if not triplets:
        raise ValueError("cannot train on an empty triplet list")
    x_pos, x_neg, conf = triplet_features(triplets, res)
    return fit_arrays(x_pos, x_neg, conf, opts)


def rank(params: ScorerParams, query_id: str, candidate_ids: Sequence[str],
         res: FeatureResources) -> list[tuple[str, float]]:
    """Candidates in descending score order; ties break by ascending id."""
    x = np.array([featurize(query_id, pid, res) for pid in candidate_ids])
    scores = score_batch(params, x)
    order = sorted(zip(candidate_ids, scores), key=lambda ps: (-ps[1], ps[0]))
    return [(pid, float(s)) for pid, s in order]


# ---------------------------------------------------------------------------
# Checkpoint I/O: JSON header + little-endian f64 payload.


def feature_schema(res: FeatureResources) -> dict:
    return {
        "stores": list(res.stores),
        "block_store": res.block_store,
        "scalars": res.scalar_names,
        "embedding_dim": res.embedding_dim,
    }


def save_checkpoint(params: ScorerParams, path: str | Path,
                    schema: dict | None = None,
                    scaler: Standardizer | None = None,
                    provenance: dict | None = None) -> None:
    header = {
        "format": 1,
        "input_dim": params.input_dim,
        "hidden": list(params.hidden),
        "feature_schema": schema,
        "scaler": None if scaler is None else
        {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        "provenance": provenance,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in params.arrays())
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(path: str | Path) -> tuple[ScorerParams, dict]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a scorer checkpoint")
    (header_len,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + header_len].decode("utf-8"))
    d = header["input_dim"]
    h1, h2 = header["hidden"]
    shapes = [(h1, d), (h1,), (h2, h1), (h2,), (1, h2), (1,)]
    offset = 8 + header_len
    arrays = []
    for shape in shapes:
        size = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
        arrays.append(arr.reshape(shape).copy())
        offset += size * 8
    if offset != len(data):
        raise ValueError(f"{path}: payload size mismatch")
    return ScorerParams(*arrays), header


def scaler_from_header(header: dict) -> Standardizer | None:
    raw = header.get("scaler")
    if raw is None:
        return None
    return Standardizer(mean=np.array(raw["mean"]), std=np.array(raw["std"]))


class PairwiseHingeRanker(BaseEstimator):
    """Estimator facade over the triplet trainer.

    ``fit`` consumes aligned positive/negative feature arrays plus optional
    confidences; ``predict`` returns raw relevance scores.
    """

    def __init__(self, margin: float = 1.0, learning_rate: float = 1e-3,
                 epochs: int = 50, batch_size: int = 32,
                 noise_aware: bool = False, seed: int = 0,
                 init_scale: float = 1.0, hidden: tuple[int, int] = HIDDEN):
        self.margin = margin
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.noise_aware = noise_aware
        self.seed = seed
        self.init_scale = init_scale
        self.hidden = hidden

    def fit(self, X_pos, X_neg, confidence=None):
        opts = TrainOptions(margin=self.margin, learning_rate=self.learning_rate,
                            epochs=self.epochs, batch_size=self.batch_size,
                            noise_aware=self.noise_aware, seed=self.seed,
                            init_scale=self.init_scale)
        self.params_, self.loss_trace_ = fit_arrays(
            X_pos, X_neg, confidence, opts, hidden=tuple(self.hidden))
        return self

    def predict(self, X) -> np.ndarray:
        return score_batch(self.params_, X)
