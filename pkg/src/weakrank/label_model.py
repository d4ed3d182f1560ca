"""Label aggregation: majority vote and the generative label model.

The generative model assumes the k labeling functions are conditionally
independent given the unknown true label y in {-1, +1} with prior
Pr(y=1) = gamma, and parameterizes each function by an accuracy alpha_j
(probability a non-abstaining vote agrees with y) and a coverage beta_j
(probability of not abstaining):

    Pr(l_j | y) = beta_j * alpha_j        if l_j == y
                  beta_j * (1 - alpha_j)  if l_j == -y
                  1 - beta_j              if l_j == 0

alpha and beta are fitted by maximizing the mean marginal log-likelihood of
the observed label rows with projected gradient ascent; the constraint
alpha_j > 0.5 resolves the label-swap symmetry. gamma is a fixed prior,
never fitted.

Likelihood and gradient are accumulated over the distinct label rows
(weighted by multiplicity), which makes every result bit-stable under row
permutations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .labeling import LabelMatrix
from .validation import check_label_array

# Projection margin: keeps alpha > 0.5 (identifiability) and all logs finite.
PROJECTION_MARGIN = 1e-4


class FitDivergedError(RuntimeError):
    """Non-finite objective or gradient during fitting; an implementation bug."""


@dataclass
class GenerativeParams:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: float
    function_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        d = PROJECTION_MARGIN
        if np.any(self.alpha < 0.5 + d - 1e-12) or np.any(self.alpha > 1 - d + 1e-12):
            raise ValueError(f"alpha must lie in [0.5 + {d}, 1 - {d}]")
        if np.any(self.beta < d - 1e-12) or np.any(self.beta > 1 - d + 1e-12):
            raise ValueError(f"beta must lie in [{d}, 1 - {d}]")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def k(self) -> int:
        return self.alpha.size

    def to_json(self, path: str | Path) -> None:
        payload = {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(),
                   "gamma": self.gamma}
        if self.function_names is not None:
            payload["functions"] = list(self.function_names)
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "GenerativeParams":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        names = tuple(payload["functions"]) if "functions" in payload else None
        return cls(alpha=np.array(payload["alpha"]), beta=np.array(payload["beta"]),
                   gamma=float(payload["gamma"]), function_names=names)


@dataclass(frozen=True)
class FitOptions:
    step_size: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-8
    alpha_init: float = 0.7
    beta_init: float = 0.5
    seed: int | None = None  # reserved; the default init is deterministic

    def __post_init__(self):
        if self.step_size <= 0 or self.max_iter <= 0 or self.tol <= 0:
            raise ValueError("step_size, max_iter and tol must be positive")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    step_size: float


@dataclass(frozen=True)
class AggregatedLabel:
    label: int  # +1 or -1
    confidence: float

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError("aggregated label must be +1 or -1")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")


def _project(alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = PROJECTION_MARGIN
    return np.clip(alpha, 0.5 + d, 1.0 - d), np.clip(beta, d, 1.0 - d)


def _compress(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows with multiplicities; np.unique sorts, so any row order
    of the input produces the identical compressed form."""
    rows, counts = np.unique(labels, axis=0, return_counts=True)
    return rows, counts.astype(np.float64)


def _branch_log_liks(alpha: np.ndarray, beta: np.ndarray,
                     rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row log Pr(row | y=+1) and log Pr(row | y=-1)."""
    log_ba = np.log(beta * alpha)
    log_b1a = np.log(beta * (1.0 - alpha))
    log_1b = np.log(1.0 - beta)
    pos = rows == 1
    neg = rows == -1
    s_plus = np.where(pos, log_ba, np.where(neg, log_b1a, log_1b)).sum(axis=1)
    s_minus = np.where(pos, log_b1a, np.where(neg, log_ba, log_1b)).sum(axis=1)
    return s_plus, s_minus


def marginal_log_likelihood(params: GenerativeParams, matrix) -> float:
    """Mean over rows of log sum_y Pr(y) prod_j Pr(l_j | y); always <= 0."""
    labels = check_label_array(matrix)
    if labels.shape[1] != params.k:
        raise ValueError(f"matrix has {labels.shape[1]} columns, params expect {params.k}")
    rows, counts = _compress(labels)
    s_plus, s_minus = _branch_log_liks(params.alpha, params.beta, rows)
    row_ll = np.logaddexp(np.log(params.gamma) + s_plus,
                          np.log1p(-params.gamma) + s_minus)
    return float(np.dot(counts, row_ll) / counts.sum())


def log_likelihood_gradient(params: GenerativeParams,
                            matrix) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the mean marginal log-likelihood w.r.t. (alpha, beta).

    Uses the posterior-weighted form: for each row,
    d/d theta = w * dlog Pr(row|+1) + (1-w) * dlog Pr(row|-1)
    with w = Pr(y=1 | row).
    """
    labels = check_label_array(matrix)
    if labels.shape[1] != params.k:
        raise ValueError(f"matrix has {labels.shape[1]} columns, params expect {params.k}")
    rows, counts = _compress(labels)
    alpha, beta = params.alpha, params.beta
    n = counts.sum()

    s_plus, s_minus = _branch_log_liks(alpha, beta, rows)
    m = (np.log(params.gamma) - np.log1p(-params.gamma)) + (s_plus - s_minus)
    w = 1.0 / (1.0 + np.exp(-m))  # posterior Pr(y=1 | row)

    pos = rows == 1
    neg = rows == -1
    agree = 1.0 / alpha
    disagree = -1.0 / (1.0 - alpha)
    # d log Pr(l|y)/d alpha: +1/alpha when the vote agrees with y, -1/(1-alpha)
    # when it disagrees, 0 on abstain.
    da_plus = np.where(pos, agree, np.where(neg, disagree, 0.0))
    da_minus = np.where(pos, disagree, np.where(neg, agree, 0.0))
    wc = (w * counts)[:, None]
    vc = ((1.0 - w) * counts)[:, None]
    d_alpha = (wc * da_plus + vc * da_minus).sum(axis=0) / n

    # beta enters both branches identically: 1/beta on a vote, -1/(1-beta)
    # on abstain, so the posterior weights cancel.
    voted = pos | neg
    d_beta = np.where(voted, 1.0 / beta, -1.0 / (1.0 - beta))
    d_beta = (counts[:, None] * d_beta).sum(axis=0) / n

    if not (np.all(np.isfinite(d_alpha)) and np.all(np.isfinite(d_beta))):
        raise FitDivergedError("non-finite gradient")
    return d_alpha, d_beta


def fit_generative_model(matrix, gamma: float,
                         opts: FitOptions = FitOptions(),
                         function_names: Sequence[str] | None = None,
                         ) -> tuple[GenerativeParams, list[TraceRow]]:
    """Projected gradient ascent with backtracking line search.

    Each iteration halves the step until the objective does not decrease, so
    the recorded trace is non-decreasing by construction. Terminates when the
    accepted improvement drops below ``opts.tol`` or after ``opts.max_iter``
    iterations.
    """
    labels = check_label_array(matrix)
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    k = labels.shape[1]
    names = tuple(function_names) if function_names is not None else (
        tuple(matrix.function_names) if isinstance(matrix, LabelMatrix) else None
    )

    alpha, beta = _project(np.full(k, opts.alpha_init), np.full(k, opts.beta_init))
    params = GenerativeParams(alpha=alpha, beta=beta, gamma=gamma, function_names=names)
    objective = marginal_log_likelihood(params, labels)
    if not np.isfinite(objective):
        raise FitDivergedError("non-finite objective at initialization")
    trace = [TraceRow(0, objective, 0.0)]

    step = opts.step_size
    for iteration in range(1, opts.max_iter + 1):
        d_alpha, d_beta = log_likelihood_gradient(params, labels)
        trial = step
        accepted = None
        for _ in range(60):
            na, nb = _project(params.alpha + trial * d_alpha,
                              params.beta + trial * d_beta)
            cand = GenerativeParams(alpha=na, beta=nb, gamma=gamma, function_names=names)
            cand_obj = marginal_log_likelihood(cand, labels)
            if cand_obj >= objective:
                accepted = (cand, cand_obj)
                break
            trial /= 2.0
        if accepted is None:
            break  # stationary within floating-point resolution
        params, new_obj = accepted
        improvement = new_obj - objective
        objective = new_obj
        trace.append(TraceRow(iteration, objective, trial))
        step = min(opts.step_size, trial * 2.0)
        if improvement < opts.tol:
            break
    return params, trace


def posterior(params: GenerativeParams, row: Sequence[int] | np.ndarray) -> float:
    """Pr(y = 1 | row) under the fitted model.

    beta cancels between the two branches, leaving
    sigmoid(logit(gamma) + sum_j l_j * logit(alpha_j)). An all-abstain row
    returns gamma exactly.
    """
    arr = np.asarray(row, dtype=np.int64)
    if arr.shape != (params.k,):
        raise ValueError(f"row has shape {arr.shape}, expected ({params.k},)")
    return float(posterior_batch(params, arr[None, :])[0])


def posterior_batch(params: GenerativeParams, labels: np.ndarray) -> np.ndarray:
    labels = check_label_array(labels)
    if labels.shape[1] != params.k:
        raise ValueError(f"matrix has {labels.shape[1]} columns, params expect {params.k}")
    logit_alpha = np.log(params.alpha) - np.log1p(-params.alpha)
    logit_gamma = np.log(params.gamma) - np.log1p(-params.gamma)
    m = logit_gamma + labels @ logit_alpha
    out = 1.0 / (1.0 + np.exp(-m))
    out[np.all(labels == 0, axis=1)] = params.gamma
    return out


def majority_vote(row: Sequence[int] | np.ndarray) -> AggregatedLabel | None:
    """Sign of the non-abstaining majority; confidence is the majority
    fraction of non-abstaining votes. All-zero rows and exact ties abstain
    (returned as None)."""
    arr = np.asarray(row, dtype=np.int64)
    pos = int(np.sum(arr == 1))
    neg = int(np.sum(arr == -1))
    voted = pos + neg
    if voted == 0 or pos == neg:
        return None
    if pos > neg:
        return AggregatedLabel(label=1, confidence=pos / voted)
    return AggregatedLabel(label=-1, confidence=neg / voted)


def aggregate(matrix: LabelMatrix, method: str = "majority",
              params: GenerativeParams | None = None,
              ) -> list[tuple[tuple[str, str], AggregatedLabel | None]]:
    """Fuse each label row into one (label, confidence) or an abstention.

    The generative method thresholds the posterior at 0.5 (exact ties
    abstain) and reports confidence max(p, 1-p).
    """
    if method == "majority":
        return [(pair, majority_vote(row))
                for pair, row in zip(matrix.pairs, matrix.labels)]
    if method == "generative":
        if params is None:
            raise ValueError("generative aggregation needs fitted params")
        if params.k != matrix.k:
            raise ValueError(f"params have {params.k} columns, matrix has {matrix.k}")
        if params.function_names is not None and \
                params.function_names != matrix.function_names:
            raise ValueError(
                f"params were fitted on columns {params.function_names}, "
                f"matrix has {matrix.function_names}"
            )
        probs = posterior_batch(params, matrix.labels)
        out: list[tuple[tuple[str, str], AggregatedLabel | None]] = []
        for pair, p in zip(matrix.pairs, probs):
            if p > 0.5:
                out.append((pair, AggregatedLabel(label=1, confidence=float(p))))
            elif p < 0.5:
                out.append((pair, AggregatedLabel(label=-1, confidence=float(1.0 - p))))
            else:
                out.append((pair, None))
        return out
    raise ValueError(f"unknown aggregation method {method!r}")


def write_fit_trace(trace: Iterable[TraceRow], path: str | Path) -> None:
    lines = ["iteration,objective,step_size"]
    for row in trace:
        lines.append(f"{row.iteration},{row.objective!r},{row.step_size!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_aggregated(aggregated, path: str | Path) -> None:
    """TSV: query_id, passage_id, label in {-1,0,1} (0 = abstain), confidence."""
    lines = ["query_id\tpassage_id\tlabel\tconfidence"]
    for (qid, pid), agg in aggregated:
        if agg is None:
            lines.append(f"{qid}\t{pid}\t0\t0.0")
        else:
            lines.append(f"{qid}\t{pid}\t{agg.label}\t{agg.confidence!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_aggregated(path: str | Path):
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if not lines or lines[0] != "query_id\tpassage_id\tlabel\tconfidence":
        raise ValueError(f"{path}: not an aggregated-label file")
    out = []
    for ln in lines[1:]:
        qid, pid, label, conf = ln.split("\t")
        lab = int(label)
        if lab == 0:
            out.append(((qid, pid), None))
        else:
            out.append(((qid, pid), AggregatedLabel(label=lab, confidence=float(conf))))
    return out


class MajorityVoter(BaseEstimator):
    """Stateless majority-vote aggregator with an estimator facade."""

    def fit(self, L, y=None):
        check_label_array(L)
        return self

    def predict(self, L) -> np.ndarray:
        """Aggregated labels in {-1, 0, +1}; 0 marks an abstention."""
        arr = check_label_array(L)
        out = np.zeros(arr.shape[0], dtype=np.int64)
        for i, row in enumerate(arr):
            agg = majority_vote(row)
            if agg is not None:
                out[i] = agg.label
        return out

    def confidence(self, L) -> np.ndarray:
        """Majority fraction per row; 0.0 where the vote abstains."""
        arr = check_label_array(L)
        out = np.zeros(arr.shape[0], dtype=np.float64)
        for i, row in enumerate(arr):
            agg = majority_vote(row)
            if agg is not None:
                out[i] = agg.confidence
        return out


class GenerativeLabelModel(BaseEstimator):
    """Scikit-learn style wrapper around the generative label model.

    Parameters mirror FitOptions; ``gamma`` is the fixed class prior
    Pr(y = 1). After ``fit``, ``alpha_``, ``beta_``, ``params_`` and the
    objective ``trace_`` are available.
    """

    def __init__(self, gamma: float = 0.5, step_size: float = 1.0,
                 max_iter: int = 5000, tol: float = 1e-8,
                 alpha_init: float = 0.7, beta_init: float = 0.5,
                 seed: int | None = None):
        self.gamma = gamma
        self.step_size = step_size
        self.max_iter = max_iter
        self.tol = tol
        self.alpha_init = alpha_init
        self.beta_init = beta_init
        self.seed = seed

    def fit(self, L, y=None):
        opts = FitOptions(step_size=self.step_size, max_iter=self.max_iter,
                          tol=self.tol, alpha_init=self.alpha_init,
                          beta_init=self.beta_init, seed=self.seed)
        self.params_, self.trace_ = fit_generative_model(L, self.gamma, opts)
        self.alpha_ = self.params_.alpha
        self.beta_ = self.params_.beta
        self.n_iter_ = self.trace_[-1].iteration
        return self

    def predict_proba(self, L) -> np.ndarray:
        """Columns [Pr(y=-1 | row), Pr(y=+1 | row)]."""
        p = posterior_batch(self.params_, check_label_array(L))
        return np.column_stack([1.0 - p, p])

    def predict(self, L) -> np.ndarray:
        """Posterior-thresholded labels in {-1, 0, +1}; 0 at an exact tie."""
        p = posterior_batch(self.params_, check_label_array(L))
        return np.where(p > 0.5, 1, np.where(p < 0.5, -1, 0)).astype(np.int64)

    def confidence(self, L) -> np.ndarray:
        p = posterior_batch(self.params_, check_label_array(L))
        return np.maximum(p, 1.0 - p)

    def score(self, L, y=None) -> float:
        """Mean marginal log-likelihood of rows under the fitted params."""
        return marginal_log_likelihood(self.params_, L)
