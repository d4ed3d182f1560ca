"""Weak-supervision passage ranking.

Pipeline: score-based labeling functions produce a weak-label matrix, an
aggregator (majority vote or a generative label model) fuses it into
confidence-weighted pair labels, triplets sampled from those labels train a
pairwise-hinge feedforward scorer, and ranking/label quality are evaluated
against optional gold labels.
"""

from .corpus import Dataset, load_dataset, validate, write_dataset
from .label_model import (
    AggregatedLabel,
    FitOptions,
    GenerativeLabelModel,
    GenerativeParams,
    MajorityVoter,
    aggregate,
    fit_generative_model,
    majority_vote,
    marginal_log_likelihood,
    posterior,
)
from .labeling import LabelMatrix, apply_labeling_functions, scores_to_labels
from .ranker import (
    PairwiseHingeRanker,
    ScorerParams,
    TrainOptions,
    batch_loss,
    gradient,
    hinge_loss,
    rank,
    score,
    train,
)
from .triplets import Triplet, generate_triplets

__version__ = "0.1.0"

__all__ = [
    "AggregatedLabel",
    "Dataset",
    "FitOptions",
    "GenerativeLabelModel",
    "GenerativeParams",
    "LabelMatrix",
    "MajorityVoter",
    "PairwiseHingeRanker",
    "ScorerParams",
    "TrainOptions",
    "Triplet",
    "aggregate",
    "apply_labeling_functions",
    "batch_loss",
    "fit_generative_model",
    "generate_triplets",
    "gradient",
    "hinge_loss",
    "load_dataset",
    "majority_vote",
    "marginal_log_likelihood",
    "posterior",
    "rank",
    "score",
    "scores_to_labels",
    "train",
    "validate",
    "write_dataset",
]
