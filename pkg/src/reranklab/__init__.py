"""reranklab: generate summary candidates, then rerank them.

A desk-scale lab for the two-stage summarize-then-rerank approach: stage
one produces diverse candidate summaries with group-penalized beam search,
stage two scores each candidate against the source document with a
contrastively trained dual encoder and keeps the best one. Ships with
ROUGE tooling, oracle selectors, fine-grained analyses, a synthetic
corpus generator, and a CLI.
"""

from .textkit import Example, normalize, split_sentences, tokenize
from .metrics import MetricReport, RougeScore, corpus_mean, metric, paired_significance
from .generation import BeamConfig, CandidateSet, NgramScorer, beam_search, diverse_beam_search, generate_candidates
from .scoring import ScoreModel, encode, load_model, new_model, save_model, score
from .training import RankingExample, TrainerConfig, lr_at, ranking_loss, train
from .selection import SelectionResult, oracle_select, origin_select, select, sweep_candidates
from .estimator import SummaryReranker

__version__ = "0.1.0"

__all__ = [
    "Example",
    "normalize",
    "tokenize",
    "split_sentences",
    "RougeScore",
    "MetricReport",
    "metric",
    "corpus_mean",
    "paired_significance",
    "BeamConfig",
    "CandidateSet",
    "NgramScorer",
    "beam_search",
    "diverse_beam_search",
    "generate_candidates",
    "ScoreModel",
    "new_model",
    "encode",
    "score",
    "save_model",
    "load_model",
    "RankingExample",
    "TrainerConfig",
    "ranking_loss",
    "lr_at",
    "train",
    "SelectionResult",
    "select",
    "origin_select",
    "oracle_select",
    "sweep_candidates",
    "SummaryReranker",
    "__version__",
]
