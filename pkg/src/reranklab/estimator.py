"""Scikit-learn style facade over the generate-and-rerank pipeline.

``SummaryReranker`` wraps candidate generation, metric annotation, and
contrastive training behind the familiar ``fit`` / ``predict`` API so
the toolkit composes with sklearn idioms (``get_params``, ``clone``,
``check_is_fitted``). X is a sequence of examples; y, when given, holds
pre-generated candidate sets aligned with X. When y is omitted the
estimator generates candidates itself with the built-in trigram scorer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .generation import GENERATION_PRESETS, NgramScorer, generate_candidates
from .metrics import corpus_mean
from .selection import select
from .training import TrainerConfig, build_ranking_examples, train
from .validation import check_aligned, check_candidate_sets, check_examples

__all__ = ["SummaryReranker"]


class SummaryReranker(BaseEstimator):
    """Reference-free candidate reranker trained with a margin ranking loss.

    Parameters mirror the trainer defaults; see ``TrainerConfig``. The
    ``generation_preset`` picks the beam configuration used whenever the
    estimator has to produce candidates itself (``train_generation_preset``
    at fit time, ``generation_preset`` at predict time).
    """

    def __init__(
        self,
        embedding_dim: int = 64,
        max_tokens: int = 256,
        margin: float = 0.01,
        batch_size: int = 32,
        warmup_steps: int = 10000,
        lr_scale: float = 0.002,
        eval_every: int = 1000,
        max_epochs: int = 5,
        patience: int = 10,
        validation_fraction: float = 0.2,
        metric: str = "rouge",
        train_generation_preset: str = "cnndm-train",
        generation_preset: str = "xsum-test",
        ngram_order: int = 3,
        ngram_alpha: float = 0.1,
        seed: int = 0,
    ):
        self.embedding_dim = embedding_dim
        self.max_tokens = max_tokens
        self.margin = margin
        self.batch_size = batch_size
        self.warmup_steps = warmup_steps
        self.lr_scale = lr_scale
        self.eval_every = eval_every
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.metric = metric
        self.train_generation_preset = train_generation_preset
        self.generation_preset = generation_preset
        self.ngram_order = ngram_order
        self.ngram_alpha = ngram_alpha
        self.seed = seed

    def _generate(self, examples, preset):
        scorer = NgramScorer(order=self.ngram_order, alpha=self.ngram_alpha)
        return generate_candidates(examples, scorer, GENERATION_PRESETS[preset])

    def fit(self, X, y=None):
        """Train the scorer on examples with references.

        y, when provided, is the aligned sequence of CandidateSets
        (annotated or not; missing metrics are computed here).
        """
        examples = check_examples(X, require_reference=True)
        if y is None:
            csets = self._generate(examples, self.train_generation_preset)
        else:
            csets = check_candidate_sets(y, len(examples))
            check_aligned(examples, csets)
        if self.validation_fraction <= 0 or self.validation_fraction >= 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        from .pipeline import score_candidates

        if any(cs.metrics is None for cs in csets):
            csets = score_candidates(examples, csets, self.metric)
        ranked = build_ranking_examples(examples, csets)
        rng = np.random.default_rng([self.seed, 71])
        order = rng.permutation(len(ranked))
        n_valid = max(1, int(round(self.validation_fraction * len(ranked))))
        if n_valid >= len(ranked):
            raise ValueError(
                f"validation_fraction={self.validation_fraction} leaves no training data "
                f"for {len(ranked)} examples"
            )
        valid = [ranked[i] for i in order[:n_valid]]
        train_split = [ranked[i] for i in order[n_valid:]]
        config = TrainerConfig(
            margin=self.margin,
            batch_size=self.batch_size,
            warmup_steps=self.warmup_steps,
            lr_scale=self.lr_scale,
            eval_every=self.eval_every,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            d=self.embedding_dim,
            max_tokens=self.max_tokens,
        )
        result = train(train_split, valid, config)
        self.model_ = result.model
        self.history_ = result.history
        self.n_steps_ = result.steps
        self.best_valid_mean_f_ = result.best_valid_mean_f
        return self

    def decision_function(self, X, y=None):
        """Per-example arrays of candidate scores, aligned with X."""
        check_is_fitted(self, "model_")
        examples = check_examples(X)
        if y is None:
            csets = self._generate(examples, self.generation_preset)
        else:
            csets = check_candidate_sets(y, len(examples))
            check_aligned(examples, csets)
        out = []
        for ex, cs in zip(examples, csets):
            result = select(self.model_, ex, cs)
            out.append(np.asarray(result.scores, dtype=float))
        return out

    def predict(self, X, y=None):
        """Return the selected summary for each example."""
        check_is_fitted(self, "model_")
        examples = check_examples(X)
        if y is None:
            csets = self._generate(examples, self.generation_preset)
        else:
            csets = check_candidate_sets(y, len(examples))
            check_aligned(examples, csets)
        return [select(self.model_, ex, cs).summary for ex, cs in zip(examples, csets)]

    def score(self, X, y=None):
        """Corpus mean of the three F1 scores for the selected summaries."""
        check_is_fitted(self, "model_")
        examples = check_examples(X, require_reference=True)
        summaries = self.predict(examples, y)
        from .metrics import get_metric

        metric_fn = get_metric(self.metric)
        reports = [metric_fn(s, ex.reference) for s, ex in zip(summaries, examples)]
        return corpus_mean(reports).mean_f
