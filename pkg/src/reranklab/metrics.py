"""ROUGE-style overlap metrics, corpus aggregation, and paired significance.

Scores are reported as precision/recall/F1 triples for unigram overlap
(R-1), bigram overlap (R-2), and longest-common-subsequence overlap (R-L),
plus their F1 average ``mean_f`` which is the selection criterion used for
ranking supervision and oracle baselines.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .textkit import light_stem, ngrams, normalize, tokenize

__all__ = [
    "RougeScore",
    "MetricReport",
    "SignificanceReport",
    "rouge_n",
    "rouge_l",
    "lcs_length",
    "metric",
    "corpus_mean",
    "paired_significance",
    "register_metric",
    "get_metric",
    "metric_names",
]


def _prf(overlap: float, cand_total: float, ref_total: float) -> tuple[float, float, float]:
    p = overlap / cand_total if cand_total > 0 else 0.0
    r = overlap / ref_total if ref_total > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass(frozen=True)
class RougeScore:
    """Precision, recall, and F1 of one overlap variant. All in [0, 1]."""

    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        for name in ("precision", "recall", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def from_counts(cls, overlap: float, cand_total: float, ref_total: float) -> "RougeScore":
        """Build a score from clipped overlap and the two totals.

        Zero denominators yield zero components rather than errors, so
        empty candidates or references degrade to all-zero scores.
        """
        return cls(*_prf(overlap, cand_total, ref_total))

    def to_dict(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}

    @classmethod
    def from_dict(cls, d: dict) -> "RougeScore":
        return cls(precision=d["p"], recall=d["r"], f1=d["f1"])


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    """Clipped n-gram overlap between token sequences.

    Each n-gram's contribution is clipped at its reference count, the usual
    multiset intersection. ``n`` must be >= 1.
    """
    cand_counts = ngrams(candidate, n)
    ref_counts = ngrams(reference, n)
    overlap = sum((cand_counts & ref_counts).values())
    return RougeScore.from_counts(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token sequences."""
    a = tuple(a)
    b = tuple(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0] * (len(b) + 1)
        for j, bj in enumerate(b, start=1):
            if ai == bj:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    """LCS-based overlap over the whole token sequences (no sentence split)."""
    a = tuple(candidate)
    b = tuple(reference)
    return RougeScore.from_counts(lcs_length(a, b), len(a), len(b))


@dataclass(frozen=True)
class MetricReport:
    """R-1 / R-2 / R-L scores for one candidate, with their F1 mean."""

    r1: RougeScore
    r2: RougeScore
    rl: RougeScore
    mean_f: float

    @classmethod
    def from_scores(cls, r1: RougeScore, r2: RougeScore, rl: RougeScore) -> "MetricReport":
        return cls(r1=r1, r2=r2, rl=rl, mean_f=(r1.f1 + r2.f1 + rl.f1) / 3.0)

    def to_dict(self) -> dict:
        return {
            "r1": self.r1.to_dict(),
            "r2": self.r2.to_dict(),
            "rl": self.rl.to_dict(),
            "mean_f": self.mean_f,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            r1=RougeScore.from_dict(d["r1"]),
            r2=RougeScore.from_dict(d["r2"]),
            rl=RougeScore.from_dict(d["rl"]),
            mean_f=d["mean_f"],
        )


def metric(candidate: str, reference: str, stem: bool = False) -> MetricReport:
    """Score ``candidate`` against ``reference``.

    Both texts are normalized and tokenized here, so callers can pass raw
    strings. With ``stem=True`` tokens go through the light stemmer first
    (off by default: plain surface overlap).
    """
    cand = tokenize(normalize(candidate)).tokens
    ref = tokenize(normalize(reference)).tokens
    if stem:
        cand = tuple(light_stem(t) for t in cand)
        ref = tuple(light_stem(t) for t in ref)
    return MetricReport.from_scores(
        rouge_n(cand, ref, 1),
        rouge_n(cand, ref, 2),
        rouge_l(cand, ref),
    )


def corpus_mean(reports: Sequence[MetricReport]) -> MetricReport:
    """Field-wise arithmetic mean of per-example reports."""
    if not reports:
        raise ValueError("corpus_mean needs at least one report")
    n = len(reports)

    def avg(pick: Callable[[MetricReport], RougeScore]) -> RougeScore:
        return RougeScore(
            precision=sum(pick(m).precision for m in reports) / n,
            recall=sum(pick(m).recall for m in reports) / n,
            f1=sum(pick(m).f1 for m in reports) / n,
        )

    return MetricReport.from_scores(
        avg(lambda m: m.r1), avg(lambda m: m.r2), avg(lambda m: m.rl)
    )


@dataclass(frozen=True)
class SignificanceReport:
    """Paired-bootstrap p-values, one per metric variant.

    Each value is the fraction of resamples where system ``a``'s resampled
    mean F1 fails to exceed system ``b``'s. Small values mean ``a`` beats
    ``b`` consistently. Ties count in both directions, so swapping the
    systems gives ``p_ab + p_ba >= 1``.
    """

    r1: float
    r2: float
    rl: float
    mean_f: float
    resamples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "r1": self.r1,
            "r2": self.r2,
            "rl": self.rl,
            "mean_f": self.mean_f,
            "resamples": self.resamples,
            "seed": self.seed,
        }


def paired_significance(
    a: Sequence[MetricReport],
    b: Sequence[MetricReport],
    resamples: int = 1000,
    seed: int = 0,
) -> SignificanceReport:
    """Paired bootstrap over example indices.

    Args:
        a, b: per-example reports for two systems on the same examples, in
            the same order (paired by position).
        resamples: number of bootstrap draws.
        seed: RNG seed; results are deterministic given the seed.
    """
    if len(a) != len(b):
        raise ValueError(f"paired systems must align: {len(a)} vs {len(b)} reports")
    if not a:
        raise ValueError("paired_significance needs at least one example")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(a)
    idx = rng.integers(0, n, size=(resamples, n))

    def pvalue(av: np.ndarray, bv: np.ndarray) -> float:
        diff = av - bv
        return float(np.mean(diff[idx].mean(axis=1) <= 0.0))

    return SignificanceReport(
        r1=pvalue(np.array([m.r1.f1 for m in a]), np.array([m.r1.f1 for m in b])),
        r2=pvalue(np.array([m.r2.f1 for m in a]), np.array([m.r2.f1 for m in b])),
        rl=pvalue(np.array([m.rl.f1 for m in a]), np.array([m.rl.f1 for m in b])),
        mean_f=pvalue(np.array([m.mean_f for m in a]), np.array([m.mean_f for m in b])),
        resamples=resamples,
        seed=seed,
    )


# Plug-in registry so external quality metrics can drive annotation and
# evaluation under their own names.
_METRICS: dict[str, Callable[[str, str], MetricReport]] = {}


def register_metric(name: str, fn: Callable[[str, str], MetricReport], override: bool = False) -> None:
    """Register a metric callable under ``name``.

    The callable takes (candidate_text, reference_text) and returns a
    :class:`MetricReport`. Registering an existing name without
    ``override=True`` is an error.
    """
    if not override and name in _METRICS:
        raise ValueError(f"metric {name!r} is already registered")
    _METRICS[name] = fn


def get_metric(name: str) -> Callable[[str, str], MetricReport]:
    try:
        return _METRICS[name]
    except KeyError:
        raise KeyError(f"unknown metric {name!r}; known: {sorted(_METRICS)}") from None


def metric_names() -> list[str]:
    return sorted(_METRICS)


register_metric("rouge", metric)
register_metric("rouge-stem", lambda c, r: metric(c, r, stem=True))
