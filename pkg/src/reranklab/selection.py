"""Candidate selection: model reranking, oracle bounds, and sweeps.

The reranker itself is one line (argmax of scores); everything else here
exists to situate it: Min/Max oracles bracket what any selector could do
on an annotated candidate set, the Random oracle marks chance level, the
Origin baseline is the generator's own top hypothesis, and the sweep
traces selection quality as the candidate pool grows.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .generation import CandidateSet
from .metrics import MetricReport, corpus_mean
from .scoring import ScoreModel, encode_ids, token_ids
from .textkit import Example

__all__ = [
    "SelectionResult",
    "select",
    "origin_select",
    "oracle_select",
    "SweepRow",
    "sweep_candidates",
]

ORACLE_MODES = ("min", "max", "random")


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of picking one candidate for one example.

    ``index`` is the 0-based position in the candidate set's order (so the
    Origin baseline is always index 0). ``score`` is whatever quantity the
    selector maximized or minimized: the model score for ``model``, the
    annotated mean F for ``min``/``max``, and None for ``random`` and
    ``origin``. ``scores`` carries the full model score vector when one
    was computed.
    """

    example_id: str
    selector: str
    index: int
    summary: str
    score: float | None = None
    scores: tuple[float, ...] | None = None


def _argmax_lowest(values: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def _argmin_lowest(values: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best]:
            best = i
    return best


def select(
    model: ScoreModel, example: Example, cset: CandidateSet, limit: int | None = None
) -> SelectionResult:
    """Pick the candidate the model scores highest against the document.

    Ties go to the lowest index. ``limit`` restricts selection to the
    first ``limit`` candidates (used by sweeps).
    """
    if example.id != cset.example_id:
        raise ValueError(f"example {example.id!r} does not match candidates {cset.example_id!r}")
    pool = cset.candidates[:limit] if limit is not None else cset.candidates
    if limit is not None and limit > len(cset.candidates):
        raise ValueError(
            f"{example.id!r}: requested first {limit} of {len(cset.candidates)} candidates"
        )
    doc_vec, _ = encode_ids(model, token_ids(model, example.document))
    scores = tuple(
        float(np.clip(encode_ids(model, token_ids(model, c))[0] @ doc_vec, -1.0, 1.0))
        for c in pool
    )
    idx = _argmax_lowest(scores)
    return SelectionResult(
        example_id=example.id,
        selector="model",
        index=idx,
        summary=pool[idx],
        score=scores[idx],
        scores=scores,
    )


def origin_select(cset: CandidateSet) -> SelectionResult:
    """The generator's own output: the first candidate (group 1's top)."""
    return SelectionResult(
        example_id=cset.example_id,
        selector="origin",
        index=0,
        summary=cset.candidates[0],
    )


def _example_rng(seed: int, example_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(example_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])


def oracle_select(
    cset: CandidateSet, mode: str, seed: int = 0, limit: int | None = None
) -> SelectionResult:
    """Metric-informed bounds and the chance baseline.

    ``min`` and ``max`` pick the worst/best candidate by annotated mean F
    (ties to the lowest index) and require metric annotations. ``random``
    picks uniformly with an RNG derived from (seed, example id), so an
    example keeps its pick across runs and corpus subsets.
    """
    if mode not in ORACLE_MODES:
        raise ValueError(f"unknown oracle mode {mode!r}; expected one of {ORACLE_MODES}")
    pool = cset.candidates[:limit] if limit is not None else cset.candidates
    if limit is not None and limit > len(cset.candidates):
        raise ValueError(
            f"{cset.example_id!r}: requested first {limit} of {len(cset.candidates)} candidates"
        )
    if mode == "random":
        rng = _example_rng(seed, cset.example_id)
        idx = int(rng.integers(0, len(pool)))
        return SelectionResult(
            example_id=cset.example_id, selector="random", index=idx, summary=pool[idx]
        )
    if cset.metrics is None:
        raise ValueError(f"{cset.example_id!r}: oracle {mode!r} needs metric annotations")
    keys = [m.mean_f for m in cset.metrics[: len(pool)]]
    idx = _argmax_lowest(keys) if mode == "max" else _argmin_lowest(keys)
    return SelectionResult(
        example_id=cset.example_id,
        selector=mode,
        index=idx,
        summary=pool[idx],
        score=keys[idx],
    )


@dataclass(frozen=True)
class SweepRow:
    """Corpus selection quality when only the first k candidates are available."""

    k: int
    model: MetricReport
    oracle_max: MetricReport


def sweep_candidates(
    model: ScoreModel,
    examples: Sequence[Example],
    candidate_sets: Sequence[CandidateSet],
    ks: Sequence[int] | None = None,
) -> list[SweepRow]:
    """Trace model and Max-oracle quality over growing candidate pools.

    Every candidate set must be annotated. ``ks`` defaults to 1..n where n
    is the smallest candidate count in the corpus; any k above a set's
    size is an error. At k=1 both selectors reduce to the Origin baseline.
    """
    if len(examples) != len(candidate_sets):
        raise ValueError(f"{len(examples)} examples vs {len(candidate_sets)} candidate sets")
    if not examples:
        raise ValueError("sweep needs at least one example")
    n_min = min(len(cs.candidates) for cs in candidate_sets)
    if ks is None:
        ks = range(1, n_min + 1)
    rows = []
    for k in ks:
        if k < 1 or k > n_min:
            raise ValueError(f"k={k} outside the available candidate range 1..{n_min}")
        model_reports = []
        max_reports = []
        for ex, cs in zip(examples, candidate_sets):
            if cs.metrics is None:
                raise ValueError(f"{cs.example_id!r}: sweep needs metric annotations")
            picked = select(model, ex, cs, limit=k)
            model_reports.append(cs.metrics[picked.index])
            best = oracle_select(cs, "max", limit=k)
            max_reports.append(cs.metrics[best.index])
        rows.append(
            SweepRow(k=k, model=corpus_mean(model_reports), oracle_max=corpus_mean(max_reports))
        )
    return rows
