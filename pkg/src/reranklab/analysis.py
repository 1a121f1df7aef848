"""Fine-grained analyses: what did reranking actually change?

Three lenses, all reference-based and deliberately lightweight:

* salient entities: which document entities made it into the summary,
  scored against the entities the reference kept;
* sentence alignment: each summary sentence is matched to its best source
  sentence by token overlap, giving extractive "footprints" that can be
  compared across systems;
* positional bias: where in long documents those matched sentences live,
  as a ten-bin histogram of relative position.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from math import ceil
from typing import Protocol

from .metrics import rouge_l, rouge_n
from .textkit import (
    Example,
    contains_token_seq,
    normalize,
    split_sentences,
    tokenize,
)

__all__ = [
    "EntityRecognizer",
    "HeuristicRecognizer",
    "EntityPRF",
    "salient_entity_prf",
    "AlignedSentence",
    "AlignmentMap",
    "align",
    "sentence_overlap",
    "OverlapPRF",
    "PositionHistogram",
    "positional_bias",
]

# Words that start sentences so often that a lone capitalized occurrence
# carries no entity signal.
_STOPWORDS = frozenset(
    """a an the this that these those he she it they we you i his her its
    their our your in on at by for with from of to and but or nor so yet
    as if when while after before because although since not no there
    here what who whom whose which how why where all some any both each
    few more most other such only own same than too very just about
    against between into through during above below again further then
    once is are was were be been being have has had do does did will
    would can could may might must shall should""".split()
)


class EntityRecognizer(Protocol):
    """Anything that extracts a deduplicated entity set from text."""

    def extract(self, text: str) -> set[str]: ...


class HeuristicRecognizer:
    """Capitalization plus gazetteer entity stand-in.

    Entities are maximal runs of capitalized tokens in the original-case
    text, excluding single sentence-initial stopwords ("The" opening a
    sentence is not an entity; "The Hague" mid-run survives as a run), and
    all gazetteer entries found in the text. Output entities are
    normalized (lower-cased, space-joined), so they compare cleanly as
    token subsequences of the normalized input.
    """

    def __init__(self, gazetteer: Sequence[str] = ()):
        self.gazetteer = tuple(
            tokenize(normalize(entry)).tokens for entry in gazetteer if normalize(entry)
        )

    def extract(self, text: str) -> set[str]:
        entities: set[str] = set()
        for sentence in split_sentences(text):
            run: list[str] = []
            run_start = -1
            for pos, token in enumerate(sentence.tokens):
                if token[0].isalpha() and token[0].isupper():
                    if not run:
                        run_start = pos
                    run.append(token)
                else:
                    self._flush(run, run_start, entities)
                    run = []
            self._flush(run, run_start, entities)
        if self.gazetteer:
            text_tokens = tokenize(normalize(text)).tokens
            for entry in self.gazetteer:
                if contains_token_seq(text_tokens, entry):
                    entities.add(" ".join(entry))
        return entities

    @staticmethod
    def _flush(run: list[str], run_start: int, entities: set[str]) -> None:
        if not run:
            return
        if len(run) == 1 and run_start == 0 and run[0].lower() in _STOPWORDS:
            return
        entities.add(" ".join(t.lower() for t in run))


@dataclass(frozen=True)
class EntityPRF:
    """Salient-entity precision/recall/F1 for one summary, with the sets."""

    precision: float
    recall: float
    f1: float
    source_entities: frozenset[str]
    salient_entities: frozenset[str]
    system_entities: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "p": self.precision,
            "r": self.recall,
            "f1": self.f1,
            "n_source": len(self.source_entities),
            "n_salient": len(self.salient_entities),
            "n_system": len(self.system_entities),
        }


def _occurs(entity: str, text_tokens: tuple[str, ...]) -> bool:
    return contains_token_seq(text_tokens, entity.split(" "))


def salient_entity_prf(
    document: str,
    reference: str,
    summary: str,
    recognizer: EntityRecognizer | None = None,
) -> EntityPRF:
    """Score the summary's entity choices against the reference's.

    ``document`` should be original-case text when available (the default
    recognizer keys on capitalization). Source entities that occur in the
    reference are the salient set; those that occur in the summary are the
    system set; precision/recall/F1 come from their intersection, with
    empty denominators scoring zero.
    """
    rec = recognizer if recognizer is not None else HeuristicRecognizer()
    e_src = frozenset(rec.extract(document))
    ref_tokens = tokenize(normalize(reference)).tokens
    sys_tokens = tokenize(normalize(summary)).tokens
    e_sal = frozenset(e for e in e_src if _occurs(e, ref_tokens))
    e_sys = frozenset(e for e in e_src if _occurs(e, sys_tokens))
    hit = len(e_sal & e_sys)
    p = hit / len(e_sys) if e_sys else 0.0
    r = hit / len(e_sal) if e_sal else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return EntityPRF(p, r, f1, e_src, e_sal, e_sys)


@dataclass(frozen=True)
class AlignedSentence:
    summary_ordinal: int
    source_ordinal: int
    score: float


@dataclass(frozen=True)
class AlignmentMap:
    """Each summary sentence matched to its best source sentence."""

    matches: tuple[AlignedSentence, ...]
    source_sentence_count: int

    @property
    def matched_source_indices(self) -> frozenset[int]:
        return frozenset(m.source_ordinal for m in self.matches)


def _match_score(cand: tuple[str, ...], src: tuple[str, ...], include_rl: bool) -> float:
    parts = [rouge_n(cand, src, 1).f1, rouge_n(cand, src, 2).f1]
    if include_rl:
        parts.append(rouge_l(cand, src).f1)
    return sum(parts) / len(parts)


def align(summary: str, document: str, include_rl: bool = False) -> AlignmentMap:
    """Match every summary sentence to the source sentence it overlaps most.

    The match score is the mean of R-1 and R-2 F1 (optionally also R-L),
    so a verbatim extractive copy scores 1.0 on its source sentence. Ties
    go to the earliest source sentence. Both texts must have at least one
    sentence.
    """
    src_sentences = [s.tokens for s in split_sentences(normalize(document))]
    sum_sentences = [s.tokens for s in split_sentences(normalize(summary))]
    if not src_sentences:
        raise ValueError("cannot align against an empty document")
    if not sum_sentences:
        raise ValueError("cannot align an empty summary")
    matches = []
    for si, cand in enumerate(sum_sentences):
        best_j = 0
        best = -1.0
        for j, src in enumerate(src_sentences):
            s = _match_score(cand, src, include_rl)
            if s > best:
                best = s
                best_j = j
        matches.append(AlignedSentence(summary_ordinal=si, source_ordinal=best_j, score=best))
    return AlignmentMap(matches=tuple(matches), source_sentence_count=len(src_sentences))


@dataclass(frozen=True)
class OverlapPRF:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


def sentence_overlap(reference_alignment: AlignmentMap, system_alignment: AlignmentMap) -> OverlapPRF:
    """Set overlap of the source sentences the two summaries drew from.

    Precision is against the system's matched set, recall against the
    reference's; empty sets give zero components.
    """
    ref_set = reference_alignment.matched_source_indices
    sys_set = system_alignment.matched_source_indices
    hit = len(ref_set & sys_set)
    p = hit / len(sys_set) if sys_set else 0.0
    r = hit / len(ref_set) if ref_set else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return OverlapPRF(p, r, f1)


@dataclass(frozen=True)
class PositionHistogram:
    """Where matched source sentences sit in their documents, in ten bins.

    Bin b covers relative positions in ((b)/10, (b+1)/10], using 1-based
    sentence ordinals over the (possibly truncated) source sentence count.
    ``ratios`` sum to 1 unless no document qualified (then ``empty``).
    """

    counts: tuple[int, ...]
    ratios: tuple[float, ...]
    matches: int
    documents: int
    empty: bool

    def to_dict(self) -> dict:
        return {
            "counts": list(self.counts),
            "ratios": list(self.ratios),
            "matches": self.matches,
            "documents": self.documents,
            "empty": self.empty,
        }


def _truncate_tokens(text: str, limit: int | None) -> str:
    if limit is None:
        return text
    seq = tokenize(text)
    if len(seq) <= limit:
        return text
    if limit == 0:
        return ""
    return text[: seq.spans[limit - 1][1]]


def positional_bias(
    examples: Sequence[Example],
    summaries: Sequence[str],
    min_sentences: int = 30,
    truncate_tokens: int | None = None,
    include_rl: bool = False,
) -> PositionHistogram:
    """Histogram of matched source positions over long documents.

    Only documents with at least ``min_sentences`` sentences (after
    optional truncation to ``truncate_tokens`` document tokens) count;
    each summary sentence contributes its aligned sentence's relative
    position. Examples with empty summaries or documents are skipped.
    """
    if len(examples) != len(summaries):
        raise ValueError(f"{len(examples)} examples vs {len(summaries)} summaries")
    counts = [0] * 10
    docs = 0
    for ex, summary in zip(examples, summaries):
        doc = _truncate_tokens(normalize(ex.document), truncate_tokens)
        n_src = len(split_sentences(doc))
        if n_src < min_sentences or n_src == 0:
            continue
        if not tokenize(normalize(summary)).tokens:
            continue
        docs += 1
        amap = align(summary, doc, include_rl=include_rl)
        for m in amap.matches:
            pos = (m.source_ordinal + 1) / n_src
            b = min(9, max(0, ceil(pos * 10) - 1))
            counts[b] += 1
    total = sum(counts)
    if total == 0:
        return PositionHistogram(tuple(counts), tuple([0.0] * 10), 0, docs, empty=True)
    ratios = tuple(c / total for c in counts)
    return PositionHistogram(tuple(counts), ratios, total, docs, empty=False)
