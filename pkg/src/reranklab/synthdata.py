"""Seeded synthetic corpora.

Two generators share one template grammar:

* :func:`synth_corpus` builds document/reference pairs for full pipeline
  runs. Documents are template sentences with capitalized person and
  place names (so the entity recognizer has something to find); the
  reference is an extractive pick of document sentences with light token
  noise.
* :func:`synth_ranking_corpus` additionally fabricates candidate sets
  whose quality is a controlled lexical-overlap dial: each candidate is
  the reference with a known fraction of tokens swapped for junk-pool
  words. Ranking them is learnable from token identity alone, which makes
  the corpus a clean end-to-end check for the trainable scorer.

Everything is a pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generation import CandidateSet
from .textkit import Example

__all__ = ["SynthConfig", "synth_corpus", "synth_ranking_corpus", "JUNK_WORDS"]

_FIRST = (
    "Alice Omar Priya Marcus Lena Victor Nadia Henrik Rosa Tariq "
    "Ingrid Paulo Mei Stefan Amara Jonas Farida Diego Hana Bram"
).split()

_LAST = (
    "Turner Diaz Okafor Lindqvist Moreau Tanaka Petrov Abebe Kowalski "
    "Silva Haugen Novak Iqbal Fontaine Berg Castillo Andersen Mwangi Rahal Vos"
).split()

_PLACES = (
    "Avonlea Brookfield Caldera Dunmore Eastvale Fernhill Grayport "
    "Halden Ivybridge Jarrow Kestrel Larkmoor"
).split()

_NOUNS = (
    "council report harbor market bridge museum railway festival orchard "
    "reservoir clinic archive theater foundry workshop garden terminal "
    "library quarry mill brewery academy observatory cannery"
).split()

_VERBS_PAST = (
    "opened closed inspected approved rebuilt expanded visited toured "
    "funded surveyed repaired announced restored reviewed audited praised"
).split()

_ADJS = (
    "old new crowded quiet historic flooded modern disputed restored "
    "abandoned busy coastal northern southern central"
).split()

_TAILS = (
    "after the storm, before the election, during the festival, "
    "despite the delays, under new rules, for the second time, "
    "with local support, against early plans"
).split(", ")

# Junk pool for the ranking task: pronounceable non-words, guaranteed
# disjoint from the grammar vocabulary.
_JUNK_SYLLABLES = ["zor", "bli", "gru", "fex", "wub", "qim", "yax", "plo", "drev", "skon"]


def _make_junk(n: int, seed: int) -> tuple[str, ...]:
    rng = np.random.default_rng([seed, 977])
    words: set[str] = set()
    while len(words) < n:
        k = int(rng.integers(2, 4))
        words.add("".join(rng.choice(_JUNK_SYLLABLES) for _ in range(k)))
    return tuple(sorted(words))


JUNK_WORDS = _make_junk(160, 7)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the grammar corpus.

    ``sentence_range`` is inclusive on both ends; ``noise`` is the
    per-token probability that an extracted reference token is replaced
    by a random noun.
    """

    n_examples: int = 100
    seed: int = 0
    sentence_range: tuple[int, int] = (8, 14)
    reference_sentences: int = 2
    noise: float = 0.08
    id_prefix: str = "synth"

    def __post_init__(self):
        if self.n_examples < 1:
            raise ValueError("n_examples must be >= 1")
        lo, hi = self.sentence_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad sentence_range {self.sentence_range}")
        if self.reference_sentences < 1 or self.reference_sentences > lo:
            raise ValueError("reference_sentences must fit in the shortest document")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be a probability")


def _person(rng) -> str:
    return f"{rng.choice(_FIRST)} {rng.choice(_LAST)}"


def _sentence(rng) -> str:
    roll = int(rng.integers(0, 3))
    if roll == 0:
        return (
            f"{_person(rng)} {rng.choice(_VERBS_PAST)} the {rng.choice(_ADJS)} "
            f"{rng.choice(_NOUNS)} near {rng.choice(_PLACES)}."
        )
    if roll == 1:
        return (
            f"The {rng.choice(_ADJS)} {rng.choice(_NOUNS)} in {rng.choice(_PLACES)} "
            f"was {rng.choice(_VERBS_PAST)} {rng.choice(_TAILS)}."
        )
    return (
        f"{_person(rng)} said the {rng.choice(_NOUNS)} {rng.choice(_TAILS)} "
        f"would help the {rng.choice(_ADJS)} {rng.choice(_NOUNS)}."
    )


def _noisy_copy(sentence: str, rng, noise: float) -> str:
    if noise <= 0:
        return sentence
    words = sentence.split(" ")
    out = []
    for w in words:
        # only swap bare lower-case words, so names and the terminal
        # punctuation survive extraction
        if w.isalpha() and w[0].islower() and rng.random() < noise:
            out.append(str(rng.choice(_NOUNS)))
        else:
            out.append(w)
    return " ".join(out)


def synth_corpus(config: SynthConfig = SynthConfig()) -> list[Example]:
    """Generate document/reference pairs from the template grammar."""
    rng = np.random.default_rng([config.seed, 31])
    lo, hi = config.sentence_range
    out = []
    for i in range(config.n_examples):
        n_sent = int(rng.integers(lo, hi + 1))
        sentences = [_sentence(rng) for _ in range(n_sent)]
        picks = sorted(rng.choice(n_sent, size=config.reference_sentences, replace=False))
        reference = " ".join(_noisy_copy(sentences[int(p)], rng, config.noise) for p in picks)
        out.append(
            Example.from_raw(
                id=f"{config.id_prefix}-{i:06d}",
                document=" ".join(sentences),
                reference=reference,
            )
        )
    return out


def synth_ranking_corpus(
    n_examples: int = 200,
    seed: int = 0,
    n_candidates: int = 16,
    sentence_range: tuple[int, int] = (6, 10),
    id_prefix: str = "task",
) -> tuple[list[Example], list[CandidateSet]]:
    """The built-in separable ranking task.

    Candidate k of each example keeps a target fraction of reference
    tokens (levels evenly spread over (0, 1), shuffled per example so
    candidate order carries no quality signal) and replaces the rest with
    junk-pool words. Quality under overlap metrics then tracks the keep
    fraction, and the keep fraction is visible to a token-level encoder.
    Candidate sets are returned unannotated; run them through the metric
    annotation stage like any generated candidates.
    """
    if n_candidates < 2:
        raise ValueError("n_candidates must be >= 2")
    examples = synth_corpus(
        SynthConfig(
            n_examples=n_examples,
            seed=seed,
            sentence_range=sentence_range,
            reference_sentences=2,
            noise=0.05,
            id_prefix=id_prefix,
        )
    )
    rng = np.random.default_rng([seed, 53])
    levels = np.linspace(0.05, 0.95, n_candidates)
    csets = []
    for ex in examples:
        ref_words = ex.reference.split(" ")
        order = rng.permutation(n_candidates)
        cands = []
        for slot in order:
            keep = levels[int(slot)]
            words = [
                w if rng.random() < keep else str(rng.choice(JUNK_WORDS))
                for w in ref_words
            ]
            cands.append(" ".join(words))
        csets.append(CandidateSet(example_id=ex.id, candidates=tuple(cands)))
    return examples, csets
