"""Candidate generation: n-gram scoring plus (diverse) beam search.

The decoder is deliberately model-agnostic. Anything that can hand back a
log-distribution over a fixed vocabulary per prefix can drive it; the
built-in :class:`NgramScorer` conditions on the source document, which is
enough to exercise the full generate-then-rerank loop at desk scale.

Diverse decoding splits the beam into groups that advance one timestep at
a time. Group g's step scores are penalized by ``gamma`` times the number
of times a token was already emitted at that timestep by groups before g
(a Hamming diversity term), so later groups are pushed away from earlier
ones. The first group never sees a penalty, which makes it exactly a plain
beam search of its width. Penalties are folded into the running hypothesis
score at selection time and stay there, as in the reference
implementations of diversity-penalized decoding.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricReport
from .textkit import Example, tokenize

__all__ = [
    "EOS",
    "NextTokenScorer",
    "NgramScorer",
    "BeamConfig",
    "Hypothesis",
    "CandidateSet",
    "GENERATION_PRESETS",
    "beam_search",
    "diverse_beam_search",
    "generate_candidates",
]

# End-of-sequence sentinel. Scorers that include it in their vocabulary can
# terminate hypotheses early; it never appears in emitted candidate text.
EOS = "</s>"

# Begin-of-sequence padding id used internally by NgramScorer contexts.
_BOS_ID = -1


class NextTokenScorer(ABC):
    """Interface the decoder drives.

    ``vocabulary`` fixes the ordered token list for one example (it may or
    may not contain :data:`EOS`); ``score_next`` returns one log-probability
    per vocabulary entry for the continuation of ``prefix``. The returned
    vector must be a proper distribution: its log-sum-exp is 0 within 1e-6.
    """

    @abstractmethod
    def vocabulary(self, example: Example) -> tuple[str, ...]:
        raise NotImplementedError

    @abstractmethod
    def score_next(self, prefix: Sequence[str], example: Example) -> np.ndarray:
        raise NotImplementedError


class NgramScorer(NextTokenScorer):
    """Laplace-smoothed n-gram scorer conditioned on the source document.

    Counts are collected from the document token stream (optionally plus a
    background corpus), padded with begin markers and closed with
    :data:`EOS`, so the end-of-document context lends the end token natural
    mass. The vocabulary is the sorted unique document (plus background)
    tokens with :data:`EOS` appended last.
    """

    def __init__(self, order: int = 3, alpha: float = 0.1, background: Sequence[str] = ()):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.order = order
        self.alpha = alpha
        self.background = tuple(background)
        self._cache: dict[str, tuple] = {}

    def clear_cache(self) -> None:
        self._cache.clear()

    def vocabulary(self, example: Example) -> tuple[str, ...]:
        return self._bound(example)[0]

    def score_next(self, prefix: Sequence[str], example: Example) -> np.ndarray:
        vocab, tok2id, tables = self._bound(example)
        ctx_len = self.order - 1
        ids = [_BOS_ID] * ctx_len + [tok2id.get(t, -2) for t in prefix]
        ctx = tuple(ids[len(ids) - ctx_len :]) if ctx_len else ()
        v = len(vocab)
        entry = tables.get(ctx)
        if entry is None:
            counts, total = np.zeros(v), 0.0
        else:
            counts, total = entry
        probs = (counts + self.alpha) / (total + self.alpha * v)
        return np.log(probs)

    def _bound(self, example: Example) -> tuple:
        cached = self._cache.get(example.id)
        if cached is not None:
            return cached
        doc_tokens = tokenize(example.document).tokens
        bg_streams = [tokenize(text).tokens for text in self.background]
        words = set(doc_tokens)
        for stream in bg_streams:
            words.update(stream)
        vocab = tuple(sorted(words)) + (EOS,)
        tok2id = {t: i for i, t in enumerate(vocab)}
        tables: dict[tuple, tuple[np.ndarray, float]] = {}
        ctx_len = self.order - 1
        for stream in [doc_tokens, *bg_streams]:
            ids = [_BOS_ID] * ctx_len + [tok2id[t] for t in stream] + [tok2id[EOS]]
            for i in range(ctx_len, len(ids)):
                ctx = tuple(ids[i - ctx_len : i])
                nxt = ids[i]
                entry = tables.get(ctx)
                if entry is None:
                    entry = (np.zeros(len(vocab)), 0.0)
                counts, total = entry
                counts[nxt] += 1.0
                tables[ctx] = (counts, total + 1.0)
        bound = (vocab, tok2id, tables)
        self._cache[example.id] = bound
        return bound


@dataclass(frozen=True)
class BeamConfig:
    """Decoding hyperparameters.

    ``beam_width`` must be divisible by ``num_groups``; each group runs a
    beam of width ``beam_width // num_groups``. ``length_norm`` is the
    exponent of the step-count divisor applied to cumulative scores when
    ranking finished hypotheses (0 disables normalization).
    """

    beam_width: int = 16
    num_groups: int = 16
    diversity_penalty: float = 1.0
    max_length: int = 32
    length_norm: float = 0.7

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.num_groups < 1:
            raise ValueError(f"num_groups must be >= 1, got {self.num_groups}")
        if self.beam_width % self.num_groups != 0:
            raise ValueError(
                f"beam_width {self.beam_width} not divisible by num_groups {self.num_groups}"
            )
        if self.diversity_penalty < 0:
            raise ValueError(f"diversity_penalty must be >= 0, got {self.diversity_penalty}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be >= 1, got {self.max_length}")
        if self.length_norm < 0:
            raise ValueError(f"length_norm must be >= 0, got {self.length_norm}")

    @property
    def group_width(self) -> int:
        return self.beam_width // self.num_groups


GENERATION_PRESETS: dict[str, BeamConfig] = {
    "cnndm-train": BeamConfig(beam_width=16, num_groups=16, diversity_penalty=1.0),
    "xsum-test": BeamConfig(beam_width=4, num_groups=4, diversity_penalty=1.0),
}


@dataclass(frozen=True)
class Hypothesis:
    """One finished decode. ``tokens`` excludes the end sentinel.

    ``logp`` is the cumulative (possibly diversity-penalized) log score
    including the end-token step when one was taken; ``steps`` counts
    emitted tokens including that end step, so it is always >= 1 and the
    normalized ``score`` is ``logp / steps ** length_norm``.
    """

    tokens: tuple[str, ...]
    token_ids: tuple[int, ...]
    logp: float
    steps: int
    score: float
    group: int = 0

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _finish(ids: tuple[int, ...], vocab, logp: float, steps: int, exponent: float, group: int) -> Hypothesis:
    score = logp / (steps**exponent) if exponent else logp
    return Hypothesis(
        tokens=tuple(vocab[i] for i in ids),
        token_ids=ids,
        logp=logp,
        steps=steps,
        score=score,
        group=group,
    )


def _decode(scorer: NextTokenScorer, example: Example, config: BeamConfig) -> list[list[Hypothesis]]:
    """Run grouped beam search; returns ranked hypotheses per group."""
    vocab = tuple(scorer.vocabulary(example))
    if not vocab:
        raise ValueError(f"scorer produced an empty vocabulary for example {example.id!r}")
    v = len(vocab)
    eos_id = vocab.index(EOS) if EOS in vocab else -1
    width = config.group_width
    gamma = config.diversity_penalty
    n_groups = config.num_groups

    # alive[g] = list of (token_ids, cumulative logp), in selection order
    alive: list[list[tuple[tuple[int, ...], float]]] = [[((), 0.0)] for _ in range(n_groups)]
    done: list[list[tuple[tuple[int, ...], float, int]]] = [[] for _ in range(n_groups)]

    for t in range(config.max_length):
        emitted = np.zeros(v)
        any_alive = False
        for g in range(n_groups):
            beams = alive[g]
            if not beams:
                continue
            any_alive = True
            rows = np.empty((len(beams), v))
            for k, (ids, _) in enumerate(beams):
                prefix = tuple(vocab[i] for i in ids)
                rows[k] = scorer.score_next(prefix, example)
            if g > 0 and gamma > 0.0:
                rows = rows - gamma * emitted
            cum = rows + np.array([lp for _, lp in beams])[:, None]
            flat = cum.ravel()
            kk = np.repeat(np.arange(len(beams)), v)
            vv = np.tile(np.arange(v), len(beams))
            # sort: score desc, then vocabulary index, then hypothesis age
            order = np.lexsort((kk, vv, -flat))
            selected = order[: min(width, flat.size)]
            new_beams: list[tuple[tuple[int, ...], float]] = []
            for pos in selected:
                k = int(kk[pos])
                tok = int(vv[pos])
                lp = float(flat[pos])
                ids = beams[k][0]
                if tok == eos_id:
                    done[g].append((ids, lp, t + 1))
                else:
                    new_beams.append((ids + (tok,), lp))
            np.add.at(emitted, vv[selected], 1.0)
            alive[g] = new_beams
        if not any_alive:
            break

    exponent = config.length_norm
    ranked: list[list[Hypothesis]] = []
    for g in range(n_groups):
        pool = list(done[g]) + [(ids, lp, len(ids)) for ids, lp in alive[g]]
        hyps = [_finish(ids, vocab, lp, steps, exponent, g) for ids, lp, steps in pool]
        hyps.sort(key=lambda h: (-h.score, h.token_ids, h.steps))
        ranked.append(hyps[:width])
    return ranked


def beam_search(scorer: NextTokenScorer, example: Example, config: BeamConfig) -> list[Hypothesis]:
    """Plain length-normalized beam search (one group, no penalty).

    Returns up to ``beam_width`` finished hypotheses, best first. With
    ``beam_width`` of 1 this degenerates to greedy decoding. Ties break by
    vocabulary index, then hypothesis age.
    """
    plain = BeamConfig(
        beam_width=config.beam_width,
        num_groups=1,
        diversity_penalty=0.0,
        max_length=config.max_length,
        length_norm=config.length_norm,
    )
    return _decode(scorer, example, plain)[0]


def diverse_beam_search(scorer: NextTokenScorer, example: Example, config: BeamConfig) -> list[Hypothesis]:
    """Group-penalized beam search; output is group-major, best first per group.

    With ``num_groups == beam_width`` each group contributes exactly its
    single best hypothesis, giving ``beam_width`` candidates.
    """
    ranked = _decode(scorer, example, config)
    return [h for group in ranked for h in group]


@dataclass(frozen=True)
class CandidateSet:
    """Ordered candidate summaries for one example.

    Order is group-major as produced by the decoder, so ``candidates[0]``
    is the unpenalized top hypothesis (the Origin baseline). Duplicates are
    kept: diverse groups may converge and dedup would silently change n.
    ``metrics`` is filled by annotation and aligns one-to-one when present.
    """

    example_id: str
    candidates: tuple[str, ...]
    metrics: tuple[MetricReport, ...] | None = None
    degenerate: bool = False

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"candidate set for {self.example_id!r} is empty")
        if self.metrics is not None and len(self.metrics) != len(self.candidates):
            raise ValueError(
                f"{self.example_id!r}: {len(self.metrics)} metric entries for "
                f"{len(self.candidates)} candidates"
            )

    def __len__(self) -> int:
        return len(self.candidates)

    def with_metrics(self, reports: Sequence[MetricReport]) -> "CandidateSet":
        return CandidateSet(
            example_id=self.example_id,
            candidates=self.candidates,
            metrics=tuple(reports),
            degenerate=self.degenerate,
        )


def _resolve_config(config: BeamConfig | str) -> BeamConfig:
    if isinstance(config, str):
        try:
            return GENERATION_PRESETS[config]
        except KeyError:
            raise KeyError(
                f"unknown generation preset {config!r}; known: {sorted(GENERATION_PRESETS)}"
            ) from None
    return config


def generate_candidates(
    examples: Iterable[Example],
    scorer: NextTokenScorer | None = None,
    config: BeamConfig | str = "cnndm-train",
) -> list[CandidateSet]:
    """Decode a candidate set per example, in input order.

    ``config`` may be a :class:`BeamConfig` or a preset name. An example
    whose document has no tokens cannot be decoded; it yields a single
    empty candidate flagged degenerate instead of an error, so corpus runs
    survive blank lines.
    """
    cfg = _resolve_config(config)
    if scorer is None:
        scorer = NgramScorer()
    out: list[CandidateSet] = []
    for example in examples:
        if not tokenize(example.document).tokens:
            out.append(CandidateSet(example.id, ("",), degenerate=True))
            continue
        hyps = diverse_beam_search(scorer, example, cfg)
        out.append(CandidateSet(example.id, tuple(h.text for h in hyps)))
    return out
