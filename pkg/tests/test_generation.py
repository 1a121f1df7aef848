import numpy as np
import pytest

from reranklab.generation import (
    EOS,
    BeamConfig,
    CandidateSet,
    GENERATION_PRESETS,
    NextTokenScorer,
    NgramScorer,
    beam_search,
    diverse_beam_search,
    generate_candidates,
)
from reranklab.metrics import metric
from reranklab.textkit import Example

from oracles import dbs_naive, enumerate_finished


class TableScorer(NextTokenScorer):
    """Random but frozen per-prefix distributions over a tiny vocabulary.

    Every prefix gets its own seeded softmax row, so the decoder and the
    enumeration oracle see identical numbers no matter the query order.
    """

    def __init__(self, n_content: int, seed: int, include_eos: bool = True):
        letters = tuple("abcdefghij"[:n_content])
        self._vocab = letters + ((EOS,) if include_eos else ())
        self._tok2id = {t: i for i, t in enumerate(self._vocab)}
        self._seed = seed
        self._cache: dict[tuple, np.ndarray] = {}

    def vocabulary(self, example):
        return self._vocab

    def score_next(self, prefix, example):
        key = tuple(prefix)
        row = self._cache.get(key)
        if row is None:
            ids = [self._tok2id[t] for t in key]
            rng = np.random.default_rng([self._seed, len(ids), *ids, 7919])
            logits = rng.normal(size=len(self._vocab))
            shifted = logits - logits.max()
            row = shifted - np.log(np.exp(shifted).sum())
            self._cache[key] = row
        return row


EXAMPLE = Example(id="t", document="placeholder")


def full_width_config(scorer, max_length):
    v = len(scorer.vocabulary(EXAMPLE))
    return BeamConfig(
        beam_width=v**max_length, num_groups=1, diversity_penalty=0.0, max_length=max_length
    )


class TestNgramScorer:
    def setup_method(self):
        self.example = Example(id="d1", document="the cat sat. the cat ran.")
        self.scorer = NgramScorer()

    def test_vocabulary_sorted_with_eos_last(self):
        vocab = self.scorer.vocabulary(self.example)
        assert vocab[-1] == EOS
        assert list(vocab[:-1]) == sorted(vocab[:-1])

    def test_distributions_normalize(self):
        vocab = self.scorer.vocabulary(self.example)
        prefixes = [(), ("the",), ("the", "cat"), ("ran", "."), ("unknowntoken",)]
        for prefix in prefixes:
            row = self.scorer.score_next(prefix, self.example)
            assert row.shape == (len(vocab),)
            assert abs(np.logaddexp.reduce(row)) < 1e-6

    def test_document_conditioning(self):
        row = self.scorer.score_next(("the",), self.example)
        vocab = self.scorer.vocabulary(self.example)
        # "the" is always followed by "cat" in the document
        assert vocab[int(np.argmax(row))] == "cat"

    def test_deterministic(self):
        a = self.scorer.score_next(("the",), self.example)
        b = NgramScorer().score_next(("the",), self.example)
        assert np.array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValueError):
            NgramScorer(order=0)
        with pytest.raises(ValueError):
            NgramScorer(alpha=0.0)

    def test_background_corpus_extends_vocabulary(self):
        scorer = NgramScorer(background=("zebra runs",))
        vocab = scorer.vocabulary(self.example)
        assert "zebra" in vocab


class TestBeamConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            BeamConfig(beam_width=16, num_groups=5)

    def test_group_width(self):
        assert BeamConfig(beam_width=16, num_groups=4).group_width == 4

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            BeamConfig(beam_width=0)
        with pytest.raises(ValueError):
            BeamConfig(diversity_penalty=-1.0)
        with pytest.raises(ValueError):
            BeamConfig(max_length=0)

    def test_presets(self):
        cnndm = GENERATION_PRESETS["cnndm-train"]
        assert (cnndm.beam_width, cnndm.num_groups, cnndm.diversity_penalty) == (16, 16, 1.0)
        xsum = GENERATION_PRESETS["xsum-test"]
        assert (xsum.beam_width, xsum.num_groups) == (4, 4)


def _as_tuples(hyps):
    return [(h.token_ids, h.logp, h.steps, h.score) for h in hyps]


class TestBeamSearchExhaustive:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("n_content,max_length", [(2, 3), (3, 3), (4, 4)])
    def test_full_width_matches_enumeration(self, seed, n_content, max_length):
        scorer = TableScorer(n_content, seed)
        config = full_width_config(scorer, max_length)
        hyps = beam_search(scorer, EXAMPLE, config)
        expected = enumerate_finished(scorer, EXAMPLE, max_length, config.length_norm)
        assert _as_tuples(hyps) == expected[: config.beam_width]

    @pytest.mark.parametrize("seed", range(3))
    def test_full_width_without_eos(self, seed):
        scorer = TableScorer(3, seed, include_eos=False)
        config = full_width_config(scorer, 3)
        hyps = beam_search(scorer, EXAMPLE, config)
        expected = enumerate_finished(scorer, EXAMPLE, 3, config.length_norm)
        assert len(expected) == 27
        assert _as_tuples(hyps) == expected

    def test_ngram_scorer_document(self):
        example = Example(id="tiny", document="a b a b")
        scorer = NgramScorer(order=2)
        config = full_width_config(scorer, 3)
        hyps = beam_search(scorer, example, config)
        expected = enumerate_finished(scorer, example, 3, config.length_norm)
        assert _as_tuples(hyps) == expected[: config.beam_width]


class TestBeamSearch:
    def test_width_one_is_greedy(self):
        scorer = TableScorer(4, seed=11)
        config = BeamConfig(beam_width=1, num_groups=1, diversity_penalty=0.0, max_length=5)
        (hyp,) = beam_search(scorer, EXAMPLE, config)
        ids = []
        vocab = scorer.vocabulary(EXAMPLE)
        eos_id = vocab.index(EOS)
        for _ in range(5):
            row = scorer.score_next(tuple(vocab[i] for i in ids), EXAMPLE)
            best = int(min(range(len(vocab)), key=lambda i: (-row[i], i)))
            if best == eos_id:
                break
            ids.append(best)
        assert list(hyp.token_ids) == ids

    def test_deterministic(self):
        scorer = NgramScorer()
        example = Example(id="d", document="one two three. one two four.")
        config = BeamConfig(beam_width=4, num_groups=1, diversity_penalty=0.0, max_length=8)
        a = beam_search(scorer, example, config)
        b = beam_search(NgramScorer(), example, config)
        assert _as_tuples(a) == _as_tuples(b)

    def test_scores_sorted_descending(self):
        scorer = TableScorer(4, seed=2)
        config = BeamConfig(beam_width=8, num_groups=1, diversity_penalty=0.0, max_length=4)
        hyps = beam_search(scorer, EXAMPLE, config)
        scores = [h.score for h in hyps]
        assert scores == sorted(scores, reverse=True)

    def test_empty_vocabulary_rejected(self):
        class EmptyScorer(NextTokenScorer):
            def vocabulary(self, example):
                return ()

            def score_next(self, prefix, example):
                return np.array([])

        with pytest.raises(ValueError):
            beam_search(EmptyScorer(), EXAMPLE, BeamConfig(beam_width=2, num_groups=1))


class TestDiverseBeamSearch:
    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize(
        "width,groups,gamma,length",
        [(4, 2, 1.0, 3), (4, 4, 1.0, 4), (6, 3, 0.5, 3), (8, 2, 2.0, 3)],
    )
    def test_matches_naive_simulation(self, seed, width, groups, gamma, length):
        scorer = TableScorer(4, seed)
        config = BeamConfig(
            beam_width=width, num_groups=groups, diversity_penalty=gamma, max_length=length
        )
        hyps = diverse_beam_search(scorer, EXAMPLE, config)
        expected = dbs_naive(scorer, EXAMPLE, config)
        flat = [h for group in expected for h in group]
        assert _as_tuples(hyps) == flat
        assert [h.group for h in hyps] == [
            g for g, group in enumerate(expected) for _ in group
        ]

    def test_matches_naive_on_ngram_scorer(self):
        example = Example(id="n", document="the cat sat on the mat. the dog sat.")
        config = BeamConfig(beam_width=8, num_groups=4, diversity_penalty=1.0, max_length=6)
        hyps = diverse_beam_search(NgramScorer(), example, config)
        expected = dbs_naive(NgramScorer(), example, config)
        assert _as_tuples(hyps) == [h for group in expected for h in group]

    def test_single_group_equals_beam_search(self):
        scorer = TableScorer(4, seed=3)
        config = BeamConfig(beam_width=4, num_groups=1, diversity_penalty=1.0, max_length=4)
        assert _as_tuples(diverse_beam_search(scorer, EXAMPLE, config)) == _as_tuples(
            beam_search(scorer, EXAMPLE, config)
        )

    def test_first_group_unpenalized(self):
        # group 0 of a diverse decode is bit-identical to a plain beam
        # search of the group width
        scorer = TableScorer(5, seed=8)
        config = BeamConfig(beam_width=12, num_groups=3, diversity_penalty=1.5, max_length=4)
        diverse = diverse_beam_search(scorer, EXAMPLE, config)
        plain = beam_search(
            scorer,
            EXAMPLE,
            BeamConfig(beam_width=4, num_groups=1, diversity_penalty=0.0, max_length=4),
        )
        assert _as_tuples(diverse[:4]) == _as_tuples(plain)

    def test_zero_penalty_collapses_groups(self):
        scorer = TableScorer(4, seed=5)
        config = BeamConfig(beam_width=4, num_groups=4, diversity_penalty=0.0, max_length=4)
        hyps = diverse_beam_search(scorer, EXAMPLE, config)
        assert len({h.token_ids for h in hyps}) == 1

    def test_penalty_diversifies(self):
        example = Example(id="p", document="alpha beta gamma delta. beta gamma alpha.")
        config = BeamConfig(beam_width=8, num_groups=8, diversity_penalty=1.0, max_length=6)
        hyps = diverse_beam_search(NgramScorer(), example, config)
        assert len({h.token_ids for h in hyps}) > 1


class TestGenerateCandidates:
    def setup_method(self):
        self.examples = [
            Example(id="a", document="the sun rose over the hill. birds sang."),
            Example(id="b", document="rain fell all day. the river rose fast."),
        ]

    def test_cnndm_preset_yields_16(self):
        sets = generate_candidates(self.examples, config="cnndm-train")
        assert all(len(cs) == 16 for cs in sets)
        assert [cs.example_id for cs in sets] == ["a", "b"]

    def test_xsum_preset_yields_4(self):
        sets = generate_candidates(self.examples, config="xsum-test")
        assert all(len(cs) == 4 for cs in sets)

    def test_unknown_preset_rejected(self):
        with pytest.raises(KeyError):
            generate_candidates(self.examples, config="nope")

    def test_empty_document_degenerate(self):
        sets = generate_candidates([Example(id="e", document="   ")], config="xsum-test")
        assert sets[0].degenerate
        assert sets[0].candidates == ("",)

    def test_eos_never_in_text(self):
        sets = generate_candidates(self.examples, config="cnndm-train")
        for cs in sets:
            for cand in cs.candidates:
                assert EOS not in cand

    def test_first_candidate_is_plain_beam_top(self):
        config = GENERATION_PRESETS["cnndm-train"]
        sets = generate_candidates(self.examples, NgramScorer(), config)
        plain = BeamConfig(
            beam_width=config.group_width,
            num_groups=1,
            diversity_penalty=0.0,
            max_length=config.max_length,
        )
        for ex, cs in zip(self.examples, sets):
            top = beam_search(NgramScorer(), ex, plain)[0]
            assert cs.candidates[0] == top.text


class TestCandidateSet:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            CandidateSet(example_id="x", candidates=())

    def test_rejects_metric_mismatch(self):
        with pytest.raises(ValueError):
            CandidateSet(
                example_id="x",
                candidates=("a", "b"),
                metrics=(metric("a", "a"),),
            )

    def test_with_metrics(self):
        cs = CandidateSet(example_id="x", candidates=("a b", "c"))
        annotated = cs.with_metrics([metric("a b", "a b"), metric("c", "a b")])
        assert annotated.metrics is not None
        assert annotated.candidates == cs.candidates
        assert len(annotated) == 2
