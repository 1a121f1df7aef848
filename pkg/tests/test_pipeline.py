import filecmp
import json

import pytest

from reranklab.generation import GENERATION_PRESETS, CandidateSet
from reranklab.pipeline import (
    PIPELINE_PRESETS,
    RunConfig,
    resolve_config,
    run_experiment,
    score_candidates,
)
from reranklab.synthdata import synth_ranking_corpus
from reranklab.textkit import Example


class TestScoreCandidates:
    def test_identity_candidate_scores_one(self):
        ex = Example.from_raw(id="a", document="d", reference="the fox ran home")
        cs = CandidateSet(example_id="a", candidates=("the fox ran home", "junk words here"))
        (scored,) = score_candidates([ex], [cs])
        assert scored.metrics[0].mean_f == pytest.approx(1.0)
        assert scored.metrics[1].mean_f < 0.2

    def test_idempotent(self):
        ex = Example.from_raw(id="a", document="d", reference="the fox ran home")
        cs = CandidateSet(example_id="a", candidates=("the fox ran", "fox home"))
        once = score_candidates([ex], [cs])
        twice = score_candidates([ex], once)
        assert once[0].metrics == twice[0].metrics

    def test_mismatches_rejected(self):
        ex = Example.from_raw(id="a", document="d", reference="r")
        cs = CandidateSet(example_id="b", candidates=("x",))
        with pytest.raises(ValueError, match="id mismatch"):
            score_candidates([ex], [cs])
        with pytest.raises(ValueError, match="examples vs"):
            score_candidates([ex, ex], [cs])

    def test_missing_reference_rejected(self):
        ex = Example.from_raw(id="a", document="d")
        cs = CandidateSet(example_id="a", candidates=("x",))
        with pytest.raises(ValueError, match="no reference"):
            score_candidates([ex], [cs])

    def test_unknown_metric_rejected(self):
        ex = Example.from_raw(id="a", document="d", reference="r")
        cs = CandidateSet(example_id="a", candidates=("x",))
        with pytest.raises(KeyError, match="unknown metric"):
            score_candidates([ex], [cs], "bleu")


class TestResolveConfig:
    def test_flags_beat_env_beat_file(self):
        cfg = resolve_config(
            file_config={"seed": 1, "n_train": 10, "n_valid": 2, "n_test": 2},
            env={"RERANK_LAB_SEED": "2"},
            flags={"seed": 3},
        )
        assert cfg.seed == 3
        assert cfg.n_train == 10

    def test_env_beats_file(self):
        cfg = resolve_config(file_config={"seed": 1}, env={"RERANK_LAB_SEED": "2"}, flags=None)
        assert cfg.seed == 2

    def test_none_flags_do_not_mask(self):
        cfg = resolve_config(file_config={"seed": 5}, env={}, flags={"seed": None})
        assert cfg.seed == 5

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config file keys"):
            resolve_config(file_config={"sede": 1}, env={})
        with pytest.raises(ValueError, match="unknown flags keys"):
            resolve_config(flags={"n_trian": 4}, env={})

    def test_bad_env_seed_rejected(self):
        with pytest.raises(ValueError, match="RERANK_LAB_SEED must be an integer"):
            resolve_config(env={"RERANK_LAB_SEED": "seven"})

    def test_defaults(self):
        cfg = resolve_config(env={})
        assert cfg.preset == "paper-shape"
        assert cfg.seed == 0
        assert cfg.metric == "rouge"


class TestRunConfig:
    def test_presets_pair_generation_configs(self):
        assert set(PIPELINE_PRESETS) == {"paper-shape", "xsum-test-shape"}
        default_shape = RunConfig(preset="paper-shape")
        g_train, g_eval = default_shape.generation_configs()
        assert g_train is GENERATION_PRESETS["cnndm-train"]
        assert g_eval is GENERATION_PRESETS["cnndm-train"]
        xsum = RunConfig(preset="xsum-test-shape")
        g_train, g_eval = xsum.generation_configs()
        assert g_train is GENERATION_PRESETS["cnndm-train"]
        assert g_eval is GENERATION_PRESETS["xsum-test"]

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown preset"):
            RunConfig(preset="mystery")
        with pytest.raises(ValueError, match="corpus must be"):
            RunConfig(corpus="live")
        with pytest.raises(ValueError, match="at least one example"):
            RunConfig(n_valid=0)

    def test_trainer_config_inherits_seed(self):
        cfg = RunConfig(seed=9, margin=0.05)
        tc = cfg.trainer_config()
        assert tc.seed == 9
        assert tc.margin == 0.05


EXPECTED_ARTIFACTS = [
    "resolved_config.json",
    "train.jsonl",
    "valid.jsonl",
    "test.jsonl",
    "candidates.train.jsonl",
    "candidates.valid.jsonl",
    "candidates.test.jsonl",
    "candidates.train.scored.jsonl",
    "candidates.valid.scored.jsonl",
    "candidates.test.scored.jsonl",
    "checkpoint.rlm",
    "training_log.jsonl",
    "selections.model.jsonl",
    "selections.origin.jsonl",
    "selections.min.jsonl",
    "selections.max.jsonl",
    "selections.random.jsonl",
    "scores.tsv",
    "scores.json",
    "significance.json",
    "sweep.tsv",
    "entities.tsv",
    "analysis.json",
    "run.log",
]


def tiny_config(**overrides):
    base = dict(
        corpus="ranking-task",
        n_train=6,
        n_valid=3,
        n_test=3,
        max_epochs=1,
        eval_every=1,
        batch_size=4,
        significance_resamples=50,
        d=12,
        seed=11,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestRunExperiment:
    def test_produces_every_artifact(self, tmp_path):
        out = run_experiment(tiny_config(), tmp_path / "run")
        for name in EXPECTED_ARTIFACTS:
            assert (out / name).exists(), name

        scores = json.loads((out / "scores.json").read_text())
        assert set(scores["systems"]) == {"model", "origin", "min", "max", "random"}
        fs = {k: v["mean_f"] for k, v in scores["systems"].items()}
        assert fs["min"] <= fs["model"] <= fs["max"]
        assert fs["min"] <= fs["random"] <= fs["max"]
        assert fs["min"] <= fs["origin"] <= fs["max"]

        sig = json.loads((out / "significance.json").read_text())
        for comparison in ("model_vs_origin", "model_vs_random"):
            for variant in ("r1", "r2", "rl", "mean_f"):
                assert 0.0 <= sig[comparison][variant] <= 1.0

        analysis = json.loads((out / "analysis.json").read_text())
        assert set(analysis) >= {"salient_entities", "sentence_overlap", "positional_bias"}

    def test_reruns_are_byte_identical_except_log_header(self, tmp_path):
        cfg = tiny_config()
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b")
        for name in EXPECTED_ARTIFACTS:
            if name == "run.log":
                continue
            assert filecmp.cmp(a / name, b / name, shallow=False), name
        log_a = (a / "run.log").read_text().splitlines()
        log_b = (b / "run.log").read_text().splitlines()
        assert log_a[1:] == log_b[1:]
        head_a, head_b = json.loads(log_a[0]), json.loads(log_b[0])
        head_a.pop("started_at")
        head_b.pop("started_at")
        assert head_a == head_b

    def test_seed_changes_artifacts(self, tmp_path):
        a = run_experiment(tiny_config(seed=11), tmp_path / "a")
        b = run_experiment(tiny_config(seed=12), tmp_path / "b")
        assert not filecmp.cmp(a / "train.jsonl", b / "train.jsonl", shallow=False)

    def test_failure_names_the_stage(self, tmp_path):
        cfg = tiny_config(metric="bleu")
        with pytest.raises(RuntimeError, match="pipeline stage 'annotate' failed"):
            run_experiment(cfg, tmp_path / "run")
        log = (tmp_path / "run" / "run.log").read_text().splitlines()
        tail = json.loads(log[-1])
        assert tail["stage"] == "error"
        assert tail["failed_stage"] == "annotate"
        assert tail["message"].startswith("unknown metric")

    def test_grammar_corpus_runs_generation(self, tmp_path):
        cfg = RunConfig(
            corpus="grammar",
            n_train=3,
            n_valid=2,
            n_test=2,
            max_epochs=1,
            eval_every=1,
            batch_size=4,
            significance_resamples=20,
            d=8,
            seed=2,
            preset="xsum-test-shape",
        )
        out = run_experiment(cfg, tmp_path / "g")
        train_sets = [
            json.loads(line)
            for line in (out / "candidates.train.jsonl").read_text().splitlines()
        ]
        eval_sets = [
            json.loads(line)
            for line in (out / "candidates.test.jsonl").read_text().splitlines()
        ]
        train_width = GENERATION_PRESETS["cnndm-train"].beam_width
        eval_width = GENERATION_PRESETS["xsum-test"].beam_width
        assert all(len(row["candidates"]) == train_width for row in train_sets)
        assert all(len(row["candidates"]) == eval_width for row in eval_sets)


class TestRankingTaskCorpusShape:
    def test_candidate_count_follows_train_preset(self):
        cfg = tiny_config()
        width = GENERATION_PRESETS[PIPELINE_PRESETS[cfg.preset][0]].beam_width
        _, csets = synth_ranking_corpus(n_examples=2, seed=0, n_candidates=width)
        assert all(len(cs.candidates) == width for cs in csets)
