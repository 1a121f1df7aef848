import json

import pytest

from reranklab import dataio
from reranklab.cli import default_seed, main
from reranklab.scoring import new_model, save_model
from reranklab.selection import SelectionResult


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture()
def ranking_files(tmp_path, capsys):
    data = tmp_path / "data.jsonl"
    cands = tmp_path / "cands.jsonl"
    run_json(
        capsys,
        "synth-data", str(data),
        "--kind", "ranking-task", "-n", "8",
        "--candidates-out", str(cands), "--seed", "3",
    )
    scored = tmp_path / "scored.jsonl"
    run_json(capsys, "score-candidates", str(data), str(cands), str(scored))
    return data, scored


class TestSeedResolution:
    def test_default_seed_reads_environment(self, monkeypatch):
        monkeypatch.delenv("RERANK_LAB_SEED", raising=False)
        assert default_seed() == 0
        monkeypatch.setenv("RERANK_LAB_SEED", "17")
        assert default_seed() == 17

    def test_garbage_env_seed_exits(self, monkeypatch):
        monkeypatch.setenv("RERANK_LAB_SEED", "lots")
        with pytest.raises(SystemExit, match="must be an integer"):
            default_seed()

    def test_env_seed_equals_flag_seed(self, tmp_path, capsys, monkeypatch):
        flag_out = tmp_path / "flag.jsonl"
        env_out = tmp_path / "env.jsonl"
        monkeypatch.delenv("RERANK_LAB_SEED", raising=False)
        run_json(capsys, "synth-data", str(flag_out), "-n", "5", "--seed", "9")
        monkeypatch.setenv("RERANK_LAB_SEED", "9")
        run_json(capsys, "synth-data", str(env_out), "-n", "5")
        assert flag_out.read_bytes() == env_out.read_bytes()

    def test_flag_beats_env(self, tmp_path, capsys, monkeypatch):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        monkeypatch.setenv("RERANK_LAB_SEED", "9")
        run_json(capsys, "synth-data", str(a), "-n", "5", "--seed", "4")
        monkeypatch.delenv("RERANK_LAB_SEED")
        run_json(capsys, "synth-data", str(b), "-n", "5", "--seed", "4")
        assert a.read_bytes() == b.read_bytes()


class TestIngest:
    def test_normalizes_and_reports(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(
            json.dumps({"id": "a", "document": "The  FOX ran.", "reference": "It ran."}) + "\n"
        )
        out = tmp_path / "clean.jsonl"
        payload = run_json(capsys, "ingest", str(raw), str(out))
        assert payload["examples"] == 1
        (ex,) = dataio.read_dataset(out)
        assert ex.document == "the fox ran."

    def test_max_doc_tokens(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        raw.write_text(json.dumps({"id": "a", "document": "one two three four five"}) + "\n")
        out = tmp_path / "cut.jsonl"
        run_json(capsys, "ingest", str(raw), str(out), "--max-doc-tokens", "3")
        (ex,) = dataio.read_dataset(out)
        assert ex.document == "one two three"

    def test_missing_input_fails_cleanly(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "ingest", str(tmp_path / "nope.jsonl"), str(tmp_path / "o"))
        assert code == 1
        assert err.startswith("error:")


class TestGenerate:
    def test_preset_controls_width(self, tmp_path, capsys):
        data = tmp_path / "g.jsonl"
        run_json(capsys, "synth-data", str(data), "-n", "3", "--seed", "1")
        out = tmp_path / "cands.jsonl"
        payload = run_json(capsys, "generate", str(data), str(out), "--preset", "xsum-test")
        assert payload["candidates_per_example"] == 4
        csets = dataio.read_candidates(out)
        assert all(len(cs.candidates) == 4 for cs in csets)

    def test_explicit_beam_flags(self, tmp_path, capsys):
        data = tmp_path / "g.jsonl"
        run_json(capsys, "synth-data", str(data), "-n", "2", "--seed", "1")
        out = tmp_path / "cands.jsonl"
        run_json(
            capsys,
            "generate", str(data), str(out),
            "--beam-width", "6", "--num-groups", "3",
            "--diversity-penalty", "0.5", "--max-length", "12",
        )
        csets = dataio.read_candidates(out)
        assert all(len(cs.candidates) == 6 for cs in csets)


class TestScoreRerankOracle:
    def test_score_candidates_annotates(self, ranking_files):
        _, scored = ranking_files
        csets = dataio.read_candidates(scored)
        assert all(cs.metrics is not None for cs in csets)

    def test_train_rerank_oracle_sweep_evaluate(self, tmp_path, capsys, ranking_files):
        data, scored = ranking_files
        ckpt = tmp_path / "model.rlm"
        history = tmp_path / "history.jsonl"
        payload = run_json(
            capsys,
            "train",
            "--train-data", str(data), "--train-candidates", str(scored),
            "--valid-data", str(data), "--valid-candidates", str(scored),
            "--output", str(ckpt), "--history", str(history),
            "--max-epochs", "1", "--eval-every", "1", "--batch-size", "4",
            "--dim", "8", "--seed", "0",
        )
        assert ckpt.exists()
        assert payload["steps"] == 2
        assert history.read_text().strip()

        sel_model = tmp_path / "selections.model.jsonl"
        run_json(capsys, "rerank", str(ckpt), str(data), str(scored), str(sel_model))
        sels = dataio.read_selections(sel_model)
        assert len(sels) == 8
        assert all(s.selector == "model" for s in sels)

        sel_max = tmp_path / "selections.max.jsonl"
        sel_min = tmp_path / "selections.min.jsonl"
        run_json(capsys, "oracle", str(scored), str(sel_max), "--mode", "max")
        run_json(capsys, "oracle", str(scored), str(sel_min), "--mode", "min")

        sweep_out = tmp_path / "sweep.tsv"
        run_json(capsys, "sweep", str(ckpt), str(data), str(scored), str(sweep_out), "--ks", "1,4,16")
        lines = sweep_out.read_text().splitlines()
        assert lines[0] == "k\tmodel_mean_f\toracle_max_mean_f"
        assert len(lines) == 4

        eval_json = tmp_path / "scores.json"
        payload = run_json(
            capsys,
            "evaluate", str(data),
            f"model={sel_model}", f"max={sel_max}", f"min={sel_min}",
            "--output-json", str(eval_json),
        )
        fs = {name: d["mean_f"] for name, d in payload["systems"].items()}
        assert fs["min"] <= fs["model"] <= fs["max"]
        assert json.loads(eval_json.read_text())["systems"] == payload["systems"]

        sig_out = tmp_path / "sig.json"
        payload = run_json(
            capsys,
            "significance", str(data), str(sel_max), str(sel_min),
            "--resamples", "200", "--seed", "0", "--output", str(sig_out),
        )
        assert payload["mean_f"] <= 0.05
        assert payload["resamples"] == 200

    def test_oracle_random_seed_determinism(self, tmp_path, capsys, ranking_files):
        _, scored = ranking_files
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        run_json(capsys, "oracle", str(scored), str(a), "--mode", "random", "--seed", "5")
        run_json(capsys, "oracle", str(scored), str(b), "--mode", "random", "--seed", "5")
        assert a.read_bytes() == b.read_bytes()

    def test_mismatched_pair_exits(self, tmp_path, capsys, ranking_files):
        data, scored = ranking_files
        short = tmp_path / "short.jsonl"
        short.write_text(json.dumps({"id": "only", "document": "d", "reference": "r"}) + "\n")
        model_path = tmp_path / "m.rlm"
        save_model(new_model(("a", "b"), d=4), model_path)
        with pytest.raises(SystemExit, match="candidate sets"):
            main(["rerank", str(model_path), str(short), str(scored), str(tmp_path / "o")])


class TestAnalyze:
    @pytest.fixture()
    def analysis_inputs(self, tmp_path):
        doc = " ".join(f"Rosa Turner visited the span {i}." for i in range(10))
        data = tmp_path / "data.jsonl"
        data.write_text(
            json.dumps(
                {"id": "a", "document": doc, "reference": "Rosa Turner visited the span 0."}
            )
            + "\n"
        )
        sels = tmp_path / "selections.model.jsonl"
        dataio.write_selections(
            [
                SelectionResult(
                    example_id="a",
                    selector="model",
                    index=0,
                    summary="rosa turner visited the span 0.",
                )
            ],
            sels,
        )
        return data, sels

    def test_entities_kind(self, tmp_path, capsys, analysis_inputs):
        data, sels = analysis_inputs
        table = tmp_path / "e.tsv"
        out = tmp_path / "e.json"
        payload = run_json(
            capsys,
            "analyze", "entities", str(data), str(sels),
            "--table", str(table), "--output", str(out),
        )
        assert payload["examples"] == 1
        assert payload["f1"] == pytest.approx(1.0)
        assert table.read_text().splitlines()[0].startswith("id\t")
        saved = json.loads(out.read_text())
        assert saved["kind"] == "entities"
        assert saved["system"] == "model"

    def test_alignment_kind(self, capsys, analysis_inputs):
        data, sels = analysis_inputs
        payload = run_json(capsys, "analyze", "alignment", str(data), str(sels))
        assert payload["examples"] == 1
        match = payload["alignments"][0]["alignment"][0]
        assert match["source_ordinal"] == 0
        assert match["score"] == pytest.approx(1.0)

    def test_position_bias_kind_with_csv(self, tmp_path, capsys, analysis_inputs):
        data, sels = analysis_inputs
        csv = tmp_path / "bias.csv"
        payload = run_json(
            capsys,
            "analyze", "position-bias", str(data), str(sels),
            "--min-sentences", "8", "--csv", str(csv), "--system", "demo",
        )
        assert payload["matches"] == 1
        assert payload["counts"][0] == 1
        lines = csv.read_text().splitlines()
        assert lines[0] == "bin,ratio,system"
        assert len(lines) == 11
        assert lines[1] == "0,1.000000,demo"
        assert all(line.endswith(",demo") for line in lines[1:])

    def test_system_defaults_to_filename(self, tmp_path, capsys, analysis_inputs):
        data, sels = analysis_inputs
        csv = tmp_path / "bias.csv"
        run_json(
            capsys,
            "analyze", "position-bias", str(data), str(sels),
            "--min-sentences", "8", "--csv", str(csv),
        )
        assert csv.read_text().splitlines()[1].endswith(",model")

    def test_unknown_selection_id_exits(self, tmp_path, capsys, analysis_inputs):
        data, _ = analysis_inputs
        orphan = tmp_path / "orphan.jsonl"
        orphan.write_text(
            dataio.dumps_canonical(
                {"format_version": 1, "id": "zz", "summary": "s", "selector": "m", "index": 0, "score": None}
            )
            + "\n"
        )
        with pytest.raises(SystemExit, match="no example"):
            main(["analyze", "entities", str(data), str(orphan)])


class TestRun:
    def test_full_run_and_config_file(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "corpus": "ranking-task",
                    "n_train": 6,
                    "n_valid": 3,
                    "n_test": 3,
                    "max_epochs": 1,
                    "eval_every": 1,
                    "batch_size": 4,
                    "significance_resamples": 30,
                    "d": 8,
                }
            )
        )
        out = tmp_path / "exp"
        payload = run_json(
            capsys, "run", "--out", str(out), "--config", str(config), "--seed", "2"
        )
        assert payload["seed"] == 2
        assert (out / "scores.tsv").exists()
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 2
        assert resolved["n_train"] == 6

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"n_trian": 4}))
        code, _, err = run_cli(capsys, "run", "--out", str(tmp_path / "x"), "--config", str(config))
        assert code == 1
        assert "unknown config file keys" in err

    def test_pipeline_failure_is_clean(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            "run", "--out", str(tmp_path / "x"),
            "--corpus", "ranking-task",
            "--n-train", "0",
        )
        assert code == 1
        assert "error:" in err
