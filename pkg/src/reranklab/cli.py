"""Command line interface.

Every stage of the pipeline is exposed as a subcommand operating on
JSONL files, so a full experiment can be scripted step by step or run in
one shot with ``reranklab run``. Seeds resolve as: explicit flag, then
the RERANK_LAB_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import dataio
from .analysis import HeuristicRecognizer, align, positional_bias, salient_entity_prf
from .generation import GENERATION_PRESETS, BeamConfig, NgramScorer, generate_candidates
from .metrics import corpus_mean, get_metric, metric_names, paired_significance
from .pipeline import (
    PIPELINE_PRESETS,
    SEED_ENV_VAR,
    resolve_config,
    run_experiment,
    score_candidates,
)
from .scoring import load_model, save_model
from .selection import ORACLE_MODES, oracle_select, origin_select, select, sweep_candidates
from .synthdata import SynthConfig, synth_corpus, synth_ranking_corpus
from .training import TrainerConfig, TrainingSession, build_ranking_examples
from .dataio import FORMAT_VERSION

__all__ = ["main", "default_seed"]


def default_seed() -> int:
    """Seed from RERANK_LAB_SEED, falling back to 0."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _add_seed(parser):
    parser.add_argument(
        "--seed", type=int, default=None,
        help=f"random seed (default: ${SEED_ENV_VAR} or 0)",
    )


def _beam_config(args) -> BeamConfig:
    if args.preset is not None:
        return GENERATION_PRESETS[args.preset]
    return BeamConfig(
        beam_width=args.beam_width,
        num_groups=args.num_groups,
        diversity_penalty=args.diversity_penalty,
        max_length=args.max_length,
    )


def _load_pairs(data_path, candidates_path):
    examples = dataio.read_dataset(data_path)
    csets = dataio.read_candidates(candidates_path)
    if len(examples) != len(csets):
        raise SystemExit(
            f"{data_path} has {len(examples)} examples but "
            f"{candidates_path} has {len(csets)} candidate sets"
        )
    for ex, cs in zip(examples, csets):
        if ex.id != cs.example_id:
            raise SystemExit(f"id mismatch: {ex.id!r} vs {cs.example_id!r}")
    return examples, csets


def _print_json(payload) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def cmd_ingest(args) -> None:
    examples = dataio.read_dataset(args.input, max_doc_tokens=args.max_doc_tokens)
    dataio.write_dataset(examples, args.output)
    _print_json({"examples": len(examples), "output": str(args.output)})


def cmd_generate(args) -> None:
    examples = dataio.read_dataset(args.data)
    config = _beam_config(args)
    scorer = NgramScorer(order=args.ngram_order, alpha=args.alpha)
    csets = generate_candidates(examples, scorer, config)
    dataio.write_candidates(csets, args.output)
    degenerate = sum(cs.degenerate for cs in csets)
    _print_json(
        {
            "candidate_sets": len(csets),
            "candidates_per_example": config.beam_width,
            "degenerate": degenerate,
            "output": str(args.output),
        }
    )


def cmd_score_candidates(args) -> None:
    examples, csets = _load_pairs(args.data, args.candidates)
    scored = score_candidates(examples, csets, args.metric)
    dataio.write_candidates(scored, args.output)
    _print_json({"candidate_sets": len(scored), "metric": args.metric, "output": str(args.output)})


def cmd_train(args) -> None:
    seed = _resolve_seed(args)
    train_examples, train_csets = _load_pairs(args.train_data, args.train_candidates)
    valid_examples, valid_csets = _load_pairs(args.valid_data, args.valid_candidates)
    train_rank = build_ranking_examples(train_examples, train_csets)
    valid_rank = build_ranking_examples(valid_examples, valid_csets)
    config = TrainerConfig(
        margin=args.margin,
        batch_size=args.batch_size,
        warmup_steps=args.warmup_steps,
        lr_scale=args.lr_scale,
        eval_every=args.eval_every,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
        d=args.dim,
        max_tokens=args.max_tokens,
    )
    if args.resume:
        session = TrainingSession.resume(train_rank, valid_rank, config, args.resume)
    else:
        session = TrainingSession(train_rank, valid_rank, config)
    result = session.run()
    save_model(result.model, args.output)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            for entry in result.history:
                fh.write(dataio.dumps_canonical(entry) + "\n")
    if args.state_out:
        session.save_state(args.state_out)
    _print_json(
        {
            "steps": result.steps,
            "best_step": result.best_step,
            "best_valid_mean_f": result.best_valid_mean_f,
            "checkpoint": str(args.output),
        }
    )


def cmd_rerank(args) -> None:
    model = load_model(args.model)
    examples, csets = _load_pairs(args.data, args.candidates)
    selections = [select(model, ex, cs, limit=args.limit) for ex, cs in zip(examples, csets)]
    dataio.write_selections(selections, args.output)
    _print_json({"selections": len(selections), "output": str(args.output)})


def cmd_oracle(args) -> None:
    csets = dataio.read_candidates(args.candidates)
    if args.mode == "origin":
        selections = [origin_select(cs) for cs in csets]
    else:
        seed = _resolve_seed(args)
        selections = [oracle_select(cs, args.mode, seed=seed, limit=args.limit) for cs in csets]
    dataio.write_selections(selections, args.output)
    _print_json({"selector": args.mode, "selections": len(selections), "output": str(args.output)})


def cmd_sweep(args) -> None:
    model = load_model(args.model)
    examples, csets = _load_pairs(args.data, args.candidates)
    ks = [int(k) for k in args.ks.split(",")] if args.ks else None
    rows = sweep_candidates(model, examples, csets, ks=ks)
    dataio.write_tsv(
        args.output,
        ("k", "model_mean_f", "oracle_max_mean_f"),
        [(r.k, r.model.mean_f, r.oracle_max.mean_f) for r in rows],
    )
    _print_json({"rows": len(rows), "output": str(args.output)})


def _reports_for_selections(examples, selections, metric_fn):
    by_id = {ex.id: ex for ex in examples}
    reports = []
    for sel in selections:
        ex = by_id.get(sel.example_id)
        if ex is None:
            raise SystemExit(f"selection {sel.example_id!r} has no example in the dataset")
        if ex.reference is None:
            raise SystemExit(f"example {ex.id!r} has no reference")
        reports.append(metric_fn(sel.summary, ex.reference))
    return reports


def _parse_system_arg(raw: str) -> tuple[str, str]:
    if "=" in raw:
        name, _, path = raw.partition("=")
        return name, path
    return Path(raw).stem.replace("selections.", ""), raw


def cmd_evaluate(args) -> None:
    examples = dataio.read_dataset(args.data)
    metric_fn = get_metric(args.metric)
    rows = []
    systems = {}
    for raw in args.selections:
        name, path = _parse_system_arg(raw)
        selections = dataio.read_selections(path)
        mean = corpus_mean(_reports_for_selections(examples, selections, metric_fn))
        systems[name] = mean.to_dict()
        rows.append(
            (
                name,
                mean.r1.precision, mean.r1.recall, mean.r1.f1,
                mean.r2.precision, mean.r2.recall, mean.r2.f1,
                mean.rl.precision, mean.rl.recall, mean.rl.f1,
                mean.mean_f,
            )
        )
    if args.output_tsv:
        dataio.write_tsv(
            args.output_tsv,
            ("system", "r1_p", "r1_r", "r1_f", "r2_p", "r2_r", "r2_f", "rl_p", "rl_r", "rl_f", "mean_f"),
            rows,
        )
    payload = {"format_version": FORMAT_VERSION, "metric": args.metric, "systems": systems}
    if args.output_json:
        dataio.write_json(args.output_json, payload)
    _print_json(payload)


def cmd_significance(args) -> None:
    seed = _resolve_seed(args)
    examples = dataio.read_dataset(args.data)
    metric_fn = get_metric(args.metric)
    reports_a = _reports_for_selections(examples, dataio.read_selections(args.a), metric_fn)
    reports_b = _reports_for_selections(examples, dataio.read_selections(args.b), metric_fn)
    report = paired_significance(reports_a, reports_b, resamples=args.resamples, seed=seed)
    payload = {"format_version": FORMAT_VERSION, **report.to_dict()}
    if args.output:
        dataio.write_json(args.output, payload)
    _print_json(payload)


def _load_gazetteer(path) -> tuple[str, ...]:
    if path is None:
        return ()
    with open(path, encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


def cmd_analyze(args) -> None:
    examples = dataio.read_dataset(args.data)
    selections = dataio.read_selections(args.selections)
    by_id = {ex.id: ex for ex in examples}
    pairs = []
    for sel in selections:
        ex = by_id.get(sel.example_id)
        if ex is None:
            raise SystemExit(f"selection {sel.example_id!r} has no example in the dataset")
        pairs.append((ex, sel))

    system = args.system or Path(args.selections).stem.replace("selections.", "")
    if args.kind == "entities":
        recognizer = HeuristicRecognizer(gazetteer=_load_gazetteer(args.gazetteer))
        ids, prfs = [], []
        for ex, sel in pairs:
            if not ex.reference:
                continue
            ids.append(ex.id)
            prfs.append(salient_entity_prf(ex.document_raw or ex.document, ex.reference, sel.summary, recognizer))
        if not prfs:
            raise SystemExit("no scorable examples (references required)")
        payload = {
            "examples": len(prfs),
            "precision": sum(p.precision for p in prfs) / len(prfs),
            "recall": sum(p.recall for p in prfs) / len(prfs),
            "f1": sum(p.f1 for p in prfs) / len(prfs),
        }
        table = (
            ("id", "p", "r", "f1", "n_salient", "n_system"),
            [
                (i, p.precision, p.recall, p.f1, len(p.salient_entities), len(p.system_entities))
                for i, p in zip(ids, prfs)
            ],
        )
    elif args.kind == "alignment":
        rows = []
        flat = []
        for ex, sel in pairs:
            if not sel.summary or not ex.document:
                continue
            amap = align(sel.summary, ex.document)
            rows.append(
                {
                    "id": ex.id,
                    "alignment": [
                        {
                            "summary_ordinal": a.summary_ordinal,
                            "source_ordinal": a.source_ordinal,
                            "score": a.score,
                        }
                        for a in amap.matches
                    ],
                }
            )
            flat.extend(
                (ex.id, a.summary_ordinal, a.source_ordinal, a.score) for a in amap.matches
            )
        payload = {"examples": len(rows), "alignments": rows}
        table = (("id", "summary_ordinal", "source_ordinal", "score"), flat)
    else:
        histogram = positional_bias(
            [ex for ex, _ in pairs],
            [sel.summary for _, sel in pairs],
            min_sentences=args.min_sentences,
            truncate_tokens=args.truncate_tokens,
        )
        payload = histogram.to_dict()
        table = (
            ("bin", "count", "ratio"),
            [(i, c, r) for i, (c, r) in enumerate(zip(histogram.counts, histogram.ratios))],
        )
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write("bin,ratio,system\n")
                for i, r in enumerate(histogram.ratios):
                    fh.write(f"{i},{r:.6f},{system}\n")

    if args.table:
        dataio.write_tsv(args.table, table[0], table[1])
    if args.output:
        dataio.write_json(args.output, {"format_version": FORMAT_VERSION, "kind": args.kind, "system": system, **payload})
    _print_json(payload)


def cmd_synth_data(args) -> None:
    seed = _resolve_seed(args)
    if args.kind == "grammar":
        examples = synth_corpus(SynthConfig(n_examples=args.n, seed=seed, id_prefix=args.prefix))
        dataio.write_dataset(examples, args.output)
        payload = {"kind": args.kind, "examples": len(examples), "output": str(args.output)}
    else:
        examples, csets = synth_ranking_corpus(
            n_examples=args.n, seed=seed, id_prefix=args.prefix
        )
        dataio.write_dataset(examples, args.output)
        payload = {"kind": args.kind, "examples": len(examples), "output": str(args.output)}
        if args.candidates_out:
            dataio.write_candidates(csets, args.candidates_out)
            payload["candidates_output"] = str(args.candidates_out)
    _print_json(payload)


def cmd_run(args) -> None:
    file_config = None
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_config = json.load(fh)
    flags = {
        "preset": args.preset,
        "seed": args.seed,
        "corpus": args.corpus,
        "n_train": args.n_train,
        "n_valid": args.n_valid,
        "n_test": args.n_test,
        "max_epochs": args.max_epochs,
        "eval_every": args.eval_every,
        "threads": args.threads,
    }
    config = resolve_config(file_config=file_config, flags=flags)
    outdir = run_experiment(config, args.out)
    _print_json({"preset": config.preset, "seed": config.seed, "outdir": str(outdir)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reranklab",
        description="Generate, score, and rerank candidate summaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a raw JSONL dataset")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--max-doc-tokens", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="decode diverse candidates for every example")
    p.add_argument("data")
    p.add_argument("output")
    p.add_argument("--preset", choices=sorted(GENERATION_PRESETS), default=None)
    p.add_argument("--beam-width", type=int, default=16)
    p.add_argument("--num-groups", type=int, default=16)
    p.add_argument("--diversity-penalty", type=float, default=1.0)
    p.add_argument("--max-length", type=int, default=32)
    p.add_argument("--ngram-order", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score-candidates", help="annotate candidates with metric reports")
    p.add_argument("data")
    p.add_argument("candidates")
    p.add_argument("output")
    p.add_argument("--metric", choices=metric_names(), default="rouge")
    p.set_defaults(func=cmd_score_candidates)

    p = sub.add_parser("train", help="train the candidate scorer")
    p.add_argument("--train-data", required=True)
    p.add_argument("--train-candidates", required=True)
    p.add_argument("--valid-data", required=True)
    p.add_argument("--valid-candidates", required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--history", default=None, help="JSONL training log path")
    p.add_argument("--state-out", default=None, help="directory for resumable state")
    p.add_argument("--resume", default=None, help="state directory from a prior --state-out")
    p.add_argument("--margin", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--warmup-steps", type=int, default=10000)
    p.add_argument("--lr-scale", type=float, default=0.002)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--max-epochs", type=int, default=5)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--max-tokens", type=int, default=256)
    _add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="select candidates with a trained scorer")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("candidates")
    p.add_argument("output")
    p.add_argument("--limit", type=int, default=None, help="consider only the first k candidates")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("oracle", help="metric-oracle and baseline selectors")
    p.add_argument("candidates")
    p.add_argument("output")
    p.add_argument("--mode", choices=(*ORACLE_MODES, "origin"), required=True)
    p.add_argument("--limit", type=int, default=None)
    _add_seed(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="selection quality as the candidate count grows")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("candidates")
    p.add_argument("output")
    p.add_argument("--ks", default=None, help="comma-separated candidate counts")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="score one or more selection files")
    p.add_argument("data")
    p.add_argument("selections", nargs="+", help="selection files, optionally name=path")
    p.add_argument("--metric", choices=metric_names(), default="rouge")
    p.add_argument("--output-tsv", default=None)
    p.add_argument("--output-json", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("significance", help="paired bootstrap comparison of two systems")
    p.add_argument("data")
    p.add_argument("a", help="selections for system A")
    p.add_argument("b", help="selections for system B")
    p.add_argument("--metric", choices=metric_names(), default="rouge")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--output", default=None)
    _add_seed(p)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("analyze", help="fine-grained summary analyses")
    p.add_argument("kind", choices=("entities", "alignment", "position-bias"))
    p.add_argument("data")
    p.add_argument("selections")
    p.add_argument("--gazetteer", default=None, help="file with one entity per line")
    p.add_argument("--min-sentences", type=int, default=30)
    p.add_argument("--truncate-tokens", type=int, default=None)
    p.add_argument("--system", default=None, help="system label for reports (default: selections filename)")
    p.add_argument("--output", default=None, help="JSON report path")
    p.add_argument("--table", default=None, help="TSV table path")
    p.add_argument("--csv", default=None, help="position-bias only: plot-ready CSV (bin, ratio, system)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus")
    p.add_argument("output")
    p.add_argument("--kind", choices=("grammar", "ranking-task"), default="grammar")
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--candidates-out", default=None, help="ranking-task: write candidates here")
    _add_seed(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("run", help="run the full pipeline into a directory")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PIPELINE_PRESETS), default=None)
    p.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    p.add_argument("--corpus", choices=("grammar", "ranking-task"), default=None)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-valid", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker count (results are identical; 1 is bit-reproducible)")
    _add_seed(p)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (KeyError, OSError, RuntimeError, ValueError) as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
