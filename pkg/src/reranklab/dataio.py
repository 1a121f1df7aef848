"""Line-oriented file formats and their readers/writers.

Three JSONL formats travel between pipeline stages:

* dataset: ``{"id", "document", "reference"?}`` per line, raw text as
  supplied (this is the external interchange format and carries no
  version field);
* candidates: ``{"format_version", "id", "candidates": [...],
  "degenerate", "metrics"?}``;
* selections: ``{"format_version", "id", "summary", "selector",
  "index", "score"}``.

Writers emit canonical JSON (sorted keys, tight separators, ``\\n``
endings) so identical data always produces identical bytes. Readers of
versioned formats reject unknown format versions loudly.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path

from .generation import CandidateSet
from .metrics import MetricReport
from .selection import SelectionResult
from .textkit import Example, tokenize

__all__ = [
    "FORMAT_VERSION",
    "dumps_canonical",
    "read_dataset",
    "write_dataset",
    "read_candidates",
    "write_candidates",
    "read_selections",
    "write_selections",
    "write_tsv",
    "write_json",
]

FORMAT_VERSION = 1


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _check_version(obj: dict, path, lineno: int) -> None:
    v = obj.get("format_version")
    if v != FORMAT_VERSION:
        raise ValueError(
            f"{path}:{lineno}: format_version {v!r} not supported (reader handles {FORMAT_VERSION})"
        )


def _iter_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def read_dataset(path, max_doc_tokens: int | None = None) -> list[Example]:
    """Ingest a dataset file: validate, normalize, keep raw copies.

    Duplicate ids and malformed lines are hard errors naming the line.
    ``max_doc_tokens`` optionally truncates each document to its first N
    tokens, cut on a token boundary in both the normalized and the
    original-case copy.
    """
    examples: list[Example] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "document"):
            if key not in obj:
                raise ValueError(f"{path}:{lineno}: missing required field {key!r}")
        ex_id = obj["id"]
        if not isinstance(ex_id, str) or not ex_id:
            raise ValueError(f"{path}:{lineno}: id must be a non-empty string")
        if not isinstance(obj["document"], str):
            raise ValueError(f"{path}:{lineno}: document must be a string")
        reference = obj.get("reference")
        if reference is not None and not isinstance(reference, str):
            raise ValueError(f"{path}:{lineno}: reference must be a string when present")
        if ex_id in seen:
            raise ValueError(
                f"{path}:{lineno}: duplicate id {ex_id!r} (first seen on line {seen[ex_id]})"
            )
        seen[ex_id] = lineno
        ex = Example.from_raw(id=ex_id, document=obj["document"], reference=reference)
        if max_doc_tokens is not None:
            # cut both copies on their own token boundaries (normalization
            # never changes token counts) so writing the corpus back out
            # preserves the truncation
            for attr in ("document", "document_raw"):
                seq = tokenize(getattr(ex, attr))
                if len(seq) > max_doc_tokens:
                    end = seq.spans[max_doc_tokens - 1][1] if max_doc_tokens > 0 else 0
                    setattr(ex, attr, getattr(ex, attr)[:end])
        examples.append(ex)
    return examples


def write_dataset(examples: Sequence[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            obj = {"id": ex.id, "document": ex.document_raw}
            if ex.reference is not None:
                obj["reference"] = ex.reference_raw
            fh.write(dumps_canonical(obj) + "\n")


def write_candidates(csets: Sequence[CandidateSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in csets:
            obj = {
                "format_version": FORMAT_VERSION,
                "id": cs.example_id,
                "candidates": list(cs.candidates),
                "degenerate": cs.degenerate,
            }
            if cs.metrics is not None:
                obj["metrics"] = [m.to_dict() for m in cs.metrics]
            fh.write(dumps_canonical(obj) + "\n")


def read_candidates(path) -> list[CandidateSet]:
    out: list[CandidateSet] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        _check_version(obj, path, lineno)
        for key in ("id", "candidates"):
            if key not in obj:
                raise ValueError(f"{path}:{lineno}: missing required field {key!r}")
        ex_id = obj["id"]
        if ex_id in seen:
            raise ValueError(
                f"{path}:{lineno}: duplicate id {ex_id!r} (first seen on line {seen[ex_id]})"
            )
        seen[ex_id] = lineno
        cands = obj["candidates"]
        if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
            raise ValueError(f"{path}:{lineno}: candidates must be a list of strings")
        metrics = None
        if "metrics" in obj:
            metrics = tuple(MetricReport.from_dict(m) for m in obj["metrics"])
        out.append(
            CandidateSet(
                example_id=ex_id,
                candidates=tuple(cands),
                metrics=metrics,
                degenerate=bool(obj.get("degenerate", False)),
            )
        )
    return out


def write_selections(selections: Sequence[SelectionResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sel in selections:
            obj = {
                "format_version": FORMAT_VERSION,
                "id": sel.example_id,
                "summary": sel.summary,
                "selector": sel.selector,
                "index": sel.index,
                "score": sel.score,
            }
            fh.write(dumps_canonical(obj) + "\n")


def read_selections(path) -> list[SelectionResult]:
    out: list[SelectionResult] = []
    for lineno, obj in _iter_jsonl(path):
        _check_version(obj, path, lineno)
        for key in ("id", "summary", "selector"):
            if key not in obj:
                raise ValueError(f"{path}:{lineno}: missing required field {key!r}")
        out.append(
            SelectionResult(
                example_id=obj["id"],
                selector=obj["selector"],
                index=int(obj.get("index", 0)),
                summary=obj["summary"],
                score=obj.get("score"),
            )
        )
    return out


def write_tsv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plain TSV with repr-stable float formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(c) for c in row) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".6f")
    return str(value)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")
