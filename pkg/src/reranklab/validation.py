"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

from collections.abc import Sequence

from .generation import CandidateSet
from .textkit import Example

__all__ = ["check_examples", "check_candidate_sets", "check_aligned"]


def check_examples(X, require_reference: bool = False) -> list[Example]:
    """Coerce ``X`` into a list of Examples.

    Accepts Example instances or mappings with ``id``/``document`` (and
    optionally ``reference``) keys. Raises ValueError with the offending
    position for anything else.
    """
    if isinstance(X, (str, bytes)) or not isinstance(X, Sequence):
        raise ValueError("X must be a sequence of examples")
    out = []
    for pos, item in enumerate(X):
        if isinstance(item, Example):
            ex = item
        elif isinstance(item, dict):
            try:
                ex = Example.from_raw(
                    item["id"], item["document"], item.get("reference")
                )
            except KeyError as e:
                raise ValueError(f"X[{pos}] is missing required key {e.args[0]!r}") from None
        else:
            raise ValueError(
                f"X[{pos}] must be an Example or a dict, got {type(item).__name__}"
            )
        if require_reference and ex.reference is None:
            raise ValueError(f"X[{pos}] (id {ex.id!r}) has no reference")
        out.append(ex)
    if not out:
        raise ValueError("X is empty")
    return out


def check_candidate_sets(y, n: int) -> list[CandidateSet]:
    if isinstance(y, (str, bytes)) or not isinstance(y, Sequence):
        raise ValueError("y must be a sequence of candidate sets")
    if len(y) != n:
        raise ValueError(f"y has {len(y)} candidate sets for {n} examples")
    out = []
    for pos, item in enumerate(y):
        if not isinstance(item, CandidateSet):
            raise ValueError(f"y[{pos}] must be a CandidateSet, got {type(item).__name__}")
        out.append(item)
    return out


def check_aligned(examples: Sequence[Example], candidate_sets: Sequence[CandidateSet]) -> None:
    for pos, (ex, cs) in enumerate(zip(examples, candidate_sets)):
        if ex.id != cs.example_id:
            raise ValueError(
                f"position {pos}: example id {ex.id!r} does not match candidate set id {cs.example_id!r}"
            )
