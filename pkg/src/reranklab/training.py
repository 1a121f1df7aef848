"""Contrastive training of the candidate scorer.

Candidates are sorted by metric quality; the loss demands that the model's
score order agrees with the metric order, with a margin that grows with
the rank gap, and that the gold reference outscores every candidate. Both
demands are hinges on score differences, summed in a fixed order:
reference terms in candidate order first, then pair terms in lexicographic
(i, j) order.

Optimization is Adam under an inverse-square-root schedule with linear
warmup; validation runs every ``eval_every`` steps and the best checkpoint
by selection quality is kept.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generation import CandidateSet
from .scoring import (
    Gradient,
    ScoreModel,
    encode_backward,
    encode_ids,
    new_model,
    save_model,
    load_model,
    token_ids,
)
from .textkit import Example, normalize, tokenize

__all__ = [
    "RankingExample",
    "TrainerConfig",
    "OptimizerState",
    "TrainResult",
    "TrainingSession",
    "build_ranking_examples",
    "pair_margin",
    "hinge_loss_from_scores",
    "ranking_loss",
    "lr_at",
    "adam_step",
    "train",
    "pairwise_ranking_accuracy",
    "save_optimizer",
    "load_optimizer",
]

OPTIMIZER_FORMAT_VERSION = 1
SESSION_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RankingExample:
    """One training unit: candidates sorted by quality, best first.

    ``candidates[k]`` is the k-th best candidate by ``mean_f[k]`` (stable
    sort, so metric ties keep generation order); ``source_indices[k]`` is
    its position in the original candidate set.
    """

    example_id: str
    document: str
    reference: str
    candidates: tuple[str, ...]
    mean_f: tuple[float, ...]
    source_indices: tuple[int, ...]

    def __post_init__(self):
        n = len(self.candidates)
        if n == 0:
            raise ValueError(f"{self.example_id!r}: no candidates to rank")
        if len(self.mean_f) != n or len(self.source_indices) != n:
            raise ValueError(f"{self.example_id!r}: field lengths disagree")
        if any(a < b for a, b in zip(self.mean_f, self.mean_f[1:])):
            raise ValueError(f"{self.example_id!r}: candidates are not sorted by quality")

    @classmethod
    def from_candidate_set(cls, example: Example, cset: CandidateSet) -> "RankingExample":
        if example.reference is None:
            raise ValueError(f"example {example.id!r} has no reference; cannot train on it")
        if cset.metrics is None:
            raise ValueError(f"example {example.id!r} has no metric annotations")
        keys = [m.mean_f for m in cset.metrics]
        order = sorted(range(len(keys)), key=lambda i: -keys[i])
        return cls(
            example_id=example.id,
            document=example.document,
            reference=example.reference,
            candidates=tuple(cset.candidates[i] for i in order),
            mean_f=tuple(keys[i] for i in order),
            source_indices=tuple(order),
        )


def build_ranking_examples(
    examples: Sequence[Example], candidate_sets: Sequence[CandidateSet]
) -> list[RankingExample]:
    """Pair examples with their annotated candidate sets, by position and id."""
    if len(examples) != len(candidate_sets):
        raise ValueError(
            f"{len(examples)} examples but {len(candidate_sets)} candidate sets"
        )
    out = []
    for ex, cs in zip(examples, candidate_sets):
        if ex.id != cs.example_id:
            raise ValueError(f"id mismatch: example {ex.id!r} vs candidates {cs.example_id!r}")
        out.append(RankingExample.from_candidate_set(ex, cs))
    return out


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters. Defaults follow the framework's standard recipe."""

    margin: float = 0.01
    batch_size: int = 32
    warmup_steps: int = 10000
    lr_scale: float = 0.002
    eval_every: int = 1000
    max_epochs: int = 5
    patience: int = 10
    seed: int = 0
    d: int = 64
    max_tokens: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.warmup_steps < 1:
            raise ValueError(f"warmup_steps must be >= 1, got {self.warmup_steps}")
        if self.lr_scale <= 0:
            raise ValueError(f"lr_scale must be positive, got {self.lr_scale}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


def lr_at(step: int, config: TrainerConfig = TrainerConfig()) -> float:
    """Warmup then inverse-square-root decay.

    ``lr_scale * min(step ** -0.5, step * warmup_steps ** -1.5)`` for a
    1-based step number. The two branches meet exactly at
    ``step == warmup_steps``.
    """
    if step < 1:
        raise ValueError(f"step numbers are 1-based, got {step}")
    return config.lr_scale * min(step**-0.5, step * config.warmup_steps**-1.5)


def pair_margin(i: int, j: int, margin: float) -> float:
    """Required score gap between sorted candidates i and j (0-based, i < j)."""
    return (j - i) * margin


def hinge_loss_from_scores(
    ref_score: float, cand_scores: Sequence[float], margin: float
) -> tuple[float, float, np.ndarray]:
    """The ranking objective as a pure function of scores.

    ``cand_scores`` must follow quality order, best first. Returns
    ``(loss, d_loss/d_ref_score, d_loss/d_cand_scores)``. Hinges that sit
    exactly at zero contribute neither loss nor gradient.
    """
    scores = list(cand_scores)
    n = len(scores)
    g = np.zeros(n)
    g_ref = 0.0
    loss = 0.0
    for i in range(n):
        v = scores[i] - ref_score
        if v > 0:
            loss += v
            g[i] += 1.0
            g_ref -= 1.0
    for i in range(n):
        for j in range(i + 1, n):
            v = scores[j] - scores[i] + pair_margin(i, j, margin)
            if v > 0:
                loss += v
                g[j] += 1.0
                g[i] -= 1.0
    return loss, g_ref, g


def _loss_from_ids(
    model: ScoreModel,
    doc_ids: np.ndarray,
    ref_ids: np.ndarray,
    cand_ids: Sequence[np.ndarray],
    margin: float,
    out: Gradient,
) -> float:
    """Forward + backward of one example, accumulating into ``out``."""
    doc_vec, doc_trace = encode_ids(model, doc_ids)
    ref_vec, ref_trace = encode_ids(model, ref_ids)
    cand = [encode_ids(model, ids) for ids in cand_ids]
    scores = [float(vec @ doc_vec) for vec, _ in cand]
    ref_score = float(ref_vec @ doc_vec)
    loss, g_ref, g = hinge_loss_from_scores(ref_score, scores, margin)

    g_doc = np.zeros(model.d)
    for coeff, (vec, trace) in zip(g, cand):
        if coeff != 0.0:
            encode_backward(model, trace, coeff * doc_vec, out=out)
            g_doc += coeff * vec
    if g_ref != 0.0:
        encode_backward(model, ref_trace, g_ref * doc_vec, out=out)
        g_doc += g_ref * ref_vec
    if np.any(g_doc):
        encode_backward(model, doc_trace, g_doc, out=out)
    return loss


def ranking_loss(
    model: ScoreModel, ex: RankingExample, margin: float = 0.01
) -> tuple[float, Gradient]:
    """Loss and exact parameter gradient for one sorted example."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    grad = Gradient.zeros(model)
    loss = _loss_from_ids(
        model,
        token_ids(model, ex.document),
        token_ids(model, ex.reference),
        [token_ids(model, c) for c in ex.candidates],
        margin,
        grad,
    )
    return loss, grad


@dataclass
class OptimizerState:
    """Adam first/second moments per parameter group, plus the step count."""

    m: Gradient
    v: Gradient
    step: int = 0

    @classmethod
    def zeros(cls, model: ScoreModel) -> "OptimizerState":
        return cls(m=Gradient.zeros(model), v=Gradient.zeros(model), step=0)


def adam_step(
    model: ScoreModel,
    grad: Gradient,
    state: OptimizerState,
    lr: float,
    config: TrainerConfig = TrainerConfig(),
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    b1, b2, eps = config.beta1, config.beta2, config.eps
    for param, g, m, v in zip(
        (model.embedding, model.pooling, model.projection),
        grad.arrays(),
        state.m.arrays(),
        state.v.arrays(),
    ):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def save_optimizer(state: OptimizerState, path) -> None:
    shapes = [list(a.shape) for a in state.m.arrays()]
    header = {
        "format_version": OPTIMIZER_FORMAT_VERSION,
        "kind": "optimizer",
        "step": state.step,
        "shapes": shapes,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8"))
        for arr in (*state.m.arrays(), *state.v.arrays()):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_optimizer(path) -> OptimizerState:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    if header.get("format_version") != OPTIMIZER_FORMAT_VERSION:
        raise ValueError(
            f"unsupported optimizer format_version {header.get('format_version')!r}"
        )
    shapes = [tuple(s) for s in header["shapes"]]
    sizes = [int(np.prod(s)) for s in shapes] * 2
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != sum(sizes):
        raise ValueError("optimizer payload size does not match its header")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    arrays = [p.reshape(s).copy() for p, s in zip(parts, shapes * 2)]
    return OptimizerState(
        m=Gradient(*arrays[:3]), v=Gradient(*arrays[3:]), step=header["step"]
    )


def _corpus_vocabulary(examples: Sequence[RankingExample]) -> tuple[str, ...]:
    words: set[str] = set()
    for ex in examples:
        words.update(tokenize(normalize(ex.document)).tokens)
        words.update(tokenize(normalize(ex.reference)).tokens)
        for c in ex.candidates:
            words.update(tokenize(normalize(c)).tokens)
    return tuple(sorted(words))


@dataclass
class _Prepped:
    doc: np.ndarray
    ref: np.ndarray
    cands: list[np.ndarray]
    mean_f: tuple[float, ...]


@dataclass
class TrainResult:
    model: ScoreModel
    history: list[dict]
    steps: int
    best_step: int
    best_valid_mean_f: float


class TrainingSession:
    """Stepwise training driver.

    The batch schedule is a pure function of (seed, step): epoch
    permutations come from a per-epoch seeded RNG and batches are
    consecutive slices, so a resumed session continues bit-exactly where
    the saved one stopped.
    """

    def __init__(
        self,
        train_data: Sequence[RankingExample],
        valid_data: Sequence[RankingExample],
        config: TrainerConfig = TrainerConfig(),
        model: ScoreModel | None = None,
    ):
        if not train_data:
            raise ValueError("training corpus is empty")
        if not valid_data:
            raise ValueError("validation corpus is empty")
        self.config = config
        self.train_data = list(train_data)
        self.valid_data = list(valid_data)
        if model is None:
            vocab = _corpus_vocabulary(self.train_data)
            model = new_model(vocab, d=config.d, max_tokens=config.max_tokens, seed=config.seed)
        self.model = model
        self.opt = OptimizerState.zeros(model)
        self.step = 0
        self.history: list[dict] = []
        self.best_params: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self.best_valid = -np.inf
        self.best_step = 0
        self.stale = 0
        self._train_prep = [self._prep(ex) for ex in self.train_data]
        self._valid_prep = [self._prep(ex) for ex in self.valid_data]
        n = len(self.train_data)
        self.steps_per_epoch = (n + config.batch_size - 1) // config.batch_size

    def _prep(self, ex: RankingExample) -> _Prepped:
        return _Prepped(
            doc=token_ids(self.model, ex.document),
            ref=token_ids(self.model, ex.reference),
            cands=[token_ids(self.model, c) for c in ex.candidates],
            mean_f=ex.mean_f,
        )

    def _epoch_order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.config.seed, 101, epoch]).permutation(
            len(self.train_data)
        )

    @property
    def epoch(self) -> int:
        return self.step // self.steps_per_epoch

    def step_once(self) -> float:
        """Run one optimization step; returns the batch mean loss."""
        cfg = self.config
        epoch = self.epoch
        slot = self.step % self.steps_per_epoch
        order = self._epoch_order(epoch)
        batch = order[slot * cfg.batch_size : (slot + 1) * cfg.batch_size]
        grad = Gradient.zeros(self.model)
        total = 0.0
        for idx in batch:
            p = self._train_prep[int(idx)]
            total += _loss_from_ids(self.model, p.doc, p.ref, p.cands, cfg.margin, grad)
        grad.scale_(1.0 / len(batch))
        mean_loss = total / len(batch)
        self.step += 1
        lr = lr_at(self.step, cfg)
        adam_step(self.model, grad, self.opt, lr, cfg)
        self.history.append(
            {"step": self.step, "epoch": epoch, "loss": mean_loss, "lr": lr}
        )
        return mean_loss

    def validate(self) -> float:
        """Selection quality on the validation corpus with the current model.

        For each example the model picks its top-scoring candidate (ties
        to the lowest index); the returned value is the corpus mean of the
        chosen candidates' mean_f annotations.
        """
        total = 0.0
        for p in self._valid_prep:
            doc_vec, _ = encode_ids(self.model, p.doc)
            scores = [float(encode_ids(self.model, ids)[0] @ doc_vec) for ids in p.cands]
            best = max(range(len(scores)), key=lambda i: (scores[i], -i))
            total += p.mean_f[best]
        return total / len(self._valid_prep)

    def evaluate_once(self) -> float:
        """Validate and fold the result into best-checkpoint tracking."""
        valid = self.validate()
        improved = valid > self.best_valid
        if improved:
            self.best_valid = valid
            self.best_step = self.step
            self.best_params = _copy_params(self.model)
            self.stale = 0
        else:
            self.stale += 1
        self.history.append(
            {"step": self.step, "valid_mean_f": valid, "improved": improved}
        )
        return valid

    def run(self) -> TrainResult:
        cfg = self.config
        total_steps = cfg.max_epochs * self.steps_per_epoch
        while self.step < total_steps:
            self.step_once()
            if self.step % cfg.eval_every == 0 or self.step == total_steps:
                self.evaluate_once()
                if self.stale >= cfg.patience:
                    break
        if self.best_params is None:
            # no eval ever ran (few steps, large eval_every): evaluate once
            self.evaluate_once()
        return TrainResult(
            model=self.best_model(),
            history=self.history,
            steps=self.step,
            best_step=self.best_step,
            best_valid_mean_f=self.best_valid,
        )

    def best_model(self) -> ScoreModel:
        """The best checkpoint seen so far (current model before any eval)."""
        params = self.best_params
        if params is None:
            params = _copy_params(self.model)
        return ScoreModel(
            vocabulary=self.model.vocabulary,
            embedding=params[0],
            pooling=params[1],
            projection=params[2],
            max_tokens=self.model.max_tokens,
        )

    def save_state(self, state_dir) -> None:
        """Persist everything a bit-exact continuation needs into a directory.

        Writes ``model.rlm`` (current parameters), ``optimizer.bin`` (Adam
        moments), ``session.json`` (step counter and best-checkpoint
        metadata), and ``best.rlm`` when a best checkpoint exists.
        """
        state_dir = Path(state_dir)
        state_dir.mkdir(parents=True, exist_ok=True)
        save_model(self.model, state_dir / "model.rlm")
        self.opt.step = self.step
        save_optimizer(self.opt, state_dir / "optimizer.bin")
        if self.best_params is not None:
            save_model(self.best_model(), state_dir / "best.rlm")
        meta = {
            "format_version": SESSION_FORMAT_VERSION,
            "kind": "training-session",
            "step": self.step,
            "best_step": self.best_step,
            "best_valid_mean_f": (
                self.best_valid if self.best_params is not None else None
            ),
            "stale": self.stale,
        }
        payload = json.dumps(meta, sort_keys=True, separators=(",", ":"))
        (state_dir / "session.json").write_text(payload + "\n", encoding="utf-8")

    @classmethod
    def resume(
        cls,
        train_data: Sequence[RankingExample],
        valid_data: Sequence[RankingExample],
        config: TrainerConfig,
        state_dir,
    ) -> "TrainingSession":
        """Rebuild a session from :meth:`save_state` output.

        The restored session's future steps, evaluations, and best-model
        choices are bit-identical to what the saved session would have
        produced had it kept running.
        """
        state_dir = Path(state_dir)
        meta = json.loads((state_dir / "session.json").read_text(encoding="utf-8"))
        if meta.get("format_version") != SESSION_FORMAT_VERSION:
            raise ValueError(
                f"unsupported session format_version {meta.get('format_version')!r}"
            )
        session = cls(
            train_data, valid_data, config, model=load_model(state_dir / "model.rlm")
        )
        session.opt = load_optimizer(state_dir / "optimizer.bin")
        session.step = session.opt.step
        if meta["step"] != session.step:
            raise ValueError(
                f"session step {meta['step']} does not match optimizer step {session.step}"
            )
        session.best_step = meta["best_step"]
        session.stale = meta["stale"]
        if meta["best_valid_mean_f"] is not None:
            session.best_valid = meta["best_valid_mean_f"]
            best = load_model(state_dir / "best.rlm")
            session.best_params = (best.embedding, best.pooling, best.projection)
        return session


def _copy_params(model: ScoreModel):
    return (model.embedding.copy(), model.pooling.copy(), model.projection.copy())


def train(
    train_data: Sequence[RankingExample],
    valid_data: Sequence[RankingExample],
    config: TrainerConfig = TrainerConfig(),
    model: ScoreModel | None = None,
) -> TrainResult:
    """Train a scorer; returns the best checkpoint by validation selection."""
    return TrainingSession(train_data, valid_data, config, model=model).run()


def pairwise_ranking_accuracy(model: ScoreModel, data: Sequence[RankingExample]) -> float:
    """Fraction of quality-distinct candidate pairs the model orders correctly."""
    good = 0
    total = 0
    for ex in data:
        doc_vec, _ = encode_ids(model, token_ids(model, ex.document))
        scores = [
            float(encode_ids(model, token_ids(model, c))[0] @ doc_vec)
            for c in ex.candidates
        ]
        for i in range(len(scores)):
            for j in range(i + 1, len(scores)):
                if ex.mean_f[i] == ex.mean_f[j]:
                    continue
                total += 1
                if scores[i] > scores[j]:
                    good += 1
    if total == 0:
        raise ValueError("no quality-distinct candidate pairs to check")
    return good / total
