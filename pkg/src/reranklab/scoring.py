"""Reference-free candidate scoring with a trainable dual encoder.

A candidate summary and its source document are encoded separately by the
same tiny network (embedding lookup, attention pooling, linear projection,
L2 normalization); their cosine similarity is the candidate's score. The
whole graph has a hand-derived exact backward pass so training needs no
autodiff framework, and gradients are checkable against finite
differences.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .textkit import normalize, tokenize

__all__ = [
    "ScoreModel",
    "Gradient",
    "EncodeTrace",
    "ScoreTrace",
    "new_model",
    "token_ids",
    "encode",
    "encode_ids",
    "encode_with_trace",
    "score",
    "score_with_trace",
    "encode_backward",
    "backward",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1

_tag_counter = itertools.count(1)


@dataclass
class ScoreModel:
    """Parameters of the dual encoder.

    ``embedding`` has one row per vocabulary entry plus a final row for
    out-of-vocabulary tokens. All arrays are float64; ``projection`` is
    applied as a matrix-vector product on the pooled embedding.
    """

    vocabulary: tuple[str, ...]
    embedding: np.ndarray
    pooling: np.ndarray
    projection: np.ndarray
    max_tokens: int = 256
    _tok2id: dict = field(default_factory=dict, repr=False, compare=False)
    _tag: int = field(default_factory=lambda: next(_tag_counter), repr=False, compare=False)

    def __post_init__(self):
        v, d = len(self.vocabulary), self.d
        if self.embedding.shape != (v + 1, d):
            raise ValueError(
                f"embedding must be ({v + 1}, {d}), got {self.embedding.shape}"
            )
        if self.pooling.shape != (d,):
            raise ValueError(f"pooling must be ({d},), got {self.pooling.shape}")
        if self.projection.shape != (d, d):
            raise ValueError(f"projection must be ({d}, {d}), got {self.projection.shape}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not self._tok2id:
            self._tok2id = {t: i for i, t in enumerate(self.vocabulary)}

    @property
    def d(self) -> int:
        return self.pooling.shape[0] if self.pooling.ndim else 0

    @property
    def oov_id(self) -> int:
        return len(self.vocabulary)


def new_model(
    vocabulary: Sequence[str],
    d: int = 64,
    max_tokens: int = 256,
    seed: int = 0,
) -> ScoreModel:
    """Seeded initialization.

    Embeddings and the pooling vector start uniform in [-0.1, 0.1]; the
    projection starts at identity plus uniform noise in [-0.01, 0.01], so
    an untrained encoder is close to a plain attention-pooled embedding.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    vocab = tuple(vocabulary)
    if len(set(vocab)) != len(vocab):
        raise ValueError("vocabulary contains duplicate tokens")
    rng = np.random.default_rng(seed)
    embedding = rng.uniform(-0.1, 0.1, size=(len(vocab) + 1, d))
    pooling = rng.uniform(-0.1, 0.1, size=d)
    projection = np.eye(d) + rng.uniform(-0.01, 0.01, size=(d, d))
    return ScoreModel(
        vocabulary=vocab,
        embedding=embedding,
        pooling=pooling,
        projection=projection,
        max_tokens=max_tokens,
    )


@dataclass
class Gradient:
    """Gradients for every parameter group of a :class:`ScoreModel`."""

    embedding: np.ndarray
    pooling: np.ndarray
    projection: np.ndarray

    @classmethod
    def zeros(cls, model: ScoreModel) -> "Gradient":
        return cls(
            embedding=np.zeros_like(model.embedding),
            pooling=np.zeros_like(model.pooling),
            projection=np.zeros_like(model.projection),
        )

    def scale_(self, c: float) -> "Gradient":
        self.embedding *= c
        self.pooling *= c
        self.projection *= c
        return self

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.embedding, self.pooling, self.projection


@dataclass
class EncodeTrace:
    """Cached intermediates of one encode, enough for an exact backward."""

    ids: np.ndarray
    attn: np.ndarray
    pooled: np.ndarray
    z: np.ndarray
    norm: float
    out: np.ndarray
    degenerate: bool
    model_tag: int


def token_ids(model: ScoreModel, text: str) -> np.ndarray:
    """Normalize, tokenize, truncate to ``max_tokens``, map to row ids."""
    toks = tokenize(normalize(text)).tokens[: model.max_tokens]
    oov = model.oov_id
    return np.array([model._tok2id.get(t, oov) for t in toks], dtype=np.intp)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def encode_ids(model: ScoreModel, ids: np.ndarray) -> tuple[np.ndarray, EncodeTrace]:
    """Encode pre-mapped token ids; returns the unit vector and its trace.

    Empty input is flagged degenerate and encodes as the projected,
    normalized out-of-vocabulary embedding, so downstream scoring never
    sees a shape error.
    """
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() > model.oov_id):
        raise ValueError("token id out of range for this model")
    if ids.size == 0:
        attn = np.zeros(0)
        pooled = model.embedding[model.oov_id].copy()
        degenerate = True
    else:
        rows = model.embedding[ids]
        attn = _softmax(rows @ model.pooling)
        pooled = attn @ rows
        degenerate = False
    z = model.projection @ pooled
    norm = float(np.linalg.norm(z))
    if norm < 1e-12:
        raise ValueError("encoding collapsed to the zero vector; cannot normalize")
    out = z / norm
    trace = EncodeTrace(
        ids=ids,
        attn=attn,
        pooled=pooled,
        z=z,
        norm=norm,
        out=out,
        degenerate=degenerate,
        model_tag=model._tag,
    )
    return out, trace


def encode_with_trace(model: ScoreModel, text: str) -> tuple[np.ndarray, EncodeTrace]:
    return encode_ids(model, token_ids(model, text))


def encode(model: ScoreModel, text: str) -> np.ndarray:
    """Unit-norm encoding of ``text``. See :func:`encode_ids` for edge cases."""
    return encode_with_trace(model, text)[0]


@dataclass
class ScoreTrace:
    candidate: EncodeTrace
    document: EncodeTrace
    value: float


def score_with_trace(model: ScoreModel, candidate: str, document: str) -> tuple[float, ScoreTrace]:
    u, ct = encode_with_trace(model, candidate)
    v, dt = encode_with_trace(model, document)
    r = float(np.clip(u @ v, -1.0, 1.0))
    return r, ScoreTrace(candidate=ct, document=dt, value=r)


def score(model: ScoreModel, candidate: str, document: str) -> float:
    """Cosine similarity of the two encodings, in [-1, 1]."""
    return score_with_trace(model, candidate, document)[0]


def _check_trace(model: ScoreModel, trace: EncodeTrace) -> None:
    if trace.model_tag != model._tag:
        raise ValueError("trace was recorded with a different model")
    if trace.pooled.shape != (model.d,):
        raise ValueError("trace dimensionality does not match the model")


def encode_backward(
    model: ScoreModel,
    trace: EncodeTrace,
    g_out: np.ndarray,
    out: Gradient | None = None,
) -> Gradient:
    """Backpropagate ``g_out`` (gradient w.r.t. the unit output) through one encode.

    Accumulates into ``out`` when given (and returns it), otherwise
    allocates a fresh zero :class:`Gradient`.
    """
    _check_trace(model, trace)
    grad = out if out is not None else Gradient.zeros(model)
    # through the L2 normalization: out = z / |z|
    o = trace.out
    g_z = (g_out - o * (o @ g_out)) / trace.norm
    # through the projection: z = P @ pooled
    grad.projection += np.outer(g_z, trace.pooled)
    g_p = model.projection.T @ g_z
    if trace.degenerate:
        grad.embedding[model.oov_id] += g_p
        return grad
    rows = model.embedding[trace.ids]
    a = trace.attn
    # pooled = a @ rows
    g_a = rows @ g_p
    g_rows = np.outer(a, g_p)
    # a = softmax(rows @ pooling)
    g_logits = a * (g_a - a @ g_a)
    grad.pooling += rows.T @ g_logits
    g_rows += np.outer(g_logits, model.pooling)
    # scatter: duplicate tokens accumulate into the same row
    np.add.at(grad.embedding, trace.ids, g_rows)
    return grad


def backward(
    model: ScoreModel,
    trace: ScoreTrace,
    upstream: float = 1.0,
    out: Gradient | None = None,
) -> Gradient:
    """Exact gradient of ``upstream * score`` w.r.t. all model parameters."""
    grad = out if out is not None else Gradient.zeros(model)
    u = trace.candidate.out
    v = trace.document.out
    encode_backward(model, trace.candidate, upstream * v, out=grad)
    encode_backward(model, trace.document, upstream * u, out=grad)
    return grad


def _header_bytes(model: ScoreModel) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "score-model",
        "d": model.d,
        "max_tokens": model.max_tokens,
        "vocabulary": list(model.vocabulary),
    }
    return (json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def save_model(model: ScoreModel, path) -> None:
    """Write the checkpoint container: JSON header line, then parameters.

    Parameter bytes are little-endian float64 in a fixed order (embedding
    rows, pooling vector, projection row-major), so save/load round-trips
    are byte-identical.
    """
    with open(path, "wb") as fh:
        fh.write(_header_bytes(model))
        for arr in (model.embedding, model.pooling, model.projection):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> ScoreModel:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format_version {version!r}; this reader handles {FORMAT_VERSION}"
        )
    vocab = tuple(header["vocabulary"])
    d = header["d"]
    v = len(vocab)
    counts = [(v + 1) * d, d, d * d]
    if len(blob) != 8 * sum(counts):
        raise ValueError(
            f"checkpoint payload is {len(blob)} bytes, expected {8 * sum(counts)}"
        )
    flat = np.frombuffer(blob, dtype="<f8")
    emb, pool, proj = np.split(flat, np.cumsum(counts)[:-1])
    return ScoreModel(
        vocabulary=vocab,
        embedding=emb.reshape(v + 1, d).copy(),
        pooling=pool.copy(),
        projection=proj.reshape(d, d).copy(),
        max_tokens=header["max_tokens"],
    )
