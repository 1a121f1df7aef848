"""Text utilities shared by every stage: normalization, tokenization,
sentence splitting, and n-gram counting.

All downstream components (metrics, generation, scoring, analysis) call
through this module so that a summary and its document are always segmented
the same way.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

__all__ = [
    "PUNCTUATION",
    "Example",
    "TokenSeq",
    "SentenceSplit",
    "normalize",
    "tokenize",
    "split_sentences",
    "ngrams",
    "light_stem",
    "contains_token_seq",
]

# Punctuation marks that become standalone tokens.
PUNCTUATION = ".,!?;:"

# Sentence terminators (subset of PUNCTUATION).
_TERMINATORS = frozenset(".!?")

_TOKEN_RE = re.compile(r"[^\s.,!?;:]+|[.,!?;:]")
_WS_RE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Lower-case, collapse whitespace runs to single spaces, strip ends.

    Idempotent: ``normalize(normalize(t)) == normalize(t)``.
    """
    return _WS_RE.sub(" ", text.lower()).strip()


@dataclass(frozen=True)
class TokenSeq:
    """A token sequence with character spans into its source string.

    Each span ``(start, end)`` satisfies ``source[start:end] == token``,
    spans are non-overlapping and strictly increasing, so the covered
    substrings can always be recovered from the source text.
    """

    source: str
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def covered_text(self) -> str:
        """Source substring from the first token start to the last token end."""
        if not self.tokens:
            return ""
        return self.source[self.spans[0][0] : self.spans[-1][1]]

    def text(self) -> str:
        """Tokens joined by single spaces."""
        return " ".join(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Split ``text`` into word and punctuation tokens.

    Splits on whitespace and separates the punctuation marks ``. , ! ? ; :``
    into their own tokens wherever they occur, so ``"a,b"`` yields
    ``("a", ",", "b")``. Empty or whitespace-only input yields an empty
    sequence.
    """
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group())
        spans.append(m.span())
    return TokenSeq(source=text, tokens=tuple(tokens), spans=tuple(spans))


@dataclass(frozen=True)
class SentenceSplit:
    """Sentence segmentation of a document.

    ``sentences[i]`` is the i-th sentence as a :class:`TokenSeq` over the
    original source string; the concatenation of all sentence tokens equals
    the document's full token sequence.
    """

    source: str
    sentences: tuple[TokenSeq, ...]

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i) -> TokenSeq:
        return self.sentences[i]


def split_sentences(text: str) -> SentenceSplit:
    """Segment ``text`` into sentences on ``. ! ?`` boundaries.

    A boundary falls after a terminator token that is followed by whitespace
    or the end of the text. The rule is deliberately abbreviation-blind:
    "Dr. Smith arrived." splits after "Dr.". Trailing tokens without a
    terminator form a final sentence, so any non-empty token stream yields
    at least one sentence.
    """
    seq = tokenize(text)
    sentences: list[TokenSeq] = []
    start = 0
    for i, (token, span) in enumerate(zip(seq.tokens, seq.spans)):
        if token in _TERMINATORS:
            end_pos = span[1]
            at_eot = end_pos >= len(text)
            if at_eot or text[end_pos].isspace():
                sentences.append(
                    TokenSeq(
                        source=text,
                        tokens=seq.tokens[start : i + 1],
                        spans=seq.spans[start : i + 1],
                    )
                )
                start = i + 1
    if start < len(seq.tokens):
        sentences.append(
            TokenSeq(source=text, tokens=seq.tokens[start:], spans=seq.spans[start:])
        )
    return SentenceSplit(source=text, sentences=tuple(sentences))


def ngrams(tokens, n: int) -> Counter:
    """Multiset of n-grams (as tuples) over a token sequence.

    Args:
        tokens: any sequence of string tokens (a :class:`TokenSeq` works).
        n: n-gram order, must be >= 1.

    Returns:
        ``Counter`` mapping n-gram tuples to counts. A sequence shorter
        than ``n`` yields an empty counter.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    toks = tuple(tokens)
    return Counter(toks[i : i + n] for i in range(len(toks) - n + 1))


_VOWEL_RE = re.compile(r"[aeiouy]")


def light_stem(token: str) -> str:
    """Light Porter-style suffix stripper.

    Handles plural and past/progressive inflections only (sses, ies, s,
    eed, ed, ing). Good enough to fold trivial morphological variants
    together for overlap metrics; not a full stemmer.
    """
    t = token
    if t.endswith("sses"):
        t = t[:-2]
    elif t.endswith("ies"):
        t = t[:-2]
    elif t.endswith("ss"):
        pass
    elif t.endswith("s") and len(t) > 3:
        t = t[:-1]
    if t.endswith("eed"):
        if len(t) > 4:
            t = t[:-1]
    elif t.endswith("ed") and _VOWEL_RE.search(t[:-2]):
        t = t[:-2]
    elif t.endswith("ing") and _VOWEL_RE.search(t[:-3]) and len(t) > 4:
        t = t[:-3]
    return t


def contains_token_seq(haystack, needle) -> bool:
    """True when ``needle`` occurs as a contiguous token subsequence."""
    hay = tuple(haystack)
    ned = tuple(needle)
    if not ned:
        return True
    if len(ned) > len(hay):
        return False
    return any(hay[i : i + len(ned)] == ned for i in range(len(hay) - len(ned) + 1))


@dataclass
class Example:
    """One document/reference pair, the unit every pipeline stage consumes.

    ``document`` and ``reference`` hold the normalized (lower-cased,
    whitespace-collapsed) text used for generation, scoring and metrics;
    the ``*_raw`` fields retain the original casing for the entity
    recognizer.
    """

    id: str
    document: str
    reference: str | None = None
    document_raw: str = ""
    reference_raw: str = ""

    def __post_init__(self):
        if not self.document_raw:
            self.document_raw = self.document
        if self.reference is not None and not self.reference_raw:
            self.reference_raw = self.reference

    @classmethod
    def from_raw(cls, id: str, document: str, reference: str | None = None) -> "Example":
        """Build an example from raw text, normalizing working copies."""
        return cls(
            id=id,
            document=normalize(document),
            reference=None if reference is None else normalize(reference),
            document_raw=document,
            reference_raw=reference or "",
        )
