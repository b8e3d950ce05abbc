"""Token-probability sources: tokenizer, vocabulary, and a smoothed n-gram LM.

The n-gram model stands in for a frozen language model at desk scale. It is
immutable after construction, fully deterministic, and exposes per-step
logits plus a fixed-length hidden summary so downstream featurization sees
the same interface a served model would provide.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"

SENTENCE_ENDERS = (".", "!", "?")
HIDDEN_SUMMARY_DIM = 32

_PUNCT = set(string.punctuation)
# Fixed stream for the hidden-summary projection; independent of run seeds so
# the surrogate model behaves like a frozen artifact.
_HIDDEN_PROJECTION_KEY = ("hidden-projection", 0x5EED)


def tokenize(text: str) -> list[str]:
    """Split text into lowercase word tokens plus standalone . ! ? marks.

    Leading punctuation on a piece is dropped; trailing punctuation is
    stripped, but sentence-ending marks among it are emitted as their own
    tokens in text order. Interior punctuation (hyphens, apostrophes) is kept.
    Never emits empty tokens.
    """
    tokens: list[str] = []
    for piece in text.lower().split():
        enders: list[str] = []
        while piece and piece[-1] in _PUNCT:
            ch = piece[-1]
            piece = piece[:-1]
            if ch in SENTENCE_ENDERS:
                enders.append(ch)
        while piece and piece[0] in _PUNCT:
            piece = piece[1:]
        if piece:
            tokens.append(piece)
        tokens.extend(reversed(enders))
    return tokens


def detokenize(tokens: list[str]) -> str:
    """Join tokens with spaces, attaching sentence punctuation to the left."""
    parts: list[str] = []
    for tok in tokens:
        if tok in SENTENCE_ENDERS and parts:
            parts[-1] += tok
        else:
            parts.append(tok)
    return " ".join(parts)


class Vocab:
    """Immutable token/id mapping with reserved EOS and UNK entries."""

    __slots__ = ("tokens", "_index")

    def __init__(self, tokens: tuple[str, ...]):
        if tokens.count(EOS_TOKEN) != 1 or tokens.count(UNK_TOKEN) != 1:
            raise ValueError("vocab must contain EOS and UNK exactly once")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocab tokens must be distinct")
        self.tokens = tokens
        self._index = {tok: i for i, tok in enumerate(tokens)}

    @classmethod
    def from_corpus_tokens(cls, corpus_tokens) -> "Vocab":
        """Reserved tokens first, then corpus tokens in sorted order."""
        extra = sorted(set(corpus_tokens) - {EOS_TOKEN, UNK_TOKEN})
        return cls((EOS_TOKEN, UNK_TOKEN) + tuple(extra))

    def extended(self, new_tokens) -> "Vocab":
        """A new Vocab with unseen tokens appended in the given order."""
        extra = tuple(t for t in new_tokens if t not in self._index)
        if not extra:
            return self
        return Vocab(self.tokens + extra)

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        """Token id, mapping out-of-vocabulary tokens to UNK."""
        return self._index.get(token, self._index[UNK_TOKEN])

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens) -> list[int]:
        return [self.id_of(t) for t in tokens]

    @property
    def eos_id(self) -> int:
        return self._index[EOS_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._index[UNK_TOKEN]


@dataclass
class StepOutput:
    """One decoding step: raw logits plus optional hidden summary.

    prefix_len counts tokens generated so far (not the prompt).
    """

    logits: np.ndarray
    prefix_len: int
    hidden_summary: np.ndarray | None = field(default=None)


class NGramLM:
    """Add-k smoothed word n-gram model, frozen after construction.

    Conditional distributions are over the full vocabulary and strictly
    positive, so the smoothed probabilities always sum to one and every
    token keeps a live sampling path.
    """

    def __init__(self, order: int, vocab: Vocab, counts: dict, context_totals: dict,
                 smoothing_k: float):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if smoothing_k <= 0:
            raise ValueError(f"smoothing_k must be positive, got {smoothing_k}")
        self.order = order
        self.vocab = vocab
        self.smoothing_k = smoothing_k
        self._counts = counts
        self._context_totals = context_totals
        proj_rng = rng_for(*_HIDDEN_PROJECTION_KEY)
        self._hidden_proj = proj_rng.normal(
            0.0, 1.0 / math.sqrt(HIDDEN_SUMMARY_DIM),
            size=(len(vocab), HIDDEN_SUMMARY_DIM))

    @property
    def hidden_dim(self) -> int:
        return HIDDEN_SUMMARY_DIM

    def _context(self, prefix_ids: list[int]) -> tuple[int, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        return tuple(prefix_ids[-n:]) if len(prefix_ids) >= n else tuple(prefix_ids)

    def conditional_probs(self, prefix_ids: list[int]) -> np.ndarray:
        """Smoothed next-token distribution given the trailing context."""
        v = len(self.vocab)
        k = self.smoothing_k
        probs = np.full(v, k, dtype=np.float64)
        ctx = self._context(prefix_ids)
        total = float(self._context_totals.get(ctx, 0))
        for token_id, count in self._counts.get(ctx, {}).items():
            probs[token_id] += count
        probs /= total + k * v
        return probs

    def next_logits(self, prefix_ids: list[int]) -> StepOutput:
        """Log-probabilities over the vocabulary plus a projected hidden summary."""
        probs = self.conditional_probs(prefix_ids)
        logits = np.log(probs)
        hidden = probs @ self._hidden_proj
        return StepOutput(logits=logits, prefix_len=len(prefix_ids),
                          hidden_summary=hidden)


def build_ngram_lm(corpus: list[list[str]], order: int = 3,
                   smoothing_k: float = 0.1) -> NGramLM:
    """Count order-length windows over EOS-terminated sequences.

    The vocabulary is the corpus tokens plus the reserved EOS/UNK pair.
    Raises ValueError for an empty corpus.
    """
    if not corpus:
        raise ValueError("cannot build an n-gram model from an empty corpus")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    vocab = Vocab.from_corpus_tokens(t for seq in corpus for t in seq)
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    context_totals: dict[tuple[int, ...], int] = {}
    n = order - 1
    for seq in corpus:
        ids = vocab.encode(seq) + [vocab.eos_id]
        for i in range(n, len(ids)):
            ctx = tuple(ids[i - n:i])
            nxt = ids[i]
            bucket = counts.setdefault(ctx, {})
            bucket[nxt] = bucket.get(nxt, 0) + 1
            context_totals[ctx] = context_totals.get(ctx, 0) + 1
    return NGramLM(order, vocab, counts, context_totals, smoothing_k)
