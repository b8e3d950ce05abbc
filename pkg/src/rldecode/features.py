"""State featurization: hidden summary, top-k logits, prefix length, entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lm import StepOutput


@dataclass(frozen=True)
class FeatureConfig:
    """Fixes the state layout: hidden_dim + k logits + prefix + entropy."""

    k: int = 50
    hidden_dim: int = 32
    max_prefix_len: int = 128

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.hidden_dim < 0:
            raise ValueError(f"hidden_dim must be >= 0, got {self.hidden_dim}")
        if self.max_prefix_len < 1:
            raise ValueError(
                f"max_prefix_len must be >= 1, got {self.max_prefix_len}")

    @property
    def state_len(self) -> int:
        return self.hidden_dim + self.k + 2


def normalized_entropy(probs: np.ndarray) -> float:
    """H(probs) / ln(V) in [0, 1], with the 0*ln(0) terms dropped."""
    probs = np.asarray(probs, dtype=np.float64)
    v = probs.size
    if v < 2:
        raise ValueError(f"entropy normalization needs V >= 2, got V={v}")
    positive = probs[probs > 0.0]
    h = -float(np.sum(positive * np.log(positive)))
    return h / math.log(v)


def build_state(step: StepOutput, probs: np.ndarray,
                cfg: FeatureConfig) -> np.ndarray:
    """Concatenate the four feature blocks into one fixed-length vector.

    Top-k logits are sorted descending and padded with the smallest present
    logit when the vocabulary is smaller than k. The prefix feature clamps at
    max_prefix_len. Projection/normalization of the result belongs to the
    policy's input layer, not here.
    """
    if step.hidden_summary is not None:
        hidden = np.asarray(step.hidden_summary, dtype=np.float64)
        if hidden.size != cfg.hidden_dim:
            raise ValueError(
                f"hidden summary length {hidden.size} != configured "
                f"{cfg.hidden_dim}")
    else:
        hidden = np.zeros(cfg.hidden_dim, dtype=np.float64)

    logits = np.asarray(step.logits, dtype=np.float64)
    desc = np.sort(logits)[::-1]
    if desc.size >= cfg.k:
        top_k = desc[:cfg.k]
    else:
        pad = np.full(cfg.k - desc.size, desc[-1], dtype=np.float64)
        top_k = np.concatenate([desc, pad])

    prefix_feat = min(step.prefix_len, cfg.max_prefix_len) / cfg.max_prefix_len
    entropy_feat = normalized_entropy(probs)
    return np.concatenate([hidden, top_k, [prefix_feat, entropy_feat]])
