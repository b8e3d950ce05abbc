"""Decoding kernels: temperature scaling, nucleus truncation, token draws.

All functions are pure; randomness enters only through an explicitly passed
generator, and every tie is broken toward the lowest token id so that runs
replay identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TEMPERATURE_RANGE = (0.2, 1.2)
TOP_P_RANGE = (0.8, 1.0)

SAMPLER_MODES = ("policy", "greedy", "static")


@dataclass(frozen=True)
class SamplerSettings:
    """Decoding knobs for one step; greedy mode ignores both knobs."""

    temperature: float = 1.0
    top_p: float = 1.0
    mode: str = "policy"

    def __post_init__(self):
        if self.mode not in SAMPLER_MODES:
            raise ValueError(f"mode must be one of {SAMPLER_MODES}, got {self.mode!r}")
        if self.mode == "greedy":
            return
        lo_t, hi_t = TEMPERATURE_RANGE
        if not lo_t <= self.temperature <= hi_t:
            raise ValueError(
                f"temperature {self.temperature} outside [{lo_t}, {hi_t}]")
        lo_p, hi_p = TOP_P_RANGE
        if not lo_p <= self.top_p <= hi_p:
            raise ValueError(f"top_p {self.top_p} outside [{lo_p}, {hi_p}]")


def apply_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    """softmax(logits / T) with max-subtraction for stability."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def top_p_filter(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Keep the smallest high-probability prefix with cumulative mass >= p.

    Ties between equal probabilities go to the lower token id, the boundary
    token is kept, and the top-1 token always survives. Survivors are
    renormalized to sum to one.
    """
    if not 0.0 < top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, top_p, side="left"))
    cut = min(cut, probs.size - 1)
    keep = order[:cut + 1]
    filtered = np.zeros_like(probs)
    filtered[keep] = probs[keep]
    return filtered / filtered.sum()


def sample_token(probs: np.ndarray, settings: SamplerSettings,
                 rng: np.random.Generator) -> int:
    """Greedy argmax, or an inverse-CDF draw using one uniform variate."""
    probs = np.asarray(probs, dtype=np.float64)
    if settings.mode == "greedy":
        return int(np.argmax(probs))
    u = rng.random()
    cumulative = np.cumsum(probs)
    idx = int(np.searchsorted(cumulative, u, side="right"))
    if idx >= probs.size:
        idx = int(np.max(np.nonzero(probs > 0)))
    return idx
