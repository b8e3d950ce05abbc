"""Composite summarization reward and its ablation variants.

The proposed score combines ROUGE-L F1 against the reference, a length term
around an ideal source-derived length, a capped coverage bonus over important
source tokens, a repetition penalty, and a completeness penalty, then
normalizes the raw sum to [0, 1]. Each ablation variant keeps a subset of
the terms or changes the penalty weight / normalization shape; every variant
recomputes its own raw extrema so normalization stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .lm import SENTENCE_ENDERS, tokenize

REWARD_VARIANTS = (
    "proposed", "rouge_only", "core_shaping", "no_coverage",
    "soft_repetition", "sigmoid_scaling",
)

# Which weighted terms each variant sums into its raw score.
_ACTIVE_TERMS = {
    "proposed": frozenset({"rouge", "length", "coverage", "repetition", "completeness"}),
    "rouge_only": frozenset({"rouge"}),
    "core_shaping": frozenset({"rouge", "length", "repetition"}),
    "no_coverage": frozenset({"rouge", "length", "repetition", "completeness"}),
    "soft_repetition": frozenset({"rouge", "length", "coverage", "repetition", "completeness"}),
    "sigmoid_scaling": frozenset({"rouge", "length", "coverage", "repetition", "completeness"}),
}


@dataclass(frozen=True)
class RewardConfig:
    """Weights, thresholds, caps, and normalization for one reward variant."""

    variant: str = "proposed"
    w_rouge: float = 0.5
    w_len: float = 0.2
    w_cov: float = 0.1
    cov_cap: float = 0.1
    rep_threshold: float = 0.30
    rep_penalty: float = -0.10
    completeness_penalty: float = -0.05
    min_token_len_for_coverage: int = 4
    raw_min: float = -0.15
    raw_max: float = 0.8
    normalization: str = "linear"
    sigmoid_k: float = 5.0

    def __post_init__(self):
        if self.variant not in REWARD_VARIANTS:
            raise ValueError(
                f"variant must be one of {REWARD_VARIANTS}, got {self.variant!r}")
        if self.raw_min >= self.raw_max:
            raise ValueError(
                f"raw_min {self.raw_min} must be below raw_max {self.raw_max}")
        if self.normalization not in ("linear", "sigmoid"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def active_terms(self) -> frozenset:
        return _ACTIVE_TERMS[self.variant]


def reward_config(variant: str = "proposed") -> RewardConfig:
    """Build a variant's config with its own rep penalty, extrema, and scaling."""
    if variant not in REWARD_VARIANTS:
        raise ValueError(
            f"variant must be one of {REWARD_VARIANTS}, got {variant!r}")
    rep_penalty = -0.05 if variant == "soft_repetition" else -0.10
    normalization = "sigmoid" if variant == "sigmoid_scaling" else "linear"
    active = _ACTIVE_TERMS[variant]
    raw_min = (rep_penalty if "repetition" in active else 0.0) + \
              (-0.05 if "completeness" in active else 0.0)
    raw_max = (0.5 if "rouge" in active else 0.0) + \
              (0.2 if "length" in active else 0.0) + \
              (0.1 if "coverage" in active else 0.0)
    return RewardConfig(variant=variant, rep_penalty=rep_penalty,
                        raw_min=raw_min, raw_max=raw_max,
                        normalization=normalization)


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component diagnostics; inactive terms are zeroed for the variant."""

    rouge_f1: float
    length_term: float
    coverage_term: float
    repetition_term: float
    completeness_term: float
    raw: float
    normalized: float


def rouge_l_f1(candidate: list[str], reference: list[str]) -> float:
    """Token-level ROUGE-L F1 via a two-row LCS dynamic program."""
    n, m = len(candidate), len(reference)
    if n == 0 or m == 0:
        return 0.0
    prev = [0] * (m + 1)
    for i in range(1, n + 1):
        cur = [0] * (m + 1)
        ci = candidate[i - 1]
        for j in range(1, m + 1):
            if ci == reference[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    lcs = prev[m]
    if lcs == 0:
        return 0.0
    precision = lcs / n
    recall = lcs / m
    return 2.0 * precision * recall / (precision + recall)


def length_term(cand_len: int, source_len: int) -> float:
    """1 at the ideal length, decaying linearly to 0 at a full ideal away.

    The ideal is 10% of the source length, clamped to [10, 150] tokens.
    """
    if source_len < 1:
        raise ValueError(f"source_len must be >= 1, got {source_len}")
    ideal = min(max(round(0.10 * source_len), 10), 150)
    return max(0.0, 1.0 - abs(cand_len - ideal) / ideal)


def coverage_term(candidate: list[str], source: list[str],
                  cfg: RewardConfig) -> float:
    """Capped bonus for mentioning distinct long source tokens."""
    important = {t for t in source if len(t) > cfg.min_token_len_for_coverage}
    if not important:
        return 0.0
    hits = len(set(candidate) & important)
    return min(cfg.w_cov * hits / len(important), cfg.cov_cap)


def repetition_term(candidate: list[str], cfg: RewardConfig) -> float:
    """Penalty when the repeated-token fraction strictly exceeds the threshold."""
    if not candidate:
        return 0.0
    repeated_fraction = 1.0 - len(set(candidate)) / len(candidate)
    return cfg.rep_penalty if repeated_fraction > cfg.rep_threshold else 0.0


def completeness_term(text: str, cfg: RewardConfig) -> float:
    """Penalty when the trimmed text lacks sentence-ending punctuation."""
    trimmed = text.strip()
    if trimmed.endswith(SENTENCE_ENDERS):
        return 0.0
    return cfg.completeness_penalty


def normalize(raw: float, cfg: RewardConfig) -> float:
    """Map the raw score into [0, 1] linearly or through a sigmoid."""
    if cfg.normalization == "linear":
        scaled = (raw - cfg.raw_min) / (cfg.raw_max - cfg.raw_min)
        return min(max(scaled, 0.0), 1.0)
    midpoint = 0.5 * (cfg.raw_min + cfg.raw_max)
    return 1.0 / (1.0 + math.exp(-cfg.sigmoid_k * (raw - midpoint)))


def composite_reward(candidate_text: str, reference_text: str, source_text: str,
                     cfg: RewardConfig) -> RewardBreakdown:
    """Tokenize the triple, assemble the variant's raw sum, and normalize."""
    candidate = tokenize(candidate_text)
    reference = tokenize(reference_text)
    source = tokenize(source_text)
    active = cfg.active_terms

    rouge = rouge_l_f1(candidate, reference) if "rouge" in active else 0.0
    length = length_term(len(candidate), max(len(source), 1)) if "length" in active else 0.0
    coverage = coverage_term(candidate, source, cfg) if "coverage" in active else 0.0
    repetition = repetition_term(candidate, cfg) if "repetition" in active else 0.0
    completeness = completeness_term(candidate_text, cfg) if "completeness" in active else 0.0

    raw = (cfg.w_rouge * rouge + cfg.w_len * length + coverage
           + repetition + completeness)
    return RewardBreakdown(
        rouge_f1=rouge, length_term=length, coverage_term=coverage,
        repetition_term=repetition, completeness_term=completeness,
        raw=raw, normalized=normalize(raw, cfg))


def with_variant(cfg: RewardConfig, variant: str) -> RewardConfig:
    """The same knobs re-derived for another variant."""
    fresh = reward_config(variant)
    return replace(fresh, min_token_len_for_coverage=cfg.min_token_len_for_coverage)
