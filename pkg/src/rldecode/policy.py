"""The trainable decoding controller.

A small numpy network: linear projection with layer norm, two GELU layers,
a Gaussian mean head over the 2-D action space, a state-independent log-std,
and a value head sharing the trunk. Gradients are accumulated in reverse
through the fixed architecture by hand; finite-difference tests pin them.

The PPO probability ratio is defined on the pre-squash Gaussian sample; the
sigmoid-affine squash onto (temperature, top-p) is part of how the
environment interprets the action, so no Jacobian term enters log-densities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureConfig
from .seeding import rng_for

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LAYER_NORM_EPS = 1e-5
ACTION_DIM = 2

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715
_LOG_2PI = math.log(2.0 * math.pi)

CHECKPOINT_VERSION = 1

# Declared parameter order; checkpoints and optimizer state follow it.
PARAM_NAMES = (
    "proj_w", "proj_b", "ln_gain", "ln_bias",
    "w1", "b1", "w2", "b2",
    "mean_w", "mean_b", "value_w", "value_b", "log_std",
)


def _gelu(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)


def sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def squash_action(raw: np.ndarray) -> tuple[float, float]:
    """Map a raw 2-D sample onto temperature in [0.2, 1.2], top-p in [0.8, 1.0]."""
    s = sigmoid(np.asarray(raw, dtype=np.float64))
    return 0.2 + float(s[0]) * 1.0, 0.8 + float(s[1]) * 0.2


@dataclass(frozen=True)
class ActionParams:
    """A sampled action: raw Gaussian draw, squashed knobs, and its log-density."""

    raw: np.ndarray
    temperature: float
    top_p: float
    log_prob: float

    @classmethod
    def from_raw(cls, raw: np.ndarray, log_prob: float) -> "ActionParams":
        temperature, top_p = squash_action(raw)
        return cls(raw=np.asarray(raw, dtype=np.float64),
                   temperature=temperature, top_p=top_p, log_prob=log_prob)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray,
                      raw: np.ndarray) -> float:
    """Diagonal-Gaussian log-density of raw under N(mean, exp(log_std)^2)."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    z = (np.asarray(raw, dtype=np.float64) - mean) / np.exp(log_std)
    return float(np.sum(-0.5 * _LOG_2PI - log_std - 0.5 * z ** 2))


def standard_normal_pair(rng: np.random.Generator) -> tuple[float, float]:
    """Box-Muller pair from exactly two uniforms (cos first, then sin)."""
    u1 = 1.0 - rng.random()  # (0, 1]: keeps the log argument positive
    u2 = rng.random()
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)


def sample_action(mean: np.ndarray, log_std: np.ndarray,
                  rng: np.random.Generator) -> ActionParams:
    """Draw raw = mean + sigma * z and record its log-density."""
    z = np.array(standard_normal_pair(rng), dtype=np.float64)
    raw = np.asarray(mean, dtype=np.float64) + np.exp(log_std) * z
    log_prob = float(np.sum(-0.5 * _LOG_2PI - log_std - 0.5 * z ** 2))
    return ActionParams.from_raw(raw, log_prob)


def deterministic_action(mean: np.ndarray, log_std: np.ndarray) -> ActionParams:
    """Zero-noise action at the Gaussian mean (used for checkpoint evaluation)."""
    mean = np.asarray(mean, dtype=np.float64)
    log_prob = float(np.sum(-0.5 * _LOG_2PI - np.asarray(log_std)))
    return ActionParams.from_raw(mean.copy(), log_prob)


class GaussianPolicy:
    """Projection + layer norm + 2-layer GELU trunk + Gaussian and value heads."""

    def __init__(self, state_len: int, input_dim: int = 64, hidden_dim: int = 256,
                 seed: int = 0):
        if state_len < 1:
            raise ValueError(f"state_len must be >= 1, got {state_len}")
        self.state_len = state_len
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rng = rng_for(seed, "policy-init")

        def dense(out_dim, in_dim, scale=1.0):
            return rng.normal(0.0, scale / math.sqrt(in_dim), size=(out_dim, in_dim))

        self.params: dict[str, np.ndarray] = {
            "proj_w": dense(input_dim, state_len),
            "proj_b": np.zeros(input_dim),
            "ln_gain": np.ones(input_dim),
            "ln_bias": np.zeros(input_dim),
            "w1": dense(hidden_dim, input_dim),
            "b1": np.zeros(hidden_dim),
            "w2": dense(hidden_dim, hidden_dim),
            "b2": np.zeros(hidden_dim),
            # Small head init keeps initial actions near the range midpoints.
            "mean_w": dense(ACTION_DIM, hidden_dim, scale=0.01),
            "mean_b": np.zeros(ACTION_DIM),
            "value_w": dense(1, hidden_dim, scale=0.01)[0],
            "value_b": np.zeros(1),
            "log_std": np.zeros(ACTION_DIM),
        }

    # -- forward ---------------------------------------------------------

    def _forward_cached(self, states: np.ndarray) -> dict:
        p = self.params
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if s.shape[1] != self.state_len:
            raise ValueError(
                f"state length {s.shape[1]} does not match policy "
                f"state_len {self.state_len}")
        z0 = s @ p["proj_w"].T + p["proj_b"]
        mu = z0.mean(axis=1, keepdims=True)
        var = z0.var(axis=1, keepdims=True)
        inv_sd = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        xhat = (z0 - mu) * inv_sd
        ln = xhat * p["ln_gain"] + p["ln_bias"]
        h1_pre = ln @ p["w1"].T + p["b1"]
        h1 = _gelu(h1_pre)
        h2_pre = h1 @ p["w2"].T + p["b2"]
        h2 = _gelu(h2_pre)
        mean = h2 @ p["mean_w"].T + p["mean_b"]
        value = h2 @ p["value_w"] + p["value_b"][0]
        return {
            "s": s, "xhat": xhat, "inv_sd": inv_sd, "ln": ln,
            "h1_pre": h1_pre, "h1": h1, "h2_pre": h2_pre, "h2": h2,
            "mean": mean, "value": value,
        }

    def forward(self, states: np.ndarray):
        """(mean, log_std, value); accepts a single state or a batch."""
        single = np.asarray(states).ndim == 1
        cache = self._forward_cached(states)
        mean, value = cache["mean"], cache["value"]
        log_std = self.params["log_std"].copy()
        if single:
            return mean[0], log_std, float(value[0])
        return mean, log_std, value

    def log_prob_of(self, state: np.ndarray, raw: np.ndarray) -> float:
        """Log-density of a raw action under the policy at this state."""
        mean, log_std, _ = self.forward(state)
        return gaussian_log_prob(mean, log_std, raw)

    # -- backward --------------------------------------------------------

    def backward(self, cache: dict, d_mean: np.ndarray,
                 d_value: np.ndarray) -> dict[str, np.ndarray]:
        """Reverse accumulation from head gradients to parameter gradients.

        d_mean is (N, 2) and d_value is (N,); the returned dict covers every
        parameter, with the log_std slot zeroed (its gradient has no network
        path and is added by the loss).
        """
        p = self.params
        d_mean = np.atleast_2d(np.asarray(d_mean, dtype=np.float64))
        d_value = np.asarray(d_value, dtype=np.float64).reshape(-1)
        h2, h1 = cache["h2"], cache["h1"]

        grads = {"mean_w": d_mean.T @ h2, "mean_b": d_mean.sum(axis=0),
                 "value_w": d_value @ h2, "value_b": np.array([d_value.sum()]),
                 "log_std": np.zeros(ACTION_DIM)}

        dh2 = d_mean @ p["mean_w"] + np.outer(d_value, p["value_w"])
        dh2_pre = dh2 * _gelu_grad(cache["h2_pre"])
        grads["w2"] = dh2_pre.T @ h1
        grads["b2"] = dh2_pre.sum(axis=0)

        dh1 = dh2_pre @ p["w2"]
        dh1_pre = dh1 * _gelu_grad(cache["h1_pre"])
        grads["w1"] = dh1_pre.T @ cache["ln"]
        grads["b1"] = dh1_pre.sum(axis=0)

        dln = dh1_pre @ p["w1"]
        xhat = cache["xhat"]
        grads["ln_gain"] = (dln * xhat).sum(axis=0)
        grads["ln_bias"] = dln.sum(axis=0)
        dxhat = dln * p["ln_gain"]
        dz0 = cache["inv_sd"] * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        grads["proj_w"] = dz0.T @ cache["s"]
        grads["proj_b"] = dz0.sum(axis=0)
        return grads

    # -- parameter utilities ----------------------------------------------

    def clamp_log_std(self):
        np.clip(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX,
                out=self.params["log_std"])

    def copy(self) -> "GaussianPolicy":
        twin = GaussianPolicy(self.state_len, self.input_dim, self.hidden_dim)
        twin.params = {k: v.copy() for k, v in self.params.items()}
        return twin


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))


# -- checkpointing ---------------------------------------------------------

def save_checkpoint(path, policy: GaussianPolicy, feature_cfg: FeatureConfig,
                    extras: dict | None = None) -> None:
    """Versioned JSON container: dims, parameters in declared order, features."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "dims": {"state_len": policy.state_len, "input_dim": policy.input_dim,
                 "hidden_dim": policy.hidden_dim},
        "feature_config": {"k": feature_cfg.k, "hidden_dim": feature_cfg.hidden_dim,
                           "max_prefix_len": feature_cfg.max_prefix_len},
        "params": {name: policy.params[name].tolist() for name in PARAM_NAMES},
        "extras": extras or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[GaussianPolicy, FeatureConfig, dict]:
    """Load and validate a checkpoint; returns (policy, feature_config, extras)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {version!r}")
    dims = payload["dims"]
    cfg = FeatureConfig(**payload["feature_config"])
    if cfg.state_len != dims["state_len"]:
        raise ValueError(
            f"feature config implies state_len {cfg.state_len} but checkpoint "
            f"declares {dims['state_len']}")
    policy = GaussianPolicy(dims["state_len"], dims["input_dim"], dims["hidden_dim"])
    for name in PARAM_NAMES:
        arr = np.asarray(payload["params"][name], dtype=np.float64)
        if arr.shape != policy.params[name].shape:
            raise ValueError(
                f"checkpoint parameter {name} has shape {arr.shape}, "
                f"expected {policy.params[name].shape}")
        policy.params[name] = arr
    return policy, cfg, payload.get("extras", {})
