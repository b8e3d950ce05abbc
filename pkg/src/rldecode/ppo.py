"""PPO training engine: episode rollout, GAE, clipped losses, update loop.

Episodes collect one transition per emitted token; the composite reward for
the finished text lands on the terminal transition and GAE spreads the
credit backwards. Updates run clipped-surrogate minibatch passes with Adam,
advantage normalization, global gradient clipping, and a log-std clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureConfig, build_state
from .lm import detokenize, tokenize
from .policy import (ActionParams, GaussianPolicy, deterministic_action,
                     global_grad_norm, sample_action)
from .sampling import SamplerSettings, apply_temperature, sample_token, top_p_filter
from .seeding import rng_for

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PPOConfig:
    """Hyperparameters for clipped-surrogate training."""

    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    epochs_per_update: int = 4
    episodes_per_update: int = 8
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 0.5
    max_episode_len: int = 128

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.max_episode_len < 1:
            raise ValueError(
                f"max_episode_len must be >= 1, got {self.max_episode_len}")


@dataclass
class Transition:
    """One decoding step: state, action, critic value, and (terminal) reward."""

    state: np.ndarray
    action: ActionParams
    value: float
    reward: float


@dataclass
class Trajectory:
    """One generation episode with its terminal composite reward."""

    transitions: list[Transition]
    terminal_reason: str
    composite_reward: float
    candidate_text: str = ""

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def mean_temperature(self) -> float:
        return float(np.mean([t.action.temperature for t in self.transitions]))

    @property
    def mean_top_p(self) -> float:
        return float(np.mean([t.action.top_p for t in self.transitions]))


@dataclass(frozen=True)
class EpisodeStats:
    """Summary passed to reward functions alongside the candidate text."""

    mean_temperature: float
    mean_top_p: float
    n_tokens: int
    terminal_reason: str


@dataclass(frozen=True)
class AdvantageEstimate:
    advantages: np.ndarray
    returns: np.ndarray


@dataclass(frozen=True)
class UpdateStats:
    """Diagnostics of one update; ratio/clip fields are measured on the full
    batch before any parameter step, where the ratio is identically one."""

    mean_ratio: float
    clip_fraction: float
    policy_loss: float
    value_loss: float
    entropy: float
    grad_norm: float


def run_episode(lm, policy: GaussianPolicy, feature_cfg: FeatureConfig,
                reward_fn, prompt_text: str, rng: np.random.Generator,
                max_episode_len: int = 128, deterministic: bool = False,
                action_every: int = 1) -> Trajectory:
    """Generate one episode: featurize, act, sample a token, repeat.

    The features see the unit-temperature distribution; the sampled action's
    temperature and top-p shape the actual token draw. With deterministic=True
    the action is the squashed Gaussian mean (checkpoint evaluation).
    action_every > 1 holds each action for that many tokens.
    """
    if max_episode_len < 1:
        raise ValueError(f"max_episode_len must be >= 1, got {max_episode_len}")
    if action_every < 1:
        raise ValueError(f"action_every must be >= 1, got {action_every}")
    vocab = lm.vocab
    prefix = vocab.encode(tokenize(prompt_text))
    generated: list[int] = []
    transitions: list[Transition] = []
    terminal_reason = "length_limit"

    for step_index in range(max_episode_len):
        step = lm.next_logits(prefix)
        step = replace(step, prefix_len=len(generated))
        unit_probs = apply_temperature(step.logits, 1.0)
        state = build_state(step, unit_probs, feature_cfg)
        mean, log_std, value = policy.forward(state)
        if step_index % action_every != 0 and transitions:
            action = transitions[-1].action
        elif deterministic:
            action = deterministic_action(mean, log_std)
        else:
            action = sample_action(mean, log_std, rng)
        probs = apply_temperature(step.logits, action.temperature)
        probs = top_p_filter(probs, action.top_p)
        settings = SamplerSettings(temperature=action.temperature,
                                   top_p=action.top_p, mode="policy")
        token = sample_token(probs, settings, rng)
        transitions.append(Transition(state=state, action=action,
                                      value=value, reward=0.0))
        generated.append(token)
        prefix.append(token)
        if token == vocab.eos_id:
            terminal_reason = "eos"
            break

    candidate = [vocab.token_of(i) for i in generated if i != vocab.eos_id]
    text = detokenize(candidate)
    traj = Trajectory(transitions, terminal_reason, 0.0, text)
    stats = EpisodeStats(mean_temperature=traj.mean_temperature,
                         mean_top_p=traj.mean_top_p,
                         n_tokens=len(generated),
                         terminal_reason=terminal_reason)
    reward = float(reward_fn(text, stats))
    transitions[-1].reward = reward
    traj.composite_reward = reward
    return traj


def compute_gae(rewards, values, gamma: float, lam: float) -> AdvantageEstimate:
    """Backward-recursive GAE with a zero terminal bootstrap value."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1 or rewards.size < 1:
        raise ValueError(
            f"rewards and values must be equal-length 1-D sequences, got "
            f"{rewards.shape} and {values.shape}")
    horizon = rewards.size
    advantages = np.empty(horizon, dtype=np.float64)
    last = 0.0
    for t in reversed(range(horizon)):
        next_value = values[t + 1] if t + 1 < horizon else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * last
        advantages[t] = last
    return AdvantageEstimate(advantages=advantages, returns=advantages + values)


def ppo_losses(policy: GaussianPolicy, batch: dict, cfg: PPOConfig):
    """Total minimized loss, diagnostics, and exact parameter gradients.

    The loss is -L_clip + c_v * value_error - c_ent * entropy; the clipped
    surrogate only propagates gradient where the unclipped branch of the
    pessimistic min is active.
    """
    states = batch["states"]
    raw = batch["raw"]
    old_log_prob = batch["old_log_prob"]
    advantages = batch["advantages"]
    returns = batch["returns"]
    n = states.shape[0]

    cache = policy._forward_cached(states)
    mean, values = cache["mean"], cache["value"]
    log_std = policy.params["log_std"]
    sigma = np.exp(log_std)
    z = (raw - mean) / sigma
    new_log_prob = np.sum(-0.5 * _LOG_2PI - log_std - 0.5 * z ** 2, axis=1)

    ratio = np.exp(new_log_prob - old_log_prob)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surrogate = ratio * advantages
    surrogate_clipped = clipped * advantages
    per_sample = np.minimum(surrogate, surrogate_clipped)
    l_clip = float(per_sample.mean())

    value_error = values - returns
    value_loss = float(np.mean(value_error ** 2))
    entropy = float(np.sum(0.5 + 0.5 * _LOG_2PI + log_std))
    total = -l_clip + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(total)/d(new_log_prob): only where min picked the unclipped branch.
    unclipped_active = surrogate <= surrogate_clipped
    d_log_prob = np.where(unclipped_active, ratio * advantages, 0.0) * (-1.0 / n)
    d_mean = d_log_prob[:, None] * (z / sigma)
    d_log_std_rows = d_log_prob[:, None] * (z ** 2 - 1.0)
    d_value = cfg.value_coef * 2.0 * value_error / n

    grads = policy.backward(cache, d_mean, d_value)
    grads["log_std"] = (grads["log_std"] + d_log_std_rows.sum(axis=0)
                        - cfg.entropy_coef)

    stats = UpdateStats(
        mean_ratio=float(ratio.mean()),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        policy_loss=-l_clip,
        value_loss=value_loss,
        entropy=entropy,
        grad_norm=global_grad_norm(grads),
    )
    return total, stats, grads


def flatten_trajectories(trajectories: list[Trajectory], cfg: PPOConfig) -> dict:
    """Per-trajectory GAE, then one batch with normalized advantages."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    states, raws, old_lps, advs, rets = [], [], [], [], []
    for traj in trajectories:
        rewards = [t.reward for t in traj.transitions]
        values = [t.value for t in traj.transitions]
        est = compute_gae(rewards, values, cfg.gamma, cfg.lam)
        for t in traj.transitions:
            states.append(t.state)
            raws.append(t.action.raw)
            old_lps.append(t.action.log_prob)
        advs.append(est.advantages)
        rets.append(est.returns)
    advantages = np.concatenate(advs)
    std = float(advantages.std())
    advantages = (advantages - advantages.mean()) / max(std, 1e-8)
    return {
        "states": np.asarray(states, dtype=np.float64),
        "raw": np.asarray(raws, dtype=np.float64),
        "old_log_prob": np.asarray(old_lps, dtype=np.float64),
        "advantages": advantages,
        "returns": np.concatenate(rets),
    }


class PPOTrainer:
    """Owns the policy parameters, Adam moments, and the minibatch schedule."""

    def __init__(self, policy: GaussianPolicy, cfg: PPOConfig, seed: int = 0):
        self.policy = policy
        self.cfg = cfg
        self._rng = rng_for(seed, "ppo-shuffle")
        self._adam_m = {k: np.zeros_like(v) for k, v in policy.params.items()}
        self._adam_v = {k: np.zeros_like(v) for k, v in policy.params.items()}
        self._adam_t = 0

    def _adam_step(self, grads: dict) -> None:
        cfg = self.cfg
        self._adam_t += 1
        bias1 = 1.0 - cfg.adam_beta1 ** self._adam_t
        bias2 = 1.0 - cfg.adam_beta2 ** self._adam_t
        for name, grad in grads.items():
            m = self._adam_m[name]
            v = self._adam_v[name]
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * grad
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * grad ** 2
            step = cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)
            self.policy.params[name] -= step

    def update(self, trajectories: list[Trajectory]) -> UpdateStats:
        """Run the epochs-of-minibatches schedule over collected episodes."""
        cfg = self.cfg
        batch = flatten_trajectories(trajectories, cfg)
        n = batch["states"].shape[0]

        # Full-batch diagnostics before any step: ratio is exactly one here.
        _, stats, _ = ppo_losses(self.policy, batch, cfg)

        grad_norms = []
        for _ in range(cfg.epochs_per_update):
            perm = self._rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = perm[start:start + cfg.minibatch_size]
                minibatch = {k: v[idx] for k, v in batch.items()}
                _, _, grads = ppo_losses(self.policy, minibatch, cfg)
                gnorm = global_grad_norm(grads)
                grad_norms.append(gnorm)
                if gnorm > cfg.grad_clip_norm and gnorm > 0:
                    scale = cfg.grad_clip_norm / gnorm
                    for g in grads.values():
                        g *= scale
                self._adam_step(grads)
                self.policy.clamp_log_std()
        return replace(stats, grad_norm=float(np.mean(grad_norms)))
