"""Experiment orchestration: baselines, training runs, metrics, comparisons.

A run derives every random stream from its seed, evaluates held-out prompts
with zero-noise actions at fixed checkpoints, and persists metrics as CSV so
the same (config, seed) regenerates identical files byte for byte.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import DatasetRecord, load_dataset
from .features import FeatureConfig
from .lm import build_ngram_lm, detokenize, tokenize
from .plots import emit_plot
from .policy import GaussianPolicy, save_checkpoint
from .ppo import PPOConfig, PPOTrainer, run_episode
from .rewards import RewardConfig, composite_reward, reward_config
from .sampling import SamplerSettings, apply_temperature, sample_token, top_p_filter
from .seeding import rng_for

SEED_ENV_VAR = "RLDECODE_SEED"

EPISODE_CSV_HEADER = "episode,prompt_id,reward,mean_T,mean_p,tokens,terminal"
CHECKPOINT_CSV_HEADER = "episode,eval_avg_reward"

BASELINE_MODES = ("greedy", "static")


def resolve_seed(seed: int) -> int:
    """The config seed, unless the RLDECODE_SEED env var overrides it."""
    env = os.environ.get(SEED_ENV_VAR)
    if env:
        return int(env)
    return seed


@dataclass
class RunConfig:
    """Everything a training or baseline run needs besides the dataset."""

    dataset_path: str | None = None
    out_dir: str | None = None
    episodes: int = 500
    n_prompts: int = 100
    eval_prompts: int = 20
    eval_every: int = 10
    reward_variant: str = "proposed"
    baseline_mode: str = "none"
    static_temperature: float = 0.3
    seed: int = 0
    moving_avg_window: int = 10
    lm_order: int = 3
    smoothing_k: float = 0.1
    feature_k: int = 50
    action_every: int = 1
    ppo: PPOConfig = field(default_factory=PPOConfig)

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.eval_prompts < 1:
            raise ValueError(f"eval_prompts must be >= 1, got {self.eval_prompts}")
        if self.baseline_mode not in ("none",) + BASELINE_MODES:
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}")


@dataclass(frozen=True)
class EpisodeRow:
    episode: int
    prompt_id: str
    reward: float
    mean_temperature: float
    mean_top_p: float
    tokens: int
    terminal: str


@dataclass(frozen=True)
class CheckpointRow:
    episode: int
    eval_avg_reward: float
    # In-memory diagnostic; not part of the checkpoint CSV schema.
    eval_mean_temperature: float = 0.0


@dataclass
class RunMetrics:
    """Per-episode rows, checkpoint rows, and the run summary."""

    episodes: list[EpisodeRow]
    checkpoints: list[CheckpointRow]
    summary: dict

    @property
    def final_avg_reward(self) -> float:
        if not self.checkpoints:
            raise ValueError("run has no checkpoints")
        return self.checkpoints[-1].eval_avg_reward

    def episode_rewards(self) -> list[float]:
        return [row.reward for row in self.episodes]


def write_metrics(metrics: RunMetrics, out_dir) -> tuple[Path, Path]:
    """Persist episodes.csv and checkpoints.csv with full-precision floats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes_path = out / "episodes.csv"
    with open(episodes_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(EPISODE_CSV_HEADER + "\n")
        for r in metrics.episodes:
            fh.write(f"{r.episode},{r.prompt_id},{r.reward!r},"
                     f"{r.mean_temperature!r},{r.mean_top_p!r},"
                     f"{r.tokens},{r.terminal}\n")
    checkpoints_path = out / "checkpoints.csv"
    with open(checkpoints_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CHECKPOINT_CSV_HEADER + "\n")
        for c in metrics.checkpoints:
            fh.write(f"{c.episode},{c.eval_avg_reward!r}\n")
    return episodes_path, checkpoints_path


def read_episode_rewards(path) -> list[float]:
    """Reward column of an episodes.csv (used by the plot command)."""
    rewards = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = header.split(",")
        if "reward" not in columns:
            raise ValueError(f"{path}: no 'reward' column in header {header!r}")
        idx = columns.index("reward")
        for line in fh:
            line = line.strip()
            if line:
                rewards.append(float(line.split(",")[idx]))
    return rewards


def split_records(records: list[DatasetRecord], n_prompts: int,
                  eval_prompts: int, seed: int):
    """Disjoint train/eval prompt sets sampled with the run seed."""
    if len(records) < 2:
        raise ValueError("need at least two records to split train/eval")
    rng = rng_for(seed, "split")
    order = rng.permutation(len(records))[:min(n_prompts, len(records))]
    n_eval = min(eval_prompts, len(order) - 1)
    eval_records = [records[i] for i in order[:n_eval]]
    train_records = [records[i] for i in order[n_eval:]]
    return train_records, eval_records


def default_reward_factory(reward_cfg: RewardConfig):
    """Bind the composite reward to a record; ignores episode statistics."""

    def factory(record: DatasetRecord):
        def reward_fn(text, stats):
            return composite_reward(text, record.reference, record.source,
                                    reward_cfg).normalized
        return reward_fn

    return factory


def build_lm_for_records(records: list[DatasetRecord], order: int,
                         smoothing_k: float):
    return build_ngram_lm([tokenize(r.source) for r in records], order,
                          smoothing_k)


def _decode_fixed(lm, prompt_text: str, settings: SamplerSettings, rng,
                  max_episode_len: int):
    """Generate with a fixed strategy; greedy bypasses both knobs."""
    vocab = lm.vocab
    prefix = vocab.encode(tokenize(prompt_text))
    generated: list[int] = []
    terminal = "length_limit"
    for _ in range(max_episode_len):
        step = lm.next_logits(prefix)
        if settings.mode == "greedy":
            probs = apply_temperature(step.logits, 1.0)
        else:
            probs = apply_temperature(step.logits, settings.temperature)
            probs = top_p_filter(probs, settings.top_p)
        token = sample_token(probs, settings, rng)
        generated.append(token)
        prefix.append(token)
        if token == vocab.eos_id:
            terminal = "eos"
            break
    tokens = [vocab.token_of(i) for i in generated if i != vocab.eos_id]
    return detokenize(tokens), len(generated), terminal


def run_baseline(records: list[DatasetRecord], mode: str,
                 reward_cfg: RewardConfig, lm, seed: int,
                 max_episode_len: int = 128,
                 static_temperature: float = 0.3) -> RunMetrics:
    """Decode each prompt once with a fixed strategy and score it."""
    if mode not in BASELINE_MODES:
        raise ValueError(f"baseline mode must be one of {BASELINE_MODES}, got {mode!r}")
    seed = resolve_seed(seed)
    if mode == "greedy":
        settings = SamplerSettings(mode="greedy")
        logged_t, logged_p = 0.0, 0.0
    else:
        settings = SamplerSettings(temperature=static_temperature, top_p=1.0,
                                   mode="static")
        logged_t, logged_p = static_temperature, 1.0
    rows = []
    for i, rec in enumerate(records, start=1):
        rng = rng_for(seed, "baseline", mode, rec.id)
        text, n_tokens, terminal = _decode_fixed(lm, rec.source, settings, rng,
                                                 max_episode_len)
        reward = composite_reward(text, rec.reference, rec.source,
                                  reward_cfg).normalized
        rows.append(EpisodeRow(i, rec.id, reward, logged_t, logged_p,
                               n_tokens, terminal))
    avg = sum(r.reward for r in rows) / len(rows) if rows else 0.0
    checkpoints = [CheckpointRow(len(rows), avg, logged_t)]
    summary = {"reward_variant": reward_cfg.variant, "mode": mode,
               "seed": seed, "avg_reward": avg}
    return RunMetrics(rows, checkpoints, summary)


def evaluate_policy(lm, policy: GaussianPolicy, feature_cfg: FeatureConfig,
                    eval_records, reward_factory, seed: int,
                    max_episode_len: int, action_every: int = 1):
    """Deterministic-action evaluation over the held-out prompts.

    Token-draw streams are keyed by prompt id alone, so re-evaluating the
    same checkpoint reproduces identical rewards and checkpoints differ only
    through the policy parameters.
    """
    rewards, temps = [], []
    for rec in eval_records:
        rng = rng_for(seed, "eval", rec.id)
        traj = run_episode(lm, policy, feature_cfg, reward_factory(rec),
                           rec.source, rng, max_episode_len,
                           deterministic=True, action_every=action_every)
        rewards.append(traj.composite_reward)
        temps.append(traj.mean_temperature)
    avg_reward = sum(rewards) / len(rewards)
    avg_temp = sum(temps) / len(temps)
    return avg_reward, avg_temp


@dataclass
class TrainResult:
    metrics: RunMetrics
    policy: GaussianPolicy
    feature_config: FeatureConfig
    lm: object
    reward_config: RewardConfig
    checkpoint_path: Path | None = None


def train_run(cfg: RunConfig, records: list[DatasetRecord] | None = None,
              lm=None, reward_factory=None) -> TrainResult:
    """Train the controller with PPO over sampled prompts and persist the run.

    Episodes cycle uniformly at random over the train split; updates fire
    every episodes_per_update episodes; checkpoints evaluate the squashed
    policy mean on the eval split every eval_every episodes and at the end.
    """
    seed = resolve_seed(cfg.seed)
    if records is None:
        if cfg.dataset_path is None:
            raise ValueError("train_run needs either records or a dataset_path")
        records = load_dataset(cfg.dataset_path)
    if not records:
        raise ValueError("dataset contains no records")
    if lm is None:
        lm = build_lm_for_records(records, cfg.lm_order, cfg.smoothing_k)
    reward_cfg = reward_config(cfg.reward_variant)
    if reward_factory is None:
        reward_factory = default_reward_factory(reward_cfg)

    train_records, eval_records = split_records(records, cfg.n_prompts,
                                                cfg.eval_prompts, seed)
    feature_cfg = FeatureConfig(k=cfg.feature_k, hidden_dim=lm.hidden_dim,
                                max_prefix_len=cfg.ppo.max_episode_len)
    policy = GaussianPolicy(feature_cfg.state_len, seed=seed)
    trainer = PPOTrainer(policy, cfg.ppo, seed)
    prompt_rng = rng_for(seed, "prompt-order")

    episode_rows: list[EpisodeRow] = []
    checkpoint_rows: list[CheckpointRow] = []
    buffer = []
    for episode in range(1, cfg.episodes + 1):
        record = train_records[int(prompt_rng.integers(len(train_records)))]
        episode_rng = rng_for(seed, "episode", episode)
        traj = run_episode(lm, policy, feature_cfg, reward_factory(record),
                           record.source, episode_rng, cfg.ppo.max_episode_len,
                           action_every=cfg.action_every)
        episode_rows.append(EpisodeRow(
            episode, record.id, traj.composite_reward, traj.mean_temperature,
            traj.mean_top_p, len(traj), traj.terminal_reason))
        buffer.append(traj)
        if len(buffer) >= cfg.ppo.episodes_per_update:
            trainer.update(buffer)
            buffer = []
        if episode % cfg.eval_every == 0 or episode == cfg.episodes:
            avg_reward, avg_temp = evaluate_policy(
                lm, policy, feature_cfg, eval_records, reward_factory, seed,
                cfg.ppo.max_episode_len, cfg.action_every)
            checkpoint_rows.append(CheckpointRow(episode, avg_reward, avg_temp))

    summary = {
        "reward_variant": cfg.reward_variant,
        "seed": seed,
        "episodes": cfg.episodes,
        "train_prompt_ids": sorted(r.id for r in train_records),
        "eval_prompt_ids": sorted(r.id for r in eval_records),
        "final_avg_reward": checkpoint_rows[-1].eval_avg_reward,
    }
    metrics = RunMetrics(episode_rows, checkpoint_rows, summary)
    if len(checkpoint_rows) >= 2:
        summary["early_late_pct"] = early_late_change(metrics)

    result = TrainResult(metrics, policy, feature_cfg, lm, reward_cfg)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(metrics, out)
        checkpoint_path = out / "checkpoint.json"
        save_checkpoint(checkpoint_path, policy, feature_cfg, extras={
            "lm_order": cfg.lm_order, "smoothing_k": cfg.smoothing_k,
            "reward_variant": cfg.reward_variant, "seed": seed,
        })
        emit_plot(metrics.episode_rewards(), cfg.moving_avg_window,
                  out / "reward_plot.svg", out / "reward_plot.csv")
        result.checkpoint_path = checkpoint_path
    return result


def early_late_change(metrics: RunMetrics) -> float:
    """Relative change (%) between first and last checkpoint averages."""
    if len(metrics.checkpoints) < 2:
        raise ValueError("early/late change needs at least two checkpoints")
    first = metrics.checkpoints[0].eval_avg_reward
    last = metrics.checkpoints[-1].eval_avg_reward
    if first == 0.0:
        return math.nan
    return 100.0 * (last - first) / first


def _percent_delta(value: float, base: float) -> float:
    if base == 0.0:
        return math.nan
    return 100.0 * (value - base) / base


@dataclass(frozen=True)
class ComparisonRow:
    """One reward variant's policy-vs-baselines summary (Table semantics:
    absolute rewards, percent deltas, early-to-late percent)."""

    reward_variant: str
    policy_reward: float
    greedy_reward: float
    static_reward: float
    delta_vs_greedy_pct: float
    delta_vs_static_pct: float
    early_late_pct: float

    def as_csv(self) -> str:
        return (f"{self.reward_variant},{self.policy_reward!r},"
                f"{self.greedy_reward!r},{self.static_reward!r},"
                f"{self.delta_vs_greedy_pct!r},{self.delta_vs_static_pct!r},"
                f"{self.early_late_pct!r}")


COMPARISON_CSV_HEADER = ("variant,ppo,greedy,static,delta_vs_greedy_pct,"
                         "delta_vs_static_pct,early_late_pct")


def compare(policy_metrics: RunMetrics, greedy_metrics: RunMetrics,
            static_metrics: RunMetrics) -> ComparisonRow:
    """Percent deltas of the trained policy against both baselines.

    Deltas are computed from unrounded values; rounding is display-only.
    All three runs must share the reward variant.
    """
    variants = {m.summary.get("reward_variant")
                for m in (policy_metrics, greedy_metrics, static_metrics)}
    if len(variants) != 1:
        raise ValueError(f"reward variants differ across runs: {sorted(map(str, variants))}")
    rl = policy_metrics.final_avg_reward
    greedy = greedy_metrics.final_avg_reward
    static = static_metrics.final_avg_reward
    if len(policy_metrics.checkpoints) >= 2:
        early_late = early_late_change(policy_metrics)
    else:
        early_late = math.nan
    return ComparisonRow(
        reward_variant=variants.pop(),
        policy_reward=rl, greedy_reward=greedy, static_reward=static,
        delta_vs_greedy_pct=_percent_delta(rl, greedy),
        delta_vs_static_pct=_percent_delta(rl, static),
        early_late_pct=early_late)


def render_comparison(rows: list[ComparisonRow]) -> str:
    """Fixed-width text table, two decimals, NaN shown as 'n/a'."""

    def fmt(x, width=10):
        text = "n/a" if math.isnan(x) else f"{x:+.2f}" if abs(x) > 10 else f"{x:.3f}"
        return text.rjust(width)

    header = (f"{'variant':<18}{'PPO':>10}{'greedy':>10}{'static':>10}"
              f"{'d_greedy%':>12}{'d_static%':>12}{'early_late%':>13}")
    lines = [header, "-" * len(header)]
    for row in rows:
        dg = "n/a" if math.isnan(row.delta_vs_greedy_pct) else f"{row.delta_vs_greedy_pct:+.2f}"
        ds = "n/a" if math.isnan(row.delta_vs_static_pct) else f"{row.delta_vs_static_pct:+.2f}"
        el = "n/a" if math.isnan(row.early_late_pct) else f"{row.early_late_pct:+.2f}"
        lines.append(f"{row.reward_variant:<18}{row.policy_reward:>10.3f}"
                     f"{row.greedy_reward:>10.3f}{row.static_reward:>10.3f}"
                     f"{dg:>12}{ds:>12}{el:>13}")
    return "\n".join(lines)


def ablate(records: list[DatasetRecord], variants: list[str], cfg: RunConfig,
           out_dir=None) -> list[ComparisonRow]:
    """Run the policy and both baselines under each reward variant."""
    rows = []
    seed = resolve_seed(cfg.seed)
    lm = build_lm_for_records(records, cfg.lm_order, cfg.smoothing_k)
    for variant in variants:
        variant_cfg = RunConfig(
            episodes=cfg.episodes, n_prompts=cfg.n_prompts,
            eval_prompts=cfg.eval_prompts, eval_every=cfg.eval_every,
            reward_variant=variant, static_temperature=cfg.static_temperature,
            seed=seed, moving_avg_window=cfg.moving_avg_window,
            lm_order=cfg.lm_order, smoothing_k=cfg.smoothing_k,
            feature_k=cfg.feature_k, action_every=cfg.action_every,
            ppo=cfg.ppo,
            out_dir=str(Path(out_dir) / variant) if out_dir else None)
        result = train_run(variant_cfg, records=records, lm=lm)
        reward_cfg = result.reward_config
        _, eval_records = split_records(records, cfg.n_prompts,
                                        cfg.eval_prompts, seed)
        greedy = run_baseline(eval_records, "greedy", reward_cfg, lm, seed,
                              cfg.ppo.max_episode_len, cfg.static_temperature)
        static = run_baseline(eval_records, "static", reward_cfg, lm, seed,
                              cfg.ppo.max_episode_len, cfg.static_temperature)
        rows.append(compare(result.metrics, greedy, static))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(COMPARISON_CSV_HEADER + "\n")
            for row in rows:
                fh.write(row.as_csv() + "\n")
    return rows
