"""Training loop with discount scheduling, evaluation, and metrics files."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .agent import AgentConfig, ReplayBuffer, Td3Agent
from .core import ConfigError, DemoSet, ExperimentConfig, load_demos
from .envs import EvalInfo, ObservationOnly, PointMassTask, generate_demos, make_env
from .ot_reward import SolverParams, demo_cost_matrices, label_from_costs
from .progress import ProgressRecognizer, map_discount

log = logging.getLogger(__name__)

# Stream order within SeedSequence(seed).spawn(); appending keeps earlier streams stable.
_DEMO, _ENV, _INIT, _NOISE, _UPDATE, _EVAL = range(6)


class NumericalDivergence(RuntimeError):
    """A loss or target became non-finite during training."""


@dataclass(frozen=True)
class RunMetricsRow:
    frames: int
    episode: int
    success_rate: float
    mean_proxy_return: float
    k: int
    gamma: float
    wall_clock_s: float


METRIC_COLUMNS = tuple(f.name for f in fields(RunMetricsRow))


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def format_metrics(rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in astuple(row)])
    return out.getvalue()


def format_rewards(entries, horizon: int) -> str:
    """One row per training episode: the proxy rewards ``r_1 .. r_{T-1}`` it was labelled with."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["episode", "frames", "demo_index"] + [f"r{i}" for i in range(1, horizon)])
    for episode, frames, demo_index, rewards in entries:
        writer.writerow([episode, frames, demo_index] + [repr(float(r)) for r in rewards])
    return out.getvalue()


class MetricsParseError(ValueError):
    pass


def read_metrics(path) -> list:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != METRIC_COLUMNS:
        raise MetricsParseError(f"{path}: header must be {','.join(METRIC_COLUMNS)}")
    rows = []
    for lineno, record in enumerate(reader, 2):
        if len(record) != len(METRIC_COLUMNS):
            raise MetricsParseError(f"{path}: row {lineno} has {len(record)} fields, expected {len(METRIC_COLUMNS)}")
        try:
            rows.append(RunMetricsRow(
                int(record[0]), int(record[1]), float(record[2]) if record[2] else math.nan,
                float(record[3]) if record[3] else math.nan, int(record[4]), float(record[5]),
                float(record[6]) if record[6] else math.nan,
            ))
        except ValueError as exc:
            raise MetricsParseError(f"{path}: row {lineno}: {exc}") from None
    return rows


# ---------------------------------------------------------------------------
# Discount schedules
# ---------------------------------------------------------------------------


def exponential_gamma(frames: int, start: float, end: float, budget: int) -> float:
    """Interpolates ``1 - gamma`` geometrically from ``1 - start`` to ``1 - end`` over ``budget`` frames."""
    frac = min(frames / budget, 1.0)
    return 1.0 - (1.0 - start) * ((1.0 - end) / (1.0 - start)) ** frac


def scheduled_gamma(cfg: ExperimentConfig, k: int, frames: int) -> float:
    if cfg.schedule == "ads":
        return map_discount(k, cfg.alpha, cfg.gamma0)
    if cfg.schedule == "fixed":
        return cfg.fixed_gamma
    return exponential_gamma(frames, cfg.exp_gamma_start, cfg.exp_gamma_end, cfg.exp_frames)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    success_rate: float
    held_rate: float
    episodes: int


def evaluate(policy: Callable, env: PointMassTask, episodes: int, rng: np.random.Generator) -> EvalResult:
    """Run ``policy`` (noise-free) for ``episodes`` episodes; success is read at the final step."""
    if episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    successes = held = 0
    for _ in range(episodes):
        obs = env.reset(rng)
        done = False
        ever_held = False
        info: Optional[EvalInfo] = None
        while not done:
            obs, done, info = env.step(np.asarray(policy(obs), dtype=np.float64))
            ever_held |= info.held
        successes += bool(info.success)
        held += ever_held
    return EvalResult(successes / episodes, held / episodes, episodes)


def eval_rng(seed: int) -> np.random.Generator:
    """The stream every evaluation of a run starts from, so all evaluation points share reset states."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)).spawn(_EVAL + 1)[_EVAL])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    config: ExperimentConfig
    rows: list
    agent: Td3Agent
    recognizer: ProgressRecognizer
    demos: DemoSet
    evals: list = field(default_factory=list)
    metrics_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    diverged: bool = False

    @property
    def final_success(self) -> float:
        return self.rows[-1].success_rate if self.rows else math.nan


def demos_for(cfg: ExperimentConfig, rng: Optional[np.random.Generator] = None) -> DemoSet:
    if cfg.demo_file:
        demos = load_demos(cfg.demo_file)
    else:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(_DEMO + 1)[_DEMO])
        demos = generate_demos(cfg.env, cfg.n_demos, rng, cfg.demo_jitter, cfg.horizon)
    env = make_env(cfg.env, cfg.horizon, cfg.env_jitter)
    if demos.horizon != cfg.horizon or demos.obs_dim != env.obs_dim:
        raise ConfigError(
            f"demos have shape ({demos.horizon}, {demos.obs_dim}) but the {cfg.env} task needs "
            f"({cfg.horizon}, {env.obs_dim})"
        )
    return demos


def collect_episode(env: ObservationOnly, act: Callable, rng: np.random.Generator):
    """Roll out one episode through the observation-only view."""
    obs = [env.reset(rng)]
    actions = []
    done = False
    while not done:
        a = act(obs[-1])
        o, done = env.step(a)
        actions.append(a)
        obs.append(o)
    return np.array(obs), np.array(actions)


def train(cfg: ExperimentConfig, out_dir=None, demos: Optional[DemoSet] = None,
          env: Optional[PointMassTask] = None, eval_env: Optional[PointMassTask] = None,
          on_row: Optional[Callable] = None) -> TrainResult:
    """Run one seeded training run.

    Writes ``metrics.csv`` and ``checkpoint.json`` into ``out_dir`` when given.
    The learner only ever touches ``env`` through :class:`ObservationOnly`.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(_EVAL + 1)
    rng = {name: np.random.default_rng(streams[i]) for i, name in
           enumerate(("demo", "env", "init", "noise", "update"))}
    demos = demos if demos is not None else demos_for(cfg, rng["demo"])
    raw_env = env if env is not None else make_env(cfg.env, cfg.horizon, cfg.env_jitter)
    eval_env = eval_env if eval_env is not None else make_env(cfg.env, cfg.horizon, cfg.env_jitter)
    if raw_env.horizon != cfg.horizon or demos.horizon != cfg.horizon:
        raise ConfigError("environment, demonstrations and config disagree on the horizon")
    if demos.obs_dim != raw_env.obs_dim:
        raise ConfigError(f"demo obs_dim {demos.obs_dim} does not match the environment's {raw_env.obs_dim}")
    train_env = ObservationOnly(raw_env)
    del env

    T = cfg.horizon
    agent = Td3Agent(train_env.obs_dim, train_env.act_dim, AgentConfig.from_config(cfg), rng["init"])
    buffer = ReplayBuffer(cfg.replay_capacity, T, train_env.obs_dim, train_env.act_dim)
    recognizer = ProgressRecognizer(demos, cfg.cost_spec, cfg.progress_lambda)
    solver = SolverParams.from_config(cfg)
    reward_scale = cfg.effective_reward_scale
    gamma = scheduled_gamma(cfg, 0, 0)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows: list = []
    returns: list = []
    reward_log: list = []
    frames = 0
    episode = 0
    start = time.perf_counter()
    diverged = False

    def explore(o):
        if frames < cfg.warmup_frames:
            return rng["noise"].uniform(-1.0, 1.0, size=train_env.act_dim)
        return agent.act(o, cfg.exploration_noise, rng["noise"])

    evals: list = []

    def record(success_rate: float, ev: Optional[EvalResult] = None) -> RunMetricsRow:
        wall = time.perf_counter() - start if cfg.record_wall_clock else math.nan
        mean_ret = float(np.mean(returns)) if returns else math.nan
        row = RunMetricsRow(frames, episode, success_rate, mean_ret, recognizer.k, gamma, wall)
        rows.append(row)
        returns.clear()
        evals.append(ev)
        if on_row is not None:
            on_row(row, ev)
        return row

    while frames < cfg.total_frames:
        obs, actions = collect_episode(train_env, explore, rng["env"])
        episode += 1
        frames += T
        costs = demo_cost_matrices(obs, demos, cfg.cost_spec)
        label = label_from_costs(costs, solver, reward_scale)
        returns.append(float(label.rewards.sum()))
        if cfg.record_rewards:
            reward_log.append((episode, frames, label.demo_index, label.rewards))
        buffer.add_episode(obs, actions, label.rewards)

        if frames >= cfg.warmup_frames and len(buffer) >= cfg.batch_size:
            # overflow is detected from the returned losses, not from numpy warnings
            with np.errstate(over="ignore", invalid="ignore"):
                for _ in range(cfg.updates_per_step * (T - 1)):
                    stats = agent.update(buffer, gamma, rng["update"])
                    if not (math.isfinite(stats["critic_loss"]) and math.isfinite(stats["target_mean"])):
                        diverged = True
                        break
        if diverged:
            log.error("non-finite loss at frame %d (episode %d)", frames, episode)
            record(math.nan)
            break

        recognizer.update_from_costs(costs)
        gamma = scheduled_gamma(cfg, recognizer.k, frames)

        if episode % cfg.eval_every_episodes == 0 or frames >= cfg.total_frames:
            result = evaluate(agent.policy, eval_env, cfg.eval_episodes, eval_rng(cfg.seed))
            row = record(result.success_rate, result)
            log.info("frames=%d success=%.2f k=%d gamma=%.4f", row.frames, row.success_rate, row.k, row.gamma)

    result = TrainResult(cfg, rows, agent, recognizer, demos, evals, diverged=diverged)
    if out is not None:
        result.metrics_path = out / "metrics.csv"
        result.metrics_path.write_text(format_metrics(rows))
        result.checkpoint_path = out / "checkpoint.json"
        agent.save(result.checkpoint_path)
        (out / "config.txt").write_text(cfg.to_text())
        if cfg.record_rewards:
            (out / "rewards.csv").write_text(format_rewards(reward_log, T))
    if diverged:
        raise NumericalDivergence(f"training diverged at frame {frames}; see {result.metrics_path}")
    return result
