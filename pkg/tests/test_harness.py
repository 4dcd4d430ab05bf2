import ast
import math
from pathlib import Path

import numpy as np
import pytest

import ads_ilfo
from ads_ilfo.core import ConfigError, ExperimentConfig
from ads_ilfo.envs import CarryEnv, EvalInfo, make_env
from ads_ilfo.progress import ProgressRecognizer, map_discount
from ads_ilfo.harness import (
    METRIC_COLUMNS,
    MetricsParseError,
    NumericalDivergence,
    RunMetricsRow,
    demos_for,
    evaluate,
    format_rewards,
    exponential_gamma,
    format_metrics,
    read_metrics,
    scheduled_gamma,
    train,
)

SMALL = dict(horizon=40, n_demos=2, total_frames=400, warmup_frames=80, batch_size=16, hidden_dim=8,
             eval_every_episodes=2, eval_episodes=2, replay_capacity=2000)


def small(**changes):
    return ExperimentConfig(**{**SMALL, **changes})


def test_exponential_schedule_endpoints_and_monotonicity():
    assert exponential_gamma(0, 0.9, 0.99, 1000) == pytest.approx(0.9)
    assert exponential_gamma(1000, 0.9, 0.99, 1000) == pytest.approx(0.99)
    assert exponential_gamma(5000, 0.9, 0.99, 1000) == pytest.approx(0.99)
    # geometric in 1 - gamma: halfway is sqrt(0.1 * 0.01)
    assert 1 - exponential_gamma(500, 0.9, 0.99, 1000) == pytest.approx(math.sqrt(0.1 * 0.01))
    values = [exponential_gamma(f, 0.9, 0.99, 1000) for f in range(0, 1001, 50)]
    assert values == sorted(values)


def test_scheduled_gamma_modes():
    assert scheduled_gamma(ExperimentConfig(schedule="fixed", fixed_gamma=0.95), 40, 0) == 0.95
    assert scheduled_gamma(ExperimentConfig(), 0, 0) == 0.2
    assert scheduled_gamma(ExperimentConfig(), 16, 0) == pytest.approx(0.2 ** (1 / 16))
    assert scheduled_gamma(ExperimentConfig(schedule="exponential"), 0, 10 ** 9) == pytest.approx(0.99)


def test_metrics_round_trip_and_parse_errors(tmp_path):
    rows = [RunMetricsRow(64, 1, 0.5, -3.25, 2, 0.2 ** 0.5, math.nan), RunMetricsRow(128, 2, 1.0, math.nan, 3, 0.9, 1.5)]
    path = tmp_path / "m.csv"
    path.write_text(format_metrics(rows))
    assert path.read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)
    back = read_metrics(path)
    assert back[0].gamma == rows[0].gamma and math.isnan(back[0].wall_clock_s) and math.isnan(back[1].mean_proxy_return)
    path.write_text(format_metrics(rows) + "1,2,3\n")
    with pytest.raises(MetricsParseError, match="row 4"):
        read_metrics(path)
    path.write_text("frames,episode\n")
    with pytest.raises(MetricsParseError, match="header"):
        read_metrics(path)


def test_evaluate_scripted_expert_succeeds(rng):
    env = CarryEnv()
    result = evaluate(lambda o: env.expert_action(o), env, 5, rng)
    assert result.success_rate == 1.0 and result.held_rate == 1.0
    with pytest.raises(ConfigError):
        evaluate(lambda o: np.zeros(3), env, 0, rng)


def test_train_writes_files_and_logs_monotone_k(tmp_path):
    res = train(small(), out_dir=tmp_path)
    assert res.metrics_path.is_file() and res.checkpoint_path.is_file()
    assert ExperimentConfig.load(tmp_path / "config.txt") == small()
    rows = read_metrics(res.metrics_path)
    assert [r.frames for r in rows] == [80 * i for i in range(1, 6)]
    ks = [r.k for r in rows]
    assert ks == sorted(ks)
    gammas = [r.gamma for r in rows]
    assert gammas == sorted(gammas)
    assert all(math.isnan(r.wall_clock_s) for r in rows)


def test_identical_seeds_give_byte_identical_metrics(tmp_path):
    train(small(seed=7), out_dir=tmp_path / "a")
    train(small(seed=7), out_dir=tmp_path / "b")
    train(small(seed=4), out_dir=tmp_path / "c")
    a, b, c = ((tmp_path / d / "metrics.csv").read_bytes() for d in "abc")
    assert a == b
    assert a != c
    assert (tmp_path / "a" / "checkpoint.json").read_bytes() == (tmp_path / "b" / "checkpoint.json").read_bytes()


def test_exponential_schedule_is_logged_exactly():
    cfg = small(schedule="exponential", exp_frames=240)
    rows = train(cfg).rows
    for r in rows:
        closed = 1 - (1 - 0.9) * (0.01 / 0.1) ** min(r.frames / 240, 1.0)
        assert abs(r.gamma - closed) <= 1e-9
    assert rows[-1].gamma == pytest.approx(0.99)


def test_logged_frames_count_every_observation():
    cfg = small(total_frames=500, eval_every_episodes=3)
    rows = train(cfg).rows
    # 500 frames at T = 40 needs 13 episodes; the last one is logged even off-cadence
    assert [(r.episode, r.frames) for r in rows] == [(3, 120), (6, 240), (9, 360), (12, 480), (13, 520)]
    assert all(r.frames == r.episode * cfg.horizon for r in rows)


def test_ads_gamma_is_the_discount_of_the_logged_progress():
    for r in train(small(seed=2)).rows:
        assert r.gamma == map_discount(r.k, 0.2, 0.2)


def test_replaying_a_demo_reaches_full_discount_in_one_episode(rng):
    cfg = small(n_demos=3)
    demos = demos_for(cfg, rng)
    rec = ProgressRecognizer(demos, cfg.cost_spec, cfg.progress_lambda)
    assert scheduled_gamma(cfg, rec.k, 0) == 0.2
    rec.update(demos[0])
    assert rec.k == cfg.horizon
    assert scheduled_gamma(cfg, rec.k, cfg.horizon) == pytest.approx(0.2 ** (1 / 40))


def test_reward_log_matches_logged_returns(tmp_path):
    cfg = small(record_rewards=True)
    rows = train(cfg, out_dir=tmp_path).rows
    lines = (tmp_path / "rewards.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["episode", "frames", "demo_index", "r1"]
    table = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    assert table.shape == (rows[-1].episode, 3 + cfg.horizon - 1)
    assert np.all(table[:, 3:] <= 0)
    sums = table[:, 3:].sum(axis=1)
    start = 0
    for r in rows:
        assert float(np.mean(sums[start:r.episode])) == pytest.approx(r.mean_proxy_return, rel=1e-12)
        start = r.episode
    assert not (tmp_path / "x").exists()
    train(small(), out_dir=tmp_path / "x")
    assert not (tmp_path / "x" / "rewards.csv").exists()


def test_format_rewards_layout():
    text = format_rewards([(1, 3, 0, np.array([-0.5, -0.25]))], 3)
    assert text == "episode,frames,demo_index,r1,r2\n1,3,0,-0.5,-0.25\n"


def test_wall_clock_only_when_requested():
    res = train(small(record_wall_clock=True, total_frames=160))
    assert all(r.wall_clock_s >= 0 for r in res.rows)


def test_divergence_is_reported(tmp_path):
    with pytest.raises(NumericalDivergence):
        train(small(reward_scale=1e300), out_dir=tmp_path)
    rows = read_metrics(tmp_path / "metrics.csv")
    assert math.isnan(rows[-1].success_rate)


def test_demos_must_match_the_task(tmp_path):
    demos = demos_for(small())
    with pytest.raises(ConfigError):
        train(small(horizon=44), demos=demos)


class _Poisoned(EvalInfo):
    """Evaluation info that records every read of its fields."""

    reads: list = []

    def __getattribute__(self, name):
        if name in ("success", "held"):
            _Poisoned.reads.append(name)
        return object.__getattribute__(self, name)


class SpyEnv:
    """Exposes only reset/step/sizes; any other attribute read is recorded."""

    def __init__(self, env):
        object.__setattr__(self, "_env", env)
        object.__setattr__(self, "touched", [])
        object.__setattr__(self, "steps", 0)

    obs_dim, act_dim = CarryEnv.obs_dim, CarryEnv.act_dim

    @property
    def horizon(self):
        return self._env.horizon

    def reset(self, rng):
        return self._env.reset(rng)

    def step(self, action):
        obs, done, info = self._env.step(action)
        object.__setattr__(self, "steps", self.steps + 1)
        return obs, done, _Poisoned(info.success, info.held)

    def __getattr__(self, name):
        self.touched.append(name)
        return getattr(self._env, name)


def test_training_path_never_reads_success_or_env_internals():
    _Poisoned.reads.clear()
    spy = SpyEnv(make_env("carry", 40))
    res = train(small(), env=spy)
    assert spy.steps == small().total_frames // 40 * 39
    assert _Poisoned.reads == []
    assert spy.touched == []
    assert res.rows


def test_learning_modules_do_not_import_environments():
    root = Path(ads_ilfo.__file__).parent
    for rel in ("ot_reward.py", "progress.py", "core.py", "agent/td3.py", "agent/replay.py", "agent/mlp.py"):
        tree = ast.parse((root / rel).read_text())
        for node in ast.walk(tree):
            if isinstance(node, ast.ImportFrom):
                assert "envs" not in (node.module or ""), rel
            if isinstance(node, ast.Import):
                assert all("envs" not in a.name for a in node.names), rel
