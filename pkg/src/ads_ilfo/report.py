"""Summaries and charts over finished run directories."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, ExperimentConfig
from .harness import read_metrics


@dataclass(frozen=True)
class Run:
    path: Path
    config: ExperimentConfig
    rows: list

    @property
    def final_success(self) -> float:
        return self.rows[-1].success_rate if self.rows else math.nan


def load_run(path) -> Run:
    """Loads a run from its directory or from the ``metrics.csv`` inside it."""
    path = Path(path)
    if path.is_file() and path.name == "metrics.csv":
        path = path.parent
    cfg_path, metrics_path = path / "config.txt", path / "metrics.csv"
    for p in (cfg_path, metrics_path):
        if not p.is_file():
            raise ConfigError(f"{path} is not a run directory (missing {p.name})")
    return Run(path, ExperimentConfig.load(cfg_path), read_metrics(metrics_path))


def schedule_label(cfg: ExperimentConfig) -> str:
    if cfg.schedule == "ads":
        return f"ads(lambda={cfg.progress_lambda:g}, alpha={cfg.alpha:g})"
    if cfg.schedule == "fixed":
        return f"fixed(gamma={cfg.fixed_gamma:g})"
    return f"exponential({cfg.exp_gamma_start:g}->{cfg.exp_gamma_end:g})"


def group_runs(runs) -> "OrderedDict[str, list]":
    """Groups runs whose configs differ only in the seed (and wall-clock flag)."""
    groups: "OrderedDict[str, list]" = OrderedDict()
    keys: dict = {}
    for run in runs:
        key = run.config.replace(seed=0, record_wall_clock=False, record_rewards=False)
        if key not in keys:
            label = schedule_label(run.config)
            taken = sum(1 for k in groups if k.split(" #")[0] == label)
            keys[key] = label if taken == 0 else f"{label} #{taken + 1}"
            groups[keys[key]] = []
        groups[keys[key]].append(run)
    return groups


def summary_table(groups) -> str:
    lines = [f"{'config':<40} {'runs':>4}  final success (mean +/- sd)"]
    for label, runs in groups.items():
        finals = np.array([r.final_success for r in runs], dtype=float)
        sd = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
        lines.append(f"{label:<40} {len(runs):>4}  {np.nanmean(finals):.3f} +/- {sd:.3f}")
    return "\n".join(lines) + "\n"


def _plot(groups, column: str, ylabel: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, (label, runs) in enumerate(groups.items()):
        color = f"C{i % 10}"
        for j, run in enumerate(runs):
            x = [r.frames for r in run.rows]
            y = [getattr(r, column) for r in run.rows]
            drawstyle = "steps-post" if column == "gamma" else "default"
            ax.plot(x, y, color=color, alpha=0.6, lw=1.0, drawstyle=drawstyle,
                    label=label if j == 0 else None)
    ax.set_xlabel("environment frames")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(run_dirs, out_dir) -> str:
    runs = [load_run(p) for p in run_dirs]
    if not runs:
        raise ConfigError("report needs at least one run directory")
    groups = group_runs(runs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = summary_table(groups)
    (out / "summary.txt").write_text(text)
    _plot(groups, "success_rate", "evaluation success rate", out / "success.svg")
    _plot(groups, "gamma", "discount factor", out / "gamma.svg")
    return text
