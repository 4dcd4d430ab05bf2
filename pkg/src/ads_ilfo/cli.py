"""Command-line entry point: ``ads-ilfo {gen-demos,train,eval,report}``.

Every :class:`ExperimentConfig` field can be set with ``--<field> value``
(underscores or dashes). Values given on the command line override those in
``--config``. Exit status: 0 on success, 1 on usage or configuration errors,
2 when training aborts on a non-finite loss.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import ConfigError, DomainError, ExperimentConfig, config_fields, save_demos
from .envs import GenerationError, UsageError, make_env
from .harness import NumericalDivergence, demos_for, eval_rng, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_options(parser: argparse.ArgumentParser, seed_required: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="key = value file; command-line options take precedence")
    group = parser.add_argument_group("config overrides")
    for f in config_fields():
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        required = seed_required and f.name == "seed"
        group.add_argument(*flags, dest=f"cfg_{f.name}", metavar="VALUE", required=required,
                           help=f"(default: {f.default})")


def _config(args) -> ExperimentConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file {args.config} not found")
        return ExperimentConfig.from_text(args.config.read_text(), **overrides)
    return ExperimentConfig.from_strings(overrides)


def _cmd_gen_demos(args) -> int:
    cfg = _config(args)
    # same stream a run with this seed would draw its own demonstrations from
    demos = demos_for(cfg.replace(demo_file=""))
    save_demos(args.out, demos)
    print(f"wrote {len(demos)} {cfg.env} demonstrations (T = {demos.horizon}) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _config(args)
    out = args.out if args.out is not None else Path("runs") / f"{cfg.env}-{cfg.schedule}-seed{cfg.seed}"
    try:
        result = train(cfg, out_dir=out)
    except NumericalDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    last = result.rows[-1]
    print(f"final success {last.success_rate:.3f}  k = {last.k}  gamma = {last.gamma:.4f}")
    print(f"metrics: {result.metrics_path}\ncheckpoint: {result.checkpoint_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .agent import Td3Agent

    run_dir = args.checkpoint.parent
    if args.config is None and (run_dir / "config.txt").is_file():
        args.config = run_dir / "config.txt"
    cfg = _config(args)
    if not args.checkpoint.is_file():
        raise ConfigError(f"checkpoint {args.checkpoint} not found")
    agent = Td3Agent.load(args.checkpoint)
    env = make_env(cfg.env, cfg.horizon, cfg.env_jitter)
    if (agent.obs_dim, agent.act_dim) != (env.obs_dim, env.act_dim):
        raise ConfigError("checkpoint does not match the environment's observation/action sizes")
    episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
    result = evaluate(agent.policy, env, episodes, eval_rng(cfg.seed))
    print(f"success rate {result.success_rate:.3f}  held rate {result.held_rate:.3f}  episodes {result.episodes}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import write_report

    print(write_report(args.runs, args.out), end="")
    print(f"charts: {args.out / 'success.svg'}, {args.out / 'gamma.svg'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ads-ilfo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-demos", help="write scripted expert demonstrations to a JSON file")
    p.add_argument("--out", type=Path, required=True)
    _add_config_options(p)
    p.set_defaults(func=_cmd_gen_demos)

    p = sub.add_parser("train", help="run one seeded training run")
    p.add_argument("--out", type=Path, help="run directory (default runs/<env>-<schedule>-seed<seed>)")
    _add_config_options(p, seed_required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--episodes", type=int)
    _add_config_options(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="summarize run directories and draw charts")
    p.add_argument("runs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, default=Path("report"))
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, UsageError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, NumericalDivergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
