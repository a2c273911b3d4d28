#!/usr/bin/env python3
"""
CRR Lab CLI - Command Line Interface

Dataset generation, offline training, evaluation, the tabular proposition
checks and the bandit analysis report.
"""

import argparse
import logging
import os
import sys

# Add the current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import main
from config import load_config
from errors import CrrLabError
from experiments import format_bandit_report

log = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_PROPOSITION_FAILED = 2


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=main.LOG_FORMAT, stream=sys.stderr, force=True)


def _config(args, **explicit):
    return load_config(args.config, args.set, seed=args.seed, env=getattr(args, "env", None), **explicit)


def handle_generate(args) -> int:
    """Handle `generate`: write a behavior dataset."""
    config = _config(args, episodes=args.episodes, eps=args.eps, expert_fraction=args.expert_fraction, dataset=args.output)
    result = main.run_generate(config)
    print(f"Episodes: {result['episodes']}")
    print(f"Transitions: {result['transitions']}")
    print(f"Mean behavior return: {result['mean_return']:.4f}")
    print(f"Dataset: {result['path']}")
    return 0


def handle_train(args) -> int:
    """Handle `train`: run the learner on a dataset file."""
    config = _config(args, dataset=args.dataset, output_dir=args.output_dir, filter=args.filter,
                     advantage=args.advantage, n_updates=args.n_updates, eval_episodes=args.episodes)
    result = main.run_train(config)
    print(f"Steps: {result['steps']}")
    for mode, stats in result["final_eval"].items():
        print(f"{mode:<14} return {stats['mean']:.4f} +- {stats['std']:.4f}")
    print(f"Checkpoint: {result['checkpoint']}")
    return 0


def handle_eval(args) -> int:
    """Handle `eval`: return statistics of a checkpoint in every mode."""
    config = _config(args, eval_episodes=args.episodes)
    results = main.run_eval(config, args.checkpoint)
    print(f"{'mode':<14} {'mean':>10} {'std':>10} {'stderr':>10}")
    for mode, stats in results.items():
        print(f"{mode:<14} {stats['mean']:>10.4f} {stats['std']:>10.4f} {stats['stderr']:>10.4f}")
    return 0


def handle_verify_tabular(args) -> int:
    """Handle `verify-tabular`: exit 2 when any proposition row fails."""
    config = _config(args, output_dir=args.output_dir)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    result = main.run_verify_tabular(config, args.instances, variants, corrupt=args.corrupt_update, trend=not args.skip_trend)
    print(f"Proposition rows: {len(result['rows'])}, failures: {result['failures']}")
    if result["trend"] is not None:
        for row in result["trend"]["rows"]:
            print(f"  n={row['size']:<8d} median sup gap {row['median_gap']:.6f}")
        print(f"Convergence trend: {'pass' if result['trend']['pass'] else 'FAIL'} ({result['trend']['detail']})")
    print(f"Overall: {'pass' if result['pass'] else 'FAIL'}")
    return 0 if result["pass"] else EXIT_PROPOSITION_FAILED


def handle_bandit_report(args) -> int:
    """Handle `bandit-report`: print the closed-form arm preferences."""
    config = _config(args)
    analysis = main.run_bandit_report(config, trials=args.trials)
    print(format_bandit_report(analysis))
    return 0


def create_parser():
    """Create argument parser for CLI"""
    parser = argparse.ArgumentParser(
        description="CRR Lab - offline actor-critic with filtered regression",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py generate --env bandit --episodes 3000 --seed 7 --output bandit.csv
  python cli.py generate --env gridworld --eps 0.3 --output grid.csv
  python cli.py train --config point_mass.conf --set filter=binary --dataset pm.csv
  python cli.py eval --env point_mass --checkpoint runs/checkpoint.bin --episodes 300
  python cli.py verify-tabular --instances 500
  python cli.py bandit-report
        """,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override one config field (repeatable)")
    common.add_argument("--seed", type=int, help="Root seed for every random stream")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level (default: INFO)")

    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("generate", parents=[common], help="Generate a behavior dataset")
    gen.add_argument("--env", type=str, help="bandit, gridworld or point_mass")
    gen.add_argument("--episodes", type=int, help="Number of episodes")
    gen.add_argument("--eps", type=float, help="Grid-world behavior epsilon")
    gen.add_argument("--expert-fraction", type=float, help="Point-mass share of expert episodes")
    gen.add_argument("--output", type=str, help="Dataset path (config key: dataset)")
    gen.set_defaults(handler=handle_generate)

    train = sub.add_parser("train", parents=[common], help="Train on a dataset")
    train.add_argument("--env", type=str)
    train.add_argument("--dataset", type=str, help="Dataset path")
    train.add_argument("--output-dir", type=str, help="Directory for metrics and checkpoint")
    train.add_argument("--filter", choices=["bc", "binary", "binary_max", "exp"])
    train.add_argument("--advantage", choices=["mean", "max", "kstep", "mc"])
    train.add_argument("--n-updates", type=int)
    train.add_argument("--episodes", type=int, help="Evaluation episodes per mode")
    train.set_defaults(handler=handle_train)

    ev = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    ev.add_argument("--env", type=str)
    ev.add_argument("--checkpoint", type=str, help="Checkpoint path")
    ev.add_argument("--episodes", type=int, help="Episodes per mode (default 100)")
    ev.set_defaults(handler=handle_eval)

    ver = sub.add_parser("verify-tabular", parents=[common], help="Check the tabular propositions")
    ver.add_argument("--instances", type=int, default=100, help="Random MDP instances (default: 100)")
    ver.add_argument("--variants", type=str, default="binary,exp", help="Comma separated: binary, exp, exp_beta")
    ver.add_argument("--output-dir", type=str)
    ver.add_argument("--skip-trend", action="store_true", help="Skip the dataset-size convergence experiment")
    ver.add_argument("--corrupt-update", action="store_true", help=argparse.SUPPRESS)
    ver.set_defaults(handler=handle_verify_tabular)

    ban = sub.add_parser("bandit-report", parents=[common], help="Two-armed bandit analysis")
    ban.add_argument("--trials", type=int, default=10000, help="CWP trials per temperature")
    ban.set_defaults(handler=handle_bandit_report)

    return parser


def main_cli(argv=None):
    """Main CLI entry point"""
    parser = create_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "handler", None):
        parser.print_help()
        return 0
    configure_logging(args.log_level)
    try:
        code = args.handler(args)
    except CrrLabError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    if code:
        sys.exit(code)
    return 0


if __name__ == "__main__":
    main_cli()
