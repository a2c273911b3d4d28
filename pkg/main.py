"""
Pipelines behind the command-line commands.

Each run_* function takes a validated ExperimentConfig, writes its artifacts
and returns a result dict the CLI prints from.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

import experiments
from config import ExperimentConfig
from data import read_dataset, write_dataset
from envs import make_env
from errors import ConfigurationError
from seeding import RandomStreams
from store.checkpoint import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
CHECKPOINT_NAME = "checkpoint.bin"


def _output_dir(config: ExperimentConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_generate(config: ExperimentConfig) -> Dict:
    """Roll out the configured behavior policy and write the dataset file."""
    env = make_env(config.env, **config.env_params())
    dataset = experiments.make_dataset(config, env)
    path = Path(config.dataset)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, path)
    returns = dataset.episode_returns()
    return {
        "path": str(path),
        "episodes": len(dataset.episodes),
        "transitions": len(dataset),
        "mean_return": float(np.mean(returns)),
    }


def _load_dataset(config: ExperimentConfig):
    path = Path(config.dataset)
    if not path.exists():
        raise ConfigurationError(f"dataset not found: {path}")
    return read_dataset(path)


def run_train(config: ExperimentConfig) -> Dict:
    """
    Train on config.dataset; writes metrics.csv, eval.csv, the final
    checkpoint and the resolved config into config.output_dir. Timestamps
    only go to the sidecar run.log.
    """
    config.learner_config()
    dataset = _load_dataset(config)
    out = _output_dir(config)
    (out / "config.txt").write_text(config.to_text())

    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    try:
        log.info("training %s on %s (%d transitions), filter %s", config.env, config.dataset, len(dataset), config.filter)
        run = experiments.train_agent(config, dataset, output_dir=out)
        state = run["state"]
        save_checkpoint(out / CHECKPOINT_NAME, state.actor, state.critic, step=state.step)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()

    final = run["evaluations"][max(run["evaluations"])] if run["evaluations"] else {}
    return {
        "output_dir": str(out),
        "steps": state.step,
        "checkpoint": str(out / CHECKPOINT_NAME),
        "final_eval": final,
    }


def run_eval(config: ExperimentConfig, checkpoint: Optional[str] = None) -> Dict[str, Dict]:
    """Return statistics of a checkpoint under every action-selection mode."""
    path = Path(checkpoint or config.checkpoint or Path(config.output_dir) / CHECKPOINT_NAME)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    env = make_env(config.env, **config.env_params())
    networks = experiments.build_networks(config, env)
    streams = RandomStreams(config.seed)
    template_rng = streams["init"]
    actor, critic, step = load_checkpoint(path, networks.actor.init(template_rng), networks.critic.init(template_rng))
    log.info("evaluating %s (step %d) on %s, %d episodes per mode", path, step, env.name, config.eval_episodes)
    return experiments.evaluate_agent(networks, actor, critic, env, config, streams.sequence("eval"), modes=list(experiments.EVAL_ORDER))


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[name] for name in header])


def run_verify_tabular(config: ExperimentConfig, instances: int = 100, variants: Sequence[str] = ("binary", "exp"),
                       corrupt: bool = False, trend: bool = True) -> Dict:
    """
    Proposition sweep plus the convergence trend.

    Writes propositions.csv and convergence.csv into config.output_dir; "pass"
    is the conjunction of every row.
    """
    out = _output_dir(config)
    update = experiments.corrupted_update if corrupt else None
    rows = experiments.proposition_sweep(instances, seed=config.seed, variants=variants, update=update)
    _write_rows(out / "propositions.csv", experiments.REPORT_HEADER,
                [dict(row, **{"pass": int(row["pass"])}) for row in rows])

    result = {"rows": rows, "failures": sum(not r["pass"] for r in rows), "trend": None}
    if trend:
        result["trend"] = experiments.convergence_trend()
        trend_rows = [
            {"size": r["size"], "median_gap": format(r["median_gap"], ".17g"), "gaps": ";".join(format(g, ".17g") for g in r["gaps"])}
            for r in result["trend"]["rows"]
        ]
        _write_rows(out / "convergence.csv", experiments.TREND_HEADER, trend_rows)
    result["pass"] = result["failures"] == 0 and (result["trend"] is None or result["trend"]["pass"])
    return result


def run_bandit_report(config: ExperimentConfig, trials: int = 10000) -> Dict:
    return experiments.bandit_analysis(
        clip=config.clip, cwp_samples=config.cwp_samples, cwp_trials=trials, seed=config.seed,
    )
