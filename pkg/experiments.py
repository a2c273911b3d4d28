"""
Experiments built on the library modules.

- proposition_sweep: support containment and Q/V improvement of every tabular
  CRR iterate over random empirical MDPs
- convergence_trend: sup |Q - Q_B| of a fixed stochastic MDP as the dataset grows
- bandit_analysis: closed-form fitted policies on the two-armed bandit
- train_agent / evaluate_agent: one offline training run and its evaluation
- filter_comparison / kstep_comparison: paired runs across seeds
"""

import dataclasses
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

import tabular
from config import ExperimentConfig
from crr.cwp import ActorPolicy, cwp_weights
from crr.learner import init_learner, train
from crr.networks import make_networks
from data import Dataset
from envs import make_env
from envs.bandit import TwoArmedBandit
from envs.behavior import make_behavior
from envs.rollout import generate_dataset, rollout
from errors import ConfigurationError
from seeding import RandomStreams
from store.metrics import EVAL_HEADER, METRICS_HEADER, MetricsTrace

log = logging.getLogger(__name__)

PROPOSITIONS = ("support_containment", "q_improvement", "v_improvement")
REPORT_HEADER = ["instance_seed", "proposition", "pass", "detail"]
TREND_HEADER = ["size", "median_gap", "gaps"]
BANDIT_BETAS = (0.1, 1.0, 10.0)
TREND_SIZES = (100, 1000, 10000, 100000)
TREND_MDP_SEED = 6


# ---------------------------------------------------------------------------
# tabular propositions
# ---------------------------------------------------------------------------

def random_instance(instance_seed: int, max_states: int = 10, max_actions: int = 5):
    """Random MDP (|S| <= max_states, |A| <= max_actions) and the empirical MDP of a random coherent dataset."""
    rng = np.random.default_rng(instance_seed)
    n_states = int(rng.integers(2, max_states + 1))
    n_actions = int(rng.integers(2, max_actions + 1))
    mdp = tabular.random_mdp(rng, n_states, n_actions, discount=float(rng.uniform(0.5, 0.95)))
    records = tabular.random_coherent_dataset(rng, mdp)
    empirical = tabular.build_empirical_mdp(records, n_states, n_actions, mdp.discount, mdp.terminal_states)
    return mdp, empirical


def check_trajectory(empirical, trajectory, tol: float = 1e-9) -> Dict[str, Dict]:
    """Pass flag and detail for each proposition over consecutive iterates."""
    mu = empirical.mu_b
    contained = all(tabular.check_support_containment(policy, mu) for policy, _ in trajectory)
    leaked = max(float(np.max(np.where(mu == 0, policy.probs, 0.0))) for policy, _ in trajectory)
    q_drop = max(float(np.max(prev.q - cur.q)) for (_, prev), (_, cur) in zip(trajectory, trajectory[1:]))
    v_drop = max(float(np.max(prev.v - cur.v)) for (_, prev), (_, cur) in zip(trajectory, trajectory[1:]))
    return {
        "support_containment": {"pass": contained, "detail": f"max mass off support {leaked:.3g}"},
        "q_improvement": {"pass": q_drop <= tol, "detail": f"max Q decrease {q_drop:.3g}"},
        "v_improvement": {"pass": v_drop <= tol, "detail": f"max V decrease {v_drop:.3g}"},
    }


def proposition_sweep(n_instances: int = 100, seed: int = 0, variants: Sequence[str] = ("binary", "exp"),
                      iterations: int = 10, epsilon: float = tabular.DEFAULT_EPSILON, beta: float = 1.0,
                      update: Optional[Callable] = None) -> List[Dict]:
    """
    Rows `instance_seed, proposition, pass, detail`, three per instance and variant.

    `update` replaces every variant's update rule (negative controls).
    """
    rows = []
    for i in range(n_instances):
        instance_seed = seed + i
        _, empirical = random_instance(instance_seed)
        for variant in variants:
            trajectory = tabular.tabular_crr(empirical, variant, iterations, epsilon=epsilon, beta=beta, update=update)
            for name, result in check_trajectory(empirical, trajectory).items():
                rows.append({
                    "instance_seed": instance_seed,
                    "proposition": f"{variant}:{name}",
                    "pass": bool(result["pass"]),
                    "detail": result["detail"],
                })
    failures = sum(not row["pass"] for row in rows)
    log.info("proposition sweep: %d instances, %d rows, %d failures", n_instances, len(rows), failures)
    return rows


def corrupted_update(values, mu_b):
    """Negative control: uniform over all actions, ignoring the behavior support."""
    q = values.q
    return tabular.TabularPolicy(np.full(q.shape, 1.0 / q.shape[1]))


def trend_mdp() -> tabular.TabularMdp:
    """The fixed 6-state stochastic MDP used for the convergence trend."""
    return tabular.random_mdp(np.random.default_rng(TREND_MDP_SEED), 6, 2, discount=0.9, n_terminal=1)


def convergence_trend(sizes: Sequence[int] = TREND_SIZES, seeds: Sequence[int] = (0, 1, 2)) -> Dict:
    """
    sup |Q^pi - Q_B^pi| under the uniform behavior policy for growing i.i.d. datasets.

    Returns:
        dict with "rows" (size, median_gap, gaps), "pass" and "detail"
    """
    mdp = trend_mdp()
    behavior = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    rows = []
    for size in sizes:
        gaps = []
        for seed in seeds:
            rng = np.random.default_rng([seed, size])
            records = tabular.sample_dataset(rng, mdp, behavior, size)
            empirical = tabular.build_empirical_mdp(records, mdp.n_states, mdp.n_actions, mdp.discount, mdp.terminal_states)
            gaps.append(tabular.epsilon_mdp_gap(mdp, empirical, behavior))
        rows.append({"size": size, "median_gap": float(np.median(gaps)), "gaps": gaps})

    medians = np.array([row["median_gap"] for row in rows])
    inversions = int(np.sum(np.diff(medians) > 0))
    shrink = 1.0 - medians[-1] / medians[0] if medians[0] > 0 else 1.0
    passed = inversions <= 1 and shrink >= 0.9
    detail = f"{inversions} inversions, gap shrinks by {shrink:.1%}"
    log.info("convergence trend: %s", detail)
    return {"rows": rows, "pass": passed, "detail": detail}


# ---------------------------------------------------------------------------
# bandit
# ---------------------------------------------------------------------------

def _normalise(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    return weights / weights.sum()


def bandit_analysis(betas: Sequence[float] = BANDIT_BETAS, mu_b=(2.0 / 3.0, 1.0 / 3.0), clip: float = 20.0,
                    cwp_samples: int = 16, cwp_trials: int = 10000, top_fraction: float = 0.1, seed: int = 0) -> Dict:
    """
    Fitted arm probabilities of each method on the two-armed bandit.

    Exp-filter and return-weighted rows are the closed-form solutions of their
    weighted maximum likelihood problems with an exact critic.
    """
    env = TwoArmedBandit()
    mu = np.asarray(mu_b, dtype=float)
    mdp = env.tabular_mdp()
    q = env.expected_payoffs
    v = float(mu @ q)
    adv = q - v

    # Empirical MDP whose counts follow mu_B exactly and whose rewards are the expected payoffs.
    counts = np.rint(mu * 3000).astype(int)
    records = [(0, a, float(q[a]), 1, True) for a in range(2) for _ in range(counts[a])]
    empirical = tabular.build_empirical_mdp(records, 2, 2, mdp.discount, {1})
    binary_policy = tabular.tabular_crr(empirical, "binary", iterations=2)[-1][0].probs[0]

    rng = np.random.default_rng(seed)
    methods = []
    for beta in betas:
        exp_weights = np.minimum(np.exp(adv / beta), clip)
        # E[exp((R - V) / beta) | arm]: arm 0 returns 1 or 0, arm 1 always 0.9.
        awr_weights = np.array([
            env.p_arm0 * np.exp((1.0 - v) / beta) + (1 - env.p_arm0) * np.exp(-v / beta),
            np.exp((env.payoff_arm1 - v) / beta),
        ])
        samples = (rng.random((cwp_trials, cwp_samples)) >= mu[0]).astype(int)
        weights = cwp_weights(q[samples], beta)
        cumulative = np.cumsum(weights, axis=1)
        pick = np.minimum((rng.random(cwp_trials)[:, None] > cumulative).sum(axis=1), cwp_samples - 1)
        chosen = samples[np.arange(cwp_trials), pick]
        cwp_freq = np.array([np.mean(chosen == 0), np.mean(chosen == 1)])
        methods.extend([
            {"method": "bc", "beta": beta, "pi": mu.copy()},
            {"method": "crr_binary", "beta": beta, "pi": binary_policy.copy()},
            {"method": "crr_exp", "beta": beta, "pi": _normalise(mu * exp_weights)},
            {"method": "return_weighted", "beta": beta, "pi": _normalise(mu * awr_weights)},
            {"method": "return_filtered_bc", "beta": beta, "pi": _return_filtered(mu, env.p_arm0, top_fraction)},
            {"method": "cwp", "beta": beta, "pi": cwp_freq},
        ])
    for row in methods:
        row["prefers_arm2"] = bool(row["pi"][1] > row["pi"][0])
    return {"mu_b": mu, "q": q, "v": v, "advantage": adv, "rows": methods}


def _return_filtered(mu, p_arm0: float, top_fraction: float) -> np.ndarray:
    """
    Behavior cloning on the top fraction of transitions by observed return.

    The highest return in the data is 1 (arm 0 wins); while the kept fraction
    does not exceed that share, only arm-0 wins survive the filter, then 0.9s.
    """
    share_one = mu[0] * p_arm0
    if top_fraction <= share_one:
        return np.array([1.0, 0.0])
    # all 1s plus part of the 0.9 payouts
    extra = min(top_fraction - share_one, mu[1])
    return _normalise([share_one, extra])


def format_bandit_report(analysis: Dict) -> str:
    lines = [
        f"mu_B  = ({analysis['mu_b'][0]:.4f}, {analysis['mu_b'][1]:.4f})",
        f"Q     = ({analysis['q'][0]:.4f}, {analysis['q'][1]:.4f})   V = {analysis['v']:.4f}",
        f"{'method':<20} {'beta':>6} {'pi(arm1)':>10} {'pi(arm2)':>10}  prefers arm 2",
    ]
    for row in analysis["rows"]:
        lines.append(
            f"{row['method']:<20} {row['beta']:>6g} {row['pi'][0]:>10.4f} {row['pi'][1]:>10.4f}  {'yes' if row['prefers_arm2'] else 'no'}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# deep learner runs
# ---------------------------------------------------------------------------

EVAL_ORDER = ("stochastic", "deterministic", "cwp")


def build_networks(config: ExperimentConfig, env):
    return make_networks(env, config.grid(), config.hidden_width, config.n_blocks, config.n_components, config.deterministic_mode)


def evaluate_agent(networks, actor_params, critic_params, env, config: ExperimentConfig, seed_sequence, modes=None) -> Dict[str, Dict]:
    """
    Return statistics per action-selection mode.

    Every mode uses the same episode seeds, so mode differences are not
    start-state noise.
    """
    modes = modes or [m for m in EVAL_ORDER if m != "cwp" or config.cwp]
    results = {}
    for mode in modes:
        policy = ActorPolicy(networks, actor_params, critic_params, mode, config.cwp_samples, config.cwp_beta, config.component_means)
        _, stats = rollout(env, policy, config.eval_episodes, np.random.default_rng(seed_sequence), discount=config.discount)
        results[mode] = stats
    return results


def train_agent(config: ExperimentConfig, dataset: Dataset, output_dir=None, env=None) -> Dict:
    """
    Train on an offline dataset with periodic evaluation.

    With output_dir, writes metrics.csv and eval.csv there. The returned dict
    holds networks, final state, metrics history and evaluation results keyed
    by step.
    """
    env = env or make_env(config.env, **config.env_params())
    if dataset.obs_dim != env.obs_dim or dataset.act_dim != env.act_dim or dataset.discrete != env.discrete:
        raise ConfigurationError(f"dataset dimensions ({dataset.obs_dim}, {dataset.act_dim}) do not match {env.name}")
    learner_config = config.learner_config()
    streams = RandomStreams(config.seed)
    networks = build_networks(config, env)
    state = init_learner(networks, streams["init"])
    initial = state.copy()

    metrics_trace = eval_trace = None
    if output_dir is not None:
        output_dir = Path(output_dir)
        metrics_trace = MetricsTrace(output_dir / "metrics.csv", METRICS_HEADER)
        eval_trace = MetricsTrace(output_dir / "eval.csv", EVAL_HEADER)
    evaluations = {}

    def after_step(current, metrics):
        step = metrics["step"]
        if (config.eval_every and step % config.eval_every == 0) or step == learner_config.n_updates:
            results = evaluate_agent(networks, current.actor, current.critic, env, config, streams.sequence("eval", step))
            evaluations[step] = results
            headline = results.get(config.eval_mode, results["deterministic"])
            metrics["eval_return_mean"] = headline["mean"]
            metrics["eval_return_std"] = headline["std"]
            if eval_trace is not None:
                for mode, stats in results.items():
                    eval_trace.write({"step": step, "mode": mode, "return_mean": stats["mean"], "return_std": stats["std"]})
            log.info("step %d eval %s", step, ", ".join(f"{m} {s['mean']:.3f}" for m, s in results.items()))
        if metrics_trace is not None:
            metrics_trace.write(metrics)

    try:
        state, history = train(networks, state, dataset, learner_config, streams, callback=after_step, log_every=config.log_every)
    finally:
        for trace in (metrics_trace, eval_trace):
            if trace is not None:
                trace.close()
    return {"networks": networks, "state": state, "initial": initial, "history": history, "evaluations": evaluations, "env": env}


def make_dataset(config: ExperimentConfig, env=None) -> Dataset:
    env = env or make_env(config.env, **config.env_params())
    behavior = make_behavior(env, config.behavior_spec())
    return generate_dataset(env, behavior, config.episodes, RandomStreams(config.seed)["behavior"])


def _final_returns(run: Dict) -> Dict[str, float]:
    if not run["evaluations"]:
        return {}
    last = run["evaluations"][max(run["evaluations"])]
    returns = {mode: stats["mean"] for mode, stats in last.items()}
    returns.update({f"{mode}_stderr": stats["stderr"] for mode, stats in last.items()})
    returns.update({f"{mode}_discounted": stats["discounted_mean"] for mode, stats in last.items()})
    return returns


def filter_comparison(base: ExperimentConfig, filters: Sequence[str] = ("exp", "binary", "bc"), seeds: Sequence[int] = (0, 1, 2)) -> List[Dict]:
    """
    Paired runs: for each seed one dataset, one training run per filter.

    Returns rows {seed, filter, <mode>: final mean return, <mode>_stderr, <mode>_discounted}.
    """
    rows = []
    for seed in seeds:
        config = dataclasses.replace(base, seed=seed)
        env = make_env(config.env, **config.env_params())
        dataset = make_dataset(config, env)
        for name in filters:
            run = train_agent(dataclasses.replace(config, filter=name, advantage=""), dataset, env=env)
            rows.append({"seed": seed, "filter": name, **_final_returns(run)})
            log.info("filter comparison seed %d %s: %s", seed, name, rows[-1])
    return rows


def kstep_comparison(base: ExperimentConfig, advantages: Sequence[str] = ("mean", "kstep"), seeds: Sequence[int] = (0, 1, 2)) -> List[Dict]:
    """
    Paired runs that differ only in the advantage estimator.

    Rows carry <mode>_discounted next to the undiscounted return; on the grid
    world the undiscounted return only records whether the goal was reached.
    """
    rows = []
    for seed in seeds:
        config = dataclasses.replace(base, seed=seed)
        env = make_env(config.env, **config.env_params())
        dataset = make_dataset(config, env)
        for name in advantages:
            run = train_agent(dataclasses.replace(config, advantage=name), dataset, env=env)
            rows.append({"seed": seed, "advantage": name, **_final_returns(run)})
            log.info("advantage comparison seed %d %s: %s", seed, name, rows[-1])
    return rows
