"""
Tabular CRR - exact finite-MDP machinery.

This module builds the empirical MDP of an offline dataset (count-ratio
transitions, an absorbing sink for unseen state-action pairs, the empirical
behavior policy and state weights), evaluates policies exactly, and runs the
closed-form tabular CRR updates:

- binary:   pi(a|s) proportional to 1[Q(s,a) >= V(s)] mu_B(a|s)
- exp:      pi(a|s) proportional to mu_B(a|s) exp(Q(s,a)/beta(s)) with beta(s)
            chosen so that KL(pi || mu_B) meets a per-state budget
- exp_beta: the same exponential form with one fixed temperature

It also carries the checkers used by the proposition sweeps: support
containment, elementwise Q improvement and the true-vs-empirical Q gap.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from errors import ConfigurationError, InputError, InternalError, ParseError, ValidationError

log = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12
DEFAULT_EPSILON = 0.5
BETA_BRACKET = (1e-8, 1e8)
KL_TOLERANCE = 1e-10

TABULAR_HEADER = ["episode", "step", "s", "a", "r", "s_next", "terminal"]

# (s, a, r, s', terminal)
TabularRecord = Tuple[int, int, float, int, bool]


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with transition[s, a, s'] and reward[s, a]."""

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    terminal_states: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=float)
        reward = np.asarray(self.reward, dtype=float)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "terminal_states", frozenset(int(s) for s in self.terminal_states))

        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValidationError(f"transition must be (S, A, S), got {transition.shape}")
        if reward.shape != transition.shape[:2]:
            raise ValidationError(f"reward shape {reward.shape} does not match transition {transition.shape}")
        if np.any(transition < 0) or np.any(np.abs(transition.sum(axis=2) - 1.0) > ROW_TOLERANCE):
            raise ValidationError("transition rows must be nonnegative and sum to 1")
        for s in self.terminal_states:
            if not 0 <= s < self.n_states:
                raise InputError(f"terminal state {s} out of range")
            if np.any(transition[s, :, s] != 1.0) or np.any(reward[s] != 0.0):
                raise ValidationError(f"terminal state {s} must self-loop with reward 0")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise ValidationError(f"policy table must be (S, A), got {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise ValidationError("policy rows must be nonnegative and sum to 1")

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class TabularValues:
    q: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class EmpiricalMdp:
    """
    Empirical MDP of a dataset.

    State indices 0..n_states-1 are the original states; index `terminal_sink`
    (= n_states) is the synthetic absorbing state. All tables include the sink.
    """

    counts: np.ndarray
    reward: np.ndarray
    transition: np.ndarray
    mu_b: np.ndarray
    d_b: np.ndarray
    discount: float
    n_transitions: int

    @property
    def n_states(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def n_actions(self) -> int:
        return self.counts.shape[1]

    @property
    def terminal_sink(self) -> int:
        return self.n_states

    @property
    def behavior(self) -> TabularPolicy:
        return TabularPolicy(self.mu_b)

    def as_mdp(self) -> TabularMdp:
        return TabularMdp(self.transition, self.reward, self.discount, frozenset({self.terminal_sink}))


def _check_index(value, upper, what):
    if not 0 <= int(value) < upper:
        raise InputError(f"{what} index {value} out of range [0, {upper})")
    return int(value)


def check_coherent(
    transitions: Iterable[Tuple[int, int, int]],
    terminal_states: Iterable[int] = (),
    n_states: Optional[int] = None,
    n_actions: Optional[int] = None,
) -> bool:
    """
    True iff every non-terminal successor also appears as a source state.

    Args:
        transitions: (s, a, s') index triples
        terminal_states: states that may appear only as successors
        n_states, n_actions: optional bounds for range checking

    Returns:
        Coherence verdict
    """
    terminals = set(int(s) for s in terminal_states)
    sources = set()
    successors = set()
    for s, a, s_next in transitions:
        if min(int(s), int(a), int(s_next)) < 0:
            raise InputError(f"negative index in transition {(s, a, s_next)}")
        if n_states is not None:
            _check_index(s, n_states, "state")
            _check_index(s_next, n_states, "successor")
        if n_actions is not None:
            _check_index(a, n_actions, "action")
        sources.add(int(s))
        successors.add(int(s_next))
    return all(s in sources or s in terminals for s in successors)


def build_empirical_mdp(
    records: Iterable[TabularRecord],
    n_states: int,
    n_actions: int,
    discount: float,
    terminal_states: Iterable[int] = (),
    reward_mode: str = "strict",
) -> EmpiricalMdp:
    """
    Construct the empirical MDP of a dataset.

    Transitions flagged terminal are routed to the sink, so their successor
    index is not used. Unseen (s, a) pairs move to the sink with reward 0.

    Args:
        records: (s, a, r, s', terminal) tuples
        n_states, n_actions: sizes of the original MDP
        discount: discount factor of the empirical MDP
        terminal_states: successor states that need not appear as sources
        reward_mode: "strict" rejects conflicting rewards per (s, a);
            "mean" averages them (stochastic rewards)

    Returns:
        EmpiricalMdp with counts, P_B, mu_B and d_B
    """
    if reward_mode not in ("strict", "mean"):
        raise ConfigurationError(f"unknown reward_mode {reward_mode!r}")
    sink = n_states
    counts = np.zeros((n_states + 1, n_actions, n_states + 1), dtype=np.int64)
    reward_sum = np.zeros((n_states + 1, n_actions))
    reward_seen: Dict[Tuple[int, int], float] = {}
    triples = []

    for s, a, r, s_next, terminal in records:
        s = _check_index(s, n_states, "state")
        a = _check_index(a, n_actions, "action")
        r = float(r)
        if not np.isfinite(r):
            raise ValidationError(f"non-finite reward at ({s}, {a})")
        if terminal:
            target = sink
        else:
            target = _check_index(s_next, n_states, "successor")
            triples.append((s, a, target))
        if reward_mode == "strict" and (s, a) in reward_seen and abs(reward_seen[(s, a)] - r) > ROW_TOLERANCE:
            raise ValidationError(
                f"conflicting rewards {reward_seen[(s, a)]} and {r} for ({s}, {a})"
            )
        reward_seen.setdefault((s, a), r)
        counts[s, a, target] += 1
        reward_sum[s, a] += r

    # Terminal-flagged records still make their state a source.
    sources = {s for s, _ in reward_seen}
    terminals = set(int(s) for s in terminal_states)
    dangling = sorted({s_next for _, _, s_next in triples} - sources - terminals)
    if dangling:
        raise ValidationError(f"dataset is not coherent: successors {dangling} never appear as sources")

    n_sa = counts.sum(axis=2)
    seen = n_sa > 0
    transition = np.zeros(counts.shape)
    transition[seen] = counts[seen] / n_sa[seen][:, None]
    transition[~seen, sink] = 1.0

    reward = np.zeros((n_states + 1, n_actions))
    if reward_mode == "mean":
        reward[seen] = reward_sum[seen] / n_sa[seen]
    else:
        for (s, a), r in reward_seen.items():
            reward[s, a] = r

    n_s = n_sa.sum(axis=1)
    mu_b = np.full((n_states + 1, n_actions), 1.0 / n_actions)
    visited = n_s > 0
    mu_b[visited] = n_sa[visited] / n_s[visited][:, None]

    total = int(counts.sum())
    d_b = n_s / total if total > 0 else np.zeros(n_states + 1)

    log.debug("empirical MDP: %d transitions, %d visited states", total, int(visited.sum()))
    return EmpiricalMdp(
        counts=counts,
        reward=reward,
        transition=transition,
        mu_b=mu_b,
        d_b=d_b,
        discount=float(discount),
        n_transitions=total,
    )


def _as_mdp(mdp) -> TabularMdp:
    return mdp.as_mdp() if isinstance(mdp, EmpiricalMdp) else mdp


def _policy_table(policy, n_states: int, n_actions: int) -> np.ndarray:
    probs = policy.probs if isinstance(policy, TabularPolicy) else np.asarray(policy, dtype=float)
    if probs.shape == (n_states - 1, n_actions):
        # Policies over the original states of an empirical MDP act uniformly in the sink.
        probs = np.vstack([probs, np.full((1, n_actions), 1.0 / n_actions)])
    if probs.shape != (n_states, n_actions):
        raise ValidationError(f"policy shape {probs.shape} does not match MDP ({n_states}, {n_actions})")
    return probs


def evaluate_policy(mdp, policy, tol: float = 1e-12, method: str = "solve", max_iterations: int = 1_000_000) -> TabularValues:
    """
    Exact policy evaluation.

    Args:
        mdp: TabularMdp or EmpiricalMdp
        policy: TabularPolicy or (S, A) array
        tol: sup-norm stopping tolerance of the iterative method
        method: "solve" (direct linear solve) or "iterate" (value iteration)

    Returns:
        TabularValues with q[s, a] and v[s]
    """
    base = _as_mdp(mdp)
    if not 0.0 < base.discount < 1.0:
        raise ConfigurationError(f"discount must lie in (0, 1), got {base.discount}")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    probs = _policy_table(policy, base.n_states, base.n_actions)
    gamma = base.discount

    if method == "solve":
        p_pi = np.einsum("sa,sat->st", probs, base.transition)
        r_pi = np.sum(probs * base.reward, axis=1)
        v = linalg.solve(np.eye(base.n_states) - gamma * p_pi, r_pi)
        q = base.reward + gamma * base.transition @ v
    elif method == "iterate":
        q = np.zeros_like(base.reward)
        for _ in range(max_iterations):
            v = np.sum(probs * q, axis=1)
            q_next = base.reward + gamma * base.transition @ v
            delta = np.max(np.abs(q_next - q))
            q = q_next
            if delta < tol:
                break
        else:
            raise InternalError("policy evaluation did not converge")
    else:
        raise ConfigurationError(f"unknown evaluation method {method!r}")

    return TabularValues(q=q, v=np.sum(probs * q, axis=1))


def optimal_values(mdp, tol: float = 1e-12, max_iterations: int = 1_000_000) -> TabularValues:
    """Optimal Q*/V* by value iteration."""
    base = _as_mdp(mdp)
    if not 0.0 < base.discount < 1.0:
        raise ConfigurationError(f"discount must lie in (0, 1), got {base.discount}")
    q = np.zeros_like(base.reward)
    for _ in range(max_iterations):
        q_next = base.reward + base.discount * base.transition @ q.max(axis=1)
        delta = np.max(np.abs(q_next - q))
        q = q_next
        if delta < tol:
            break
    return TabularValues(q=q, v=q.max(axis=1))


def _mu_table(mu_b) -> np.ndarray:
    return mu_b.probs if isinstance(mu_b, TabularPolicy) else np.asarray(mu_b, dtype=float)


def crr_binary_update(values: TabularValues, mu_b) -> TabularPolicy:
    """pi(a|s) proportional to 1[Q(s,a) >= V(s)] mu_B(a|s)."""
    mu = _mu_table(mu_b)
    if values.q.shape != mu.shape:
        raise ValidationError(f"Q shape {values.q.shape} does not match mu_B {mu.shape}")
    slack = ROW_TOLERANCE * np.maximum(1.0, np.abs(values.v))
    indicator = values.q >= (values.v - slack)[:, None]
    weights = indicator * mu
    norm = weights.sum(axis=1)
    if np.any(norm <= 0):
        bad = int(np.argmax(norm <= 0))
        raise InternalError(f"no supported action of state {bad} reaches V(s)")
    return TabularPolicy(weights / norm[:, None])


def _tilted(q_row: np.ndarray, log_mu: np.ndarray, beta: float) -> np.ndarray:
    logits = log_mu + (q_row - q_row.max()) / beta
    return np.exp(logits - logsumexp(logits))


def _kl(p: np.ndarray, log_mu: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - log_mu[mask])))


def solve_temperature(q_row: np.ndarray, mu_row: np.ndarray, epsilon: float) -> Tuple[np.ndarray, float]:
    """
    One state of the KL-constrained exponential update.

    Args:
        q_row: Q(s, .) for one state
        mu_row: mu_B(. | s)
        epsilon: KL budget

    Returns:
        (pi(. | s), beta(s)); beta is 0.0 when the greedy limit is returned
    """
    support = mu_row > 0
    q_s = q_row[support]
    log_mu = np.log(mu_row[support])
    probs = np.zeros_like(mu_row, dtype=float)

    top = q_s >= q_s.max() - ROW_TOLERANCE * max(1.0, abs(q_s.max()))
    greedy = np.where(top, mu_row[support], 0.0)
    greedy_mass = greedy.sum()
    if -np.log(greedy_mass) <= epsilon:
        probs[support] = greedy / greedy_mass
        return probs, 0.0

    def gap(log_beta):
        return _kl(_tilted(q_s, log_mu, np.exp(log_beta)), log_mu) - epsilon

    lo, hi = np.log(BETA_BRACKET[0]), np.log(BETA_BRACKET[1])
    if gap(lo) <= 0:
        probs[support] = _tilted(q_s, log_mu, BETA_BRACKET[0])
        return probs, BETA_BRACKET[0]
    if gap(hi) >= 0:
        raise InternalError(f"KL budget {epsilon} not bracketed by beta in {BETA_BRACKET}")

    log_beta = optimize.bisect(gap, lo, hi, xtol=1e-14, maxiter=400)
    residual = abs(gap(log_beta))
    if residual > KL_TOLERANCE:
        log.warning("temperature bisection stopped with KL residual %.3g", residual)
    beta = float(np.exp(log_beta))
    probs[support] = _tilted(q_s, log_mu, beta)
    return probs, beta


def crr_exp_update(values: TabularValues, mu_b, epsilon: float = DEFAULT_EPSILON, return_temperatures: bool = False):
    """
    KL-constrained exponential update, solved per state.

    Returns the greedy-within-support limit when it already fits the budget,
    otherwise bisects log beta so that KL(pi || mu_B) = epsilon.
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    mu = _mu_table(mu_b)
    if values.q.shape != mu.shape:
        raise ValidationError(f"Q shape {values.q.shape} does not match mu_B {mu.shape}")
    probs = np.zeros_like(mu)
    betas = np.zeros(mu.shape[0])
    for s in range(mu.shape[0]):
        probs[s], betas[s] = solve_temperature(values.q[s], mu[s], epsilon)
    policy = TabularPolicy(probs)
    return (policy, betas) if return_temperatures else policy


def crr_exp_fixed_temperature_update(values: TabularValues, mu_b, beta: float = 1.0) -> TabularPolicy:
    """pi(a|s) proportional to mu_B(a|s) exp((Q(s,a) - V(s)) / beta)."""
    if beta <= 0:
        raise ConfigurationError("beta must be positive")
    mu = _mu_table(mu_b)
    advantage = values.q - values.v[:, None]
    with np.errstate(divide="ignore"):
        logits = np.log(mu) + advantage / beta
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return TabularPolicy(weights / weights.sum(axis=1, keepdims=True))


def make_update(variant: str, epsilon: float = DEFAULT_EPSILON, beta: float = 1.0) -> Callable[[TabularValues, np.ndarray], TabularPolicy]:
    if variant == "binary":
        return crr_binary_update
    if variant == "exp":
        return lambda values, mu: crr_exp_update(values, mu, epsilon)
    if variant == "exp_beta":
        return lambda values, mu: crr_exp_fixed_temperature_update(values, mu, beta)
    raise ConfigurationError(f"unknown tabular CRR variant {variant!r}")


def tabular_crr(
    empirical: EmpiricalMdp,
    variant: str = "binary",
    iterations: int = 10,
    epsilon: float = DEFAULT_EPSILON,
    beta: float = 1.0,
    update: Optional[Callable] = None,
) -> List[Tuple[TabularPolicy, TabularValues]]:
    """
    Tabular CRR policy iteration on the empirical MDP, starting from mu_B.

    Args:
        empirical: the empirical MDP
        variant: "binary", "exp" (KL budget epsilon) or "exp_beta" (fixed beta)
        iterations: number of improvement steps
        update: replaces the variant's update rule (used for negative controls)

    Returns:
        [(pi_0, values_0), ..., (pi_n, values_n)] with pi_0 = mu_B
    """
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    step = update or make_update(variant, epsilon, beta)
    policy = empirical.behavior
    trajectory = [(policy, evaluate_policy(empirical, policy))]
    for _ in range(iterations):
        policy = step(trajectory[-1][1], empirical.mu_b)
        trajectory.append((policy, evaluate_policy(empirical, policy)))
    return trajectory


def check_support_containment(policy, mu_b) -> bool:
    probs = _policy_table(policy, *_mu_table(mu_b).shape)
    mu = _mu_table(mu_b)
    return not bool(np.any((mu == 0) & (probs != 0)))


def check_policy_improvement(empirical, pi_old, pi_new, tol: float = 1e-9) -> bool:
    q_old = evaluate_policy(empirical, pi_old).q
    q_new = evaluate_policy(empirical, pi_new).q
    return bool(np.all(q_new >= q_old - tol))


def epsilon_mdp_gap(true_mdp: TabularMdp, empirical: EmpiricalMdp, policy) -> float:
    """
    sup over s in supp d_B and a in supp pi(.|s) of |Q^pi(s,a) - Q_B^pi(s,a)|.
    """
    probs = _policy_table(policy, true_mdp.n_states, true_mdp.n_actions)
    q_true = evaluate_policy(true_mdp, probs).q
    q_emp = evaluate_policy(empirical, probs).q[: true_mdp.n_states]
    mask = (empirical.d_b[: true_mdp.n_states] > 0)[:, None] & (probs > 0)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(q_true - q_emp)[mask]))


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    discount: float = 0.9,
    n_terminal: int = 1,
    branching: Optional[int] = None,
) -> TabularMdp:
    """Random MDP whose last n_terminal states are absorbing."""
    transition = np.zeros((n_states, n_actions, n_states))
    live = n_states - n_terminal
    for s in range(live):
        for a in range(n_actions):
            k = n_states if branching is None else min(branching, n_states)
            targets = rng.choice(n_states, size=k, replace=False)
            transition[s, a, targets] = rng.dirichlet(np.ones(k))
    reward = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    for s in range(live, n_states):
        transition[s, :, s] = 1.0
        reward[s] = 0.0
    return TabularMdp(transition, reward, discount, frozenset(range(live, n_states)))


def _sample_next(rng, mdp: TabularMdp, s: int, a: int) -> int:
    return int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))


def _record(mdp: TabularMdp, s: int, a: int, s_next: int) -> TabularRecord:
    return (s, a, float(mdp.reward[s, a]), s_next, s_next in mdp.terminal_states)


def random_coherent_dataset(rng: np.random.Generator, mdp: TabularMdp, max_repeats: int = 5) -> List[TabularRecord]:
    """
    Coherent dataset with a random behavior support per state.

    Every non-terminal state is a source, each with a random nonempty subset of
    actions, so some actions stay unseen.
    """
    records = []
    for s in range(mdp.n_states):
        if s in mdp.terminal_states:
            continue
        k = int(rng.integers(1, mdp.n_actions + 1))
        for a in rng.choice(mdp.n_actions, size=k, replace=False):
            for _ in range(int(rng.integers(1, max_repeats + 1))):
                records.append(_record(mdp, s, int(a), _sample_next(rng, mdp, s, int(a))))
    return records


def sample_dataset(rng: np.random.Generator, mdp: TabularMdp, behavior, n: int) -> List[TabularRecord]:
    """
    n i.i.d. transitions: s uniform over live states, a ~ behavior, s' ~ P.

    States that were never drawn as a source but appear as successors get one
    extra transition each so the dataset stays coherent.
    """
    probs = _policy_table(behavior, mdp.n_states, mdp.n_actions)
    live = [s for s in range(mdp.n_states) if s not in mdp.terminal_states]
    states = rng.choice(live, size=n)
    records = []
    for s in states:
        a = int(rng.choice(mdp.n_actions, p=probs[s]))
        records.append(_record(mdp, int(s), a, _sample_next(rng, mdp, int(s), a)))
    sources = {r[0] for r in records}
    missing = sorted({r[3] for r in records if not r[4]} - sources)
    while missing:
        for s in missing:
            a = int(rng.choice(mdp.n_actions, p=probs[s]))
            records.append(_record(mdp, s, a, _sample_next(rng, mdp, s, a)))
        sources.update(missing)
        missing = sorted({r[3] for r in records if not r[4]} - sources)
    return records


def write_tabular_records(path, episodes: Sequence[Sequence[TabularRecord]]) -> None:
    """Write episodes of tabular records as `episode, step, s, a, r, s', terminal`."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TABULAR_HEADER)
        for e, episode in enumerate(episodes):
            for t, (s, a, r, s_next, terminal) in enumerate(episode):
                writer.writerow([e, t, s, a, repr(float(r)), s_next, int(bool(terminal))])


def read_tabular_records(path) -> List[TabularRecord]:
    """Read the line-oriented tabular dataset format."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if [h.strip() for h in header.split(",")] != TABULAR_HEADER:
            raise ParseError(f"expected header {','.join(TABULAR_HEADER)}", 1)
        for number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = [x.strip() for x in line.split(",")]
            if len(fields) != len(TABULAR_HEADER):
                raise ParseError(f"expected {len(TABULAR_HEADER)} fields, got {len(fields)}", number)
            try:
                _, _, s, a, r, s_next, terminal = fields
                records.append((int(s), int(a), float(r), int(s_next), bool(int(terminal))))
            except ValueError as exc:
                raise ParseError(str(exc), number) from exc
    return records
