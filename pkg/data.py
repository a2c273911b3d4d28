"""
Offline datasets: in-memory representation, text file format and samplers.

File format (version 1), comma separated, one line per step:

    version=1,obs_dim=<n>,act_dim=<m>,discrete=<0|1>
    episode_id,step_index,obs_1..obs_n,act_1..act_m,reward,terminal

Reals are printed with 17 significant digits so float64 values round-trip
exactly; discrete actions are printed as integers. `terminal` is 1 on the step
that ends an episode in a terminal state, 0 otherwise. An episode that ended
by time limit is followed by one truncation row with terminal=2 that carries
the final observation (its action and reward fields are 0); it is not a
transition.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np

from errors import ConfigurationError, ParseError, PreconditionError, ValidationError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRUNCATION = 2


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    terminal: bool
    episode_id: int = -1
    step_index: int = -1


@dataclass
class EpisodeRecord:
    """
    A full rollout: observations[t] is s_t for t = 0..T, so observations has
    T+1 rows; actions[t] and rewards[t] belong to step t.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: bool

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def total_return(self) -> float:
        return float(np.sum(self.rewards))

    def discounted_return(self, discount: float) -> float:
        return float(np.sum(self.rewards * discount ** np.arange(self.length)))

    def steps(self):
        """(s, a, r, s', terminal) per step."""
        for t in range(self.length):
            done = self.terminal and t == self.length - 1
            yield self.observations[t], self.actions[t], float(self.rewards[t]), self.observations[t + 1], done

    def to_episode(self, episode_id: int) -> "Episode":
        final = None if self.terminal else self.observations[-1].copy()
        return Episode(
            episode_id=episode_id,
            observations=np.array(self.observations[:-1], dtype=np.float64),
            actions=np.array(self.actions, dtype=np.float64),
            rewards=np.array(self.rewards, dtype=np.float64),
            terminal=self.terminal,
            final_observation=final,
        )


@dataclass
class Episode:
    """
    Stored episode. A time-limited episode keeps its final observation for
    bootstrapping; a terminal one does not need it.
    """

    episode_id: int
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: bool
    final_observation: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.terminal == (self.final_observation is not None):
            raise ValidationError(
                f"episode {self.episode_id}: exactly the non-terminal episodes carry a final observation"
            )
        if not (len(self.observations) == len(self.actions) == len(self.rewards)):
            raise ValidationError(f"episode {self.episode_id}: step arrays have different lengths")
        if not np.all(np.isfinite(self.rewards)):
            raise ValidationError(f"episode {self.episode_id}: non-finite reward")

    @property
    def length(self) -> int:
        return len(self.rewards)

    def next_observations(self) -> np.ndarray:
        if self.length == 0:
            return self.observations.copy()
        tail = self.observations[-1:] if self.terminal else self.final_observation[None]
        return np.concatenate([self.observations[1:], tail], axis=0)


@dataclass
class Batch:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.rewards)


@dataclass
class SequenceBatch:
    """
    K-step windows. observations[b, :lengths[b]+1] are real; rewards and
    actions beyond lengths[b] are zero padding. `ends_terminal` marks windows
    cut short by a terminal state (no bootstrap).
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    lengths: np.ndarray
    ends_terminal: np.ndarray
    mc_returns: np.ndarray
    first: Batch

    def __len__(self):
        return len(self.lengths)

    def discounted_rewards(self, discount: float) -> np.ndarray:
        k = self.rewards.shape[1]
        return self.rewards @ (discount ** np.arange(k))

    def bootstrap_observations(self) -> np.ndarray:
        return self.observations[np.arange(len(self)), self.lengths]

    def bootstrap_discounts(self, discount: float) -> np.ndarray:
        return np.where(self.ends_terminal, 0.0, discount ** self.lengths.astype(np.float64))


class Dataset:
    """
    Immutable collection of episodes (sequential) or of loose transitions.

    Flat per-transition arrays are built once; sampling never copies episodes.
    """

    def __init__(self, episodes: List[Episode], obs_dim: int, act_dim: int, discrete: bool, sequential: bool = True):
        self.episodes = list(episodes)
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.discrete = bool(discrete)
        self.sequential = bool(sequential)
        self._mc_cache: Dict[float, np.ndarray] = {}

        for ep in self.episodes:
            if ep.length and (ep.observations.shape[1] != self.obs_dim or ep.actions.shape[1] != self.act_dim):
                raise ValidationError(f"episode {ep.episode_id}: dimensions do not match dataset ({self.obs_dim}, {self.act_dim})")

        def stack(parts, width):
            parts = [p for p in parts if len(p)]
            return np.concatenate(parts, axis=0) if parts else np.zeros((0, width))

        self.observations = stack([ep.observations for ep in self.episodes], self.obs_dim)
        self.actions = stack([ep.actions for ep in self.episodes], self.act_dim)
        self.next_observations = stack([ep.next_observations() for ep in self.episodes], self.obs_dim)
        self.rewards = np.concatenate([ep.rewards for ep in self.episodes]) if self.episodes else np.zeros(0)
        terminals = []
        self.episode_index = []
        self.step_index = []
        for i, ep in enumerate(self.episodes):
            flags = np.zeros(ep.length, dtype=bool)
            if ep.terminal and ep.length:
                flags[-1] = True
            terminals.append(flags)
            self.episode_index.extend([i] * ep.length)
            self.step_index.extend(range(ep.length))
        self.terminals = np.concatenate(terminals) if terminals else np.zeros(0, dtype=bool)
        self.episode_index = np.asarray(self.episode_index, dtype=np.int64)
        self.step_index = np.asarray(self.step_index, dtype=np.int64)
        self._episode_start = np.cumsum([0] + [ep.length for ep in self.episodes])[:-1]

    @classmethod
    def from_records(cls, records: List[EpisodeRecord], discrete: bool) -> "Dataset":
        if not records:
            raise PreconditionError("cannot infer dimensions from zero episodes")
        episodes = [r.to_episode(i) for i, r in enumerate(records)]
        return cls(episodes, records[0].observations.shape[1], records[0].actions.shape[1], discrete)

    @classmethod
    def from_transitions(cls, transitions: List[Transition], discrete: bool) -> "Dataset":
        """Non-sequential dataset: every transition is its own one-step episode."""
        if not transitions:
            raise PreconditionError("cannot infer dimensions from zero transitions")
        episodes = []
        for i, tr in enumerate(transitions):
            episodes.append(Episode(
                episode_id=i,
                observations=np.atleast_2d(np.asarray(tr.observation, dtype=np.float64)),
                actions=np.atleast_2d(np.asarray(tr.action, dtype=np.float64)),
                rewards=np.array([tr.reward], dtype=np.float64),
                terminal=bool(tr.terminal),
                final_observation=None if tr.terminal else np.asarray(tr.next_observation, dtype=np.float64),
            ))
        first = transitions[0]
        return cls(episodes, np.size(first.observation), np.size(first.action), discrete, sequential=False)

    def __len__(self) -> int:
        return len(self.rewards)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        header = (self.obs_dim, self.act_dim, self.discrete, len(self.episodes))
        if header != (other.obs_dim, other.act_dim, other.discrete, len(other.episodes)):
            return False
        for a, b in zip(self.episodes, other.episodes):
            if a.episode_id != b.episode_id or a.terminal != b.terminal:
                return False
            for x, y in ((a.observations, b.observations), (a.actions, b.actions), (a.rewards, b.rewards)):
                if not np.array_equal(x, y):
                    return False
            if not a.terminal and not np.array_equal(a.final_observation, b.final_observation):
                return False
        return True

    def transitions(self) -> Iterator[Transition]:
        for i in range(len(self)):
            ep = self.episodes[self.episode_index[i]]
            yield Transition(
                self.observations[i], self.actions[i], float(self.rewards[i]),
                self.next_observations[i], bool(self.terminals[i]), ep.episode_id, int(self.step_index[i]),
            )

    def episode_returns(self) -> np.ndarray:
        return np.array([float(np.sum(ep.rewards)) for ep in self.episodes])

    def mc_returns(self, discount: float) -> np.ndarray:
        """Discounted return from every transition to the end of its episode."""
        key = float(discount)
        if key not in self._mc_cache:
            out = np.zeros(len(self))
            for start, ep in zip(self._episode_start, self.episodes):
                running = 0.0
                for t in reversed(range(ep.length)):
                    running = ep.rewards[t] + discount * running
                    out[start + t] = running
            self._mc_cache[key] = out
        return self._mc_cache[key]

    def batch(self, indices: np.ndarray) -> Batch:
        return Batch(
            observations=self.observations[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            next_observations=self.next_observations[indices],
            terminals=self.terminals[indices],
            indices=indices,
        )


def _format_real(x: float) -> str:
    return f"{float(x):.17g}"


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"version={FORMAT_VERSION},obs_dim={dataset.obs_dim},act_dim={dataset.act_dim},discrete={int(dataset.discrete)}\n")
        fmt_act = (lambda a: str(int(a))) if dataset.discrete else _format_real
        for ep in dataset.episodes:
            for t in range(ep.length):
                done = 1 if (ep.terminal and t == ep.length - 1) else 0
                fields = [str(ep.episode_id), str(t)]
                fields += [_format_real(x) for x in ep.observations[t]]
                fields += [fmt_act(a) for a in ep.actions[t]]
                fields += [_format_real(ep.rewards[t]), str(done)]
                f.write(",".join(fields) + "\n")
            if not ep.terminal:
                fields = [str(ep.episode_id), str(ep.length)]
                fields += [_format_real(x) for x in ep.final_observation]
                fields += ["0"] * dataset.act_dim + ["0", str(TRUNCATION)]
                f.write(",".join(fields) + "\n")
    log.info("wrote %d episodes (%d transitions) to %s", len(dataset.episodes), len(dataset), path)


def _parse_header(line: str):
    try:
        pairs = dict(item.strip().split("=", 1) for item in line.strip().split(","))
        version = int(pairs["version"])
        dims = int(pairs["obs_dim"]), int(pairs["act_dim"]), bool(int(pairs["discrete"]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed header: {exc}", 1) from exc
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", 1)
    return dims


def read_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("missing header", 1)
    obs_dim, act_dim, discrete = _parse_header(lines[0])
    width = 2 + obs_dim + act_dim + 2

    episodes: List[Episode] = []
    current = None  # [episode_id, obs, acts, rewards]

    def close(final=None, terminal=False):
        episodes.append(Episode(
            episode_id=current[0],
            observations=np.array(current[1], dtype=np.float64).reshape(-1, obs_dim),
            actions=np.array(current[2], dtype=np.float64).reshape(-1, act_dim),
            rewards=np.array(current[3], dtype=np.float64),
            terminal=terminal,
            final_observation=final,
        ))

    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise ValidationError(f"line {number}: expected {width} fields for obs_dim={obs_dim}, act_dim={act_dim}, got {len(fields)}")
        try:
            episode_id, step = int(fields[0]), int(fields[1])
            obs = [float(x) for x in fields[2:2 + obs_dim]]
            act = [float(x) for x in fields[2 + obs_dim:2 + obs_dim + act_dim]]
            reward = float(fields[-2])
            flag = int(fields[-1])
        except ValueError as exc:
            raise ParseError(str(exc), number) from exc
        if flag not in (0, 1, TRUNCATION):
            raise ParseError(f"terminal field must be 0, 1 or 2, got {flag}", number)

        if current is None:
            if step != 0:
                raise ParseError(f"episode {episode_id} does not start at step 0", number)
            current = [episode_id, [], [], []]
        elif episode_id != current[0] or step != len(current[3]):
            raise ParseError(f"episode {current[0]} ended without a terminal or truncation row", number)

        if flag == TRUNCATION:
            close(final=np.array(obs, dtype=np.float64), terminal=False)
            current = None
            continue
        current[1].append(obs)
        current[2].append(act)
        current[3].append(reward)
        if flag == 1:
            close(terminal=True)
            current = None

    if current is not None:
        raise ParseError(f"episode {current[0]} is incomplete at end of file", len(lines))
    return Dataset(episodes, obs_dim, act_dim, discrete)


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Uniform sampling with replacement."""
    if len(dataset) == 0:
        raise PreconditionError("cannot sample from an empty dataset")
    if batch_size > len(dataset):
        raise PreconditionError(f"batch size {batch_size} exceeds dataset size {len(dataset)}")
    return dataset.batch(rng.integers(0, len(dataset), size=batch_size))


def window_starts(dataset: Dataset, k: int) -> np.ndarray:
    """
    Valid window start positions (flat transition indices).

    Windows of time-limited episodes must hold K full steps; windows of
    terminal episodes may be cut short by the terminal state.
    """
    if not dataset.sequential:
        raise ConfigurationError("sequence sampling needs a dataset that stores full episodes")
    if k < 1:
        raise ConfigurationError("K must be >= 1")
    if not any(ep.length >= k for ep in dataset.episodes):
        raise PreconditionError(f"K={k} is longer than every episode")
    starts = []
    for start, ep in zip(dataset._episode_start, dataset.episodes):
        last = ep.length if ep.terminal else ep.length - k + 1
        starts.extend(range(start, start + max(last, 0)))
    return np.asarray(starts, dtype=np.int64)


def sample_sequences(dataset: Dataset, k: int, batch_size: int, rng: np.random.Generator, discount: float = 0.99) -> SequenceBatch:
    """Uniform over valid window starts; windows never cross episode boundaries."""
    starts = window_starts(dataset, k)
    chosen = starts[rng.integers(0, len(starts), size=batch_size)]

    observations = np.zeros((batch_size, k + 1, dataset.obs_dim))
    actions = np.zeros((batch_size, k, dataset.act_dim))
    rewards = np.zeros((batch_size, k))
    lengths = np.zeros(batch_size, dtype=np.int64)
    ends_terminal = np.zeros(batch_size, dtype=bool)
    for b, i in enumerate(chosen):
        ep_end = dataset._episode_start[dataset.episode_index[i]] + dataset.episodes[dataset.episode_index[i]].length
        n = min(k, ep_end - i)
        lengths[b] = n
        observations[b, :n] = dataset.observations[i:i + n]
        observations[b, n] = dataset.next_observations[i + n - 1]
        actions[b, :n] = dataset.actions[i:i + n]
        rewards[b, :n] = dataset.rewards[i:i + n]
        ends_terminal[b] = bool(dataset.terminals[i + n - 1])

    return SequenceBatch(
        observations=observations,
        actions=actions,
        rewards=rewards,
        lengths=lengths,
        ends_terminal=ends_terminal,
        mc_returns=dataset.mc_returns(discount)[chosen],
        first=dataset.batch(chosen),
    )


def to_tabular_records(dataset: Dataset, state_index: Callable[[np.ndarray], int]):
    """(s, a, r, s', terminal) tuples for a discrete dataset; s' of terminal steps is irrelevant."""
    if not dataset.discrete:
        raise ConfigurationError("tabular records need a discrete-action dataset")
    records = []
    for i in range(len(dataset)):
        records.append((
            state_index(dataset.observations[i]),
            int(dataset.actions[i, 0]),
            float(dataset.rewards[i]),
            state_index(dataset.next_observations[i]),
            bool(dataset.terminals[i]),
        ))
    return records
