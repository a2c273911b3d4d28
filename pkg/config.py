"""
Experiment configuration.

Config files are flat `key = value` lines; `#` starts a comment and blank lines
are ignored. Keys are ExperimentConfig field names, lists are comma separated
and booleans accept 1/0, true/false, yes/no. Command-line `--set key=value`
pairs use the same parsing.
"""

import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from crr.advantages import ADVANTAGES, AdvantageSpec
from crr.cwp import EVAL_MODES
from crr.filters import FilterSpec
from crr.learner import LearnerConfig
from distributional import AtomGrid
from envs import ENVIRONMENTS
from envs.behavior import BehaviorSpec, default_behavior
from errors import ConfigurationError, ParseError

log = logging.getLogger(__name__)

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


@dataclass
class ExperimentConfig:
    # environment
    env: str = "point_mass"
    width: int = 5
    height: int = 5
    step_limit: int = 50
    episode_length: int = 100

    # behavior data
    behavior: str = ""
    eps: Optional[float] = None
    epsilons: List[float] = field(default_factory=list)
    expert_fraction: Optional[float] = None
    probs: List[float] = field(default_factory=list)
    dataset: str = "dataset.csv"
    episodes: int = 1000

    # learner
    filter: str = "exp"
    beta: float = 1.0
    clip: float = 20.0
    advantage: str = ""
    m: int = 4
    k: int = 5
    batch_size: int = 64
    target_update_period: int = 100
    learning_rate: float = 1e-4
    n_updates: int = 20000
    discount: float = 0.99
    critic_samples: int = 4

    # networks
    hidden_width: int = 64
    n_blocks: int = 4
    n_components: int = 5
    n_atoms: int = 21
    v_min: float = 0.0
    v_max: float = 100.0
    deterministic_mode: str = "max_weight"

    # evaluation
    eval_episodes: int = 100
    eval_mode: str = "deterministic"
    cwp: bool = True
    cwp_samples: int = 16
    cwp_beta: float = 1.0
    component_means: bool = False
    eval_every: int = 2000
    log_every: int = 1000

    # output
    output_dir: str = "runs"
    checkpoint: str = ""
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.env not in ENVIRONMENTS:
            raise ConfigurationError(f"unknown environment {self.env!r}; expected one of {sorted(ENVIRONMENTS)}")
        if self.advantage and self.advantage not in ADVANTAGES:
            raise ConfigurationError(f"unknown advantage {self.advantage!r}; expected one of {ADVANTAGES}")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigurationError(f"unknown evaluation mode {self.eval_mode!r}; expected one of {EVAL_MODES}")
        if self.episodes < 1 or self.eval_episodes < 1:
            raise ConfigurationError("episodes and eval_episodes must be >= 1")
        if self.eval_every < 0 or self.log_every < 0:
            raise ConfigurationError("eval_every and log_every must be >= 0")
        self.filter_spec()
        self.advantage_spec()
        self.learner_config()
        self.grid()
        return self

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.filter, self.beta, self.clip)

    def advantage_spec(self) -> AdvantageSpec:
        variant = self.advantage or self.filter_spec().default_advantage
        return AdvantageSpec(variant, self.m, self.k)

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            batch_size=self.batch_size,
            target_update_period=self.target_update_period,
            learning_rate=self.learning_rate,
            n_updates=self.n_updates,
            discount=self.discount,
            seed=self.seed,
            filter=self.filter_spec(),
            advantage=self.advantage_spec(),
            cwp_samples=self.cwp_samples,
            cwp_beta=self.cwp_beta,
            critic_samples=self.critic_samples,
        ).validate()

    def grid(self) -> AtomGrid:
        try:
            return AtomGrid(self.n_atoms, self.v_min, self.v_max)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def env_params(self) -> Dict:
        if self.env == "gridworld":
            return {"width": self.width, "height": self.height, "goal": (self.width - 1, self.height - 1), "step_limit": self.step_limit}
        if self.env == "point_mass":
            return {"episode_length": self.episode_length}
        return {}

    def behavior_spec(self) -> BehaviorSpec:
        spec = default_behavior(self.env)
        params = dict(spec.params)
        if self.eps is not None:
            params["epsilons"] = [self.eps]
        if self.epsilons:
            params["epsilons"] = list(self.epsilons)
        if self.expert_fraction is not None:
            params["expert_fraction"] = self.expert_fraction
        if self.probs:
            params["probs"] = list(self.probs)
        return BehaviorSpec(self.behavior or spec.name, params)

    def to_text(self) -> str:
        """Round-trippable config file text."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = typing.get_type_hints(ExperimentConfig)


def parse_value(key: str, text: str):
    """Parse a config value by the type of the ExperimentConfig field it sets."""
    if key not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    if typing.get_origin(kind) is typing.Union:
        if text.lower() in ("", "none"):
            return None
        kind = next(t for t in typing.get_args(kind) if t is not type(None))
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in TRUE_WORDS:
                return True
            if lowered in FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if typing.get_origin(kind) in (list, List):
            item = typing.get_args(kind)[0]
            return [item(part) for part in text.split(",") if part.strip()]
        return kind(text)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {exc}") from exc


def read_config_file(path) -> Dict[str, str]:
    """Raw key -> value text of a config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    values = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", number)
        values[key] = value
    return values


def parse_overrides(pairs: List[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value
    return overrides


def apply_overrides(config: ExperimentConfig, raw: Dict[str, str]) -> ExperimentConfig:
    parsed = {key: parse_value(key, value) for key, value in raw.items()}
    return dataclasses.replace(config, **parsed)


def load_config(path=None, overrides: Optional[List[str]] = None, **explicit) -> ExperimentConfig:
    """
    Build an ExperimentConfig: defaults, then the file, then `--set` pairs,
    then explicit keyword values (ignored when None).
    """
    config = ExperimentConfig()
    if path:
        config = apply_overrides(config, read_config_file(path))
    config = apply_overrides(config, parse_overrides(overrides))
    explicit = {key: value for key, value in explicit.items() if value is not None}
    for key in explicit:
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"unknown config key {key!r}")
    config = dataclasses.replace(config, **explicit)
    log.debug("configuration: %s", config)
    return config.validate()
