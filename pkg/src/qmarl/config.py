"""Experiment configuration: schema, YAML I/O, env overrides and sweeps.

Every field has a default taken from the published hyperparameter tables,
so a minimal CHSH config only names the environment and the variant::

    env: chsh
    entanglement: phi_plus
    out_dir: runs/chsh

Any key can be overridden from the environment with
``QMARL__<SECTION>__<KEY>=<yaml value>``, e.g. ``QMARL__CHSH__STEPS=2000``
or ``QMARL__ENV=coopnav``.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .qsim import Entanglement

ENV_PREFIX = "QMARL__"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class Hybridisation(_Section):
    actor: Literal["classical", "quantum"] = "quantum"
    critic: Literal["classical", "quantum"] = "classical"


class ChshSection(_Section):
    lr: float = Field(0.02, gt=0)
    baseline_momentum: float = Field(0.95, ge=0, lt=1)
    steps: int = Field(20000, ge=1)
    entropy_coeff: float = Field(0.0, ge=0)
    eval_episodes: int = Field(1000, ge=1)
    eval_every: int = Field(500, ge=1)
    sampled_eval: bool = False


class CoinGameSection(_Section):
    n_agents: int = Field(2, ge=2)
    # None means the published grid: 3x3 for two agents, 5x5 otherwise
    size: Optional[int] = Field(None, ge=2)
    episode_len: int = Field(150, ge=1)
    collect_reward: float = 1.0
    steal_penalty: float = -2.0
    actor_lr: float = Field(3e-4, gt=0)
    critic_lr: float = Field(1e-3, gt=0)
    gamma: float = Field(0.95, gt=0, le=1)
    # None means the published budget: 3000 episodes for two agents, 5000 otherwise
    episodes: Optional[int] = Field(None, ge=1)
    actor_hidden: list[int] = [12]
    # None means 12 hidden units for two agents and 6 otherwise
    critic_hidden: Optional[list[int]] = None

    def resolved_size(self):
        return self.size or (3 if self.n_agents == 2 else 5)

    def resolved_episodes(self):
        return self.episodes or (3000 if self.n_agents == 2 else 5000)

    def resolved_critic_hidden(self):
        if self.critic_hidden is not None:
            return self.critic_hidden
        return [12] if self.n_agents == 2 else [6]


class CoopNavSection(_Section):
    n_agents: int = Field(2, ge=2)
    size: int = Field(5, ge=2)
    max_steps: int = Field(40, ge=1)
    p_slip: float = Field(0.10, ge=0, le=1)
    step_penalty: float = -0.01
    collision_penalty: float = -0.05
    goal_reward: float = 1.0
    encoding: Literal["one_hot", "continuous"] = "one_hot"
    actor_lr: float = Field(2e-4, gt=0)
    critic_lr: float = Field(3e-4, gt=0)
    gamma: float = Field(0.99, gt=0, le=1)
    episodes: int = Field(10000, ge=1)
    actor_hidden: list[int] = [16, 16]
    critic_hidden: list[int] = [32, 16]


class VqcSection(_Section):
    n_qubits: int = Field(4, ge=1, le=12)
    depth: int = Field(3, ge=1)
    rotations_per_qubit_per_layer: Literal[4, 6] = 4
    readout_mode: Literal["z", "probs"] = "z"
    prepend_block: bool = False


class TrainingSection(_Section):
    entropy_coeff: float = Field(0.0, ge=0)
    grad_clip: Optional[float] = Field(None, gt=0)
    timing: bool = False
    trace: bool = False
    save_params: bool = True


class ExperimentConfig(_Section):
    env: Literal["chsh", "coingame", "coopnav"] = "chsh"
    entanglement: Entanglement = Entanglement.PRODUCT
    hybridisation: Hybridisation = Hybridisation()
    seeds: list[int] = list(range(10))
    out_dir: str = "runs"
    chsh: ChshSection = ChshSection()
    coingame: CoinGameSection = CoinGameSection()
    coopnav: CoopNavSection = CoopNavSection()
    vqc: VqcSection = VqcSection()
    training: TrainingSection = TrainingSection()

    @model_validator(mode="after")
    def _check_variant(self):
        ent = self.entanglement
        if self.env == "chsh":
            if ent is Entanglement.GHZ:
                raise ValueError("entanglement: the CHSH game is played by two agents; ghz needs three or more")
            return self
        n = self.coingame.n_agents if self.env == "coingame" else self.coopnav.n_agents
        if ent.is_entangled and self.hybridisation.actor != "quantum":
            raise ValueError("entanglement: entangled variants need hybridisation.actor = quantum")
        if ent.is_bell and n != 2:
            raise ValueError(f"entanglement: {ent.value} couples two agents, but there are {n}; use ghz")
        if ent is Entanglement.GHZ and n < 3:
            raise ValueError("entanglement: ghz needs at least three agents")
        return self

    @property
    def label(self):
        if self.env == "chsh":
            mode = "quantum" if self.hybridisation.actor == "quantum" else "classical"
            return f"chsh-{mode}-{self.entanglement.value}"
        tag = f"{self.hybridisation.actor}_actor-{self.hybridisation.critic}_critic"
        return f"{self.env}-{tag}-{self.entanglement.value}"


def _field_path(loc):
    return ".".join(str(p) for p in loc) or "<root>"


def validate(data):
    """Build an ExperimentConfig from a plain dict; raises ConfigError with the field path."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = err["loc"]
        msg = err["msg"]
        if not loc and msg.startswith("Value error, "):
            # model-level checks prefix their message with the field name
            msg = msg[len("Value error, ") :]
            field, _, rest = msg.partition(": ")
            raise ConfigError(field, rest) from None
        raise ConfigError(_field_path(loc), msg) from None


def to_dict(cfg):
    """Canonical plain-data form (all fields, enums as strings)."""
    return cfg.model_dump(mode="json")


def dump_config(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def config_hash(cfg):
    """Stable digest of everything that affects results (seeds and out_dir excluded)."""
    data = to_dict(cfg)
    data.pop("out_dir")
    data.pop("seeds")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def apply_env_overrides(data, environ=None):
    """Return a copy of ``data`` with ``QMARL__A__B=value`` entries applied."""
    environ = os.environ if environ is None else environ
    data = copy.deepcopy(data)
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX) :].split("__") if p]
        if not path:
            continue
        try:
            value = yaml.safe_load(environ[key])
        except yaml.YAMLError as exc:
            raise ConfigError(".".join(path), f"unparseable override: {exc}") from None
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(path), f"{part} is not a section")
            node = child
        node[path[-1]] = value
    return data


def _read_yaml(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return {} if data is None else data


def load_config(path, environ=None):
    data = _read_yaml(path)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return validate(apply_env_overrides(data, environ))


def _set_dotted(data, dotted, value):
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


class SweepSpec:
    """A base config plus axes; expands to the cartesian product of the axes.

    File layout::

        base: {...experiment config...}
        axes:
          entanglement: [phi_plus, product]
          chsh.entropy_coeff: [0.0, 0.2]
    """

    def __init__(self, base, axes):
        if not isinstance(base, dict):
            raise ConfigError("base", "must be a mapping")
        if not isinstance(axes, dict):
            raise ConfigError("axes", "must be a mapping of dotted keys to lists")
        for key, values in axes.items():
            if not isinstance(values, list) or not values:
                raise ConfigError(f"axes.{key}", "must be a non-empty list")
        self.base = base
        self.axes = axes

    @classmethod
    def load(cls, path, environ=None):
        data = _read_yaml(path)
        if not isinstance(data, dict):
            raise ConfigError("<root>", "sweep file must be a mapping")
        unknown = set(data) - {"base", "axes"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown sweep key")
        return cls(apply_env_overrides(data.get("base") or {}, environ), data.get("axes") or {})

    def __len__(self):
        n = 1
        for values in self.axes.values():
            n *= len(values)
        return n

    def expand(self):
        keys = list(self.axes)
        configs = []
        for combo in itertools.product(*(self.axes[k] for k in keys)):
            data = copy.deepcopy(self.base)
            for key, value in zip(keys, combo):
                _set_dotted(data, key, value)
            configs.append(validate(data))
        return configs
