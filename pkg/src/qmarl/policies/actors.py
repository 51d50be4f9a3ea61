"""Actors and critics for the grid-world tasks, classical and variational."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..nets import DenseLayer, Mlp, load_snapshot, save_snapshot
from ..qsim import Entanglement
from .vqc import Vqc


class Chain:
    """Stages applied in sequence, each exposing forward/backward/get_flat.

    The flat parameter vector is the concatenation of the stages' vectors.
    """

    def __init__(self, stages):
        self.stages = list(stages)

    @property
    def in_dim(self):
        return self.stages[0].in_dim

    @property
    def out_dim(self):
        return self.stages[-1].out_dim

    @property
    def n_params(self):
        return sum(s.n_params for s in self.stages)

    def get_flat(self):
        return np.concatenate([s.get_flat() for s in self.stages])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        pos = 0
        for s in self.stages:
            s.set_flat(flat[pos : pos + s.n_params])
            pos += s.n_params

    def forward(self, x):
        tapes = []
        for s in self.stages:
            x, tape = s.forward(x)
            tapes.append(tape)
        return x, tapes

    def backward(self, tapes, output_grad):
        g = output_grad
        grads = []
        for s, tape in zip(reversed(self.stages), reversed(tapes)):
            gp, g = s.backward(tape, g)
            grads.append(gp)
        return np.concatenate(grads[::-1]), g

    def describe(self):
        return {"type": "chain", "stages": [s.describe() for s in self.stages]}


def _as_body(desc):
    kind = desc["type"]
    if kind == "mlp":
        return Mlp.from_description(desc)
    if kind == "vqc":
        return Vqc.from_description(desc)
    if kind == "chain":
        return Chain([_as_body(d) for d in desc["stages"]])
    raise ValueError(f"unknown network type {kind!r}")


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class SoftmaxPolicy:
    """Actor: ``body`` maps an observation to action logits, softmax on top."""

    def __init__(self, body, kind="classical"):
        self.body = body
        self.kind = kind

    @property
    def obs_dim(self):
        return self.body.in_dim

    @property
    def n_actions(self):
        return self.body.out_dim

    @property
    def n_params(self):
        return self.body.n_params

    def get_flat(self):
        return self.body.get_flat()

    def set_flat(self, flat):
        self.body.set_flat(flat)

    def log_probs(self, obs):
        logits, _ = self.body.forward(obs)
        if not np.all(np.isfinite(logits)):
            raise DivergenceError("non-finite action logits")
        return _log_softmax(logits)

    def probs(self, obs):
        return np.exp(self.log_probs(obs))

    def act(self, obs, rng):
        """Sample one action from the local observation; returns ``(action, log_prob)``."""
        logp = self.log_probs(np.asarray(obs, dtype=np.float64))
        cdf = np.cumsum(np.exp(logp))
        action = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        action = min(action, logp.size - 1)
        return action, float(logp[action])

    def log_prob_grad(self, obs, actions, weights, entropy_coeff=0.0):
        """Gradient of ``sum_t w_t log pi(a_t | o_t) + beta * sum_t H(pi(.|o_t))``."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        actions = np.asarray(actions, dtype=int)
        weights = np.asarray(weights, dtype=np.float64)
        logits, tape = self.body.forward(obs)
        logp = _log_softmax(logits)
        p = np.exp(logp)
        g = -p * weights[:, None]
        g[np.arange(len(actions)), actions] += weights
        if entropy_coeff:
            ent = -(p * logp).sum(axis=1, keepdims=True)
            g += entropy_coeff * (-p * (logp + ent))
        grad, _ = self.body.backward(tape, g)
        return grad

    def describe(self):
        return {"kind": self.kind, "head": "softmax", "body": self.body.describe()}


class ValueFunction:
    """Critic: ``body`` maps the global state to a single scalar."""

    def __init__(self, body, kind="classical"):
        self.body = body
        self.kind = kind

    @property
    def state_dim(self):
        return self.body.in_dim

    @property
    def n_params(self):
        return self.body.n_params

    def get_flat(self):
        return self.body.get_flat()

    def set_flat(self, flat):
        self.body.set_flat(flat)

    def values(self, states):
        out, _ = self.body.forward(np.atleast_2d(states))
        return out[:, 0]

    def value_and_tape(self, states):
        out, tape = self.body.forward(np.atleast_2d(states))
        return out[:, 0], tape

    def grad(self, tape, value_grad):
        grad, _ = self.body.backward(tape, np.asarray(value_grad, dtype=np.float64)[:, None])
        return grad

    def describe(self):
        return {"kind": self.kind, "head": "linear", "body": self.body.describe()}


class Side(str, enum.Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"


@dataclass(frozen=True)
class HybridisationTag:
    actor: Side = Side.CLASSICAL
    critic: Side = Side.CLASSICAL

    def __post_init__(self):
        object.__setattr__(self, "actor", Side(self.actor))
        object.__setattr__(self, "critic", Side(self.critic))

    @property
    def label(self):
        names = {
            (Side.CLASSICAL, Side.CLASSICAL): "classical_marl",
            (Side.QUANTUM, Side.CLASSICAL): "hybrid_quantum_actor",
            (Side.CLASSICAL, Side.QUANTUM): "hybrid_quantum_critic",
            (Side.QUANTUM, Side.QUANTUM): "pure_qmarl",
        }
        return names[(self.actor, self.critic)]


@dataclass
class VqcActorConfig:
    n_qubits: int
    depth: int
    obs_dim: int
    n_actions: int
    rotations_per_qubit_per_layer: int = 4
    readout_mode: str = "z"
    prepend_block: bool = False
    preprocessing: bool = True

    def __post_init__(self):
        if self.rotations_per_qubit_per_layer not in (4, 6):
            raise ValueError("rotations_per_qubit_per_layer must be 4 or 6")
        if self.readout_mode not in ("z", "probs"):
            raise ValueError("readout_mode must be 'z' or 'probs'")
        if min(self.n_qubits, self.depth, self.obs_dim, self.n_actions) < 1:
            raise ValueError("VQC dimensions must be positive")

    @property
    def vqc_params(self):
        base = self.n_qubits * self.depth * self.rotations_per_qubit_per_layer
        return base + (3 * self.n_qubits if self.prepend_block else 0)

    @property
    def readout_params(self):
        feats = self.n_qubits if self.readout_mode == "z" else 2**self.n_qubits
        return feats * self.n_actions


def _vqc_chain(cfg, n_out, rng, mixed_first_qubit):
    if cfg.preprocessing:
        pre = Mlp.build([cfg.obs_dim, 3 * cfg.n_qubits], rng, output="linear")
    elif cfg.obs_dim != 3 * cfg.n_qubits:
        raise ValueError("without preprocessing the observation must hold 3 angles per qubit")
    vqc = Vqc(
        cfg.n_qubits,
        cfg.depth,
        cfg.rotations_per_qubit_per_layer,
        cfg.readout_mode,
        cfg.prepend_block,
        mixed_first_qubit,
        rng,
    )
    readout = Mlp([DenseLayer.glorot(vqc.out_dim, n_out, rng, "linear", bias=False)])
    return Chain(([pre] if cfg.preprocessing else []) + [vqc, readout])


def build_quantum_actor(config, rng, entangled=False):
    """Preprocessing Dense -> angle encoding -> variational layers -> readout -> softmax.

    ``entangled`` marks qubit 0 as this agent's share of an inter-agent
    Bell/GHZ resource (locally maximally mixed).
    """
    return SoftmaxPolicy(_vqc_chain(config, config.n_actions, rng, entangled), "quantum")


def build_classical_actor(obs_dim, hidden, n_actions, rng):
    return SoftmaxPolicy(Mlp.build([obs_dim, *hidden, n_actions], rng, output="linear"), "classical")


def build_classical_critic(state_dim, hidden, rng):
    return ValueFunction(Mlp.build([state_dim, *hidden, 1], rng, output="linear"), "classical")


def build_quantum_critic(config, rng):
    """Same circuit pipeline as the actor, read out to one linear value."""
    return ValueFunction(_vqc_chain(config, 1, rng, False), "quantum")


def components(policy):
    """Split a policy/critic into (preprocessing, vqc, readout, other) counts."""
    body = policy.body
    if isinstance(body, Chain) and any(isinstance(s, Vqc) for s in body.stages):
        stages = body.stages
        i = next(k for k, s in enumerate(stages) if isinstance(s, Vqc))
        pre = sum(s.n_params for s in stages[:i])
        return {"preprocessing": pre, "vqc": stages[i].n_params, "readout": stages[-1].n_params}
    return {"preprocessing": 0, "vqc": 0, "readout": 0}


@dataclass
class PolicyBundle:
    """Per-agent actors, one centralised critic, and how they were built."""

    actors: list
    critic: ValueFunction
    hybridisation: HybridisationTag = field(default_factory=HybridisationTag)
    entanglement: Entanglement = Entanglement.PRODUCT

    def __post_init__(self):
        self.entanglement = Entanglement(self.entanglement)

    @property
    def n_agents(self):
        return len(self.actors)

    def act(self, observations, rng):
        """Decentralised execution: agent ``i`` sees only ``observations[i]``."""
        out = [actor.act(obs, rng) for actor, obs in zip(self.actors, observations)]
        return [a for a, _ in out], [lp for _, lp in out]

    def get_flat(self):
        return np.concatenate([a.get_flat() for a in self.actors] + [self.critic.get_flat()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for part in [*self.actors, self.critic]:
            part.set_flat(flat[pos : pos + part.n_params])
            pos += part.n_params
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")

    def describe(self):
        return {
            "hybridisation": {"actor": self.hybridisation.actor.value, "critic": self.hybridisation.critic.value},
            "entanglement": self.entanglement.value,
            "actors": [a.describe() for a in self.actors],
            "critic": self.critic.describe(),
        }


def build_bundle(
    n_agents,
    obs_dim,
    n_actions,
    hybridisation,
    entanglement=Entanglement.PRODUCT,
    actor_hidden=(16, 16),
    critic_hidden=(32, 16),
    vqc=None,
    rng=None,
):
    """Actors for every agent plus a critic over the concatenated observations.

    ``vqc`` holds the VqcActorConfig keyword arguments other than the
    observation/action sizes (n_qubits, depth, ...).  Entangled variants
    need quantum actors: Bell pairs for two agents, GHZ for three or more.
    """
    tag = hybridisation if isinstance(hybridisation, HybridisationTag) else HybridisationTag(*hybridisation)
    ent = Entanglement(entanglement)
    rng = rng if rng is not None else np.random.default_rng(0)
    vqc = dict(vqc or {"n_qubits": 4, "depth": 3})
    if ent.is_entangled:
        if tag.actor is not Side.QUANTUM:
            raise ValueError("entanglement requires quantum actors")
        if ent.is_bell and n_agents != 2:
            raise ValueError(f"{ent.value} couples exactly two agents; use ghz for {n_agents}")
        if ent is Entanglement.GHZ and n_agents < 3:
            raise ValueError("ghz needs at least three agents")
    state_dim = n_agents * obs_dim
    actors = []
    for _ in range(n_agents):
        if tag.actor is Side.QUANTUM:
            cfg = VqcActorConfig(obs_dim=obs_dim, n_actions=n_actions, **vqc)
            actors.append(build_quantum_actor(cfg, rng, entangled=ent.is_entangled))
        else:
            actors.append(build_classical_actor(obs_dim, actor_hidden, n_actions, rng))
    if tag.critic is Side.QUANTUM:
        critic = build_quantum_critic(VqcActorConfig(obs_dim=state_dim, n_actions=1, **vqc), rng)
    else:
        critic = build_classical_critic(state_dim, critic_hidden, rng)
    return PolicyBundle(actors, critic, tag, ent)


def count_bundle_params(bundle):
    """Parameter breakdown in the layout of the published accounting.

    ``actor`` is per agent (agents do not share parameters); ``total`` is one
    actor plus the critic, as tabulated; ``total_all_agents`` is the length
    of the full trainable vector.
    """
    actor = bundle.actors[0]
    parts = components(actor)
    counts = {
        "preprocessing": parts["preprocessing"],
        "vqc": parts["vqc"],
        "readout": parts["readout"],
        "actor": actor.n_params,
        "critic": bundle.critic.n_params,
    }
    counts["total"] = counts["actor"] + counts["critic"]
    counts["total_all_agents"] = sum(a.n_params for a in bundle.actors) + bundle.critic.n_params
    return counts


def agent_view(agent, observation, action, log_prob):
    """Canonical bytes of what agent ``agent`` touches during one execution step."""
    payload = {
        "agent": int(agent),
        "observation": [float(v) for v in np.asarray(observation).ravel()],
        "action": int(action),
        "log_prob": float(log_prob),
    }
    return json.dumps(payload, sort_keys=True).encode()


def save_bundle(path, bundle, extra=None):
    desc = dict(bundle.describe(), **(extra or {}))
    save_snapshot(path, desc, bundle.get_flat())


def load_bundle(path):
    meta, flat = load_snapshot(path)
    actors = [SoftmaxPolicy(_as_body(d["body"]), d["kind"]) for d in meta["actors"]]
    critic = ValueFunction(_as_body(meta["critic"]["body"]), meta["critic"]["kind"])
    tag = HybridisationTag(meta["hybridisation"]["actor"], meta["hybridisation"]["critic"])
    bundle = PolicyBundle(actors, critic, tag, meta["entanglement"])
    bundle.set_flat(flat)
    return bundle, meta
