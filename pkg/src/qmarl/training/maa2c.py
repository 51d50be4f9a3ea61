"""Multi-agent advantage actor-critic with a centralised critic.

Actors act on their own observations; the critic sees the global state,
which is the concatenation of all agents' observations.  One update per
episode over the whole trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..nets import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class Maa2cConfig:
    actor_lr: float = 2e-4
    critic_lr: float = 3e-4
    gamma: float = 0.99
    episode_len: int = 40
    episodes: int = 10000
    entropy_coeff: float = 0.0
    grad_clip: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.episode_len < 1 or self.episodes < 1:
            raise ValueError("episode_len and episodes must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")


COINGAME_DEFAULTS = dict(actor_lr=3e-4, critic_lr=1e-3, gamma=0.95, episode_len=150, episodes=3000)
COOPNAV_DEFAULTS = dict(actor_lr=2e-4, critic_lr=3e-4, gamma=0.99, episode_len=40, episodes=10000)


@dataclass
class Transition:
    observations: list
    actions: list
    reward: float
    next_observations: list
    done: bool
    agent_rewards: np.ndarray | None = None

    @property
    def state(self):
        return global_state(self.observations)

    @property
    def next_state(self):
        return global_state(self.next_observations)


def global_state(observations):
    return np.concatenate([np.asarray(o, dtype=np.float64).ravel() for o in observations])


@dataclass
class EpisodeStats:
    reward: float = 0.0
    length: int = 0
    success: bool = False
    collisions: int = 0
    agent_rewards: np.ndarray | None = None


def run_episode(env, bundle, rng, max_steps=None):
    """Roll out one episode with decentralised action selection.

    The team reward is the sum of per-agent rewards (CoinGame pays each
    agent separately; CoopNav already pays one shared reward).
    """
    limit = max_steps if max_steps is not None else getattr(env, "episode_len", None) or env.max_steps
    state = env.reset(rng)
    obs = env.observations(state)
    traj, stats = [], EpisodeStats(agent_rewards=np.zeros(env.n_agents))
    for _ in range(limit):
        actions, _ = bundle.act(obs, rng)
        state, rewards, done, info = env.step(state, actions, rng)
        nxt = env.observations(state)
        rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
        team = float(rewards.sum())
        done = bool(done)
        traj.append(Transition(obs, actions, team, nxt, done, rewards))
        stats.reward += team
        stats.length += 1
        stats.agent_rewards += rewards if rewards.size == env.n_agents else team
        stats.success = stats.success or bool(info.get("success", False))
        stats.collisions += int(info.get("collision", False))
        obs = nxt
        if done:
            break
    return traj, stats


def compute_advantages(rewards, values, next_values, dones, gamma):
    """One-step TD advantages ``r + gamma V(s') (1 - done) - V(s)``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    return rewards + gamma * np.asarray(next_values) * (1.0 - dones) - np.asarray(values)


def clip_by_global_norm(grad, max_norm):
    """Returns ``(grad, clipped)``; ``max_norm=None`` disables clipping."""
    if max_norm is None:
        return grad, False
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm), True
    return grad, False


@dataclass
class Maa2cOptimiser:
    """Adam state for every actor and the critic."""

    actors: list
    critic: AdamState

    @classmethod
    def for_bundle(cls, bundle, cfg):
        return cls(
            [AdamState(cfg.actor_lr, a.n_params) for a in bundle.actors],
            AdamState(cfg.critic_lr, bundle.critic.n_params),
        )


@dataclass
class UpdateRecord:
    advantages: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    critic_loss: float
    clipped: list = field(default_factory=list)


def maa2c_episode_update(bundle, trajectory, cfg, optimiser):
    """Update ``bundle`` in place from one trajectory; returns an UpdateRecord.

    Critic: minimise ``mean(A^2)`` with the bootstrap target held fixed.
    Actors: ascend ``mean(A * log pi_i(a_i | o_i)) + beta * mean(H_i)``.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    steps = len(trajectory)
    states = np.stack([t.state for t in trajectory])
    next_states = np.stack([t.next_state for t in trajectory])
    rewards = [t.reward for t in trajectory]
    dones = [t.done for t in trajectory]

    values, tape = bundle.critic.value_and_tape(states)
    next_values = bundle.critic.values(next_states)
    adv = compute_advantages(rewards, values, next_values, dones, cfg.gamma)
    bad = np.flatnonzero(~np.isfinite(adv))
    if bad.size:
        raise DivergenceError("non-finite advantage", step=int(bad[0]))
    critic_loss = float(np.mean(adv**2))

    clipped = []
    critic_grad = bundle.critic.grad(tape, -2.0 * adv / steps)
    critic_grad, hit = clip_by_global_norm(critic_grad, cfg.grad_clip)
    clipped.append(("critic", hit))

    actor_grads = []
    for i, actor in enumerate(bundle.actors):
        obs = np.stack([np.asarray(t.observations[i], dtype=np.float64) for t in trajectory])
        acts = [t.actions[i] for t in trajectory]
        g = actor.log_prob_grad(obs, acts, adv / steps, cfg.entropy_coeff / steps)
        g, hit = clip_by_global_norm(-g, cfg.grad_clip)
        clipped.append((f"actor{i}", hit))
        actor_grads.append(g)

    for name, hit in clipped:
        if hit:
            log.info("gradient clipped for %s", name)
    # all gradients are taken before any parameter moves
    for actor, state, g in zip(bundle.actors, optimiser.actors, actor_grads):
        actor.set_flat(adam_step(actor.get_flat(), g, state))
    bundle.critic.set_flat(adam_step(bundle.critic.get_flat(), critic_grad, optimiser.critic))
    return UpdateRecord(adv, values, next_values, critic_loss, [n for n, h in clipped if h])


def train_maa2c(env, bundle, cfg, rng, on_episode=None):
    """Run ``cfg.episodes`` episodes; ``on_episode(index, stats, record)`` after each."""
    optimiser = Maa2cOptimiser.for_bundle(bundle, cfg)
    for ep in range(cfg.episodes):
        traj, stats = run_episode(env, bundle, rng, cfg.episode_len)
        record = maa2c_episode_update(bundle, traj, cfg, optimiser)
        if on_episode is not None:
            on_episode(ep, stats, record)
    return optimiser
