"""Cooperative navigation on a grid with action slip.

All agents share the reward ``-0.01 - 0.05 [collision] + 1.0 [goal]``.  The
episode ends when any agent stands on the goal or the step limit is hit.
A collision is two or more agents on one cell after moving.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .grid import MOVES, cell_index, distinct_cells, move


class ObservationEncoding(str, enum.Enum):
    CONTINUOUS = "continuous"
    ONE_HOT = "one_hot"


@dataclass(frozen=True)
class CoopNavState:
    size: int
    agent_positions: np.ndarray
    goal: np.ndarray
    step: int = 0


class CoopNav:
    n_actions = len(MOVES)

    def __init__(
        self,
        n_agents=2,
        size=5,
        max_steps=40,
        p_slip=0.10,
        step_penalty=-0.01,
        collision_penalty=-0.05,
        goal_reward=1.0,
        encoding=ObservationEncoding.ONE_HOT,
    ):
        self.n_agents = n_agents
        self.size = size
        self.max_steps = max_steps
        self.p_slip = p_slip
        self.step_penalty = step_penalty
        self.collision_penalty = collision_penalty
        self.goal_reward = goal_reward
        self.encoding = ObservationEncoding(encoding)

    @property
    def obs_dim(self):
        per_entity = 2 if self.encoding is ObservationEncoding.CONTINUOUS else self.size**2
        return (self.n_agents + 1) * per_entity

    @property
    def state_dim(self):
        return self.n_agents * self.obs_dim

    def reset(self, rng):
        # distinct cells, so no agent starts on the goal
        cells = distinct_cells(rng, self.size, self.n_agents + 1)
        return CoopNavState(self.size, cells[:-1], cells[-1], 0)

    def step(self, state, actions, rng):
        """Returns ``(next_state, shared_reward, done, info)``."""
        actions = np.array(actions, dtype=int)
        if actions.shape != (self.n_agents,) or np.any((actions < 0) | (actions >= self.n_actions)):
            raise ValueError(f"expected {self.n_agents} actions in [0, {self.n_actions}), got {actions}")
        slips = rng.random(self.n_agents) < self.p_slip
        random_actions = rng.integers(0, self.n_actions, size=self.n_agents)
        executed = np.where(slips, random_actions, actions)
        positions = move(state.agent_positions, executed, self.size)
        cells = [cell_index(p, self.size) for p in positions]
        collision = len(set(cells)) < len(cells)
        success = bool(np.any(np.all(positions == state.goal, axis=1)))
        reward = self.step_penalty + self.collision_penalty * collision + self.goal_reward * success
        nxt = replace(state, agent_positions=positions, step=state.step + 1)
        done = success or nxt.step >= self.max_steps
        info = {"collision": collision, "success": success, "executed": executed, "slipped": slips}
        return nxt, float(reward), done, info

    def observe(self, state, agent):
        order = [agent] + [i for i in range(self.n_agents) if i != agent]
        entities = [state.agent_positions[i] for i in order] + [state.goal]
        if self.encoding is ObservationEncoding.CONTINUOUS:
            return np.concatenate(entities).astype(float) / self.size
        out = np.zeros((len(entities), self.size * self.size))
        for k, pos in enumerate(entities):
            out[k, cell_index(pos, self.size)] = 1.0
        return out.ravel()

    def observations(self, state):
        return [self.observe(state, i) for i in range(self.n_agents)]
