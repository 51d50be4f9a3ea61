"""CoinGame: agents collect coins on a small grid; stealing hurts the owner.

One coin is live at a time.  Collecting any coin pays +1 to the collector;
if the coin belonged to someone else the owner also gets the steal penalty.
The coin then respawns on a random cell no agent occupies, owned by the next
agent in round-robin order.  Actions are N/S/E/W.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import cell_index, distinct_cells, move


@dataclass(frozen=True)
class CoinGameState:
    size: int
    agent_positions: np.ndarray
    coin_position: np.ndarray
    coin_owner: int
    step: int = 0

    @property
    def n_agents(self):
        return len(self.agent_positions)


class CoinGame:
    n_actions = 4

    def __init__(self, n_agents=2, size=3, episode_len=150, collect_reward=1.0, steal_penalty=-2.0):
        if size * size <= n_agents:
            raise ValueError("grid too small for agents plus a coin")
        self.n_agents = n_agents
        self.size = size
        self.episode_len = episode_len
        self.collect_reward = collect_reward
        self.steal_penalty = steal_penalty

    @property
    def obs_dim(self):
        return 4 * self.size * self.size

    @property
    def state_dim(self):
        return self.n_agents * self.obs_dim

    def reset(self, rng):
        cells = distinct_cells(rng, self.size, self.n_agents + 1)
        return CoinGameState(self.size, cells[:-1], cells[-1], coin_owner=0, step=0)

    def _respawn(self, positions, rng):
        taken = {cell_index(p, self.size) for p in positions}
        free = [c for c in range(self.size * self.size) if c not in taken]
        c = free[int(rng.integers(len(free)))]
        return np.array([c // self.size, c % self.size])

    def step(self, state, actions, rng):
        """Returns ``(next_state, rewards, done, info)``."""
        if len(actions) != self.n_agents or any(not 0 <= int(a) < self.n_actions for a in actions):
            raise ValueError(f"expected {self.n_agents} actions in [0, 4), got {actions}")
        positions = move(state.agent_positions, actions, self.size)
        rewards = np.zeros(self.n_agents)
        coin, owner = state.coin_position, state.coin_owner
        on_coin = np.flatnonzero(np.all(positions == coin, axis=1))
        info = {"collected": False, "stolen": False}
        if on_coin.size:
            collector = int(on_coin[0])  # simultaneous arrival: lowest index wins
            rewards[collector] += self.collect_reward
            if collector != owner:
                rewards[owner] += self.steal_penalty
                info["stolen"] = True
            info["collected"] = True
            coin = self._respawn(positions, rng)
            owner = (owner + 1) % self.n_agents
        nxt = replace(state, agent_positions=positions, coin_position=coin, coin_owner=owner, step=state.step + 1)
        return nxt, rewards, nxt.step >= self.episode_len, info

    def observe(self, state, agent):
        """Four flattened planes: self, other agents, own coin, other coin."""
        planes = np.zeros((4, self.size, self.size))
        for i, (r, c) in enumerate(state.agent_positions):
            planes[0 if i == agent else 1, r, c] = 1.0
        r, c = state.coin_position
        planes[2 if state.coin_owner == agent else 3, r, c] = 1.0
        return planes.ravel()

    def observations(self, state):
        return [self.observe(state, i) for i in range(self.n_agents)]
