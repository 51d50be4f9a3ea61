"""The CHSH nonlocal game as a one-shot, two-agent task."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

INPUT_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

# all four functions from one bit to one bit, as (f(0), f(1))
DETERMINISTIC_STRATEGIES = tuple(itertools.product((0, 1), repeat=2))


@dataclass(frozen=True)
class ChshRound:
    x: int
    y: int
    a: int
    b: int

    @property
    def reward(self):
        return chsh_step((self.x, self.y), (self.a, self.b))


def chsh_step(inputs, actions):
    """1 iff ``a XOR b == x AND y``."""
    x, y = inputs
    a, b = actions
    for bit in (x, y, a, b):
        if bit not in (0, 1):
            raise ValueError(f"CHSH inputs and actions are bits, got {bit!r}")
    return int((a ^ b) == (x & y))


def win_table(alice, bob):
    """Per-input-pair wins for deterministic strategies given as ``(f(0), f(1))``."""
    return np.array([chsh_step((x, y), (alice[x], bob[y])) for x, y in INPUT_PAIRS], dtype=float)


def enumerate_classical_strategies():
    """Average win rate for each of the 16 deterministic strategy pairs."""
    return {
        (alice, bob): float(win_table(alice, bob).mean())
        for alice in DETERMINISTIC_STRATEGIES
        for bob in DETERMINISTIC_STRATEGIES
    }


def chsh_classical_optimum():
    """Best win rate over all deterministic local strategies (exactly 0.75)."""
    return max(enumerate_classical_strategies().values())


def sample_inputs(rng):
    x, y = rng.integers(0, 2, size=2)
    return int(x), int(y)


class ChshEnv:
    """One round per episode: reset draws (x, y), step scores (a, b)."""

    n_agents = 2
    obs_dim = 1
    n_actions = 2

    def reset(self, rng):
        self.inputs = sample_inputs(rng)
        return [np.array([self.inputs[0]], dtype=float), np.array([self.inputs[1]], dtype=float)]

    def step(self, actions):
        r = chsh_step(self.inputs, actions)
        return r, True
