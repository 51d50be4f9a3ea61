"""Shared grid helpers."""

import numpy as np

# row grows southwards, column grows eastwards
MOVES = np.array([[-1, 0], [1, 0], [0, 1], [0, -1], [0, 0]])
ACTION_NAMES = ("N", "S", "E", "W", "Stay")


def move(positions, actions, size):
    """Apply moves; agents pushing into a wall stay put."""
    return np.clip(positions + MOVES[np.asarray(actions)], 0, size - 1)


def cell_index(pos, size):
    return int(pos[0]) * size + int(pos[1])


def distinct_cells(rng, size, count):
    cells = rng.choice(size * size, size=count, replace=False)
    return np.stack([cells // size, cells % size], axis=1)
