"""Elementwise and toroidal-shift primitives for 2-D activation grids.

A grid is a float64 array whose last two axes are (row, column) with
row 0 at the top. All functions are pure, accept leading batch axes,
and never mutate their inputs.
"""

from __future__ import annotations

import numpy as np

UP = "up"
DOWN = "down"
LEFT = "left"
RIGHT = "right"
DIRECTIONS = (UP, DOWN, RIGHT, LEFT)

OPPOSITE = {UP: DOWN, DOWN: UP, LEFT: RIGHT, RIGHT: LEFT}

# (axis, roll step): "up" moves the contents of row i+1 into row i, so
# values travel toward row 0 and wrap past the top edge.
_ROLLS = {
    UP: (-2, -1),
    DOWN: (-2, 1),
    LEFT: (-1, -1),
    RIGHT: (-1, 1),
}


def shift(g: np.ndarray, direction: str) -> np.ndarray:
    """Cyclically shift a grid one step along the torus."""
    g = np.asarray(g, dtype=np.float64)
    if direction not in _ROLLS:
        raise ValueError(f"unknown direction {direction!r}")
    axis, step = _ROLLS[direction]
    return np.roll(g, step, axis=axis)


def relu(g: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(g, dtype=np.float64), 0.0)


def clip(g: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError(f"invalid clip range: lo={lo} > hi={hi}")
    return np.clip(np.asarray(g, dtype=np.float64), lo, hi)


def total_energy(g: np.ndarray) -> float:
    """Sum of all cells, accumulated left to right in row-major order."""
    g = np.asarray(g, dtype=np.float64)
    acc = 0.0
    for v in g.ravel(order="C").tolist():
        acc += v
    return acc
