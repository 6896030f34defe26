"""Activation-energy frames: black -> pink -> yellow heatmaps as PPM.

Grid values are first normalized into [0,1] (a sigmoid squash, or a
plain clip to [0,1]), then mapped through a piecewise-linear colormap
anchored at black (0,0,0), pink (255,105,180) at 0.5 and yellow
(255,255,0). Frames are nearest-neighbor upscaled and written as
binary PPM (P6, maxval 255), which keeps golden-file comparisons
byte-exact with no codec in the loop.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .mesh import StepTrace

_BLACK = np.array([0.0, 0.0, 0.0])
_PINK = np.array([255.0, 105.0, 180.0])
_YELLOW = np.array([255.0, 255.0, 0.0])

NORMALIZE_MODES = ("sigmoid", "clip")


@dataclass
class Frame:
    width: int
    height: int
    pixels: bytes  # RGB triples, row-major

    def __post_init__(self):
        if len(self.pixels) != 3 * self.width * self.height:
            raise ValueError(
                f"{len(self.pixels)} payload bytes for {self.width}x{self.height} RGB"
            )


def normalize(g: np.ndarray, mode: str) -> np.ndarray:
    """Map arbitrary reals into [0,1] (sigmoid squash or hard clip)."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("grid contains non-finite values")
    if mode == "sigmoid":
        return 1.0 / (1.0 + np.exp(-g))
    if mode == "clip":
        return np.clip(g, 0.0, 1.0)
    raise ValueError(f"unknown normalization mode {mode!r}")


def apply_colormap(u):
    """[0,1] value(s) -> RGB bytes on the black/pink/yellow ramp.

    Channels interpolate linearly between the anchors and round half-up
    to the nearest byte. Scalars return an (r, g, b) tuple of ints;
    arrays gain a trailing RGB axis.
    """
    arr = np.asarray(u, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("colormap input outside [0,1]; normalize first")
    lo = 2.0 * arr[..., None] * _PINK
    hi = _PINK + (2.0 * arr[..., None] - 1.0) * (_YELLOW - _PINK)
    rgb = np.where(arr[..., None] <= 0.5, lo, hi)
    rgb = np.floor(rgb + 0.5).astype(np.uint8)
    if np.isscalar(u) or getattr(u, "ndim", 1) == 0:
        return tuple(int(c) for c in rgb)
    return rgb


def render_frame(g01: np.ndarray, scale: int = 1) -> Frame:
    """Normalized grid -> Frame, each cell a scale x scale pixel block."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    g01 = np.asarray(g01, dtype=np.float64)
    if g01.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g01.shape}")
    rgb = apply_colormap(g01)
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    return Frame(width=rgb.shape[1], height=rgb.shape[0], pixels=rgb.tobytes())


def ppm_bytes(frame: Frame) -> bytes:
    return b"P6\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels


def write_ppm(frame: Frame, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ppm_bytes(frame))


def write_frames(trace: StepTrace, mode: str, scale: int, out_dir) -> list[str]:
    """One PPM per timestep (the post-update state), step_000.ppm on.

    Returns the written paths in step order.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t, record in enumerate(trace):
        frame = render_frame(normalize(record.state_end, mode), scale)
        path = os.path.join(out_dir, f"step_{t:03d}.ppm")
        write_ppm(frame, path)
        paths.append(path)
    return paths
