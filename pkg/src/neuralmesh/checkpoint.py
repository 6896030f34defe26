"""Flat binary parameter checkpoints.

Layout, all integers little-endian:

    bytes 0-7   magic b"NMCKPT\\x00\\x01" (the trailing byte is the
                format version)
    byte  8     kind: 0 = mesh, 1 = feed-forward baseline
    mesh kind:
        u32 height, width, input_dim, num_classes, window_size
        u8  option flags: bit0 residual input, bit1 state relu,
            bit2 input bias, bit3 state clip
        f64 arrays, row-major, in order: w_in, w_up, w_down, w_right,
            w_left, w_out, b_out, then b_in iff bit2
    ff kind:
        u32 input_dim, hidden, num_classes
        u8  flags: bit0 hidden bias present
        f64 arrays in order: w1, w2, b2, then b1 iff bit0

The file length must match the header exactly; anything else raises
CheckpointError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .feedforward import FFParams
from .mesh import MeshConfig, MeshParams

MAGIC = b"NMCKPT\x00\x01"
KIND_MESH = 0
KIND_FF = 1

_F8 = np.dtype("<f8")


class CheckpointError(ValueError):
    """Unreadable, truncated or version-mismatched checkpoint."""


@dataclass
class LoadedCheckpoint:
    kind: str  # "mesh" or "ff"
    params: MeshParams | FFParams
    cfg: MeshConfig | None  # populated for mesh checkpoints


def _pack_arrays(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=_F8).tobytes() for a in arrays)


def save_mesh_checkpoint(path, params: MeshParams, cfg: MeshConfig) -> None:
    params.validate(cfg)
    flags = (
        (1 if cfg.opt_residual_input else 0)
        | (2 if cfg.opt_relu_state else 0)
        | (4 if cfg.opt_input_bias else 0)
        | (8 if cfg.opt_clip_state else 0)
    )
    header = MAGIC + struct.pack(
        "<BIIIIIB",
        KIND_MESH,
        cfg.height,
        cfg.width,
        cfg.input_dim,
        cfg.num_classes,
        cfg.window_size,
        flags,
    )
    arrays = [
        params.w_in,
        params.w_up,
        params.w_down,
        params.w_right,
        params.w_left,
        params.w_out,
        params.b_out,
    ]
    if cfg.opt_input_bias:
        arrays.append(params.b_in)
    with open(path, "wb") as fh:
        fh.write(header + _pack_arrays(arrays))


def save_ff_checkpoint(path, params: FFParams) -> None:
    input_dim, hidden = params.w1.shape
    num_classes = params.w2.shape[1]
    flags = 1 if params.b1 is not None else 0
    header = MAGIC + struct.pack("<BIIIB", KIND_FF, input_dim, hidden, num_classes, flags)
    arrays = [params.w1, params.w2, params.b2]
    if params.b1 is not None:
        arrays.append(params.b1)
    with open(path, "wb") as fh:
        fh.write(header + _pack_arrays(arrays))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype=_F8).reshape(shape).copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CheckpointError(
                f"{self.path}: {len(self.data) - self.pos} unexpected trailing bytes"
            )


def load_checkpoint(path) -> LoadedCheckpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) or data[: len(MAGIC) - 1] != MAGIC[:-1]:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if data[len(MAGIC) - 1] != MAGIC[-1]:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {data[len(MAGIC) - 1]}"
        )
    r = _Reader(data, path)
    r.take(len(MAGIC))
    (kind,) = struct.unpack("<B", r.take(1))
    if kind == KIND_MESH:
        h, w, input_dim, num_classes, window, flags = struct.unpack("<IIIIIB", r.take(21))
        cfg = MeshConfig(
            window_size=window,
            height=h,
            width=w,
            opt_residual_input=bool(flags & 1),
            opt_relu_state=bool(flags & 2),
            opt_input_bias=bool(flags & 4),
            opt_clip_state=bool(flags & 8),
            input_dim=input_dim,
            num_classes=num_classes,
        )
        n = h * w
        params = MeshParams(
            w_in=r.array((input_dim, n)),
            w_up=r.array((h, w)),
            w_down=r.array((h, w)),
            w_right=r.array((h, w)),
            w_left=r.array((h, w)),
            w_out=r.array((n, num_classes)),
            b_out=r.array((num_classes,)),
            b_in=r.array((n,)) if flags & 4 else None,
        )
        r.done()
        return LoadedCheckpoint(kind="mesh", params=params, cfg=cfg)
    if kind == KIND_FF:
        input_dim, hidden, num_classes, flags = struct.unpack("<IIIB", r.take(13))
        params = FFParams(
            w1=r.array((input_dim, hidden)),
            w2=r.array((hidden, num_classes)),
            b2=r.array((num_classes,)),
            b1=r.array((hidden,)) if flags & 1 else None,
        )
        r.done()
        return LoadedCheckpoint(kind="ff", params=params, cfg=None)
    raise CheckpointError(f"{path}: unknown checkpoint kind {kind}")
