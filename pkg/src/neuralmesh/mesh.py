"""Dynamics of a recurrent neuron grid on a torus.

The state is an H x W grid of activation energies. Each timestep:

    (a) optionally ReLU the state (opt_relu_state),
    (b) add the input energies, mapped through a dense layer and
        reshaped onto the grid (clipped to [-1, 1] afterwards when
        opt_clip_state is on),
    (c) gate the fire grid f = relu(state): only positive activations
        are available for firing,
    (d) apply the firing exchange: every neuron loses
        1/4 * (|w_up*f| + |w_down*f| + |w_right*f| + |w_left*f|)
        and each quarter-scaled signed product w_dir*f lands on the
        neighbor one step in that direction (with wraparound),
    (e) optionally clip the state to [-1, 1] again (opt_clip_state).

Because each per-direction transfer is capped at a quarter of the
neuron's fire energy (weights are kept in [-1, 1] by the trainer), a
neuron can never influence its neighbors by more than the energy it
holds, and depletion can never push a firing neuron below zero.

The readout is a dense layer plus softmax on the flattened final state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .grids import DOWN, LEFT, RIGHT, UP, shift


@dataclass(frozen=True)
class MeshConfig:
    """Grid shape, window length and the four behavior switches."""

    window_size: int
    height: int = 25
    width: int = 25
    opt_residual_input: bool = False
    opt_relu_state: bool = False
    opt_input_bias: bool = False
    opt_clip_state: bool = False
    input_dim: int = 784
    num_classes: int = 10

    def __post_init__(self):
        for name in ("window_size", "height", "width", "input_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def neurons(self) -> int:
        return self.height * self.width


# Field name of the weight grid paired with each transfer direction.
DIRECTION_FIELDS = ((UP, "w_up"), (DOWN, "w_down"), (RIGHT, "w_right"), (LEFT, "w_left"))


@dataclass
class MeshParams:
    """All trainable arrays.

    w_up[i, j] is the weight from neuron (i, j) to the neighbor above
    it, and likewise for the other three directions. b_in is present
    only when the configuration uses an input bias.
    """

    w_in: np.ndarray  # (input_dim, neurons)
    w_up: np.ndarray  # (H, W)
    w_down: np.ndarray
    w_right: np.ndarray
    w_left: np.ndarray
    w_out: np.ndarray  # (neurons, num_classes)
    b_out: np.ndarray  # (num_classes,)
    b_in: np.ndarray | None = None  # (neurons,)

    def directional(self):
        return (
            ("w_up", self.w_up),
            ("w_down", self.w_down),
            ("w_right", self.w_right),
            ("w_left", self.w_left),
        )

    def copy(self) -> "MeshParams":
        return MeshParams(
            w_in=self.w_in.copy(),
            w_up=self.w_up.copy(),
            w_down=self.w_down.copy(),
            w_right=self.w_right.copy(),
            w_left=self.w_left.copy(),
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
            b_in=None if self.b_in is None else self.b_in.copy(),
        )

    def validate(self, cfg: MeshConfig) -> None:
        hw = (cfg.height, cfg.width)
        n = cfg.neurons
        if self.w_in.shape != (cfg.input_dim, n):
            raise ValueError(f"w_in shape {self.w_in.shape} != {(cfg.input_dim, n)}")
        for name, w in self.directional():
            if w.shape != hw:
                raise ValueError(f"{name} shape {w.shape} != {hw}")
        if self.w_out.shape != (n, cfg.num_classes):
            raise ValueError(f"w_out shape {self.w_out.shape} != {(n, cfg.num_classes)}")
        if self.b_out.shape != (cfg.num_classes,):
            raise ValueError(f"b_out shape {self.b_out.shape} != {(cfg.num_classes,)}")
        if cfg.opt_input_bias:
            if self.b_in is None or self.b_in.shape != (n,):
                raise ValueError("opt_input_bias set but b_in missing or misshaped")


@dataclass
class MeshState:
    activations: np.ndarray  # (H, W)
    t: int = 0


def zero_state(cfg: MeshConfig) -> MeshState:
    return MeshState(np.zeros((cfg.height, cfg.width)), t=0)


@dataclass
class StepRecord:
    """Every intermediate grid of one timestep.

    state_start is the state at step entry; pre_inject is the state
    after the optional ReLU; inject_raw / fired_raw are the pre-clip
    values at the two possible clip sites, kept so the reverse pass can
    recover the clip gates.
    """

    state_start: np.ndarray
    pre_inject: np.ndarray
    inject_raw: np.ndarray
    post_inject: np.ndarray
    fire: np.ndarray
    decrement: np.ndarray
    increment: np.ndarray
    fired_raw: np.ndarray
    state_end: np.ndarray


@dataclass
class StepTrace:
    """Per-timestep records of one window run, in time order."""

    records: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def stacked(self, name: str) -> np.ndarray:
        """(T, H, W) stack of one recorded field."""
        return np.stack([getattr(r, name) for r in self.records])


TRACE_FIELDS = tuple(f.name for f in fields(StepRecord))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    m = np.max(logits, axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def injection_field(x: np.ndarray, params: MeshParams, cfg: MeshConfig) -> np.ndarray:
    """Input energies mapped onto the grid: reshape(x @ w_in (+ b_in)).

    The reshape is row-major, so input unit ordering follows the grid
    row by row. The bias, when configured, is added on every call even
    for an all-zero x.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cfg.input_dim:
        raise ValueError(f"input length {x.shape[-1]} != input_dim {cfg.input_dim}")
    flat = x @ params.w_in
    if cfg.opt_input_bias:
        if params.b_in is None:
            raise ValueError("opt_input_bias set but params.b_in is None")
        flat = flat + params.b_in
    return flat.reshape(x.shape[:-1] + (cfg.height, cfg.width))


def inject_input(state: MeshState, x: np.ndarray, params: MeshParams, cfg: MeshConfig) -> MeshState:
    """Add the mapped input to the state (clip afterwards if configured)."""
    new = state.activations + injection_field(x, params, cfg)
    if cfg.opt_clip_state:
        new = np.clip(new, -1.0, 1.0)
    return MeshState(new, state.t)


def decrement(f: np.ndarray, params: MeshParams) -> np.ndarray:
    """Energy leaving each neuron: 1/4 sum of |w_dir * f| over directions."""
    f = np.asarray(f, dtype=np.float64)
    total = np.zeros(np.broadcast_shapes(f.shape, params.w_up.shape))
    for _, w in params.directional():
        total += np.abs(w * f)
    return 0.25 * total


def increment(f: np.ndarray, params: MeshParams) -> np.ndarray:
    """Energy entering each neuron: quarter-scaled signed products, each
    shifted one step in its firing direction."""
    f = np.asarray(f, dtype=np.float64)
    total = np.zeros(np.broadcast_shapes(f.shape, params.w_up.shape))
    for direction, name in DIRECTION_FIELDS:
        total += shift(getattr(params, name) * f, direction)
    return 0.25 * total


def _step(state: np.ndarray, inj: np.ndarray, params: MeshParams, cfg: MeshConfig):
    """One timestep on raw arrays; state may carry leading batch axes.

    Returns the new state and a dict of every intermediate grid, keyed
    by StepRecord field name.
    """
    start = state
    cur = np.maximum(start, 0.0) if cfg.opt_relu_state else start
    pre_inject = cur
    raw = cur + inj
    cur = np.clip(raw, -1.0, 1.0) if cfg.opt_clip_state else raw
    post_inject = cur
    f = np.maximum(cur, 0.0)
    dec = decrement(f, params)
    inc = increment(f, params)
    fired = cur - dec + inc
    end = np.clip(fired, -1.0, 1.0) if cfg.opt_clip_state else fired
    return end, {
        "state_start": start,
        "pre_inject": pre_inject,
        "inject_raw": raw,
        "post_inject": post_inject,
        "fire": f,
        "decrement": dec,
        "increment": inc,
        "fired_raw": fired,
        "state_end": end,
    }


def mesh_step(state: MeshState, x: np.ndarray, params: MeshParams, cfg: MeshConfig):
    """Run one full timestep; returns (new MeshState, StepRecord)."""
    inj = injection_field(x, params, cfg)
    end, rec = _step(state.activations, inj, params, cfg)
    return MeshState(end, state.t + 1), StepRecord(**rec)


def grad_trace_keys(cfg: MeshConfig) -> tuple[str, ...]:
    """Intermediates the reverse pass needs under this configuration."""
    keys = ["post_inject"]
    if cfg.opt_relu_state:
        keys.append("state_start")
    if cfg.opt_clip_state:
        keys.extend(["inject_raw", "fired_raw"])
    return tuple(keys)


def run_window_arrays(
    X: np.ndarray,
    params: MeshParams,
    cfg: MeshConfig,
    keep: tuple[str, ...] = (),
):
    """Run the T-step window on a batch of inputs from the zero state.

    X has shape (..., input_dim); the window starts all-zero, shows X
    at step 0, and shows the zero vector afterwards unless
    opt_residual_input repeats X (the input bias, when configured, is
    applied every step regardless). Returns the final state array of
    shape (..., H, W) and a dict mapping each requested trace key to a
    length-T list of arrays.
    """
    X = np.asarray(X, dtype=np.float64)
    lead = X.shape[:-1]
    state = np.zeros(lead + (cfg.height, cfg.width))
    inj_first = injection_field(X, params, cfg)
    if cfg.opt_residual_input:
        inj_rest = inj_first
    else:
        inj_rest = injection_field(np.zeros(cfg.input_dim), params, cfg)
    trace: dict[str, list[np.ndarray]] = {k: [] for k in keep}
    for t in range(cfg.window_size):
        inj = inj_first if t == 0 else inj_rest
        state, rec = _step(state, inj, params, cfg)
        for k in keep:
            trace[k].append(rec[k])
    return state, trace


def run_window(x: np.ndarray, params: MeshParams, cfg: MeshConfig):
    """Run the window for a single input; returns (MeshState, StepTrace)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"run_window expects a single input vector, got shape {x.shape}")
    state = zero_state(cfg)
    inj_first = injection_field(x, params, cfg)
    if cfg.opt_residual_input:
        inj_rest = inj_first
    else:
        inj_rest = injection_field(np.zeros(cfg.input_dim), params, cfg)
    trace = StepTrace()
    act = state.activations
    for t in range(cfg.window_size):
        inj = inj_first if t == 0 else inj_rest
        act, rec = _step(act, inj, params, cfg)
        trace.records.append(StepRecord(**rec))
    return MeshState(act, cfg.window_size), trace


def readout(state, params: MeshParams) -> np.ndarray:
    """Class probabilities from the flattened state: softmax(s @ w_out + b_out)."""
    act = state.activations if isinstance(state, MeshState) else np.asarray(state)
    n = params.w_out.shape[0]
    flat = act.reshape(act.shape[:-2] + (n,))
    return softmax(flat @ params.w_out + params.b_out)
