"""Loss, exact reverse-mode gradients through the window, and SGD.

The gradients are handwritten. The forward window records the
intermediate states of each timestep; the reverse pass walks the steps
backwards, splitting each adjoint across the identity, depletion and
transfer paths of the firing update:

    out = s - 1/4 sum_d |w_d * f| + 1/4 sum_d shift_d(w_d * f),
    f = relu(s)

so with u_d = w_d * f and g the adjoint of `out`,

    dL/du_d = 1/4 * unshift_d(g) - 1/4 * g * sign(u_d)
    dL/dw_d = dL/du_d * f          (summed over the batch)
    dL/ds   = g + (sum_d dL/du_d * w_d) * [s > 0]

where unshift_d is the opposite shift. Conventions at the kinks:
d relu/dv = 0 at v = 0, d|v|/dv = 0 at v = 0, and the clip derivative
is 0 on and outside the clip boundary. The gradient checker skips
coordinates whose gate signs flip within one finite-difference step of
the evaluation point, since no subgradient convention can match a
two-sided difference straddling a kink.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .grids import OPPOSITE, shift
from .mesh import (
    DIRECTION_FIELDS,
    MeshConfig,
    MeshParams,
    StepTrace,
    grad_trace_keys,
    readout,
    run_window,
    run_window_arrays,
    softmax,
)
from .mnist import Dataset, batches
from .rng import make_rng

_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 2500
    epochs: int = 30
    seed: int = 0
    weight_clamp: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_clamp <= 0:
            raise ValueError("weight_clamp must be > 0")


@dataclass
class Gradients:
    """Loss gradients, one array per parameter, shapes mirroring MeshParams."""

    w_in: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray
    w_right: np.ndarray
    w_left: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    b_in: np.ndarray | None = None

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            w_in=self.w_in * factor,
            w_up=self.w_up * factor,
            w_down=self.w_down * factor,
            w_right=self.w_right * factor,
            w_left=self.w_left * factor,
            w_out=self.w_out * factor,
            b_out=self.b_out * factor,
            b_in=None if self.b_in is None else self.b_in * factor,
        )


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_accuracy: float | None
    wall_seconds: float


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-ln(probs[label]), with the probability floored at 1e-300."""
    probs = np.asarray(probs, dtype=np.float64)
    label = int(label)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(float(probs[label]), _PROB_FLOOR)))


def window_loss(x: np.ndarray, label: int, params: MeshParams, cfg: MeshConfig) -> float:
    """Cross-entropy of the readout after a full window run."""
    state, _ = run_window(x, params, cfg)
    return cross_entropy(readout(state, params), label)


def _clip_inside(v: np.ndarray) -> np.ndarray:
    # strict interior of [-1, 1]; boundary and outside get zero gradient
    return ((v > -1.0) & (v < 1.0)).astype(np.float64)


def _backward_from_lists(trace, final, X, labels, params, cfg):
    """Reverse pass over a recorded window.

    trace maps grad_trace_keys(cfg) to length-T lists of (B, H, W)
    arrays, final is the (B, H, W) post-window state, X is (B, D) and
    labels (B,). Returns per-sample losses (B,) and Gradients summed
    over the batch.
    """
    B = X.shape[0]
    n = cfg.neurons
    flat_final = final.reshape(B, n)
    logits = flat_final @ params.w_out + params.b_out
    probs = softmax(logits)
    picked = np.maximum(probs[np.arange(B), labels], _PROB_FLOOR)
    losses = -np.log(picked)

    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    g_w_out = flat_final.T @ dlogits
    g_b_out = dlogits.sum(axis=0)
    g = (dlogits @ params.w_out.T).reshape(B, cfg.height, cfg.width)

    g_w_in = np.zeros_like(params.w_in)
    g_b_in = np.zeros(n) if cfg.opt_input_bias else None
    g_dirs = {name: np.zeros_like(w) for name, w in params.directional()}

    post_inject = trace["post_inject"]
    for t in reversed(range(cfg.window_size)):
        if cfg.opt_clip_state:
            g = g * _clip_inside(trace["fired_raw"][t])
        s = post_inject[t]
        fire_mask = (s > 0.0).astype(np.float64)
        f = np.maximum(s, 0.0)
        g_s = g.copy()
        g_f = np.zeros_like(g)
        for direction, name in DIRECTION_FIELDS:
            w = getattr(params, name)
            sign_u = np.sign(w) * fire_mask
            g_u = 0.25 * shift(g, OPPOSITE[direction]) - 0.25 * g * sign_u
            g_dirs[name] += (g_u * f).sum(axis=0)
            g_f += g_u * w
        g_s += g_f * fire_mask
        if cfg.opt_clip_state:
            g_s = g_s * _clip_inside(trace["inject_raw"][t])
        g_flat = g_s.reshape(B, n)
        if cfg.opt_input_bias:
            g_b_in += g_flat.sum(axis=0)
        if t == 0 or cfg.opt_residual_input:
            g_w_in += X.T @ g_flat
        if cfg.opt_relu_state:
            g = g_s * (trace["state_start"][t] > 0.0)
        else:
            g = g_s
    grads = Gradients(
        w_in=g_w_in,
        w_up=g_dirs["w_up"],
        w_down=g_dirs["w_down"],
        w_right=g_dirs["w_right"],
        w_left=g_dirs["w_left"],
        w_out=g_w_out,
        b_out=g_b_out,
        b_in=g_b_in,
    )
    return losses, grads


def backward_window(trace: StepTrace, x: np.ndarray, label: int, params: MeshParams, cfg: MeshConfig):
    """Exact gradient of the window loss for one sample.

    trace must come from run_window on the same (x, params, cfg).
    Returns (loss, Gradients).
    """
    if len(trace) != cfg.window_size:
        raise ValueError(f"trace length {len(trace)} != window_size {cfg.window_size}")
    if trace.records[0].state_end.shape != (cfg.height, cfg.width):
        raise ValueError("trace grids do not match the configured mesh shape")
    x = np.asarray(x, dtype=np.float64)
    label = int(label)
    if not 0 <= label < cfg.num_classes:
        raise ValueError(f"label {label} out of range for {cfg.num_classes} classes")
    lists = {k: [getattr(r, k)[None] for r in trace.records] for k in grad_trace_keys(cfg)}
    final = trace.records[-1].state_end[None]
    losses, grads = _backward_from_lists(lists, final, x[None], np.array([label]), params, cfg)
    return float(losses[0]), grads


def batch_backward(X: np.ndarray, labels: np.ndarray, params: MeshParams, cfg: MeshConfig):
    """Forward plus reverse pass for a batch; grads are summed over it."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    final, trace = run_window_arrays(X, params, cfg, keep=grad_trace_keys(cfg))
    return _backward_from_lists(trace, final, X, labels, params, cfg)


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int


def _param_arrays(params: MeshParams, grads: Gradients, cfg: MeshConfig):
    pairs = [(params.w_in, grads.w_in)]
    if cfg.opt_input_bias:
        pairs.append((params.b_in, grads.b_in))
    for (_, w), (_, gw) in zip(params.directional(), (
        ("w_up", grads.w_up),
        ("w_down", grads.w_down),
        ("w_right", grads.w_right),
        ("w_left", grads.w_left),
    )):
        pairs.append((w, gw))
    pairs.append((params.w_out, grads.w_out))
    pairs.append((params.b_out, grads.b_out))
    return pairs


def _mesh_gate_signature(work: MeshParams, cfg: MeshConfig, x: np.ndarray):
    """Loss plus an int8 signature of every gate sign along the forward.

    The signature covers the fire gate, the per-direction signs feeding
    the absolute values, the optional state-ReLU gate and the clip
    region codes. Two signatures differing anywhere means a kink sits
    between the two perturbed evaluation points.
    """
    keep = ("post_inject", "state_start", "inject_raw", "fired_raw")
    final, trace = run_window_arrays(x[None], work, cfg, keep=keep)
    parts = []
    for t in range(cfg.window_size):
        s = trace["post_inject"][t]
        f = np.maximum(s, 0.0)
        parts.append((s > 0.0).astype(np.int8))
        for _, name in DIRECTION_FIELDS:
            parts.append(np.sign(getattr(work, name) * f).astype(np.int8))
        if cfg.opt_relu_state:
            parts.append((trace["state_start"][t] > 0.0).astype(np.int8))
        if cfg.opt_clip_state:
            for key in ("inject_raw", "fired_raw"):
                v = trace[key][t]
                parts.append(((v >= 1.0).astype(np.int8) - (v <= -1.0).astype(np.int8)))
    signature = np.concatenate([p.ravel() for p in parts])
    return final, signature


def grad_check(
    params: MeshParams,
    cfg: MeshConfig,
    x: np.ndarray,
    label: int,
    fd_step: float = 1e-5,
) -> GradCheckResult:
    """Compare the reverse-pass gradient against central differences.

    Relative error per coordinate is |a - f| / max(1e-8, |a| + |f|).
    Coordinates whose gate signature changes between the +step and
    -step evaluations sit next to a kink and are counted as skipped.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0")
    x = np.asarray(x, dtype=np.float64)
    _, trace = run_window(x, params, cfg)
    _, grads = backward_window(trace, x, label, params, cfg)

    work = params.copy()

    def loss_and_sig():
        final, sig = _mesh_gate_signature(work, cfg, x)
        probs = readout(final[0], work)
        return cross_entropy(probs, label), sig

    max_rel = 0.0
    checked = 0
    skipped = 0
    for arr, g in _param_arrays(work, grads, cfg):
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + fd_step
            loss_p, sig_p = loss_and_sig()
            flat[i] = old - fd_step
            loss_m, sig_m = loss_and_sig()
            flat[i] = old
            if not np.array_equal(sig_p, sig_m):
                skipped += 1
                continue
            fd = (loss_p - loss_m) / (2.0 * fd_step)
            a = gflat[i]
            rel = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
            if rel > max_rel:
                max_rel = rel
            checked += 1
    return GradCheckResult(max_rel_error=max_rel, checked=checked, skipped=skipped)


def project_weights(params: MeshParams, clamp: float = 1.0) -> MeshParams:
    """Clip the four directional weight grids to [-clamp, clamp].

    With |w| <= 1 every neuron's total outgoing energy per step,
    1/4 sum_d |w_d| * f, is at most f: firing can never overdraw.
    w_in, w_out and the biases pass through untouched.
    """
    if clamp <= 0:
        raise ValueError("clamp must be > 0")
    out = params.copy()
    out.w_up = np.clip(out.w_up, -clamp, clamp)
    out.w_down = np.clip(out.w_down, -clamp, clamp)
    out.w_right = np.clip(out.w_right, -clamp, clamp)
    out.w_left = np.clip(out.w_left, -clamp, clamp)
    return out


def sgd_step(params: MeshParams, grads: Gradients, tc: TrainConfig) -> MeshParams:
    """p <- p - lr * g for every parameter, then re-project the weights.

    grads must already be the batch mean.
    """
    lr = tc.learning_rate
    out = MeshParams(
        w_in=params.w_in - lr * grads.w_in,
        w_up=params.w_up - lr * grads.w_up,
        w_down=params.w_down - lr * grads.w_down,
        w_right=params.w_right - lr * grads.w_right,
        w_left=params.w_left - lr * grads.w_left,
        w_out=params.w_out - lr * grads.w_out,
        b_out=params.b_out - lr * grads.b_out,
        b_in=None if params.b_in is None else params.b_in - lr * grads.b_in,
    )
    return project_weights(out, tc.weight_clamp)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_params(cfg: MeshConfig, seed: int) -> MeshParams:
    """Seeded initialization (PCG64 keyed by (seed,), see rng module).

    Draw order is fixed: w_in, w_up, w_down, w_right, w_left, w_out.
    Dense layers are Glorot-uniform, directional weights uniform in
    [-0.5, 0.5], biases zero.
    """
    rng = make_rng(seed)
    n = cfg.neurons
    w_in = _glorot(rng, cfg.input_dim, n, (cfg.input_dim, n))
    dirs = [rng.uniform(-0.5, 0.5, (cfg.height, cfg.width)) for _ in range(4)]
    w_out = _glorot(rng, n, cfg.num_classes, (n, cfg.num_classes))
    return MeshParams(
        w_in=w_in,
        w_up=dirs[0],
        w_down=dirs[1],
        w_right=dirs[2],
        w_left=dirs[3],
        w_out=w_out,
        b_out=np.zeros(cfg.num_classes),
        b_in=np.zeros(n) if cfg.opt_input_bias else None,
    )


def evaluate_accuracy(params: MeshParams, cfg: MeshConfig, dataset: Dataset, chunk: int = 1024) -> float:
    """Top-1 accuracy over the dataset (argmax ties go to the lowest class)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    correct = 0
    for start in range(0, len(dataset), chunk):
        X = dataset.images[start : start + chunk]
        y = dataset.labels[start : start + chunk]
        final, _ = run_window_arrays(X, params, cfg)
        probs = readout(final, params)
        correct += int(np.sum(np.argmax(probs, axis=-1) == y))
    return correct / len(dataset)


def train(
    dataset: Dataset,
    cfg: MeshConfig,
    tc: TrainConfig,
    test_dataset: Dataset | None = None,
    on_update=None,
):
    """SGD over shuffled batches; returns (params, per-epoch metrics).

    The shuffle order is a pure function of (seed, epoch). Per-epoch
    train loss is the mean sample loss seen during the pass (measured
    before each update, as usual for streaming loss). on_update, when
    given, is called with the params after every batch update.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    params = init_params(cfg, tc.seed)
    history: list[EpochMetrics] = []
    for epoch in range(tc.epochs):
        t0 = time.perf_counter()
        loss_sum = 0.0
        seen = 0
        for idx in batches(dataset, tc.batch_size, tc.seed, epoch):
            X = dataset.images[idx]
            y = dataset.labels[idx]
            losses, grads = batch_backward(X, y, params, cfg)
            params = sgd_step(params, grads.scaled(1.0 / len(idx)), tc)
            loss_sum += float(losses.sum())
            seen += len(idx)
            if on_update is not None:
                on_update(params)
        test_acc = None
        if test_dataset is not None:
            test_acc = evaluate_accuracy(params, cfg, test_dataset)
        history.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / seen,
                test_accuracy=test_acc,
                wall_seconds=time.perf_counter() - t0,
            )
        )
    return params, history
