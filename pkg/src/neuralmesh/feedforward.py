"""One-layer feed-forward baseline and the mesh-equivalence constructor.

The benchmark model is input -> N hidden ReLU units -> softmax, trained
with the exact same loop, loss, shuffling and init scheme as the mesh.
A mesh with all directional weights zero and the state ReLU enabled
emulates it exactly for any window of at least two steps: step 0 leaves
x @ w_in in the grid, step 1 applies ReLU to it, and every later step
is a fixed point because ReLU is idempotent and zero weights move no
energy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .grids import relu
from .mesh import MeshConfig, MeshParams, softmax
from .mnist import Dataset, batches
from .rng import make_rng
from .training import (
    _PROB_FLOOR,
    EpochMetrics,
    GradCheckResult,
    TrainConfig,
    _glorot,
    cross_entropy,
)


@dataclass
class FFParams:
    w1: np.ndarray  # (input_dim, hidden)
    w2: np.ndarray  # (hidden, num_classes)
    b2: np.ndarray  # (num_classes,)
    b1: np.ndarray | None = None

    def copy(self) -> "FFParams":
        return FFParams(
            w1=self.w1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            b1=None if self.b1 is None else self.b1.copy(),
        )


@dataclass
class FFGradients:
    w1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    b1: np.ndarray | None = None


def ff_init(input_dim: int, hidden: int, num_classes: int, seed: int, bias: bool = False) -> FFParams:
    """Glorot-uniform w1 then w2, zero biases; PRNG keyed by (seed,)."""
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    rng = make_rng(seed)
    w1 = _glorot(rng, input_dim, hidden, (input_dim, hidden))
    w2 = _glorot(rng, hidden, num_classes, (hidden, num_classes))
    return FFParams(
        w1=w1,
        w2=w2,
        b2=np.zeros(num_classes),
        b1=np.zeros(hidden) if bias else None,
    )


def ff_hidden(x: np.ndarray, p: FFParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.w1.shape[0]:
        raise ValueError(f"input length {x.shape[-1]} != {p.w1.shape[0]}")
    h = x @ p.w1
    if p.b1 is not None:
        h = h + p.b1
    return h


def ff_forward(x: np.ndarray, p: FFParams) -> np.ndarray:
    """softmax(relu(x @ w1 (+ b1)) @ w2 + b2); accepts a batch axis."""
    return softmax(relu(ff_hidden(x, p)) @ p.w2 + p.b2)


def ff_batch_backward(X: np.ndarray, labels: np.ndarray, p: FFParams):
    """Per-sample losses and batch-summed gradients."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    raw = ff_hidden(X, p)
    hidden = relu(raw)
    logits = hidden @ p.w2 + p.b2
    probs = softmax(logits)
    B = X.shape[0]
    picked = np.maximum(probs[np.arange(B), labels], _PROB_FLOOR)
    losses = -np.log(picked)

    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    g_w2 = hidden.T @ dlogits
    g_b2 = dlogits.sum(axis=0)
    g_raw = (dlogits @ p.w2.T) * (raw > 0.0)
    g_w1 = X.T @ g_raw
    g_b1 = g_raw.sum(axis=0) if p.b1 is not None else None
    return losses, FFGradients(w1=g_w1, w2=g_w2, b2=g_b2, b1=g_b1)


def ff_sgd_step(p: FFParams, g: FFGradients, tc: TrainConfig) -> FFParams:
    """p <- p - lr * g with batch-mean grads; no clamping for the baseline."""
    lr = tc.learning_rate
    return FFParams(
        w1=p.w1 - lr * g.w1,
        w2=p.w2 - lr * g.w2,
        b2=p.b2 - lr * g.b2,
        b1=None if p.b1 is None else p.b1 - lr * g.b1,
    )


def ff_evaluate_accuracy(p: FFParams, dataset: Dataset, chunk: int = 4096) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    correct = 0
    for start in range(0, len(dataset), chunk):
        X = dataset.images[start : start + chunk]
        y = dataset.labels[start : start + chunk]
        probs = ff_forward(X, p)
        correct += int(np.sum(np.argmax(probs, axis=-1) == y))
    return correct / len(dataset)


def ff_train(
    dataset: Dataset,
    tc: TrainConfig,
    hidden: int,
    input_dim: int = 784,
    num_classes: int = 10,
    bias: bool = False,
    test_dataset: Dataset | None = None,
):
    """Same loop as training.train, on the baseline model."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    p = ff_init(input_dim, hidden, num_classes, tc.seed, bias=bias)
    history: list[EpochMetrics] = []
    for epoch in range(tc.epochs):
        t0 = time.perf_counter()
        loss_sum = 0.0
        seen = 0
        for idx in batches(dataset, tc.batch_size, tc.seed, epoch):
            X = dataset.images[idx]
            y = dataset.labels[idx]
            losses, grads = ff_batch_backward(X, y, p)
            scale = 1.0 / len(idx)
            p = ff_sgd_step(
                p,
                FFGradients(
                    w1=grads.w1 * scale,
                    w2=grads.w2 * scale,
                    b2=grads.b2 * scale,
                    b1=None if grads.b1 is None else grads.b1 * scale,
                ),
                tc,
            )
            loss_sum += float(losses.sum())
            seen += len(idx)
        test_acc = None
        if test_dataset is not None:
            test_acc = ff_evaluate_accuracy(p, test_dataset)
        history.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / seen,
                test_accuracy=test_acc,
                wall_seconds=time.perf_counter() - t0,
            )
        )
    return p, history


def ff_grad_check(p: FFParams, x: np.ndarray, label: int, fd_step: float = 1e-5) -> GradCheckResult:
    """Central-difference check; coordinates straddling the ReLU kink skip."""
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0")
    x = np.asarray(x, dtype=np.float64)
    losses, grads = ff_batch_backward(x[None], np.array([label]), p)

    work = p.copy()
    arrays = [(work.w1, grads.w1)]
    if work.b1 is not None:
        arrays.append((work.b1, grads.b1))
    arrays.append((work.w2, grads.w2))
    arrays.append((work.b2, grads.b2))

    def loss_and_sig():
        raw = ff_hidden(x, work)
        probs = softmax(relu(raw) @ work.w2 + work.b2)
        return cross_entropy(probs, label), (raw > 0.0)

    max_rel = 0.0
    checked = 0
    skipped = 0
    for arr, g in arrays:
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


def mesh_from_ff(p: FFParams, cfg: MeshConfig) -> MeshParams:
    """Mesh parameters that reproduce the baseline exactly.

    Requires hidden = H * W, the state ReLU on, residual input and
    input bias off, and a window of at least 2 steps.
    """
    n = cfg.neurons
    if p.w1.shape[1] != n:
        raise ValueError(f"hidden width {p.w1.shape[1]} != {cfg.height}x{cfg.width} = {n}")
    if p.b1 is not None:
        raise ValueError("hidden bias has no mesh counterpart; build the baseline with bias=False")
    if not cfg.opt_relu_state:
        raise ValueError("equivalence needs opt_relu_state")
    if cfg.opt_residual_input:
        raise ValueError("equivalence needs opt_residual_input off")
    if cfg.opt_input_bias:
        raise ValueError("equivalence needs opt_input_bias off")
    if cfg.window_size < 2:
        raise ValueError("equivalence needs window_size >= 2")
    hw = (cfg.height, cfg.width)
    return MeshParams(
        w_in=p.w1.copy(),
        w_up=np.zeros(hw),
        w_down=np.zeros(hw),
        w_right=np.zeros(hw),
        w_left=np.zeros(hw),
        w_out=p.w2.copy(),
        b_out=p.b2.copy(),
        b_in=None,
    )
