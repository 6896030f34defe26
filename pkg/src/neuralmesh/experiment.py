"""Experiment plumbing: config files, CSV metrics, sweeps, runs.

Config files are plain `key = value` lines with `#` comments and
comma-separated lists; command-line flags override file values. Metric
rows append to a single CSV whose header is written only when the file
is new or empty, so an interrupted sweep can be resumed with the same
command.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .checkpoint import save_ff_checkpoint, save_mesh_checkpoint
from .feedforward import ff_forward, ff_init, ff_train, mesh_from_ff
from .mesh import MeshConfig, run_window_arrays, readout
from .mnist import Dataset, load_dataset
from .rng import EQUIV_INPUT_STREAM, make_rng
from .training import TrainConfig, train

CSV_HEADER = "model,height,width,neurons,window_size,seed,epoch,train_loss,test_accuracy,wall_seconds"


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


def shape_for_neurons(n: int) -> tuple[int, int]:
    """Most-square (height, width) with height * width = n.

    Perfect squares give H = W = sqrt(n); otherwise the divisor pair
    closest to square (height <= width). Primes degrade to 1 x n.
    """
    if n < 1:
        raise ValueError("neuron count must be >= 1")
    for h in range(math.isqrt(n), 0, -1):
        if n % h == 0:
            return h, n // h
    raise AssertionError("unreachable: 1 divides every n")


def format_real(v: float) -> str:
    """Six significant digits, trailing zeros kept (0.933 -> 0.933000)."""
    return "%#.6g" % float(v)


@dataclass
class MetricsRow:
    model: str
    height: int
    width: int
    neurons: int
    window_size: int
    seed: int
    epoch: int
    train_loss: float
    test_accuracy: float
    wall_seconds: float

    def __post_init__(self):
        if self.model not in ("mesh", "ff"):
            raise ValueError(f"model must be mesh or ff, got {self.model!r}")
        if self.neurons != self.height * self.width:
            raise ValueError(
                f"neurons {self.neurons} != {self.height} x {self.width}"
            )
        acc = self.test_accuracy
        if not math.isnan(acc) and not 0.0 <= acc <= 1.0:
            raise ValueError(f"test_accuracy {acc} outside [0, 1]")

    def to_csv_line(self) -> str:
        return ",".join(
            [
                self.model,
                str(self.height),
                str(self.width),
                str(self.neurons),
                str(self.window_size),
                str(self.seed),
                str(self.epoch),
                format_real(self.train_loss),
                format_real(self.test_accuracy),
                format_real(self.wall_seconds),
            ]
        )


def write_metrics_csv(rows, path) -> None:
    """Append rows, emitting the header only on a new or empty file."""
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        if need_header:
            fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv_line() + "\n")


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER.split(","):
            raise ConfigError(f"{path}: unexpected CSV header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            if len(rec) != 10:
                raise ConfigError(f"{path}: bad CSV row {rec}")
            rows.append(
                MetricsRow(
                    model=rec[0],
                    height=int(rec[1]),
                    width=int(rec[2]),
                    neurons=int(rec[3]),
                    window_size=int(rec[4]),
                    seed=int(rec[5]),
                    epoch=int(rec[6]),
                    train_loss=float(rec[7]),
                    test_accuracy=float(rec[8]),
                    wall_seconds=float(rec[9]),
                )
            )
        return rows


@dataclass
class ExperimentSpec:
    """Everything a run needs; file values then CLI flags override defaults."""

    model: str = "mesh"
    height: int = 25
    width: int = 25
    window_size: int | None = None
    opt_residual_input: bool = False
    opt_relu_state: bool = False
    opt_input_bias: bool = False
    opt_clip_state: bool = False
    input_dim: int = 784
    num_classes: int = 10
    learning_rate: float = 0.001
    batch_size: int = 2500
    epochs: int = 30
    seed: int = 0
    weight_clamp: float = 1.0
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_limit: int | None = None
    train_offset: int = 0
    test_limit: int | None = None
    test_offset: int = 0
    models: tuple = ("mesh", "ff")
    neurons: tuple = (100, 625)
    windows: tuple = (10, 25, 100)
    seeds: tuple = (0,)
    csv: str | None = None
    checkpoint: str | None = None
    out_dir: str = "frames"
    viz_mode: str = "sigmoid"
    scale: int = 1
    digits: int = 1


_FIELD_NAMES = {f.name for f in fields(ExperimentSpec)}


def apply_overrides(spec: ExperimentSpec, overrides: dict) -> ExperimentSpec:
    """Overlay non-None override values onto the spec."""
    for key in overrides:
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown experiment field {key!r}")
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple:
    return tuple(int(part.strip()) for part in text.split(","))


def _parse_model(text: str) -> str:
    if text not in ("mesh", "ff"):
        raise ValueError(f"model must be mesh or ff, got {text!r}")
    return text


def _parse_models(text: str) -> tuple:
    return tuple(_parse_model(part.strip()) for part in text.split(","))


def _parse_viz_mode(text: str) -> str:
    if text not in ("sigmoid", "clip", "both"):
        raise ValueError(f"viz_mode must be sigmoid, clip or both, got {text!r}")
    return text


_CONFIG_SCHEMA = {
    "model": _parse_model,
    "height": int,
    "width": int,
    "window_size": int,
    "opt_residual_input": _parse_bool,
    "opt_relu_state": _parse_bool,
    "opt_input_bias": _parse_bool,
    "opt_clip_state": _parse_bool,
    "input_dim": int,
    "num_classes": int,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "weight_clamp": float,
    "train_images": str,
    "train_labels": str,
    "test_images": str,
    "test_labels": str,
    "train_limit": int,
    "train_offset": int,
    "test_limit": int,
    "test_offset": int,
    "models": _parse_models,
    "neurons": _parse_int_list,
    "windows": _parse_int_list,
    "seeds": _parse_int_list,
    "csv": str,
    "checkpoint": str,
    "out_dir": str,
    "viz_mode": _parse_viz_mode,
    "scale": int,
    "digits": int,
}


def parse_config(path, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Read `key = value` lines into an ExperimentSpec over the defaults."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_SCHEMA[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return apply_overrides(base if base is not None else ExperimentSpec(), values)


def mesh_config(spec: ExperimentSpec) -> MeshConfig:
    if spec.window_size is None:
        raise ConfigError("window_size is required (no paper-wide default exists)")
    return MeshConfig(
        window_size=spec.window_size,
        height=spec.height,
        width=spec.width,
        opt_residual_input=spec.opt_residual_input,
        opt_relu_state=spec.opt_relu_state,
        opt_input_bias=spec.opt_input_bias,
        opt_clip_state=spec.opt_clip_state,
        input_dim=spec.input_dim,
        num_classes=spec.num_classes,
    )


def train_config(spec: ExperimentSpec) -> TrainConfig:
    return TrainConfig(
        learning_rate=spec.learning_rate,
        batch_size=spec.batch_size,
        epochs=spec.epochs,
        seed=spec.seed,
        weight_clamp=spec.weight_clamp,
    )


def load_split(spec: ExperimentSpec, split: str) -> Dataset | None:
    images = getattr(spec, f"{split}_images")
    labels = getattr(spec, f"{split}_labels")
    if images is None and labels is None:
        return None
    if images is None or labels is None:
        raise ConfigError(f"{split} split needs both image and label paths")
    return load_dataset(
        images,
        labels,
        limit=getattr(spec, f"{split}_limit"),
        offset=getattr(spec, f"{split}_offset"),
        name=split,
    )


def history_rows(model, height, width, window_size, seed, history) -> list[MetricsRow]:
    rows = []
    for m in history:
        acc = float("nan") if m.test_accuracy is None else m.test_accuracy
        rows.append(
            MetricsRow(
                model=model,
                height=height,
                width=width,
                neurons=height * width,
                window_size=window_size,
                seed=seed,
                epoch=m.epoch,
                train_loss=m.train_loss,
                test_accuracy=acc,
                wall_seconds=m.wall_seconds,
            )
        )
    return rows


def run_train(spec: ExperimentSpec):
    """Single training run; returns (trained params, MetricsRow list)."""
    train_ds = load_split(spec, "train")
    if train_ds is None:
        raise ConfigError("train split paths are required")
    test_ds = load_split(spec, "test")
    tc = train_config(spec)
    cfg = mesh_config(spec)
    if spec.model == "mesh":
        params, history = train(train_ds, cfg, tc, test_dataset=test_ds)
    else:
        params, history = ff_train(
            train_ds,
            tc,
            hidden=cfg.neurons,
            input_dim=cfg.input_dim,
            num_classes=cfg.num_classes,
            bias=cfg.opt_input_bias,
            test_dataset=test_ds,
        )
    rows = history_rows(spec.model, spec.height, spec.width, cfg.window_size, spec.seed, history)
    if spec.csv:
        write_metrics_csv(rows, spec.csv)
    if spec.checkpoint:
        if spec.model == "mesh":
            save_mesh_checkpoint(spec.checkpoint, params, cfg)
        else:
            save_ff_checkpoint(spec.checkpoint, params)
    return params, rows


def run_sweep(spec: ExperimentSpec) -> list[MetricsRow]:
    """Cartesian product of models x neurons x windows x seeds.

    Rows append to the CSV after every run so an interrupted sweep
    keeps its finished work.
    """
    if not (spec.models and spec.neurons and spec.windows and spec.seeds):
        raise ConfigError("sweep lists must be nonempty")
    train_ds = load_split(spec, "train")
    if train_ds is None:
        raise ConfigError("train split paths are required")
    test_ds = load_split(spec, "test")
    all_rows = []
    for model in spec.models:
        for n in spec.neurons:
            height, width = shape_for_neurons(n)
            for window in spec.windows:
                for seed in spec.seeds:
                    run = apply_overrides(
                        spec,
                        {
                            "model": model,
                            "height": height,
                            "width": width,
                            "window_size": window,
                            "seed": seed,
                        },
                    )
                    tc = train_config(run)
                    cfg = mesh_config(run)
                    if model == "mesh":
                        _, history = train(train_ds, cfg, tc, test_dataset=test_ds)
                    else:
                        _, history = ff_train(
                            train_ds,
                            tc,
                            hidden=cfg.neurons,
                            input_dim=cfg.input_dim,
                            num_classes=cfg.num_classes,
                            bias=cfg.opt_input_bias,
                            test_dataset=test_ds,
                        )
                    rows = history_rows(model, height, width, window, seed, history)
                    if spec.csv:
                        write_metrics_csv(rows, spec.csv)
                    all_rows.extend(rows)
    return all_rows


def equivalence_deviation(
    seed: int = 0,
    height: int = 4,
    width: int = 4,
    input_dim: int = 784,
    samples: int = 100,
    windows: tuple = (2, 3, 5),
) -> float:
    """Max |mesh - baseline| output gap under the emulation construction."""
    n = height * width
    p = ff_init(input_dim, n, 10, seed)
    X = make_rng(seed, EQUIV_INPUT_STREAM).uniform(0.0, 1.0, (samples, input_dim))
    ff_probs = ff_forward(X, p)
    worst = 0.0
    for window in windows:
        cfg = MeshConfig(window_size=window, height=height, width=width, opt_relu_state=True, input_dim=input_dim)
        mesh_params = mesh_from_ff(p, cfg)
        final, _ = run_window_arrays(X, mesh_params, cfg)
        gap = float(np.max(np.abs(readout(final, mesh_params) - ff_probs)))
        worst = max(worst, gap)
    return worst
