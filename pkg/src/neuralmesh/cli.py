"""Command-line harness.

Subcommands:

    train       single training run, per-epoch metrics, optional CSV
                append and checkpoint save
    eval        load a checkpoint and report test accuracy
    sweep       models x neurons x windows x seeds benchmark grid
    visualize   render per-timestep activation frames as PPM files
    ff-equiv    verify the feed-forward emulation and print the gap
    grad-check  finite-difference audit of the backward pass

Flags override config-file values, which override defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .checkpoint import load_checkpoint
from .experiment import (
    ConfigError,
    ExperimentSpec,
    apply_overrides,
    equivalence_deviation,
    format_real,
    mesh_config,
    parse_config,
    run_sweep,
    run_train,
)
from .feedforward import ff_evaluate_accuracy
from .mesh import MeshConfig, run_window
from .mnist import load_dataset
from .rng import VIZ_INPUT_STREAM, make_rng
from .training import evaluate_accuracy, grad_check, init_params
from .viz import write_frames

EQUIV_TOLERANCE = 1e-12
GRAD_TOLERANCE = 1e-5


def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--window", dest="window_size", type=int, default=None)
    p.add_argument("--input-dim", dest="input_dim", type=int, default=None)
    p.add_argument("--num-classes", dest="num_classes", type=int, default=None)
    for flag, dest in (
        ("--residual-input", "opt_residual_input"),
        ("--relu-state", "opt_relu_state"),
        ("--input-bias", "opt_input_bias"),
        ("--clip-state", "opt_clip_state"),
    ):
        p.add_argument(flag, dest=dest, action="store_const", const=True, default=None)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", dest="learning_rate", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--weight-clamp", dest="weight_clamp", type=float, default=None)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-images", dest="train_images", default=None)
    p.add_argument("--train-labels", dest="train_labels", default=None)
    p.add_argument("--test-images", dest="test_images", default=None)
    p.add_argument("--test-labels", dest="test_labels", default=None)
    p.add_argument("--train-limit", dest="train_limit", type=int, default=None)
    p.add_argument("--train-offset", dest="train_offset", type=int, default=None)
    p.add_argument("--test-limit", dest="test_limit", type=int, default=None)
    p.add_argument("--test-offset", dest="test_offset", type=int, default=None)


def _parse_list(text: str):
    return tuple(int(part.strip()) for part in text.split(","))


def _parse_models_list(text: str):
    models = tuple(part.strip() for part in text.split(","))
    for m in models:
        if m not in ("mesh", "ff"):
            raise argparse.ArgumentTypeError(f"model must be mesh or ff, got {m!r}")
    return models


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="neuralmesh")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and report per-epoch metrics")
    p.add_argument("--config", default=None)
    p.add_argument("--model", choices=("mesh", "ff"), default=None)
    _add_geometry_flags(p)
    _add_train_flags(p)
    _add_data_flags(p)
    p.add_argument("--csv", default=None)
    p.add_argument("--checkpoint", default=None)

    p = sub.add_parser("eval", help="report test accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--offset", type=int, default=0)

    p = sub.add_parser("sweep", help="benchmark grid over models/neurons/windows/seeds")
    p.add_argument("--config", default=None)
    p.add_argument("--models", type=_parse_models_list, default=None)
    p.add_argument("--neurons", type=_parse_list, default=None)
    p.add_argument("--windows", type=_parse_list, default=None)
    p.add_argument("--seeds", type=_parse_list, default=None)
    _add_train_flags(p)
    _add_data_flags(p)
    p.add_argument("--csv", required=False, default=None)

    p = sub.add_parser("visualize", help="write activation-energy PPM frames")
    p.add_argument("--config", default=None)
    _add_geometry_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--digits", type=int, default=None, help="number of inputs to render")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--images", default=None, help="IDX images to draw inputs from")
    p.add_argument("--labels", default=None)
    p.add_argument("--mode", dest="viz_mode", choices=("sigmoid", "clip", "both"), default=None)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)

    p = sub.add_parser("ff-equiv", help="check the feed-forward emulation gap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--input-dim", dest="input_dim", type=int, default=784)
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("grad-check", help="finite-difference audit on a small instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--window", dest="window_size", type=int, default=2)
    p.add_argument("--input-dim", dest="input_dim", type=int, default=16)
    p.add_argument("--fd-step", dest="fd_step", type=float, default=1e-5)
    for flag, dest in (
        ("--residual-input", "opt_residual_input"),
        ("--relu-state", "opt_relu_state"),
        ("--input-bias", "opt_input_bias"),
        ("--clip-state", "opt_clip_state"),
    ):
        p.add_argument(flag, dest=dest, action="store_true")
    return root


def _spec_from_args(args, keys) -> ExperimentSpec:
    spec = ExperimentSpec()
    if getattr(args, "config", None):
        spec = parse_config(args.config, base=spec)
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return apply_overrides(spec, overrides)


_TRAIN_KEYS = (
    "model",
    "height",
    "width",
    "window_size",
    "input_dim",
    "num_classes",
    "opt_residual_input",
    "opt_relu_state",
    "opt_input_bias",
    "opt_clip_state",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "weight_clamp",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "train_limit",
    "train_offset",
    "test_limit",
    "test_offset",
    "csv",
    "checkpoint",
)

_SWEEP_KEYS = tuple(k for k in _TRAIN_KEYS if k not in ("model", "height", "width", "window_size", "checkpoint")) + (
    "models",
    "neurons",
    "windows",
    "seeds",
)

_VIZ_KEYS = (
    "height",
    "width",
    "window_size",
    "input_dim",
    "num_classes",
    "opt_residual_input",
    "opt_relu_state",
    "opt_input_bias",
    "opt_clip_state",
    "seed",
    "digits",
    "checkpoint",
    "viz_mode",
    "scale",
    "out_dir",
)


def _print_rows(rows) -> None:
    for r in rows:
        print(
            f"{r.model} {r.height}x{r.width} T={r.window_size} seed={r.seed} "
            f"epoch={r.epoch} train_loss={format_real(r.train_loss)} "
            f"test_accuracy={format_real(r.test_accuracy)} "
            f"wall_seconds={format_real(r.wall_seconds)}"
        )


def _cmd_train(args) -> int:
    spec = _spec_from_args(args, _TRAIN_KEYS)
    _, rows = run_train(spec)
    _print_rows(rows)
    return 0


def _cmd_eval(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.images, args.labels, limit=args.limit, offset=args.offset, name="eval")
    if loaded.kind == "mesh":
        acc = evaluate_accuracy(loaded.params, loaded.cfg, ds)
    else:
        acc = ff_evaluate_accuracy(loaded.params, ds)
    print(f"test_accuracy {format_real(acc)}")
    return 0


def _cmd_sweep(args) -> int:
    spec = _spec_from_args(args, _SWEEP_KEYS)
    rows = run_sweep(spec)
    _print_rows(rows)
    return 0


def _cmd_visualize(args) -> int:
    spec = _spec_from_args(args, _VIZ_KEYS)
    if spec.checkpoint:
        loaded = load_checkpoint(spec.checkpoint)
        if loaded.kind != "mesh":
            raise ConfigError("visualize needs a mesh checkpoint")
        params = loaded.params
        cfg = loaded.cfg
        if args.window_size is not None:
            cfg = dataclasses.replace(cfg, window_size=args.window_size)
    else:
        cfg = mesh_config(spec)
        params = init_params(cfg, spec.seed)
    if args.images is not None:
        if args.labels is None:
            raise ConfigError("--images needs --labels")
        ds = load_dataset(args.images, args.labels, name="viz")
        if spec.digits > len(ds):
            raise ConfigError(f"asked for {spec.digits} digits, dataset has {len(ds)}")
        inputs = ds.images[: spec.digits]
    else:
        rng = make_rng(spec.seed, VIZ_INPUT_STREAM)
        inputs = rng.uniform(0.0, 1.0, (spec.digits, cfg.input_dim))
    modes = ("sigmoid", "clip") if spec.viz_mode == "both" else (spec.viz_mode,)
    count = 0
    for mode in modes:
        for i in range(spec.digits):
            _, trace = run_window(inputs[i], params, cfg)
            out = os.path.join(spec.out_dir, mode, f"digit_{i:03d}")
            count += len(write_frames(trace, mode, spec.scale, out))
    print(f"wrote {count} frames under {spec.out_dir}")
    return 0


def _cmd_ff_equiv(args) -> int:
    gap = equivalence_deviation(
        seed=args.seed,
        height=args.height,
        width=args.width,
        input_dim=args.input_dim,
        samples=args.samples,
    )
    print(f"max deviation {gap:.3e} over {args.samples} inputs, T in (2, 3, 5)")
    return 0 if gap < EQUIV_TOLERANCE else 1


def _cmd_grad_check(args) -> int:
    cfg = MeshConfig(
        window_size=args.window_size,
        height=args.height,
        width=args.width,
        opt_residual_input=args.opt_residual_input,
        opt_relu_state=args.opt_relu_state,
        opt_input_bias=args.opt_input_bias,
        opt_clip_state=args.opt_clip_state,
        input_dim=args.input_dim,
    )
    params = init_params(cfg, args.seed)
    rng = make_rng(args.seed, 1)
    x = rng.uniform(0.0, 1.0, cfg.input_dim)
    label = int(rng.integers(0, cfg.num_classes))
    result = grad_check(params, cfg, x, label, fd_step=args.fd_step)
    print(
        f"max relative error {result.max_rel_error:.3e} "
        f"({result.checked} checked, {result.skipped} kink-skipped)"
    )
    return 0 if result.max_rel_error < GRAD_TOLERANCE else 1


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "visualize": _cmd_visualize,
    "ff-equiv": _cmd_ff_equiv,
    "grad-check": _cmd_grad_check,
}


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
