"""A recurrent grid of energy-conserving neurons on a torus.

Neurons hold real-valued energy on an H x W grid whose edges wrap.
Each timestep every positive neuron fires, sending at most a quarter of
its energy to each of its four neighbors through signed, clamped
weights; a softmax readout of the final state classifies the input.
Training is exact backpropagation through the unrolled window, and a
one-layer feed-forward baseline trained by the same loop provides the
benchmark comparison.
"""

from .checkpoint import (
    KIND_FF,
    KIND_MESH,
    MAGIC,
    CheckpointError,
    LoadedCheckpoint,
    load_checkpoint,
    save_ff_checkpoint,
    save_mesh_checkpoint,
)
from .experiment import (
    CSV_HEADER,
    ConfigError,
    ExperimentSpec,
    MetricsRow,
    apply_overrides,
    equivalence_deviation,
    format_real,
    parse_config,
    read_metrics_csv,
    run_sweep,
    run_train,
    shape_for_neurons,
    write_metrics_csv,
)
from .feedforward import (
    FFGradients,
    FFParams,
    ff_batch_backward,
    ff_evaluate_accuracy,
    ff_forward,
    ff_grad_check,
    ff_init,
    ff_sgd_step,
    ff_train,
    mesh_from_ff,
)
from .grids import DIRECTIONS, DOWN, LEFT, OPPOSITE, RIGHT, UP, clip, relu, shift, total_energy
from .mesh import (
    MeshConfig,
    MeshParams,
    MeshState,
    StepRecord,
    StepTrace,
    decrement,
    increment,
    inject_input,
    injection_field,
    mesh_step,
    readout,
    run_window,
    run_window_arrays,
    softmax,
    zero_state,
)
from .mnist import (
    Dataset,
    IdxCorruptedError,
    IdxFormatError,
    batches,
    load_dataset,
    parse_idx,
)
from .rng import EQUIV_INPUT_STREAM, VIZ_INPUT_STREAM, make_rng
from .training import (
    EpochMetrics,
    GradCheckResult,
    Gradients,
    TrainConfig,
    backward_window,
    batch_backward,
    cross_entropy,
    evaluate_accuracy,
    grad_check,
    init_params,
    project_weights,
    sgd_step,
    train,
    window_loss,
)
from .viz import Frame, apply_colormap, normalize, ppm_bytes, render_frame, write_frames, write_ppm

__all__ = [
    "CSV_HEADER",
    "CheckpointError",
    "ConfigError",
    "DIRECTIONS",
    "DOWN",
    "Dataset",
    "EQUIV_INPUT_STREAM",
    "EpochMetrics",
    "ExperimentSpec",
    "FFGradients",
    "FFParams",
    "Frame",
    "GradCheckResult",
    "Gradients",
    "IdxCorruptedError",
    "IdxFormatError",
    "KIND_FF",
    "KIND_MESH",
    "LEFT",
    "LoadedCheckpoint",
    "MAGIC",
    "MeshConfig",
    "MeshParams",
    "MeshState",
    "MetricsRow",
    "OPPOSITE",
    "RIGHT",
    "StepRecord",
    "StepTrace",
    "TrainConfig",
    "UP",
    "VIZ_INPUT_STREAM",
    "apply_colormap",
    "apply_overrides",
    "backward_window",
    "batch_backward",
    "batches",
    "clip",
    "cross_entropy",
    "decrement",
    "equivalence_deviation",
    "evaluate_accuracy",
    "ff_batch_backward",
    "ff_evaluate_accuracy",
    "ff_forward",
    "ff_grad_check",
    "ff_init",
    "ff_sgd_step",
    "ff_train",
    "format_real",
    "grad_check",
    "increment",
    "init_params",
    "inject_input",
    "injection_field",
    "load_checkpoint",
    "load_dataset",
    "make_rng",
    "mesh_from_ff",
    "mesh_step",
    "normalize",
    "parse_config",
    "parse_idx",
    "ppm_bytes",
    "project_weights",
    "read_metrics_csv",
    "readout",
    "relu",
    "render_frame",
    "run_sweep",
    "run_train",
    "run_window",
    "run_window_arrays",
    "save_ff_checkpoint",
    "save_mesh_checkpoint",
    "sgd_step",
    "shape_for_neurons",
    "shift",
    "softmax",
    "total_energy",
    "train",
    "window_loss",
    "write_frames",
    "write_metrics_csv",
    "write_ppm",
    "zero_state",
]
