"""Differentiable-computation core: tensors, tape, ops, RMSprop, checkpoints."""

from .checkpoint import CheckpointFormatError, load_params, save_params
from .params import ParameterSet, rmsprop_step, uniform_fan_in
from .tensor import (
    DEFAULT_DTYPE,
    EmptyInputError,
    MhaParams,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    embedding,
    expand_leading,
    feature_max_pool,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    mul,
    multi_head_attention,
    neg,
    normalized,
    recording,
    relu,
    repeat_rows,
    reshape,
    scale,
    sigmoid,
    slice_last,
    slice_rows,
    softmax,
    sub,
    swapaxes,
    take_last,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "CheckpointFormatError", "load_params", "save_params",
    "ParameterSet", "rmsprop_step", "uniform_fan_in",
    "DEFAULT_DTYPE", "EmptyInputError", "MhaParams", "ShapeError", "Tape", "Tensor",
    "active_tape", "add", "as_tensor", "backward", "concat", "embedding",
    "expand_leading", "feature_max_pool", "layer_norm", "linear", "log_softmax",
    "matmul", "mul", "multi_head_attention", "neg", "normalized", "recording",
    "relu", "repeat_rows", "reshape", "scale", "sigmoid", "slice_last",
    "slice_rows", "softmax", "sub", "swapaxes", "take_last", "tanh", "tmean",
    "tsum",
]
