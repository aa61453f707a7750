"""Quaternion neural networks with GHR-calculus backpropagation, a matching
component-level gradient engine, and quaternionic time-series compression."""

from .quaternion import (
    QTensor,
    Quaternion,
    conj_involution,
    conjugate,
    hadamard,
    hamilton,
    involution,
    norm,
    qadd,
    reconstruct,
)
from .compression import (
    CompressedSeries,
    RealSeries,
    compress,
    mean_downsample,
    real_expand,
    sliding_window,
)
from .config import ModelConfig, RunConfig, TrainSpec, parse_run_config
from .layers import Model
from .training import (
    Dataset,
    build_model,
    count_parameters,
    evaluate,
    synth_dataset,
    train,
)

__all__ = [
    "CompressedSeries",
    "Dataset",
    "Model",
    "ModelConfig",
    "QTensor",
    "Quaternion",
    "RealSeries",
    "RunConfig",
    "TrainSpec",
    "build_model",
    "compress",
    "conj_involution",
    "conjugate",
    "count_parameters",
    "evaluate",
    "hadamard",
    "hamilton",
    "involution",
    "mean_downsample",
    "norm",
    "parse_run_config",
    "qadd",
    "real_expand",
    "reconstruct",
    "sliding_window",
    "synth_dataset",
    "train",
]

__version__ = "0.1.0"
