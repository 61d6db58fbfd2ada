"""Attribute-region GZSL training with unseen-aware distillation and attribute-pool regularization."""

from ._aarr import (
    ContractError,
    Dataset,
    DimensionError,
    FormatError,
    NumericError,
    attention,
    default_config,
    default_spec,
    evaluate,
    fit,
    generate,
    gradcheck,
    harmonic_mean,
    metrics_from_predictions,
    read_dataset,
    read_tensor,
    write_dataset,
    write_tensor,
)

__all__ = [
    "ContractError",
    "Dataset",
    "DimensionError",
    "FormatError",
    "NumericError",
    "attention",
    "default_config",
    "default_spec",
    "evaluate",
    "fit",
    "generate",
    "gradcheck",
    "harmonic_mean",
    "metrics_from_predictions",
    "read_dataset",
    "read_tensor",
    "write_dataset",
    "write_tensor",
]
