"""Multimodal sentiment regression with dynamic attention fusion."""

from ._daf import (
    ConfigError,
    DafError,
    DataError,
    DimensionError,
    NumericError,
    acc7,
    ablate,
    evaluate,
    gen_synth,
    gradcheck,
    mae,
    metrics_report,
    pearson_cc,
    roc,
    roc_auc,
    train,
)

__all__ = [
    "ConfigError",
    "DafError",
    "DataError",
    "DimensionError",
    "NumericError",
    "acc7",
    "ablate",
    "evaluate",
    "gen_synth",
    "gradcheck",
    "mae",
    "metrics_report",
    "pearson_cc",
    "roc",
    "roc_auc",
    "train",
]
