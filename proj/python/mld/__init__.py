"""Multi-level decision structures: per-neuron decision trees distilled from an MLP."""

from ._mld import (
    MLD,
    Dataset,
    MldError,
    Model,
    build_mld,
    evaluate,
    frequency_importance,
    load_csv,
    load_idx,
    oob_importance,
    split_dataset,
    train_mlp,
)

__all__ = [
    "MLD",
    "Dataset",
    "MldError",
    "Model",
    "build_mld",
    "evaluate",
    "frequency_importance",
    "load_csv",
    "load_idx",
    "oob_importance",
    "split_dataset",
    "train_mlp",
]
