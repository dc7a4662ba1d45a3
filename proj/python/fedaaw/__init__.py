"""Federated segmentation with adaptive aggregation weights."""

from ._core import (
    EmptyMaskError,
    InvalidInput,
    NonFiniteError,
    aggregate,
    assd,
    bce_loss,
    compute_loss_gaps,
    confusion_counts,
    default_experiment_config,
    dice_bce_grad,
    dice_bce_loss,
    dice_loss,
    generate_center,
    hd95,
    init_weights,
    overlap_metrics,
    run_experiment,
    split_indices,
    step_size,
    surface_distances,
    update_weights,
)

__all__ = [
    "EmptyMaskError",
    "InvalidInput",
    "NonFiniteError",
    "aggregate",
    "assd",
    "bce_loss",
    "compute_loss_gaps",
    "confusion_counts",
    "default_experiment_config",
    "dice_bce_grad",
    "dice_bce_loss",
    "dice_loss",
    "generate_center",
    "hd95",
    "init_weights",
    "overlap_metrics",
    "run_experiment",
    "split_indices",
    "step_size",
    "surface_distances",
    "update_weights",
]
