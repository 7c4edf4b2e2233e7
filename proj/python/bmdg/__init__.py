"""Bidirectional multi-step domain generalization for visible/infrared person re-identification."""

import torch  # noqa: F401  (registers the tensor types the extension converts to)

from ._core import (
    DEFAULT_CONFIG,
    embed,
    evaluate,
    generate_dataset,
    loss_cc,
    loss_compact,
    loss_diverse,
    loss_equivariance,
    loss_hc,
    loss_lc,
    mix_prototypes,
    mmd_gap,
    project_2d,
    train,
    verify_mi,
)

__all__ = [
    "DEFAULT_CONFIG",
    "embed",
    "evaluate",
    "generate_dataset",
    "loss_cc",
    "loss_compact",
    "loss_diverse",
    "loss_equivariance",
    "loss_hc",
    "loss_lc",
    "mix_prototypes",
    "mmd_gap",
    "project_2d",
    "train",
    "verify_mi",
]
