"""Contrastive self-supervised training core."""

from .augment import AugmentationSpec, augment_pair, resize_bilinear, to_float_image
from .checkpoint import load_checkpoint, save_checkpoint
from .loss import nt_xent
from .nn import (
    EncoderState,
    ProjectionHead,
    backward,
    encoder_forward,
    forward,
    init_model,
    resolve_freeze_spec,
    with_freeze,
)
from .optim import OptimizerState, cosine_lr
from .train import (
    GradCheckReport,
    TrainConfig,
    TrainResult,
    backward_step,
    gradient_check,
    load_image_dir,
    manifest_patches,
    train_stage1,
    train_stage2,
)

__all__ = [
    "AugmentationSpec",
    "EncoderState",
    "GradCheckReport",
    "OptimizerState",
    "ProjectionHead",
    "TrainConfig",
    "TrainResult",
    "augment_pair",
    "backward",
    "backward_step",
    "cosine_lr",
    "encoder_forward",
    "forward",
    "gradient_check",
    "init_model",
    "load_checkpoint",
    "load_image_dir",
    "manifest_patches",
    "nt_xent",
    "resize_bilinear",
    "resolve_freeze_spec",
    "save_checkpoint",
    "to_float_image",
    "train_stage1",
    "train_stage2",
    "with_freeze",
]
