from dtkd.nn.checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint
from dtkd.nn.layers import (
    Layer,
    conv2d_forward,
    dropout,
    layer_forward,
    linear_forward,
    residual_block_forward,
)
from dtkd.nn.models import (
    Model,
    build_model,
    build_student,
    build_teacher,
    freeze_backbone,
    parameter_summary,
    replace_head,
    unfreeze,
)

__all__ = [
    "Checkpoint",
    "Layer",
    "Model",
    "build_model",
    "build_student",
    "build_teacher",
    "conv2d_forward",
    "decode_checkpoint",
    "dropout",
    "encode_checkpoint",
    "freeze_backbone",
    "layer_forward",
    "linear_forward",
    "parameter_summary",
    "replace_head",
    "residual_block_forward",
    "unfreeze",
]
