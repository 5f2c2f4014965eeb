"""Minimal float64 reverse-mode autodiff with just the ops the two branches use."""

from auto4d.nn.tensor import Tensor, concat, stack_scalars
from auto4d.nn.functional import (
    conv2d,
    conv1d,
    conv_transpose1d,
    avg_pool2d,
    bilinear_query,
    smooth_l1,
)
from auto4d.nn.modules import MLP, UNet1d, Conv2dLayer
from auto4d.nn.optim import Adam
from auto4d.nn.params import ParamSet
from auto4d.nn.iou import iou_loss

__all__ = [
    "Tensor",
    "concat",
    "stack_scalars",
    "conv2d",
    "conv1d",
    "conv_transpose1d",
    "avg_pool2d",
    "bilinear_query",
    "smooth_l1",
    "MLP",
    "UNet1d",
    "Conv2dLayer",
    "Adam",
    "ParamSet",
    "iou_loss",
]
