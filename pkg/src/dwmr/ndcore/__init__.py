"""Small numpy tensor library with reverse-mode autodiff, layers and Adam."""

from . import checkpoint, functional
from .functional import (
    ShapeError,
    avg_pool2d,
    batch_norm2d,
    bce,
    conv2d,
    conv_transpose2d,
    group_norm,
    linear,
    mse,
    reduction_loss,
    softmax_ce,
)
from .gradcheck import finite_diff_gradient, relative_error
from .layers import (
    AvgPool2d,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Flatten,
    GroupNorm,
    Linear,
    Module,
    Parameter,
    ReLU,
    ResidualBlock,
    Sequential,
    Sigmoid,
    Unflatten,
)
from .optim import Adam
from .runtime import tune_allocator
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    astype,
    backward,
    broadcast_to,
    clip,
    concat,
    exp,
    gate,
    is_grad_enabled,
    log,
    make_op,
    matmul,
    mean,
    power,
    reshape,
    transpose,
    tsum,
    no_grad,
    relu,
    sigmoid,
    sqrt,
    st_round,
    stop_gradient,
    tabs,
)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


__all__ = [name for name in dir() if not name.startswith("_")]
