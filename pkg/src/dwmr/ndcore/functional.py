"""Layer and loss primitives with hand-written backward passes.

Images use NCHW layout throughout.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_op

BCE_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when a layer receives an input of incompatible shape."""


def _check(cond: bool, layer: str, expected, got) -> None:
    if not cond:
        raise ShapeError(f"{layer}: expected input shape {expected}, got {tuple(got)}")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape (out, in)."""
    _check(x.ndim == 2 and x.shape[1] == weight.shape[1], "linear",
           f"(N, {weight.shape[1]})", x.shape)
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data

    def bw(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, bw, "linear")


def _im2col(xd: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*kh*kw, Ho*Wo) patch matrix, one GEMM operand per image."""
    n, c = xd.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xd[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, out_shape, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add (N, C, kh, kw, Ho, Wo) patches into an (N, C, H, W) image."""
    img = np.zeros(out_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            img[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return img


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, ``weight`` of shape (out, in, kh, kw)."""
    cout, cin, kh, kw = weight.shape
    _check(x.ndim == 4 and x.shape[1] == cin, "conv2d", f"(N, {cin}, H, W)", x.shape)
    n, _, h, w = x.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    _check(hp >= kh and wp >= kw, "conv2d", f"spatial >= ({kh}, {kw})", x.shape)
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xd = x.data
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xd, kh, kw, stride, ho, wo)
    wmat = weight.data.reshape(cout, -1)
    out = np.matmul(wmat, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    def bw(g):
        g3 = g.reshape(n, cout, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = np.matmul(wmat.T, g3).reshape(n, cin, kh, kw, ho, wo)
            gx = _col2im(dcols, (n, cin, hp, wp), kh, kw, stride, ho, wo)
            if padding:
                gx = gx[:, :, padding:padding + h, padding:padding + w]
        if weight.requires_grad:
            gw = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, bw, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1) -> Tensor:
    """Transposed convolution (no padding), ``weight`` of shape (in, out, kh, kw)."""
    cin, cout, kh, kw = weight.shape
    _check(x.ndim == 4 and x.shape[1] == cin, "conv_transpose2d", f"(N, {cin}, H, W)", x.shape)
    n, _, h, w = x.shape
    ho, wo = (h - 1) * stride + kh, (w - 1) * stride + kw
    x3 = x.data.reshape(n, cin, h * w)
    wmat = weight.data.reshape(cin, -1)
    cols = np.matmul(wmat.T, x3).reshape(n, cout, kh, kw, h, w)
    out = _col2im(cols, (n, cout, ho, wo), kh, kw, stride, h, w)
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    def bw(g):
        gcols = _im2col(g, kh, kw, stride, h, w)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(wmat, gcols).reshape(n, cin, h, w)
        if weight.requires_grad:
            gw = np.matmul(x3, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, bw, "conv_transpose2d")


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    _check(x.ndim == 4 and x.shape[2] % size == 0 and x.shape[3] % size == 0,
           "avg_pool2d", f"(N, C, H, W) with H, W divisible by {size}", x.shape)
    n, c, h, w = x.shape
    scale = 1.0 / (size * size)
    # two strided passes are far cheaper than a 6-D reshape-mean
    rows = x.data.reshape(n, c, h // size, size, w)
    acc = rows[:, :, :, 0].copy()
    for i in range(1, size):
        acc += rows[:, :, :, i]
    cols = acc.reshape(n, c, h // size, w // size, size)
    out = cols[..., 0].copy()
    for j in range(1, size):
        out += cols[..., j]
    out *= scale

    def bw(g):
        up = np.empty(x.shape, dtype=g.dtype)
        gs = g * scale
        for i in range(size):
            for j in range(size):
                up[:, :, i::size, j::size] = gs
        return (up,)

    return make_op(out, (x,), bw, "avg_pool2d")


def standardize(x: Tensor, axes: tuple[int, ...], eps: float) -> Tensor:
    """(x - mean) / sqrt(var + eps) over ``axes`` (population variance)."""
    xd = x.data
    mu = xd.mean(axis=axes, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gm = g.mean(axis=axes, keepdims=True)
        gxm = (g * xhat).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return make_op(xhat, (x,), bw, "standardize")


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    _check(x.ndim == 4 and x.shape[1] % groups == 0 and x.shape[1] == gamma.shape[0],
           "group_norm", f"(N, C={gamma.shape[0]}, H, W) with C divisible by {groups}", x.shape)
    n, c, h, w = x.shape
    xhat = standardize(x.reshape(n, groups, -1), (2,), eps).reshape(n, c, h, w)
    return xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization; updates running stats in place when training."""
    c = gamma.shape[0]
    _check(x.ndim == 4 and x.shape[1] == c, "batch_norm2d", f"(N, {c}, H, W)", x.shape)
    if training:
        xd = x.data
        count = xd.size // c
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        xhat = standardize(x, (0, 2, 3), eps)
    else:
        scale = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        shift = (-running_mean * scale).astype(x.dtype)
        xhat = x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1)
    return xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)


# ------------------------------------------------------------------ losses
def _check_same(pred: Tensor, target, name: str) -> None:
    if pred.shape != np.shape(target):
        raise ShapeError(f"{name}: prediction shape {pred.shape} != target shape {np.shape(target)}")


def bce(pred: Tensor, target, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy on probabilities, clamped to [eps, 1 - eps]."""
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    _check_same(pred, target, "bce")
    pd = pred.data
    pc = np.clip(pd, eps, 1.0 - eps)
    val = -np.mean(target * np.log(pc) + (1.0 - target) * np.log1p(-pc))
    inside = (pd >= eps) & (pd <= 1.0 - eps)
    scale = 1.0 / pd.size

    def bw(g):
        return (g * scale * inside * ((pc - target) / (pc * (1.0 - pc))),)

    return make_op(np.asarray(val, dtype=pd.dtype), (pred,), bw, "bce")


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error; gradients flow into both operands when they track them."""
    target = as_tensor(target, dtype=pred.dtype)
    _check_same(pred, target.data, "mse")
    diff = pred.data - target.data
    scale = 2.0 / diff.size

    def bw(g):
        gp = g * scale * diff
        return (gp if pred.requires_grad else None, -gp if target.requires_grad else None)

    return make_op(np.asarray(np.mean(diff * diff), dtype=pred.dtype), (pred, target), bw, "mse")


def softmax_ce(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over rows of ``logits`` (R, C) against integer ``labels`` (R,)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_ce: logits {logits.shape} vs labels {labels.shape}")
    r, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"softmax_ce: class index out of range [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logz
    rows = np.arange(r)
    val = -logp[rows, labels].mean()

    def bw(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (g / r),)

    return make_op(np.asarray(val, dtype=logits.dtype), (logits,), bw, "softmax_ce")


def reduction_loss(pred: Tensor, target, kind: str) -> Tensor:
    if kind == "bce":
        return bce(pred, target)
    if kind == "mse":
        return mse(pred, target)
    if kind == "softmax_ce":
        return softmax_ce(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")


__all__ = [
    "ShapeError", "linear", "conv2d", "conv_transpose2d", "avg_pool2d", "standardize",
    "group_norm", "batch_norm2d", "bce", "mse", "softmax_ce", "reduction_loss",
]
