"""Differentiable operations over 4-D tensors.

Every op validates its contract, computes the forward result in numpy, and,
when a graph is recording, appends a closure that maps the output adjoint to
input adjoints. Broadcasting is deliberately restricted to the spatial-mask
(N-or-1, 1, H, W), channel-gate (N-or-1, C, 1, 1) and full-scalar (1,1,1,1)
patterns; anything else is rejected so the contracts stay checkable.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from . import _convnp
from .convspec import ConvSpec
from .core import Parameter, Tensor, active_graph

__all__ = [
    "add", "sub", "mul", "relu", "sigmoid", "powf", "affine", "pointwise",
    "channel_pool", "global_avg_pool", "channel_mean", "reduce_sum", "reduce_mean",
    "concat_channels", "slice_channels", "channel_split",
    "to_tokens", "from_tokens", "transpose_hw", "bmm", "softmax_w",
    "conv2d", "conv2d_transpose", "batchnorm", "embed_dilated", "round_half_up",
]


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


def _coerce(x) -> Tensor:
    if isinstance(x, Parameter):
        g = active_graph()
        if g is not None:
            g.watch(x)
        return x.value
    if isinstance(x, Tensor):
        return x
    raise ShapeError(f"expected Tensor or Parameter, got {type(x).__name__}")


def _emit(name: str, inputs: tuple[Tensor, ...], out_arr: np.ndarray, fn) -> Tensor:
    out = Tensor._wrap(out_arr)
    g = active_graph()
    if g is not None:
        g._append(name, inputs, out, fn)
    return out


def _same_dtype(op: str, *tensors: Tensor) -> None:
    dt = tensors[0].np_dtype
    for t in tensors[1:]:
        if t.np_dtype != dt:
            raise ShapeError(f"{op}: mixed dtypes {tensors[0].dtype} and {t.dtype}")


def _broadcasts_over(small: tuple[int, ...], big: tuple[int, ...]) -> bool:
    if small == big:
        return True
    if small == (1, 1, 1, 1):
        return True
    n_ok = small[0] in (1, big[0])
    if n_ok and small[1] == 1 and small[2:] == big[2:]:
        return True  # spatial mask
    if n_ok and small[1] == big[1] and small[2:] == (1, 1):
        return True  # channel gate
    return False


def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    _same_dtype(op, a, b)
    if not (_broadcasts_over(b.shape, a.shape) or _broadcasts_over(a.shape, b.shape)):
        raise ShapeError(
            f"{op}: shape {b.shape} is not broadcast-compatible with {a.shape} "
            "(allowed: equal shapes, spatial mask (N|1,1,H,W), channel gate (N|1,C,1,1), scalar)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i in range(4) if shape[i] == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


# ---------------------------------------------------------------------------
# element-wise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("add", a, b)

    def fn(g, sa=a.shape, sb=b.shape):
        return _reduce_to(g, sa), _reduce_to(g, sb)

    return _emit("add", (a, b), a.data + b.data, fn)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("sub", a, b)

    def fn(g, sa=a.shape, sb=b.shape):
        return _reduce_to(g, sa), -_reduce_to(g, sb)

    return _emit("sub", (a, b), a.data - b.data, fn)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("mul", a, b)

    def fn(g, ad=a.data, bd=b.data, sa=a.shape, sb=b.shape):
        return _reduce_to(g * bd, sa), _reduce_to(g * ad, sb)

    return _emit("mul", (a, b), a.data * b.data, fn)


def relu(x) -> Tensor:
    x = _coerce(x)

    def fn(g, xd=x.data):
        return ((xd > 0) * g,)

    return _emit("relu", (x,), np.maximum(x.data, 0), fn)


def sigmoid(x) -> Tensor:
    x = _coerce(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)
    # saturation would round to exactly 0/1; keep the open-interval contract
    tiny = np.finfo(xd.dtype).tiny
    np.clip(out, tiny, 1.0 - np.finfo(xd.dtype).eps / 2, out=out)

    def fn(g, s=out):
        return (g * s * (1.0 - s),)

    return _emit("sigmoid", (x,), out, fn)


def powf(x, p: float) -> Tensor:
    """Element-wise x**p; requires strictly positive input for non-integer p."""
    x = _coerce(x)
    if not float(p).is_integer() and (x.data <= 0).any():
        raise ShapeError("powf: fractional exponent requires strictly positive input")
    out = x.data ** p

    def fn(g, xd=x.data, pp=p):
        return (g * pp * xd ** (pp - 1.0),)

    return _emit("powf", (x,), out, fn)


def affine(x, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift with float constants; preserves the input dtype."""
    x = _coerce(x)
    scale, shift = float(scale), float(shift)
    if not (math.isfinite(scale) and math.isfinite(shift)):
        raise ShapeError("affine: scale/shift must be finite")

    def fn(g, s=scale):
        return (g * s,)

    return _emit("affine", (x,), x.data * scale + shift, fn)


def pointwise(a, b=None, kind: str = "add") -> Tensor:
    """Dispatching wrapper: kind in {add, mul, relu, sigmoid}."""
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    if b is not None:
        raise ShapeError(f"pointwise kind {kind!r} is unary but a second operand was given")
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ConfigError(f"unknown pointwise kind {kind!r}")


# ---------------------------------------------------------------------------
# reductions and pooling
# ---------------------------------------------------------------------------

def channel_pool(x, mode: str) -> Tensor:
    """Reduce over channels to (N, 1, H, W); mode in {avg, max}."""
    x = _coerce(x)
    n, c, h, w = x.shape
    if c < 1:
        raise ShapeError("channel_pool: need at least one channel")
    if mode == "avg":
        out = x.data.mean(axis=1, keepdims=True)

        def fn(g, cc=c, shape=x.shape):
            return (np.broadcast_to(g / cc, shape).copy(),)

        return _emit("channel_pool_avg", (x,), out, fn)
    if mode == "max":
        idx = x.data.argmax(axis=1, keepdims=True)
        out = np.take_along_axis(x.data, idx, axis=1)

        def fn(g, ix=idx, shape=x.shape):
            gx = np.zeros(shape, dtype=g.dtype)
            np.put_along_axis(gx, ix, g, axis=1)
            return (gx,)

        return _emit("channel_pool_max", (x,), out, fn)
    raise ConfigError(f"unknown channel_pool mode {mode!r}")


def global_avg_pool(x) -> Tensor:
    """Spatial mean per channel -> (N, C, 1, 1)."""
    x = _coerce(x)
    n, c, h, w = x.shape
    if h * w < 1:
        raise ShapeError("global_avg_pool: empty spatial extent")
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def fn(g, hw=h * w, shape=x.shape):
        return (np.broadcast_to(g / hw, shape).copy(),)

    return _emit("global_avg_pool", (x,), out, fn)


def channel_mean(x) -> Tensor:
    """Mean over batch and space per channel -> (1, C, 1, 1)."""
    x = _coerce(x)
    n, c, h, w = x.shape
    cnt = n * h * w
    out = x.data.mean(axis=(0, 2, 3), keepdims=True)

    def fn(g, k=cnt, shape=x.shape):
        return (np.broadcast_to(g / k, shape).copy(),)

    return _emit("channel_mean", (x,), out, fn)


def reduce_sum(x) -> Tensor:
    x = _coerce(x)
    out = np.asarray(x.data.sum(), dtype=x.np_dtype).reshape(1, 1, 1, 1)

    def fn(g, shape=x.shape):
        return (np.full(shape, g.reshape(()), dtype=g.dtype),)

    return _emit("reduce_sum", (x,), out, fn)


def reduce_mean(x) -> Tensor:
    x = _coerce(x)
    out = np.asarray(x.data.mean(), dtype=x.np_dtype).reshape(1, 1, 1, 1)

    def fn(g, shape=x.shape, k=x.size):
        return (np.full(shape, g.reshape(()) / k, dtype=g.dtype),)

    return _emit("reduce_mean", (x,), out, fn)


# ---------------------------------------------------------------------------
# channel layout
# ---------------------------------------------------------------------------

def concat_channels(parts) -> Tensor:
    parts = tuple(_coerce(p) for p in parts)
    if not parts:
        raise ShapeError("concat_channels: empty input list")
    _same_dtype("concat_channels", *parts)
    n, _, h, w = parts[0].shape
    for p in parts:
        if (p.shape[0], p.shape[2], p.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: incompatible shape {p.shape} vs {(n, '*', h, w)}")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def fn(g, offs=offsets):
        return tuple(g[:, offs[i]:offs[i + 1]] for i in range(len(offs) - 1))

    return _emit("concat_channels", parts, np.concatenate([p.data for p in parts], axis=1), fn)


def slice_channels(x, start: int, stop: int) -> Tensor:
    x = _coerce(x)
    c = x.shape[1]
    if not (0 <= start < stop <= c):
        raise ShapeError(f"slice_channels: range [{start}, {stop}) invalid for {c} channels")

    def fn(g, shape=x.shape, lo=start, hi=stop):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, lo:hi] = g
        return (gx,)

    return _emit("slice_channels", (x,), x.data[:, start:stop], fn)


def channel_split(x, alpha: float) -> tuple[Tensor, Tensor]:
    """Split channels into [0, round_half_up(alpha*C)) and the remainder."""
    x = _coerce(x)
    c = x.shape[1]
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"channel_split: alpha must be in (0,1), got {alpha}")
    k = round_half_up(alpha * c)
    if not 1 <= k <= c - 1:
        raise ShapeError(f"channel_split: alpha={alpha} on {c} channels leaves an empty side (k={k})")
    return slice_channels(x, 0, k), slice_channels(x, k, c)


# ---------------------------------------------------------------------------
# token layout and attention primitives
# ---------------------------------------------------------------------------

def to_tokens(x) -> Tensor:
    """(N, C, H, W) -> (N, 1, H*W, C) token matrix (row-major spatial order)."""
    x = _coerce(x)
    n, c, h, w = x.shape
    out = np.transpose(x.data, (0, 2, 3, 1)).reshape(n, 1, h * w, c)

    def fn(g, nn=n, cc=c, hh=h, ww=w):
        return (np.transpose(g.reshape(nn, hh, ww, cc), (0, 3, 1, 2)),)

    return _emit("to_tokens", (x,), out, fn)


def from_tokens(t, height: int, width: int) -> Tensor:
    """(N, 1, H*W, C) token matrix -> (N, C, H, W)."""
    t = _coerce(t)
    n, one, hw, c = t.shape
    if one != 1 or hw != height * width:
        raise ShapeError(f"from_tokens: shape {t.shape} does not match {height}x{width} tokens")
    out = np.transpose(t.data.reshape(n, height, width, c), (0, 3, 1, 2))

    def fn(g, nn=n, cc=c, hh=height, ww=width):
        return (np.transpose(g, (0, 2, 3, 1)).reshape(nn, 1, hh * ww, cc),)

    return _emit("from_tokens", (t,), out, fn)


def transpose_hw(x) -> Tensor:
    """Swap the last two axes."""
    x = _coerce(x)

    def fn(g):
        return (np.swapaxes(g, 2, 3),)

    return _emit("transpose_hw", (x,), np.swapaxes(x.data, 2, 3), fn)


def bmm(a, b) -> Tensor:
    """Batched matmul over the last two axes: (N,1,P,Q) @ (N,1,Q,R) -> (N,1,P,R)."""
    a, b = _coerce(a), _coerce(b)
    _same_dtype("bmm", a, b)
    if a.shape[0] != b.shape[0] or a.shape[1] != 1 or b.shape[1] != 1:
        raise ShapeError(f"bmm: incompatible batch/channel dims {a.shape} vs {b.shape}")
    if a.shape[3] != b.shape[2]:
        raise ShapeError(f"bmm: inner dims disagree: {a.shape} @ {b.shape}")

    def fn(g, ad=a.data, bd=b.data):
        return (np.matmul(g, np.swapaxes(bd, 2, 3)), np.matmul(np.swapaxes(ad, 2, 3), g))

    return _emit("bmm", (a, b), np.matmul(a.data, b.data), fn)


def softmax_w(x) -> Tensor:
    """Softmax along the last axis; rows sum to 1."""
    x = _coerce(x)
    z = x.data - x.data.max(axis=3, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=3, keepdims=True)

    def fn(g, s=out):
        dot = (g * s).sum(axis=3, keepdims=True)
        return ((g - dot) * s,)

    return _emit("softmax_w", (x,), out, fn)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _check_conv_common(x: Tensor, spec: ConvSpec, weight: Tensor, bias, op: str) -> Tensor | None:
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"{op}: input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if spec.has_bias:
        if bias is None:
            raise ShapeError(f"{op}: spec declares a bias but none was given")
        bias = _coerce(bias)
        if bias.shape != (1, spec.out_channels, 1, 1):
            raise ShapeError(f"{op}: bias shape {bias.shape} != (1, {spec.out_channels}, 1, 1)")
        _same_dtype(op, x, weight, bias)
    else:
        if bias is not None:
            raise ShapeError(f"{op}: spec declares no bias but one was given")
        _same_dtype(op, x, weight)
    return bias


def conv2d(x, spec: ConvSpec, weight, bias=None) -> Tensor:
    """Strided/dilated/grouped 2-D cross-correlation."""
    x, weight = _coerce(x), _coerce(weight)
    expect_w = (spec.out_channels, spec.in_channels // spec.groups, spec.kernel_h, spec.kernel_w)
    if weight.shape != expect_w:
        raise ShapeError(f"conv2d: weight shape {weight.shape} != {expect_w}")
    bias = _check_conv_common(x, spec, weight, bias, "conv2d")
    ho = _convnp.out_extent(x.shape[2], spec.kernel_h, spec.stride, spec.padding, spec.dilation)
    wo = _convnp.out_extent(x.shape[3], spec.kernel_w, spec.stride, spec.padding, spec.dilation)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: output extent {ho}x{wo} < 1 for input {x.shape[2]}x{x.shape[3]}")

    out = _convnp.conv2d_forward(x.data, weight.data, bias.data if bias is not None else None,
                                 spec.stride, spec.padding, spec.dilation, spec.groups)
    s, p, d, g = spec.stride, spec.padding, spec.dilation, spec.groups

    def fn(gy, xd=x.data, wd=weight.data, has_b=bias is not None):
        gx = _convnp.conv2d_grad_input(gy, wd, xd.shape, s, p, d, g)
        gw = _convnp.conv2d_grad_weight(xd, gy, wd.shape, s, p, d, g)
        if has_b:
            return gx, gw, gy.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit("conv2d", inputs, out, fn)


def conv2d_transpose(x, spec: ConvSpec, weight, bias=None) -> Tensor:
    """Transposed convolution; the exact adjoint of conv2d with matching geometry."""
    x, weight = _coerce(x), _coerce(weight)
    expect_w = (spec.in_channels, spec.out_channels // spec.groups, spec.kernel_h, spec.kernel_w)
    if weight.shape != expect_w:
        raise ShapeError(f"conv2d_transpose: weight shape {weight.shape} != {expect_w}")
    bias = _check_conv_common(x, spec, weight, bias, "conv2d_transpose")
    ho = _convnp.tconv_out_extent(x.shape[2], spec.kernel_h, spec.stride, spec.padding, spec.dilation)
    wo = _convnp.tconv_out_extent(x.shape[3], spec.kernel_w, spec.stride, spec.padding, spec.dilation)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transpose: output extent {ho}x{wo} < 1")

    s, p, d, g = spec.stride, spec.padding, spec.dilation, spec.groups
    out_shape = (x.shape[0], spec.out_channels, ho, wo)
    out = _convnp.conv2d_grad_input(x.data, weight.data, out_shape, s, p, d, g)
    if bias is not None:
        out = out + bias.data

    def fn(gy, xd=x.data, wd=weight.data, has_b=bias is not None):
        gx = _convnp.conv2d_forward(gy, wd, None, s, p, d, g)
        gw = _convnp.conv2d_grad_weight(gy, xd, wd.shape, s, p, d, g)
        if has_b:
            return gx, gw, gy.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit("conv2d_transpose", inputs, out, fn)


def embed_dilated(w, target: int, dilation: int) -> Tensor:
    """Center a kernel inside a target x target zero field, taps spaced by dilation.

    A (C, M, k, k) kernel at dilation d occupies an effective k+(k-1)(d-1)
    square; it is placed symmetrically, so target minus the effective size
    must be even. The adjoint extracts the same strided slice.
    """
    w = _coerce(w)
    n, c, kh, kw = w.shape
    eff_h = kh + (kh - 1) * (dilation - 1)
    eff_w = kw + (kw - 1) * (dilation - 1)
    if eff_h > target or eff_w > target:
        raise ShapeError(f"embed_dilated: effective size {eff_h}x{eff_w} exceeds target {target}")
    if (target - eff_h) % 2 or (target - eff_w) % 2:
        raise ShapeError(f"embed_dilated: cannot center {eff_h}x{eff_w} inside {target}x{target}")
    oh, ow = (target - eff_h) // 2, (target - eff_w) // 2
    out = np.zeros((n, c, target, target), dtype=w.np_dtype)
    out[:, :, oh:oh + eff_h:dilation, ow:ow + eff_w:dilation] = w.data

    def fn(g, d=dilation, o=(oh, ow), e=(eff_h, eff_w)):
        return (g[:, :, o[0]:o[0] + e[0]:d, o[1]:o[1] + e[1]:d].copy(),)

    return _emit("embed_dilated", (w,), out, fn)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batchnorm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
              mode: str = "train", momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization.

    Train mode normalizes with batch statistics (biased variance) and updates
    the running buffers in place with ``(1-momentum)*old + momentum*new``
    (unbiased variance for the running estimate). Eval mode normalizes with
    the running buffers as constants.
    """
    x = _coerce(x)
    n, c, h, w = x.shape
    if eps <= 0:
        raise ConfigError(f"batchnorm: eps must be > 0, got {eps}")
    gamma_t = gamma.value if isinstance(gamma, Parameter) else gamma
    if gamma_t.shape != (1, c, 1, 1):
        raise ShapeError(f"batchnorm: gamma shape {gamma_t.shape} != (1, {c}, 1, 1)")
    beta_t = beta.value if isinstance(beta, Parameter) else beta
    if beta_t.shape != (1, c, 1, 1):
        raise ShapeError(f"batchnorm: beta shape {beta_t.shape} != (1, {c}, 1, 1)")
    if running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeError(f"batchnorm: running stats must have shape ({c},)")

    if mode == "train":
        cnt = n * h * w
        if cnt < 2:
            raise ShapeError("batchnorm: train mode needs at least 2 samples per channel")
        mu = channel_mean(x)
        xc = sub(x, mu)
        var = channel_mean(mul(xc, xc))
        inv = powf(affine(var, 1.0, eps), -0.5)
        y = add(mul(mul(xc, inv), gamma), beta)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.reshape(c)
        running_var *= 1.0 - momentum
        running_var += momentum * var.data.reshape(c) * (cnt / (cnt - 1))
        return y
    if mode == "eval":
        rm = Tensor._wrap(running_mean.astype(x.np_dtype).reshape(1, c, 1, 1).copy())
        inv = Tensor._wrap((1.0 / np.sqrt(running_var.astype(np.float64) + eps))
                           .astype(x.np_dtype).reshape(1, c, 1, 1))
        return add(mul(mul(sub(x, rm), inv), gamma), beta)
    raise ConfigError(f"batchnorm: unknown mode {mode!r}")
