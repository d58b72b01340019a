"""Neural-network operations with hand-written backward passes.

Images use NHWC layout: (batch, height, width, channels).  For an M-mode
image height is the scan-line depth ``s`` and width is time.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from mmode_ef.errors import ShapeError
from mmode_ef.tensor_nn.tensor import Tensor, as_tensor, matmul, sigmoid, tanh


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (N, Ho, Wo, C, kh, kw) strided view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``weight`` has shape (kh, kw, c_in, c_out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, h, w, c = x.shape
    kh, kw, cin, cout = weight.shape
    if cin != c:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {cin}")
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")
    if stride == kh == kw and padding == 0:
        return _patch_conv(x, weight, bias)
    xd = x.data
    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else xd
    wd = weight.data
    # One matmul per kernel offset: numpy handles the long contiguous row
    # runs far better than an im2col copy whose inner run is only c_in wide.
    offsets = [(i, j, (slice(None), slice(i, i + (ho - 1) * stride + 1, stride),
                       slice(j, j + (wo - 1) * stride + 1, stride), slice(None)))
               for i in range(kh) for j in range(kw)]
    out = np.zeros((n, ho, wo, cout), dtype=xd.dtype)
    for i, j, sl in offsets:
        out += xp[sl] @ wd[i, j]
    if bias is not None:
        out += bias.data

    def backward(g):
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.empty_like(wd)
            g2d = g.reshape(-1, cout)
            for i, j, sl in offsets:
                gw[i, j] = xp[sl].reshape(-1, cin).T @ g2d
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i, j, sl in offsets:
                gxp[sl] += g @ wd[i, j].T
            gx = gxp[:, padding : padding + h, padding : padding + w, :] if padding else gxp
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return Tensor._make(out, parents, backward)


def _patch_conv(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    # non-overlapping windows: im2col is a pure reshape
    n, h, w, c = x.shape
    k, _, cin, cout = weight.shape
    ho, wo = h // k, w // k
    xd = x.data
    cols = (xd[:, : ho * k, : wo * k]
            .reshape(n, ho, k, wo, k, c).transpose(0, 1, 3, 2, 4, 5).reshape(n * ho * wo, k * k * c))
    w2d = weight.data.reshape(k * k * cin, cout)
    out = cols @ w2d
    if bias is not None:
        out += bias.data

    def backward(g):
        g2d = g.reshape(-1, cout)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (cols.T @ g2d).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2d.sum(axis=0)
        if x.requires_grad:
            gx = np.zeros(x.shape, dtype=xd.dtype)
            gx[:, : ho * k, : wo * k] = ((g2d @ w2d.T).reshape(n, ho, wo, k, k, c)
                                         .transpose(0, 1, 3, 2, 4, 5).reshape(n, ho * k, wo * k, c))
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return Tensor._make(out.reshape(n, ho, wo, cout), parents, backward)


def maxpool2d(x: Tensor, kernel: int, stride: int | None = None, padding: int = 0) -> Tensor:
    stride = kernel if stride is None else stride
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects NHWC input, got {x.shape}")
    n, h, w, c = x.shape
    ho, wo = _out_size(h, kernel, stride, padding), _out_size(w, kernel, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d: kernel {kernel} larger than input {h}x{w}")
    xd = x.data
    xp = (np.pad(xd, ((0, 0), (padding, padding), (padding, padding), (0, 0)), constant_values=-np.inf)
          if padding else xd)
    win = _windows(xp, kernel, kernel, stride, ho, wo).reshape(n, ho, wo, c, kernel * kernel)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=xd.dtype)
        for i in range(kernel):
            for j in range(kernel):
                hit = arg == i * kernel + j
                gxp[:, i : i + (ho - 1) * stride + 1 : stride,
                    j : j + (wo - 1) * stride + 1 : stride, :] += g * hit
        return (gxp[:, padding : padding + h, padding : padding + w, :] if padding else gxp,)

    return Tensor._make(np.ascontiguousarray(out), (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over height and width: (N, H, W, C) -> (N, C)."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects NHWC input, got {x.shape}")
    shape = x.shape
    scale = 1.0 / (shape[1] * shape[2])
    out = x.data.mean(axis=(1, 2))
    return Tensor._make(out, (x,),
                        lambda g: (np.broadcast_to((g * scale)[:, None, None, :], shape).copy(),))


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the spatial axes with affine output."""
    if x.ndim != 4:
        raise ShapeError(f"instance_norm expects NHWC input, got {x.shape}")
    c = x.shape[3]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: affine params must have shape ({c},)")
    xd = x.data
    mu = xd.mean(axis=(1, 2), keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data
    out = xhat * gd + beta.data

    def backward(g):
        gx = None
        if x.requires_grad:
            gxhat = g * gd
            gx = inv * (gxhat - gxhat.mean(axis=(1, 2), keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=(1, 2), keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 1, 2)), g.sum(axis=(0, 1, 2))

    return Tensor._make(out, (x, gamma, beta), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` with weight of shape (in, out)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense: input dim {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    return out if bias is None else out + bias


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor):
    """One LSTM step. Gate blocks in ``w_x``/``w_h``/``b`` are ordered input, forget, cell, output.

    Shapes: x (B, D), h_prev/c_prev (B, H), w_x (D, 4H), w_h (H, 4H), b (4H,).
    """
    hidden = h_prev.shape[-1]
    if w_x.shape != (x.shape[-1], 4 * hidden) or w_h.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape} incompatible with "
            f"w_x {w_x.shape}, w_h {w_h.shape}, b {b.shape}")
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm_cell: c_prev {c_prev.shape} != h_prev {h_prev.shape}")
    gates = matmul(x, w_x) + matmul(h_prev, w_h) + b
    i = sigmoid(gates[..., 0:hidden])
    f = sigmoid(gates[..., hidden : 2 * hidden])
    g = tanh(gates[..., 2 * hidden : 3 * hidden])
    o = sigmoid(gates[..., 3 * hidden :])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c
