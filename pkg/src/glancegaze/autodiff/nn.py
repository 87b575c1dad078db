"""Network primitives used by the enhancement graph.

Layout is channels-last throughout: 2-D feature maps are ``[B, T, F, C]``
and 1-D sequences are ``[B, T, C]``. Every convolution over time is causal
(zeros are prepended), so output frame ``t`` only sees input frames ``<= t``.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor, add, cumsum, make_node, matmul, maximum, mean, mul, prelu, rsqrt,
    sigmoid, square, sub, tsum,
)

__all__ = [
    "conv2d", "causal_conv1d", "conv_transpose_freq", "glu", "glu2d", "glu1d",
    "instance_norm", "cumulative_norm", "linear", "prelu", "sigmoid", "conv_out_size",
]


def conv_out_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=(1, 1)) -> Tensor:
    """Causal-in-time, valid-in-frequency 2-D convolution.

    x: ``[B, T, F, Cin]``; w: ``[kt, kf, Cin, Cout]``. ``kt - 1`` zero frames
    are prepended, the frequency axis is not padded.
    """
    kt, kf, cin, cout = w.shape
    st, sf = stride
    B, T, F, C = x.shape
    if C != cin:
        raise ValueError(f"conv2d: input has {C} channels, kernel expects {cin}")
    if F < kf:
        raise ValueError(f"conv2d: kernel width {kf} exceeds input width {F}")
    Tp = T + kt - 1
    T_out = conv_out_size(Tp, kt, st)
    F_out = conv_out_size(F, kf, sf)
    xp = np.pad(x.data, ((0, 0), (kt - 1, 0), (0, 0), (0, 0))) if kt > 1 else x.data
    slices = [(a, c, (slice(None), slice(a, a + st * (T_out - 1) + 1, st),
                      slice(c, c + sf * (F_out - 1) + 1, sf), slice(None)))
              for a in range(kt) for c in range(kf)]
    out = np.zeros((B, T_out, F_out, cout), dtype=np.result_type(x.data, w.data))
    for a, c, sl in slices:
        out += xp[sl] @ w.data[a, c]
    if b is not None:
        out += b.data

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        g2 = g.reshape(-1, cout)
        for a, c, sl in slices:
            gxp[sl] += g @ w.data[a, c].T
            gw[a, c] = xp[sl].reshape(-1, cin).T @ g2
        gx = gxp[:, kt - 1:]
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, bw, "conv2d")


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Dilated causal convolution over time. x: ``[B, T, Cin]``; w: ``[k, Cin, Cout]``."""
    if dilation < 1:
        raise ValueError(f"dilation must be positive, got {dilation}")
    k, cin, cout = w.shape
    B, T, C = x.shape
    if C != cin:
        raise ValueError(f"causal_conv1d: input has {C} channels, kernel expects {cin}")
    pad = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (pad, 0), (0, 0))) if pad else x.data
    taps = [(j, slice(j * dilation, j * dilation + T)) for j in range(k)]
    out = np.zeros((B, T, cout), dtype=np.result_type(x.data, w.data))
    for j, sl in taps:
        out += xp[:, sl] @ w.data[j]
    if b is not None:
        out += b.data

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        g2 = g.reshape(-1, cout)
        for j, sl in taps:
            gxp[:, sl] += g @ w.data[j].T
            gw[j] = xp[:, sl].reshape(-1, cin).T @ g2
        grads = [gxp[:, pad:], gw]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, bw, "causal_conv1d")


def conv_transpose_freq(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2,
                        out_width: int | None = None) -> Tensor:
    """Transposed convolution along frequency only (kernel ``(1, kf)``).

    x: ``[B, T, W, Cin]``; w: ``[kf, Cin, Cout]``. The natural output width is
    ``(W - 1) * stride + kf``; ``out_width`` crops or zero-extends it (extended
    columns receive the bias only).
    """
    kf, cin, cout = w.shape
    B, T, W, C = x.shape
    if C != cin:
        raise ValueError(f"conv_transpose_freq: input has {C} channels, kernel expects {cin}")
    full = (W - 1) * stride + kf
    width = full if out_width is None else out_width
    buf_w = max(full, width)
    out = np.zeros((B, T, buf_w, cout), dtype=np.result_type(x.data, w.data))
    taps = [(k, slice(k, k + stride * (W - 1) + 1, stride)) for k in range(kf)]
    for k, sl in taps:
        out[:, :, sl] += x.data @ w.data[k]
    out = out[:, :, :width]
    if b is not None:
        out = out + b.data

    def bw(g):
        gfull = np.zeros((B, T, buf_w, cout), dtype=g.dtype)
        gfull[:, :, :width] = g
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        x2 = x.data.reshape(-1, cin)
        for k, sl in taps:
            gk = gfull[:, :, sl]
            gx += gk @ w.data[k].T
            gw[k] = x2.T @ gk.reshape(-1, cout)
        grads = [gx, gw]
        if b is not None:
            grads.append(g.reshape(-1, cout).sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, bw, "conv_transpose_freq")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map on the trailing axis; w is ``[in, out]``."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def glu(lin: Tensor, gate: Tensor) -> Tensor:
    if lin.shape != gate.shape:
        raise RuntimeError(f"GLU branch shapes differ: {lin.shape} vs {gate.shape}")
    return mul(lin, sigmoid(gate))


def glu2d(x: Tensor, p: dict, prefix: str, stride=(1, 2)) -> Tensor:
    """Gated 2-D convolution: ``conv(x) * sigmoid(conv_gate(x))``."""
    lin = conv2d(x, p[f"{prefix}.lin.w"], p[f"{prefix}.lin.b"], stride)
    gate = conv2d(x, p[f"{prefix}.gate.w"], p[f"{prefix}.gate.b"], stride)
    return glu(lin, gate)


def glu1d(x: Tensor, p: dict, prefix: str) -> Tensor:
    """Pointwise gated 1-D convolution on ``[B, T, C]``."""
    lin = linear(x, p[f"{prefix}.lin.w"], p[f"{prefix}.lin.b"])
    gate = linear(x, p[f"{prefix}.gate.w"], p[f"{prefix}.gate.b"])
    return glu(lin, gate)


def _norm_axes(ndim: int) -> tuple[int, ...]:
    # all axes except batch (0) and channel (-1)
    return tuple(range(1, ndim - 1))


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-8) -> Tensor:
    """Per-instance, per-channel normalisation over every non-channel axis.

    Uses whole-utterance statistics, so it is not causal.
    """
    axes = _norm_axes(x.ndim)
    mu = mean(x, axes, keepdims=True)
    xc = sub(x, mu)
    var = mean(square(xc), axes, keepdims=True)
    y = mul(xc, rsqrt(add(var, eps)))
    return add(mul(y, gamma), beta)


def cumulative_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-8,
                    joint_channels: bool = False) -> Tensor:
    """Causal normalisation with statistics accumulated over frames ``<= t``.

    For ``[B, T, F, C]`` inputs the statistics are per channel over (past
    frames x frequency). For ``[B, T, C]`` inputs they are either per channel
    over past frames or, with ``joint_channels``, pooled over channels too.
    At the last frame the statistics coincide with :func:`instance_norm`.
    """
    if x.ndim == 4:
        s1 = tsum(x, 2, keepdims=True)
        s2 = tsum(square(x), 2, keepdims=True)
        per_frame = x.shape[2]
    elif joint_channels:
        s1 = tsum(x, 2, keepdims=True)
        s2 = tsum(square(x), 2, keepdims=True)
        per_frame = x.shape[2]
    else:
        s1, s2, per_frame = x, square(x), 1
    T = x.shape[1]
    count = (np.arange(1, T + 1, dtype=x.dtype) * per_frame).reshape((1, T) + (1,) * (x.ndim - 2))
    inv = 1.0 / count
    mu = mul(cumsum(s1, 1), inv)
    ex2 = mul(cumsum(s2, 1), inv)
    var = maximum(sub(ex2, square(mu)), 0.0)
    y = mul(sub(x, mu), rsqrt(add(var, eps)))
    return add(mul(y, gamma), beta)
