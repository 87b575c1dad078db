"""Spectral feature extraction: stacked recalibrate encoder layers (RELs).

Each REL is a gated 2-D convolution (kernel (2, 3), stride (1, 2)) followed
by normalisation and PReLU, giving ``K(x)``; a frequency-only U-Net block
refines it and the result is added back: ``y = unet(K(x)) + K(x)``.
An optional plain gated layer follows the RELs to narrow the frequency
axis once more before the per-frame reshape.
"""

from __future__ import annotations

from .autodiff import ParamStore
from .autodiff import nn
from .autodiff.tensor import Tensor, add, as_tensor, reshape
from .config import ModelConfig
from .layers import act, init_conv2d, init_conv_transpose, init_glu2d, init_norm, init_prelu, norm


def unet_widths(width: int, depth: int, kernel: int = 3, stride: int = 2) -> list[int]:
    widths = [width]
    for _ in range(depth):
        widths.append((widths[-1] - kernel) // stride + 1)
    return widths


def init_unet_block(store: ParamStore, rng, name: str, c: int, depth: int, kernel: int) -> None:
    for k in range(1, depth + 1):
        init_conv2d(store, rng, f"{name}.enc{k}", c, c, (1, kernel))
        init_norm(store, f"{name}.enc{k}.norm", c)
        init_prelu(store, f"{name}.enc{k}.act", c)
    for k in range(depth, 0, -1):
        init_conv_transpose(store, rng, f"{name}.dec{k}", c, c, kernel)
        if k > 1:
            init_norm(store, f"{name}.dec{k}.norm", c)
            init_prelu(store, f"{name}.dec{k}.act", c)


def unet_block(x: Tensor, p, name: str, depth: int, cfg: ModelConfig) -> Tensor:
    """Frequency-axis encoder/decoder with additive skips; output shape equals input shape.

    Encoder layer k: conv (1, kernel) stride (1, stride) -> norm -> PReLU.
    Decoder layer k mirrors it with a transposed conv; the outermost decoder
    layer is a bare transposed conv so an all-zero block outputs its bias.
    """
    s = cfg.unet_stride
    skips = [x]
    h = x
    for k in range(1, depth + 1):
        h = nn.conv2d(h, p[f"{name}.enc{k}.w"], p[f"{name}.enc{k}.b"], (1, s))
        h = act(norm(h, p, f"{name}.enc{k}.norm", cfg.norm, cfg.norm_eps), p, f"{name}.enc{k}.act")
        skips.append(h)
    for k in range(depth, 0, -1):
        if k < depth:
            h = add(h, skips[k])
        h = nn.conv_transpose_freq(h, p[f"{name}.dec{k}.w"], p[f"{name}.dec{k}.b"], s,
                                   out_width=skips[k - 1].shape[2])
        if k > 1:
            h = act(norm(h, p, f"{name}.dec{k}.norm", cfg.norm, cfg.norm_eps), p, f"{name}.dec{k}.act")
    return h


def init_rel(store: ParamStore, rng, name: str, cin: int, cfg: ModelConfig, depth: int) -> None:
    c = cfg.channels
    init_glu2d(store, rng, f"{name}.glu", cin, c, cfg.glu_kernel)
    init_norm(store, f"{name}.norm", c)
    init_prelu(store, f"{name}.act", c)
    if depth:
        init_unet_block(store, rng, f"{name}.unet", c, depth, cfg.unet_kernel)


def gated_unit(x: Tensor, p, name: str, cfg: ModelConfig) -> Tensor:
    """K(x): gated conv -> norm -> PReLU."""
    k = nn.glu2d(x, p, f"{name}.glu", tuple(cfg.glu_stride))
    return act(norm(k, p, f"{name}.norm", cfg.norm, cfg.norm_eps), p, f"{name}.act")


def rel_forward(x: Tensor, p, name: str, cfg: ModelConfig, depth: int) -> Tensor:
    k = gated_unit(x, p, name, cfg)
    return add(unet_block(k, p, f"{name}.unet", depth, cfg), k)


def layer_names(cfg: ModelConfig) -> list[tuple[str, int]]:
    """(parameter prefix, U-Net depth) per encoder layer; depth 0 marks the plain tail layer."""
    names = [(f"fem.rel{i + 1}", m) for i, m in enumerate(cfg.unet_depths)]
    if cfg.tail_layer:
        names.append(("fem.tail", 0))
    return names


def init_fem(store: ParamStore, rng, cfg: ModelConfig) -> None:
    cin = 2
    for name, depth in layer_names(cfg):
        init_rel(store, rng, name, cin, cfg, depth)
        cin = cfg.channels


def fem_forward(x: Tensor, p, cfg: ModelConfig) -> Tensor:
    """``[B, T, F, 2]`` compressed RI spectrum -> ``[B, T, C']`` per-frame features."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[-1] != 2:
        raise ValueError(f"FEM input must be [B, T, F, 2], got {x.shape}")
    if x.shape[2] != cfg.F:
        raise ValueError(f"FEM input has {x.shape[2]} bins, config expects {cfg.F}")
    h = x
    for name, depth in layer_names(cfg):
        h = rel_forward(h, p, name, cfg, depth) if depth else gated_unit(h, p, name, cfg)
    B, T, Fp, C = h.shape
    return reshape(h, (B, T, Fp * C))


def fem_param_count(cfg: ModelConfig) -> int:
    c, kt, kf = cfg.channels, cfg.glu_kernel[0], cfg.glu_kernel[1]
    k = cfg.unet_kernel
    total = 0
    cin = 2
    for _, depth in layer_names(cfg):
        total += 2 * (kt * kf * cin * c + c)  # gated conv: two branches
        total += 3 * c  # norm (gamma, beta) + PReLU
        if depth:
            conv = k * c * c + c
            total += depth * (conv + 3 * c)  # encoder layers
            total += depth * conv + (depth - 1) * 3 * c  # decoder layers
        cin = c
    return total


def fem_shape_chain(cfg: ModelConfig, T: int = 1) -> list[tuple[int, ...]]:
    chain = [(2, T, cfg.F)]
    for w in cfg.freq_chain[1:]:
        chain.append((cfg.channels, T, w))
    chain.append((cfg.feat_dim, T))
    return chain


def fem_macs_per_frame(cfg: ModelConfig) -> int:
    c, kt, kf = cfg.channels, cfg.glu_kernel[0], cfg.glu_kernel[1]
    k, s = cfg.unet_kernel, cfg.unet_stride
    chain = cfg.freq_chain
    macs = 0
    cin = 2
    for i, (_, depth) in enumerate(layer_names(cfg)):
        macs += 2 * kt * kf * cin * c * chain[i + 1]
        if depth:
            widths = unet_widths(chain[i + 1], depth, k, s)
            macs += sum(k * c * c * w for w in widths[1:])  # encoder convs
            macs += sum(k * c * c * w for w in widths[1:])  # transposed convs: per input position
        cin = c
    return int(macs)


__all__ = [
    "init_fem", "fem_forward", "rel_forward", "unet_block", "gated_unit", "layer_names",
    "fem_param_count", "fem_shape_chain", "fem_macs_per_frame", "unet_widths",
]
