"""Glance and gaze blocks built from squeezed temporal convolution modules (S-TCMs).

The glance block predicts a magnitude gain in (0, 1); the gaze block
predicts a complex (real, imaginary) residual through two parallel S-TCM
stacks sharing one input compressor.
"""

from __future__ import annotations

from .autodiff import ParamStore
from .autodiff import nn
from .autodiff.tensor import Tensor, add, as_tensor
from .config import ModelConfig
from .layers import act, init_conv1d, init_glu1d, init_linear, init_norm, init_prelu, norm


def init_stcm(store: ParamStore, rng, name: str, cfg: ModelConfig) -> None:
    D, d = cfg.D, cfg.squeeze
    init_linear(store, rng, f"{name}.in", D, d)
    init_prelu(store, f"{name}.act1", d)
    init_norm(store, f"{name}.norm1", d)
    init_conv1d(store, rng, f"{name}.conv", d, d, cfg.tcm_kernel)
    init_prelu(store, f"{name}.act2", d)
    init_norm(store, f"{name}.norm2", d)
    init_linear(store, rng, f"{name}.out", d, D)


def stcm_forward(x: Tensor, p, name: str, dilation: int, cfg: ModelConfig) -> Tensor:
    """``x + out(norm(prelu(dconv(norm(prelu(in(x)))))))`` on ``[B, T, D]``."""
    h = nn.linear(x, p[f"{name}.in.w"], p[f"{name}.in.b"])
    h = norm(act(h, p, f"{name}.act1"), p, f"{name}.norm1", cfg.norm, cfg.norm_eps, joint_channels=True)
    h = nn.causal_conv1d(h, p[f"{name}.conv.w"], p[f"{name}.conv.b"], dilation)
    h = norm(act(h, p, f"{name}.act2"), p, f"{name}.norm2", cfg.norm, cfg.norm_eps, joint_channels=True)
    h = nn.linear(h, p[f"{name}.out.w"], p[f"{name}.out.b"])
    return add(x, h)


def stcm_names(prefix: str, cfg: ModelConfig) -> list[tuple[str, int]]:
    return [(f"{prefix}.g{g}.tcm{j}", dil)
            for g in range(cfg.P) for j, dil in enumerate(cfg.dilations)]


def init_stack(store: ParamStore, rng, prefix: str, cfg: ModelConfig) -> None:
    for name, _ in stcm_names(prefix, cfg):
        init_stcm(store, rng, name, cfg)


def stack_forward(x: Tensor, p, prefix: str, cfg: ModelConfig) -> Tensor:
    for name, dil in stcm_names(prefix, cfg):
        x = stcm_forward(x, p, name, dil, cfg)
    return x


def receptive_field(cfg: ModelConfig, groups: int = 1) -> int:
    """Frames seen by ``groups`` S-TCM groups: 1 + sum((k - 1) * d)."""
    return 1 + groups * (cfg.tcm_kernel - 1) * sum(cfg.dilations)


# -- glance -------------------------------------------------------------

def init_glance(store: ParamStore, rng, prefix: str, cfg: ModelConfig) -> None:
    init_glu1d(store, rng, f"{prefix}.glu", cfg.stage_in_dim, cfg.D)
    init_stack(store, rng, f"{prefix}.tcm", cfg)
    init_linear(store, rng, f"{prefix}.head", cfg.D, cfg.F)


def glance_forward(u: Tensor, p, prefix: str, cfg: ModelConfig) -> Tensor:
    """``[B, T, C'+2F]`` -> gain ``[B, T, F]`` strictly inside (0, 1)."""
    u = as_tensor(u)
    h = nn.glu1d(u, p, f"{prefix}.glu")
    h = stack_forward(h, p, f"{prefix}.tcm", cfg)
    return nn.sigmoid(nn.linear(h, p[f"{prefix}.head.w"], p[f"{prefix}.head.b"]))


# -- gaze ---------------------------------------------------------------

def init_gaze(store: ParamStore, rng, prefix: str, cfg: ModelConfig) -> None:
    init_glu1d(store, rng, f"{prefix}.glu", cfg.stage_in_dim, cfg.D)
    for part in ("real", "imag"):
        init_stack(store, rng, f"{prefix}.{part}.tcm", cfg)
        init_linear(store, rng, f"{prefix}.{part}.head", cfg.D, cfg.F)


def gaze_forward(u: Tensor, p, prefix: str, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """``[B, T, C'+2F]`` -> unbounded (real, imag) residuals, each ``[B, T, F]``."""
    u = as_tensor(u)
    h = nn.glu1d(u, p, f"{prefix}.glu")
    outs = []
    for part in ("real", "imag"):
        z = stack_forward(h, p, f"{prefix}.{part}.tcm", cfg)
        outs.append(nn.linear(z, p[f"{prefix}.{part}.head.w"], p[f"{prefix}.{part}.head.b"]))
    return outs[0], outs[1]


# -- accounting ---------------------------------------------------------

def stcm_param_count(cfg: ModelConfig) -> int:
    D, d, k = cfg.D, cfg.squeeze, cfg.tcm_kernel
    return (D * d + d) + d + 2 * d + (k * d * d + d) + d + 2 * d + (d * D + D)


def block_param_count(cfg: ModelConfig, paths: int) -> int:
    """One block: shared gated compressor, ``paths`` S-TCM stacks, one head per path."""
    glu = 2 * (cfg.stage_in_dim * cfg.D + cfg.D)
    stacks = paths * cfg.P * len(cfg.dilations) * stcm_param_count(cfg)
    heads = paths * (cfg.D * cfg.F + cfg.F)
    return glu + stacks + heads


def stcm_macs_per_frame(cfg: ModelConfig) -> int:
    D, d, k = cfg.D, cfg.squeeze, cfg.tcm_kernel
    return D * d + k * d * d + d * D


def block_macs_per_frame(cfg: ModelConfig, paths: int) -> int:
    glu = 2 * cfg.stage_in_dim * cfg.D
    return glu + paths * (cfg.P * len(cfg.dilations) * stcm_macs_per_frame(cfg) + cfg.D * cfg.F)
