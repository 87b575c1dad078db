"""Full network: feature extractor, Q stacked glance-gaze stages, reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore
from .autodiff.tensor import Tensor, as_tensor, concat, stack
from .config import ModelConfig
from .crm import ReconMode, StageEstimate, reconstruct_variant
from .dsp import ComplexSpectrogram, num_frames
from .fem import fem_forward, fem_macs_per_frame, fem_param_count, init_fem
from .glance_gaze import (
    block_macs_per_frame, block_param_count, gaze_forward, glance_forward, init_gaze, init_glance,
)


@dataclass
class StageOutputs:
    estimates: list[StageEstimate]
    gains: list[Tensor | None] = field(default_factory=list)
    residuals: list[tuple[Tensor, Tensor] | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.estimates)

    @property
    def final(self) -> StageEstimate:
        return self.estimates[-1]


def model_init(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Deterministic parameters for ``cfg``; layout depends only on the config."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore(np.dtype(cfg.dtype))
    init_fem(store, rng, cfg)
    mode = ReconMode(cfg.recon)
    for q in range(1, cfg.Q + 1):
        if mode.uses_glance:
            init_glance(store, rng, f"ggm{q}.glance", cfg)
        if mode.uses_gaze:
            init_gaze(store, rng, f"ggm{q}.gaze", cfg)
    return store


def _spectrum_arrays(X, dtype) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(X, ComplexSpectrogram):
        re, im = X.real, X.imag
    else:
        re, im = X
    re = np.asarray(re, dtype=dtype)
    im = np.asarray(im, dtype=dtype)
    if re.ndim == 2:
        re, im = re[None], im[None]
    return re, im


def forward(params: ParamStore, X, cfg: ModelConfig) -> StageOutputs:
    """Run the network on a compressed spectrum.

    ``X`` is a compressed :class:`ComplexSpectrogram` or a ``(real, imag)``
    pair of ``[T, F]`` or ``[B, T, F]`` arrays. Stage ``q`` consumes the
    per-frame features concatenated with the stage ``q - 1`` estimate; stage
    0 is the input itself.
    """
    if isinstance(X, ComplexSpectrogram) and X.beta == 1.0 and cfg.beta != 1.0:
        raise ValueError("forward expects a compressed spectrogram")
    re, im = _spectrum_arrays(X, params.dtype)
    x = stack([as_tensor(re), as_tensor(im)], axis=-1)
    feats = fem_forward(x, params, cfg)
    mode = ReconMode(cfg.recon)
    prev = StageEstimate(re, im, 0)
    out = StageOutputs([])
    for q in range(1, cfg.Q + 1):
        u = concat([feats, prev.real, prev.imag], axis=-1)
        gain = glance_forward(u, params, f"ggm{q}.glance", cfg) if mode.uses_glance else None
        res = gaze_forward(u, params, f"ggm{q}.gaze", cfg) if mode.uses_gaze else None
        prev = reconstruct_variant(mode, prev, gain, res)
        out.estimates.append(prev)
        out.gains.append(gain)
        out.residuals.append(res)
    return out


def count_params(cfg: ModelConfig) -> int:
    """Closed-form parameter count (independent of :func:`model_init`)."""
    mode = ReconMode(cfg.recon)
    stage = 0
    if mode.uses_glance:
        stage += block_param_count(cfg, paths=1)
    if mode.uses_gaze:
        stage += block_param_count(cfg, paths=2)
    return fem_param_count(cfg) + cfg.Q * stage


def count_macs(cfg: ModelConfig, seconds: float = 1.0) -> int:
    """Multiply-accumulates for ``seconds`` of audio.

    Counted: every convolution and linear layer (both branches of each gated
    layer, transposed convs per input position). Not counted: norms,
    activations, reconstruction arithmetic, STFT.
    """
    T = num_frames(int(round(seconds * cfg.sample_rate)), cfg.frame_len, cfg.hop)
    mode = ReconMode(cfg.recon)
    stage = 0
    if mode.uses_glance:
        stage += block_macs_per_frame(cfg, paths=1)
    if mode.uses_gaze:
        stage += block_macs_per_frame(cfg, paths=2)
    return int(T * (fem_macs_per_frame(cfg) + cfg.Q * stage))


def zero_reference(params: ParamStore, cfg: ModelConfig) -> ParamStore:
    """Zero every S-TCM branch and every output head of every stage, in place.

    The stages then output gain 0.5 and residual 0 everywhere.
    """
    for name, t in params.items():
        if name.startswith("ggm") and (".tcm" in name or ".head." in name):
            if name.endswith(".gamma") or name.endswith(".alpha"):
                continue
            t.data[...] = 0.0
    return params
