"""Frame-by-frame causal inference.

A :class:`StreamState` holds everything the network needs from the past:
the previous input frame of every gated 2-D convolution, a history ring of
``(k - 1) * dilation`` frames per S-TCM, running sums for every cumulative
norm, the analysis sample buffer and the pending overlap-add tail.

Feeding ``hop`` samples per call, each call after the first returns the
``hop`` output samples that just became final; :func:`flush` returns the
tail. The concatenation equals offline :func:`glancegaze.engine.enhance`.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParamStore
from .config import ModelConfig
from .crm import ReconMode
from .dsp import hann, ola_floor
from .fem import layer_names, unet_widths
from .glance_gaze import stcm_names


class StreamError(ValueError):
    pass


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _prelu(x, alpha):
    return x * np.where(x <= 0, alpha, np.ones_like(alpha))


class _RunningNorm:
    """Cumulative normalisation of one frame given all previous frames."""

    __slots__ = ("gamma", "beta", "eps", "s1", "s2", "per_frame")

    def __init__(self, gamma, beta, eps, shape, per_frame):
        self.gamma, self.beta, self.eps = gamma, beta, eps
        self.s1 = np.zeros(shape, dtype=gamma.dtype)
        self.s2 = np.zeros(shape, dtype=gamma.dtype)
        self.per_frame = per_frame

    def __call__(self, x, frame_index, axis):
        dt = x.dtype
        self.s1 = self.s1 + x.sum(axis=axis)
        self.s2 = self.s2 + (x * x).sum(axis=axis)
        inv = dt.type(1.0) / dt.type((frame_index + 1) * self.per_frame)
        mu = self.s1 * inv
        var = np.maximum(self.s2 * inv - mu * mu, 0.0).astype(dt)
        y = (x - mu) * (1.0 / np.sqrt(var + dt.type(self.eps)))
        return y * self.gamma + self.beta

    @property
    def size(self) -> int:
        return self.s1.size + self.s2.size


def _conv2d_frame(window, w, b, sf, f_out):
    """One output frame of :func:`nn.conv2d` given the ``kt`` most recent input frames."""
    kt, kf = w.shape[:2]
    out = np.zeros((f_out, w.shape[3]), dtype=window.dtype)
    for a in range(kt):
        for c in range(kf):
            out += window[a, c:c + sf * (f_out - 1) + 1:sf] @ w[a, c]
    return out + b


def _conv_transpose_frame(x, w, b, stride, width):
    kf = w.shape[0]
    W = x.shape[0]
    full = (W - 1) * stride + kf
    out = np.zeros((max(full, width), w.shape[2]), dtype=x.dtype)
    for k in range(kf):
        out[k:k + stride * (W - 1) + 1:stride] += x @ w[k]
    return out[:width] + b


class StreamState:
    def __init__(self, params: ParamStore, cfg: ModelConfig):
        if cfg.norm != "cumulative":
            raise StreamError("streaming needs causal (cumulative) normalisation")
        if cfg.frame_len % cfg.hop:
            raise StreamError("frame_len must be a multiple of hop for streaming")
        self.cfg = cfg
        self.p = params.arrays()
        self.dtype = params.dtype
        self.mode = ReconMode(cfg.recon)
        self.window = hann(cfg.frame_len)
        self.w2 = self.window * self.window
        self.floor = ola_floor(self.window, cfg.hop)
        self.frame_index = 0
        self.calls = 0
        self.samples = np.zeros(0)
        self.ola = np.zeros(cfg.frame_len - cfg.hop)
        self.wsum = np.zeros(cfg.frame_len - cfg.hop)
        self._build()

    # -- state layout ---------------------------------------------------
    def _norm(self, name, shape, per_frame):
        g, b = self.p[f"{name}.gamma"], self.p[f"{name}.beta"]
        self.norms[name] = _RunningNorm(g, b, self.cfg.norm_eps, shape, per_frame)

    def _build(self):
        cfg = self.cfg
        c = cfg.channels
        kt = cfg.glu_kernel[0]
        chain = cfg.freq_chain
        self.norms: dict[str, _RunningNorm] = {}
        self.conv_hist: dict[str, np.ndarray] = {}
        self.tcm_hist: dict[str, list] = {}
        cin = 2
        for i, (name, depth) in enumerate(layer_names(cfg)):
            self.conv_hist[name] = np.zeros((kt - 1, chain[i], cin), dtype=self.dtype)
            self._norm(f"{name}.norm", (c,), chain[i + 1])
            if depth:
                widths = unet_widths(chain[i + 1], depth, cfg.unet_kernel, cfg.unet_stride)
                for k in range(1, depth + 1):
                    self._norm(f"{name}.unet.enc{k}.norm", (c,), widths[k])
                for k in range(depth, 1, -1):
                    self._norm(f"{name}.unet.dec{k}.norm", (c,), widths[k - 1])
            cin = c
        for q in range(1, cfg.Q + 1):
            prefixes = []
            if self.mode.uses_glance:
                prefixes.append(f"ggm{q}.glance.tcm")
            if self.mode.uses_gaze:
                prefixes += [f"ggm{q}.gaze.real.tcm", f"ggm{q}.gaze.imag.tcm"]
            for prefix in prefixes:
                for name, dil in stcm_names(prefix, cfg):
                    hist_len = (cfg.tcm_kernel - 1) * dil
                    self.tcm_hist[name] = [np.zeros((hist_len, cfg.squeeze), dtype=self.dtype), 0]
                    self._norm(f"{name}.norm1", (), cfg.squeeze)
                    self._norm(f"{name}.norm2", (), cfg.squeeze)

    def num_floats(self) -> int:
        """Stored state values (excluding parameters and the scalar counters)."""
        n = sum(h.size for h in self.conv_hist.values())
        n += sum(h[0].size for h in self.tcm_hist.values())
        n += sum(nrm.size for nrm in self.norms.values())
        n += (self.cfg.frame_len - self.cfg.hop)  # analysis buffer (previous samples)
        n += self.ola.size  # pending overlap-add tail
        return n

    # -- per-frame network ---------------------------------------------
    def _gated_unit(self, name, x):
        cfg = self.cfg
        hist = self.conv_hist[name]
        window = np.concatenate([hist, x[None]], axis=0)
        if hist.shape[0]:
            self.conv_hist[name] = window[1:]
        sf = cfg.glu_stride[1]
        f_out = (x.shape[0] - cfg.glu_kernel[1]) // sf + 1
        p = self.p
        lin = _conv2d_frame(window, p[f"{name}.glu.lin.w"], p[f"{name}.glu.lin.b"], sf, f_out)
        gate = _conv2d_frame(window, p[f"{name}.glu.gate.w"], p[f"{name}.glu.gate.b"], sf, f_out)
        h = lin * _sigmoid(gate)
        h = self.norms[f"{name}.norm"](h, self.frame_index, 0)
        return _prelu(h, p[f"{name}.act.alpha"])

    def _unet(self, name, x, depth):
        cfg, p = self.cfg, self.p
        s = cfg.unet_stride
        skips = [x]
        h = x
        for k in range(1, depth + 1):
            pre = f"{name}.enc{k}"
            f_out = (h.shape[0] - cfg.unet_kernel) // s + 1
            h = _conv2d_frame(h[None], p[f"{pre}.w"], p[f"{pre}.b"], s, f_out)
            h = _prelu(self.norms[f"{pre}.norm"](h, self.frame_index, 0), p[f"{pre}.act.alpha"])
            skips.append(h)
        for k in range(depth, 0, -1):
            pre = f"{name}.dec{k}"
            if k < depth:
                h = h + skips[k]
            h = _conv_transpose_frame(h, p[f"{pre}.w"], p[f"{pre}.b"], s, skips[k - 1].shape[0])
            if k > 1:
                h = _prelu(self.norms[f"{pre}.norm"](h, self.frame_index, 0), p[f"{pre}.act.alpha"])
        return h

    def _fem(self, x):
        h = x
        for name, depth in layer_names(self.cfg):
            k = self._gated_unit(name, h)
            h = self._unet(f"{name}.unet", k, depth) + k if depth else k
        return h.reshape(-1)

    def _stcm(self, name, x, dil):
        p, cfg = self.p, self.cfg
        h = x @ p[f"{name}.in.w"] + p[f"{name}.in.b"]
        h = self.norms[f"{name}.norm1"](_prelu(h, p[f"{name}.act1.alpha"]), self.frame_index, None)
        hist, pos = self.tcm_hist[name]
        w = p[f"{name}.conv.w"]
        k = cfg.tcm_kernel
        L = hist.shape[0]
        out = np.zeros(w.shape[2], dtype=h.dtype)
        for j in range(k):
            lag = (k - 1 - j) * dil
            tap = h if lag == 0 else hist[(pos - lag) % L]
            out += tap @ w[j]
        if L:
            hist[pos] = h
            self.tcm_hist[name][1] = (pos + 1) % L
        h = out + p[f"{name}.conv.b"]
        h = self.norms[f"{name}.norm2"](_prelu(h, p[f"{name}.act2.alpha"]), self.frame_index, None)
        return x + (h @ p[f"{name}.out.w"] + p[f"{name}.out.b"])

    def _stack(self, prefix, x):
        for name, dil in stcm_names(prefix, self.cfg):
            x = self._stcm(name, x, dil)
        return x

    def _glu1d(self, prefix, u):
        p = self.p
        lin = u @ p[f"{prefix}.lin.w"] + p[f"{prefix}.lin.b"]
        gate = u @ p[f"{prefix}.gate.w"] + p[f"{prefix}.gate.b"]
        return lin * _sigmoid(gate)

    def _head(self, prefix, h):
        return h @ self.p[f"{prefix}.w"] + self.p[f"{prefix}.b"]

    def network_frame(self, re, im):
        """Run every stage on one compressed spectrum frame; returns the final (re, im)."""
        cfg = self.cfg
        feats = self._fem(np.stack([re, im], axis=-1))
        for q in range(1, cfg.Q + 1):
            u = np.concatenate([feats, re, im])
            mag = np.sqrt(re * re + im * im)
            phase = np.arctan2(im, re)
            if self.mode.uses_glance:
                g = self._stack(f"ggm{q}.glance.tcm", self._glu1d(f"ggm{q}.glance.glu", u))
                gain = _sigmoid(self._head(f"ggm{q}.glance.head", g))
            if self.mode.uses_gaze:
                z = self._glu1d(f"ggm{q}.gaze.glu", u)
                res_r = self._head(f"ggm{q}.gaze.real.head", self._stack(f"ggm{q}.gaze.real.tcm", z))
                res_i = self._head(f"ggm{q}.gaze.imag.head", self._stack(f"ggm{q}.gaze.imag.tcm", z))
            if self.mode is ReconMode.CRM:
                fil = mag * gain
                re, im = fil * np.cos(phase) + res_r, fil * np.sin(phase) + res_i
            elif self.mode is ReconMode.MAG_RM:
                fil = mag * gain
                re, im = fil * np.cos(phase), fil * np.sin(phase)
            elif self.mode is ReconMode.COM_RM:
                re, im = res_r, res_i
            else:
                norm = np.maximum(np.sqrt(res_r * res_r + res_i * res_i), 1e-12)
                fil = mag * gain
                re, im = fil * (res_r / norm), fil * (res_i / norm)
        self.frame_index += 1
        return re, im


def stream_state_size(cfg: ModelConfig) -> int:
    """Closed-form count of the floats a :class:`StreamState` keeps between frames."""
    c, kt = cfg.channels, cfg.glu_kernel[0]
    chain = cfg.freq_chain
    size = 0
    cin = 2
    for i, (_, depth) in enumerate(layer_names(cfg)):
        size += (kt - 1) * chain[i] * cin  # previous input frame(s) of the gated conv
        size += 2 * c  # running sums of its norm
        if depth:
            size += (2 * depth - 1) * 2 * c  # U-Net norms
        cin = c
    paths = (1 if ReconMode(cfg.recon).uses_glance else 0) + (2 if ReconMode(cfg.recon).uses_gaze else 0)
    per_stack = sum((cfg.tcm_kernel - 1) * d * cfg.squeeze + 2 * 2 for d in cfg.dilations) * cfg.P
    size += cfg.Q * paths * per_stack
    size += 2 * (cfg.frame_len - cfg.hop)  # analysis buffer + overlap-add tail
    return size


def init_stream(params: ParamStore, cfg: ModelConfig) -> StreamState:
    return StreamState(params, cfg)


def enhance_stream(state: StreamState, frame, index: int | None = None) -> np.ndarray:
    """Feed ``hop`` new samples; return the output samples that became final (possibly none)."""
    cfg = state.cfg
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (cfg.hop,):
        raise StreamError(f"expected {cfg.hop} samples per call, got shape {frame.shape}")
    if index is not None and index != state.calls:
        raise StreamError(f"out-of-order frame: expected index {state.calls}, got {index}")
    state.calls += 1
    state.samples = np.concatenate([state.samples, frame])
    if state.samples.shape[0] < cfg.frame_len:
        return np.zeros(0)
    block = state.samples[-cfg.frame_len:]
    state.samples = block[cfg.hop:].copy()

    spec = np.fft.rfft(block * state.window, n=cfg.n_fft)
    re, im = spec.real, spec.imag
    mag = np.hypot(re, im)
    nz = mag > 0
    scale = np.zeros_like(mag)
    scale[nz] = mag[nz] ** (cfg.beta - 1.0)
    re, im = (re * scale).astype(state.dtype), (im * scale).astype(state.dtype)

    out_re, out_im = state.network_frame(re, im)

    out_re = np.asarray(out_re, dtype=np.float64)
    out_im = np.asarray(out_im, dtype=np.float64)
    mag = np.hypot(out_re, out_im)
    nz = mag > 0
    scale = np.zeros_like(mag)
    scale[nz] = mag[nz] ** (1.0 / cfg.beta - 1.0)
    time_frame = np.fft.irfft((out_re * scale) + 1j * (out_im * scale), n=cfg.n_fft)[:cfg.frame_len]
    time_frame = time_frame * state.window

    hop = cfg.hop
    acc = np.zeros(cfg.frame_len)
    wacc = np.zeros(cfg.frame_len)
    acc[:state.ola.size] = state.ola
    wacc[:state.wsum.size] = state.wsum
    acc += time_frame
    wacc += state.w2
    done, done_w = acc[:hop], wacc[:hop]
    state.ola = acc[hop:].copy()
    state.wsum = wacc[hop:].copy()
    return done / np.maximum(done_w, state.floor)


def flush(state: StreamState) -> np.ndarray:
    """Return the trailing samples still held in the overlap-add buffer."""
    if state.frame_index == 0:
        return np.zeros(0)
    out = state.ola / np.maximum(state.wsum, state.floor)
    state.ola = np.zeros_like(state.ola)
    state.wsum = np.zeros_like(state.wsum)
    return out


def stream_signal(params: ParamStore, wave, cfg: ModelConfig) -> np.ndarray:
    """Run a whole signal through a fresh stream; the result lines up with offline ``enhance``."""
    samples = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)
    state = init_stream(params, cfg)
    n = len(samples) // cfg.hop
    pieces = [enhance_stream(state, samples[k * cfg.hop:(k + 1) * cfg.hop], k) for k in range(n)]
    pieces.append(flush(state))
    out = np.zeros(len(samples))
    y = np.concatenate(pieces)[:len(samples)]
    out[:len(y)] = y
    return out
