"""STFT analysis/synthesis and magnitude power compression."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 320
HOP = 160
N_FFT = 320


@dataclass(frozen=True)
class WaveBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"WaveBuffer expects a mono 1-D signal, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("WaveBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """``T x F`` complex grid held as separate real and imaginary planes."""

    real: np.ndarray
    imag: np.ndarray
    frame_len: int = FRAME_LEN
    hop: int = HOP
    n_fft: int = N_FFT
    beta: float = 1.0
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError(f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")

    @property
    def n_frames(self) -> int:
        return self.real.shape[0]

    @property
    def n_bins(self) -> int:
        return self.real.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (overlap-adds to a constant at 50% hop)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def num_frames(length: int, frame_len: int = FRAME_LEN, hop: int = HOP) -> int:
    return (length - frame_len) // hop + 1


def stft(wave: WaveBuffer, frame_len: int = FRAME_LEN, hop: int = HOP,
         n_fft: int = N_FFT) -> ComplexSpectrogram:
    """Frames start at sample 0 with no centre padding; a trailing partial frame is dropped."""
    x = wave.samples
    if len(x) < frame_len:
        raise ValueError(f"signal of {len(x)} samples is shorter than one frame ({frame_len})")
    if n_fft < frame_len:
        raise ValueError(f"n_fft ({n_fft}) must be >= frame_len ({frame_len})")
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]
    spec = np.fft.rfft(frames * hann(frame_len), n=n_fft, axis=-1)
    return ComplexSpectrogram(spec.real.copy(), spec.imag.copy(), frame_len, hop, n_fft,
                              1.0, wave.sample_rate)


def ola_floor(window: np.ndarray, hop: int) -> float:
    """Smallest summed squared window anywhere in the fully overlapped region.

    Edge samples covered by fewer frames are divided by this instead of their
    own (possibly near-zero) window sum, so spectral edits cannot blow up there.
    """
    w2 = window * window
    period = np.zeros(hop)
    for start in range(0, len(window), hop):
        seg = w2[start:start + hop]
        period[:len(seg)] += seg
    return float(period.min())


def overlap_add(frames: np.ndarray, window: np.ndarray, hop: int) -> np.ndarray:
    """Weighted overlap-add of already synthesis-windowed frames.

    Divides by the summed squared window, floored at :func:`ola_floor`; the
    fully overlapped interior is therefore an exact inverse of :func:`stft`.
    """
    T, N = frames.shape
    length = (T - 1) * hop + N
    out = np.zeros(length)
    wsum = np.zeros(length)
    w2 = window * window
    for t in range(T):
        out[t * hop:t * hop + N] += frames[t]
        wsum[t * hop:t * hop + N] += w2
    return out / np.maximum(wsum, ola_floor(window, hop))


def istft(spec: ComplexSpectrogram) -> WaveBuffer:
    """Inverse of :func:`stft`; returns ``(T - 1) * hop + frame_len`` samples.

    Samples covered by every overlapping frame are exact reconstructions; the
    first and last ``frame_len - hop`` samples are tapered (see :func:`ola_floor`).
    """
    if spec.beta != 1.0:
        raise ValueError(f"istft needs an uncompressed spectrogram (beta={spec.beta}); decompress first")
    window = hann(spec.frame_len)
    frames = np.fft.irfft(spec.to_complex(), n=spec.n_fft, axis=-1)[:, :spec.frame_len] * window
    return WaveBuffer(overlap_add(frames, window, spec.hop), spec.sample_rate)


def _rescale_magnitude(spec: ComplexSpectrogram, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    mag = np.hypot(spec.real, spec.imag)
    nz = mag > 0
    scale = np.zeros_like(mag)
    scale[nz] = mag[nz] ** (exponent - 1.0)
    return spec.real * scale, spec.imag * scale


def compress(spec: ComplexSpectrogram, beta: float = 0.5) -> ComplexSpectrogram:
    """Map magnitude to ``|X|**beta``, keeping the phase."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if spec.beta != 1.0:
        raise ValueError(f"spectrogram is already compressed (beta={spec.beta})")
    re, im = _rescale_magnitude(spec, beta)
    return replace(spec, real=re, imag=im, beta=beta)


def decompress(spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Undo :func:`compress` by raising the magnitude to ``1/beta``."""
    if spec.beta >= 1.0:
        raise ValueError("spectrogram is not compressed")
    re, im = _rescale_magnitude(spec, 1.0 / spec.beta)
    return replace(spec, real=re, imag=im, beta=1.0)
