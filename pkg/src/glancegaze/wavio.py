"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, WaveBuffer


class WavFormatError(ValueError):
    pass


def read_wav(path, expected_rate: int | None = SAMPLE_RATE) -> WaveBuffer:
    """Read a RIFF PCM 16-bit mono file into [-1, 1) floats."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            comptype = w.getcomptype()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated WAV file") from exc
    if comptype != "NONE":
        raise WavFormatError(f"{path}: compressed WAV ({comptype}) is not supported")
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, found {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit samples, found {8 * width}-bit")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: expected {expected_rate} Hz, found {rate} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return WaveBuffer(samples, rate)


def write_wav(path, wave_buf: WaveBuffer) -> None:
    """Write as 16-bit PCM mono; values outside [-1, 1] are clipped."""
    pcm = np.clip(np.round(wave_buf.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(wave_buf.sample_rate))
        w.writeframes(pcm.tobytes())
