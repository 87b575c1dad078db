"""Training objective and evaluation metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff.tensor import Tensor, add, as_tensor, hypot, mul, square, sub, tsum
from .crm import StageEstimate

DB_CLAMP = 60.0


def stage_loss(est: StageEstimate, target: StageEstimate, mask: np.ndarray | None = None) -> Tensor:
    """Half the sum of real, imaginary and magnitude squared errors, averaged over cells.

    ``mask`` (broadcastable to the spectrum, typically ``[B, T, 1]``) drops
    padded frames; the mean is taken over unmasked cells only.
    """
    if tuple(est.shape) != tuple(target.shape):
        raise ValueError(f"shape mismatch: estimate {est.shape} vs target {target.shape}")
    tr = as_tensor(target.real)
    ti = as_tensor(target.imag)
    err_r = square(sub(est.real, tr))
    err_i = square(sub(est.imag, ti))
    err_m = square(sub(hypot(est.real, est.imag), hypot(tr, ti)))
    total = add(add(err_r, err_i), err_m)
    if mask is None:
        n = total.data.size
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=total.dtype), total.shape)
        n = float(mask.sum())
        if n == 0:
            raise ValueError("mask excludes every cell")
        total = mul(total, mask)
    return mul(tsum(total), 0.5 / n)


def total_loss(stages: Sequence[StageEstimate], target: StageEstimate,
               weights: Sequence[float] | None = None, mask=None) -> tuple[Tensor, list[Tensor]]:
    """Weighted sum of per-stage losses. Default weights: 0.1 per stage, 1.0 for the last."""
    Q = len(stages)
    if Q == 0:
        raise ValueError("no stage estimates")
    if weights is None:
        weights = [0.1] * (Q - 1) + [1.0]
    if len(weights) != Q:
        raise ValueError(f"{len(weights)} loss weights for {Q} stages")
    per_stage = [stage_loss(s, target, mask) for s in stages]
    total = mul(per_stage[0], float(weights[0]))
    for w, l in zip(weights[1:], per_stage[1:]):
        total = add(total, mul(l, float(w)))
    return total, per_stage


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def _db(num: float, den: float) -> float:
    if num <= 0.0:
        return -DB_CLAMP
    if den <= 0.0:
        return DB_CLAMP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CLAMP, DB_CLAMP))


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, clamped to +/-60. Both signals are made zero-mean."""
    s_hat = _as_array(est)
    s = _as_array(ref)
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch: {s_hat.shape} vs {s.shape}")
    s_hat = s_hat - s_hat.mean()
    s = s - s.mean()
    energy = float(np.dot(s, s))
    if energy == 0.0:
        raise ValueError("reference signal has zero energy")
    target = (np.dot(s_hat, s) / energy) * s
    return _db(float(np.dot(target, target)), float(np.sum((target - s_hat) ** 2)))


def sdr_energy(est, ref) -> float:
    """Plain energy-ratio SDR ``10 log10(|s|^2 / |s - s_hat|^2)``, clamped to +/-60 dB."""
    s_hat = _as_array(est)
    s = _as_array(ref)
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch: {s_hat.shape} vs {s.shape}")
    energy = float(np.dot(s, s))
    if energy == 0.0:
        raise ValueError("reference signal has zero energy")
    return _db(energy, float(np.sum((s - s_hat) ** 2)))
