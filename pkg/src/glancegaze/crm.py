"""Collaborative reconstruction of the stage spectrum from gain and residual.

Given the previous estimate ``S`` (real/imag planes), a gain ``G`` and a
complex residual ``R``::

    |S_fil| = |S| * G
    out_r   = |S_fil| * cos(angle(S)) + R_r
    out_i   = |S_fil| * sin(angle(S)) + R_i

Three ablation modes are also provided: magnitude-only (gain, no residual),
complex-only (residual replaces the estimate) and a gain plus a predicted
unit (cos, sin) phase pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .autodiff.tensor import Tensor, add, as_tensor, atan2, cos, div, hypot, maximum, mul, sin


class ReconMode(str, enum.Enum):
    CRM = "crm"
    MAG_RM = "mag_rm"
    COM_RM = "com_rm"
    PHASEN_RM = "phasen_rm"

    @property
    def uses_glance(self) -> bool:
        return self is not ReconMode.COM_RM

    @property
    def uses_gaze(self) -> bool:
        return self is not ReconMode.MAG_RM


@dataclass
class StageEstimate:
    real: Tensor
    imag: Tensor
    stage: int = 0

    def __post_init__(self):
        self.real = as_tensor(self.real)
        self.imag = as_tensor(self.imag)
        if self.real.shape != self.imag.shape:
            raise ValueError(f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}")

    @property
    def shape(self):
        return self.real.shape

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.real.data, self.imag.data


def decouple(prev: StageEstimate) -> tuple[Tensor, Tensor]:
    """Magnitude and four-quadrant phase (zero cells map to magnitude 0, phase 0)."""
    return hypot(prev.real, prev.imag), atan2(prev.imag, prev.real)


def _check(prev: StageEstimate, *others):
    for o in others:
        if o is not None and tuple(o.shape) != tuple(prev.shape):
            raise ValueError(f"shape mismatch: estimate {prev.shape} vs {o.shape}")


def crm_reconstruct(prev: StageEstimate, gain, residual) -> StageEstimate:
    gain = as_tensor(gain)
    res_r, res_i = (as_tensor(r) for r in residual)
    _check(prev, gain, res_r, res_i)
    mag, phase = decouple(prev)
    fil = mul(mag, gain)
    out_r = add(mul(fil, cos(phase)), res_r)
    out_i = add(mul(fil, sin(phase)), res_i)
    return StageEstimate(out_r, out_i, prev.stage + 1)


def reconstruct_variant(mode: ReconMode | str, prev: StageEstimate, gain=None, residual=None) -> StageEstimate:
    """Dispatch on reconstruction mode.

    ``MAG_RM`` needs ``gain``; ``COM_RM`` needs ``residual``; ``CRM`` and
    ``PHASEN_RM`` need both (for ``PHASEN_RM`` the residual pair is read as
    raw (cos, sin) phase estimates and normalised to unit length).
    """
    mode = ReconMode(mode)
    if mode.uses_glance and gain is None:
        raise ValueError(f"{mode.value} needs a gain")
    if mode.uses_gaze and residual is None:
        raise ValueError(f"{mode.value} needs a residual pair")
    if mode is ReconMode.CRM:
        return crm_reconstruct(prev, gain, residual)
    if mode is ReconMode.MAG_RM:
        gain = as_tensor(gain)
        _check(prev, gain)
        mag, phase = decouple(prev)
        fil = mul(mag, gain)
        return StageEstimate(mul(fil, cos(phase)), mul(fil, sin(phase)), prev.stage + 1)
    if mode is ReconMode.COM_RM:
        res_r, res_i = (as_tensor(r) for r in residual)
        _check(prev, res_r, res_i)
        return StageEstimate(res_r, res_i, prev.stage + 1)
    gain = as_tensor(gain)
    c, s = (as_tensor(r) for r in residual)
    _check(prev, gain, c, s)
    norm = maximum(hypot(c, s), 1e-12)
    mag = mul(hypot(prev.real, prev.imag), gain)
    return StageEstimate(mul(mag, div(c, norm)), mul(mag, div(s, norm)), prev.stage + 1)


def recouple(mag, phase) -> tuple[np.ndarray, np.ndarray]:
    mag = np.asarray(mag)
    phase = np.asarray(phase)
    return mag * np.cos(phase), mag * np.sin(phase)
