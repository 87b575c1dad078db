"""Model/training configuration and its flat ``key = value`` text format.

Format: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored. Tuple values are comma separated (``dilations = 1,2,5,9``).
Booleans accept true/false/1/0/yes/no. Unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import get_type_hints

RECON_MODES = ("crm", "mag_rm", "com_rm", "phasen_rm")
NORM_KINDS = ("cumulative", "instance")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    # front end
    sample_rate: int = 16000
    frame_len: int = 320
    hop: int = 160
    n_fft: int = 320
    beta: float = 0.5
    # feature extractor
    channels: int = 64
    glu_kernel: tuple[int, ...] = (2, 3)
    glu_stride: tuple[int, ...] = (1, 2)
    unet_kernel: int = 3
    unet_stride: int = 2
    unet_depths: tuple[int, ...] = (4, 3, 2, 1)
    tail_layer: bool = True
    # glance-gaze stages
    P: int = 2
    Q: int = 3
    D: int = 256
    squeeze: int = 64
    tcm_kernel: int = 3
    dilations: tuple[int, ...] = (1, 2, 5, 9)
    recon: str = "crm"
    norm: str = "cumulative"
    norm_eps: float = 1e-8
    # objective
    stage_weight: float = 0.1
    final_weight: float = 1.0
    # training
    lr: float = 0.0005
    batch: int = 8
    steps: int = 200
    epochs: int = 0
    seed: int = 0
    dtype: str = "float32"
    # data synthesis
    chunk_seconds: float = 1.0
    train_items: int = 120
    val_items: int = 8
    test_items: int = 12
    train_snr_low: float = -5.0
    train_snr_high: float = 0.0
    eval_snrs: tuple[float, ...] = (-3.0, 0.0, 3.0, 6.0)
    pool_size: int = 64
    data_dir: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    # -- derived sizes ------------------------------------------------
    @property
    def F(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def freq_chain(self) -> list[int]:
        """Frequency widths from the input through every encoder layer."""
        kf, sf = self.glu_kernel[1], self.glu_stride[1]
        sizes = [self.F]
        for _ in range(self.n_encoder_layers):
            sizes.append((sizes[-1] - kf) // sf + 1)
        return sizes

    @property
    def n_encoder_layers(self) -> int:
        return len(self.unet_depths) + (1 if self.tail_layer else 0)

    @property
    def feat_dim(self) -> int:
        """C' = channels x final frequency width."""
        return self.channels * self.freq_chain[-1]

    @property
    def stage_in_dim(self) -> int:
        return self.feat_dim + 2 * self.F

    @property
    def loss_weights(self) -> tuple[float, ...]:
        return tuple([self.stage_weight] * (self.Q - 1) + [self.final_weight])

    def validate(self) -> None:
        errors = []

        def check(cond, fld, msg):
            if not cond:
                errors.append(f"{fld}: {msg}")

        check(self.P >= 1, "P", f"must be >= 1 (got {self.P})")
        check(self.Q >= 1, "Q", f"must be >= 1 (got {self.Q})")
        check(self.n_fft >= self.frame_len, "n_fft", "must be >= frame_len")
        check(0 < self.hop <= self.frame_len, "hop", "must lie in (0, frame_len]")
        check(0.0 < self.beta <= 1.0, "beta", f"must lie in (0, 1] (got {self.beta})")
        check(len(self.glu_kernel) == 2 and len(self.glu_stride) == 2, "glu_kernel",
              "kernel and stride need two entries (time, freq)")
        if len(self.glu_kernel) == 2 and len(self.glu_stride) == 2:
            check(self.glu_stride[0] == 1, "glu_stride", "time stride must be 1 to keep frame rate")
            check(self.glu_kernel[0] >= 1, "glu_kernel", "time kernel must be >= 1")
            chain = self.freq_chain
            check(chain[-1] >= 1, "unet_depths", f"frequency axis collapses: {chain}")
            for i, m in enumerate(self.unet_depths):
                if i + 1 >= len(chain):
                    break
                w = chain[i + 1]
                for _ in range(m):
                    w = (w - self.unet_kernel) // self.unet_stride + 1
                check(w >= 1, "unet_depths",
                      f"layer {i + 1} width {chain[i + 1]} cannot be downsampled {m} times")
        check(all(m >= 1 for m in self.unet_depths), "unet_depths", "depths must be >= 1")
        check(all(d >= 1 for d in self.dilations), "dilations", "must be positive")
        check(self.recon in RECON_MODES, "recon", f"must be one of {RECON_MODES}")
        check(self.norm in NORM_KINDS, "norm", f"must be one of {NORM_KINDS}")
        check(self.dtype in ("float32", "float64"), "dtype", "must be float32 or float64")
        check(self.stage_weight >= 0 and self.final_weight >= 0, "stage_weight", "weights must be >= 0")
        check(self.channels >= 1 and self.D >= 1 and self.squeeze >= 1, "channels", "widths must be >= 1")
        check(self.batch >= 1, "batch", "must be >= 1")
        check(self.lr > 0, "lr", "must be positive")
        check(self.chunk_seconds * self.sample_rate >= self.frame_len, "chunk_seconds",
              "chunk must hold at least one frame")
        check(self.train_snr_low <= self.train_snr_high, "train_snr_low", "must be <= train_snr_high")
        check(len(self.eval_snrs) >= 1, "eval_snrs", "needs at least one SNR")
        if errors:
            raise ConfigError("invalid config: " + "; ".join(errors))

    # -- text format --------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ModelConfig":
        values = parse_config_text(text)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "ModelConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if typ == tuple[int, ...]:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if typ == tuple[float, ...]:
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None
    raise ConfigError(f"{name}: unsupported field type {typ}")


def parse_config_text(text: str) -> dict:
    hints = get_type_hints(ModelConfig)
    known = {f.name for f in fields(ModelConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, hints[key])
    return values


# (P, Q) settings of the size comparison grid
PQ_GRID = ((1, 3), (2, 3), (3, 3), (2, 1), (2, 2), (2, 4))


def toy_config(**overrides) -> ModelConfig:
    """Small-data defaults for quick runs: P=1, Q=2, 1 s chunks."""
    base = dict(P=1, Q=2, chunk_seconds=1.0)
    base.update(overrides)
    return ModelConfig(**base)
