"""Deterministic noisy/clean pair synthesis.

Clean and noise pools are WAV files. A manifest lists one :class:`MixSpec`
per pair; :func:`synth_pair` realises it. The procedural pool generator
makes harmonic "voiced" tones with gliding pitch and syllable-like
envelopes, plus white, pink or babble-like noise, so nothing external is needed.

Manifest text format (tab separated, one record per line)::

    # glancegaze-manifest v1
    # split=<train|val|test> seed=<int> chunk=<samples> sample_rate=<Hz>
    clean_path  noise_path  snr_db  offset  seed  rescale

Paths are relative to the manifest file's directory. ``snr_db`` and
``rescale`` are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .dsp import WaveBuffer
from .wavio import read_wav, write_wav

MANIFEST_HEADER = "# glancegaze-manifest v1"
CLIP_PEAK = 0.99
# babble is built from the same voiced-tone generator as the clean pool, so
# it is opt-in: a small model cannot tell target and interferer apart
NOISE_KINDS = ("white", "pink")


@dataclass(frozen=True)
class MixSpec:
    clean_path: str
    noise_path: str
    snr_db: float
    offset: int
    seed: int
    rescale: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if self.offset < 0:
            raise ValueError(f"offset must be >= 0, got {self.offset}")


@dataclass
class Manifest:
    items: list[MixSpec]
    seed: int
    split: str
    chunk: int
    sample_rate: int = 16000
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.items)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    def to_text(self) -> str:
        lines = [MANIFEST_HEADER,
                 f"# split={self.split} seed={self.seed} chunk={self.chunk} sample_rate={self.sample_rate}"]
        for m in self.items:
            lines.append("\t".join([m.clean_path, m.noise_path, repr(float(m.snr_db)), str(m.offset),
                                    str(m.seed), repr(float(m.rescale))]))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ValueError(f"{path}: not a manifest (missing header)")
        meta = {}
        items = []
        for lineno, line in enumerate(lines[1:], 2):
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
                continue
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
            items.append(MixSpec(cols[0], cols[1], float(cols[2]), int(cols[3]), int(cols[4]), float(cols[5])))
        try:
            return cls(items, int(meta["seed"]), meta["split"], int(meta["chunk"]),
                       int(meta.get("sample_rate", 16000)), path.parent)
        except KeyError as exc:
            raise ValueError(f"{path}: header lacks {exc}") from None


def energy(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def noise_gain(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    """Scale for ``noise`` so that ``10 log10(E_clean / E_scaled_noise) == snr_db``."""
    ec, en = energy(clean), energy(noise)
    if ec == 0.0:
        raise ValueError("clean signal has zero energy")
    if en == 0.0:
        raise ValueError("noise signal has zero energy")
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    return float(np.sqrt(ec / (en * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean: WaveBuffer, noise: WaveBuffer, snr_db: float) -> WaveBuffer:
    if len(clean) != len(noise):
        raise ValueError(f"length mismatch: clean {len(clean)} vs noise {len(noise)}")
    g = noise_gain(clean.samples, noise.samples, snr_db)
    return WaveBuffer(clean.samples + g * noise.samples, clean.sample_rate)


def measured_snr(clean: np.ndarray, noise_part: np.ndarray) -> float:
    return 10.0 * np.log10(energy(clean) / energy(noise_part))


def _load_cut(path: Path, offset: int, length: int, what: str) -> np.ndarray:
    try:
        wav = read_wav(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"{what} file not found: {path}") from None
    if offset + length > len(wav):
        raise ValueError(f"{what} file {path} too short: need {offset + length} samples, have {len(wav)}")
    return wav.samples[offset:offset + length]


def synth_pair(spec: MixSpec, chunk: int, root: Path | str = ".") -> tuple[WaveBuffer, WaveBuffer]:
    """Realise one manifest entry as ``(noisy, clean)`` of ``chunk`` samples each."""
    root = Path(root)
    cp, npth = Path(spec.clean_path), Path(spec.noise_path)
    clean = _load_cut(cp if cp.is_absolute() else root / cp, 0, chunk, "clean")
    noise = _load_cut(npth if npth.is_absolute() else root / npth, spec.offset, chunk, "noise")
    g = noise_gain(clean, noise, spec.snr_db)
    scaled = g * noise
    noisy = clean + scaled
    if spec.rescale != 1.0:
        noisy = noisy * spec.rescale
        clean = clean * spec.rescale
    return WaveBuffer(noisy), WaveBuffer(clean)


def clip_rescale(peak: float) -> float:
    return CLIP_PEAK / peak if peak > 1.0 else 1.0


def build_manifest(cfg: ModelConfig, seed: int, split: str, clean_paths, noise_paths,
                   root: Path | str = ".", n_items: int | None = None) -> Manifest:
    """Draw a reproducible manifest.

    ``train``/``val`` draw SNRs uniformly from ``[train_snr_low, train_snr_high]``;
    ``test`` cycles through ``eval_snrs`` so every grid point gets the same
    share. Each entry's clipping rescale is computed here and stored.
    """
    clean_paths = [str(p) for p in clean_paths]
    noise_paths = [str(p) for p in noise_paths]
    if not clean_paths:
        raise ValueError("clean pool is empty")
    if not noise_paths:
        raise ValueError("noise pool is empty")
    if split not in ("train", "val", "test"):
        raise ValueError(f"unknown split {split!r}")
    if n_items is None:
        n_items = {"train": cfg.train_items, "val": cfg.val_items, "test": cfg.test_items}[split]
    root = Path(root)
    chunk = int(round(cfg.chunk_seconds * cfg.sample_rate))
    noise_len = {p: len(read_wav(root / p if not Path(p).is_absolute() else p)) for p in noise_paths}
    rng = np.random.default_rng([seed, _split_code(split)])
    items = []
    for k in range(n_items):
        c = clean_paths[rng.integers(len(clean_paths))]
        n = noise_paths[rng.integers(len(noise_paths))]
        if split == "test":
            snr = float(cfg.eval_snrs[k % len(cfg.eval_snrs)])
        else:
            snr = float(rng.uniform(cfg.train_snr_low, cfg.train_snr_high))
        if noise_len[n] < chunk:
            raise ValueError(f"noise file {n} shorter than one chunk ({chunk} samples)")
        offset = int(rng.integers(0, noise_len[n] - chunk + 1))
        item_seed = int(rng.integers(0, 2**63 - 1))
        spec = MixSpec(c, n, snr, offset, item_seed)
        noisy, _ = synth_pair(spec, chunk, root)
        items.append(replace(spec, rescale=clip_rescale(float(np.max(np.abs(noisy.samples))))))
    return Manifest(items, seed, split, chunk, cfg.sample_rate, root)


def _split_code(split: str) -> int:
    return {"train": 0, "val": 1, "test": 2}[split]


# -- procedural pools ----------------------------------------------------

def voiced_tone(rng: np.random.Generator, n: int, sr: int = 16000) -> np.ndarray:
    """Harmonic complex with a gliding pitch and on/off syllable envelope, RMS 0.1."""
    t = np.arange(n) / sr
    f0_start, f0_end = rng.uniform(110.0, 260.0, size=2)
    f0 = np.linspace(f0_start, f0_end, n)
    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    n_harm = int(rng.integers(4, 9))
    tilt = rng.uniform(0.5, 0.9)
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        if h * max(f0_start, f0_end) >= sr / 2:
            break
        x += tilt ** (h - 1) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    # syllables: 3-5 Hz amplitude modulation with random gaps
    rate = rng.uniform(3.0, 5.0)
    env = np.clip(np.sin(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, None) ** 0.5
    x *= env
    return 0.1 * x / np.sqrt(np.mean(x * x) + 1e-12)


def white_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal(n)
    return 0.1 * x / np.sqrt(np.mean(x * x))


def pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """1/f-power noise shaped in the frequency domain, RMS 0.1."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n=n)
    return 0.1 * x / np.sqrt(np.mean(x * x))


def babble_noise(rng: np.random.Generator, n: int, sr: int = 16000, talkers: int = 6) -> np.ndarray:
    x = sum(voiced_tone(rng, n, sr) for _ in range(talkers)) + 0.3 * white_noise(rng, n)
    return 0.1 * x / np.sqrt(np.mean(x * x))


_NOISE_MAKERS = {
    "white": lambda rng, n, sr: white_noise(rng, n),
    "pink": lambda rng, n, sr: pink_noise(rng, n),
    "babble": babble_noise,
}


def generate_pools(cfg: ModelConfig, seed: int, out_dir, split: str = "train",
                   noise_kinds=NOISE_KINDS) -> tuple[list[str], list[str]]:
    """Write ``pool_size`` clean and noise WAVs under ``out_dir/<split>/``.

    Returns paths relative to ``out_dir``. Noise files are three chunks long
    so cuts can start at many offsets.
    """
    unknown = [k for k in noise_kinds if k not in _NOISE_MAKERS]
    if unknown:
        raise ValueError(f"unknown noise kind(s) {unknown}; choose from {sorted(_NOISE_MAKERS)}")
    out_dir = Path(out_dir)
    sub = Path(split)
    (out_dir / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 100 + _split_code(split)])
    chunk = int(round(cfg.chunk_seconds * cfg.sample_rate))
    clean_paths, noise_paths = [], []
    for k in range(cfg.pool_size):
        rel = sub / f"clean_{k:04d}.wav"
        write_wav(out_dir / rel, WaveBuffer(voiced_tone(rng, chunk, cfg.sample_rate), cfg.sample_rate))
        clean_paths.append(str(rel))
    for k in range(cfg.pool_size):
        kind = noise_kinds[k % len(noise_kinds)]
        n = 3 * chunk
        x = _NOISE_MAKERS[kind](rng, n, cfg.sample_rate)
        rel = sub / f"noise_{kind}_{k:04d}.wav"
        write_wav(out_dir / rel, WaveBuffer(x, cfg.sample_rate))
        noise_paths.append(str(rel))
    return clean_paths, noise_paths


def make_dataset(cfg: ModelConfig, seed: int, out_dir, noise_kinds=NOISE_KINDS) -> dict[str, Path]:
    """Generate pools and write ``train``/``val``/``test`` manifests into ``out_dir``.

    Train and val share the train pools; test uses separately generated pools.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pools = {s: generate_pools(cfg, seed, out_dir, s, noise_kinds) for s in ("train", "test")}
    paths = {}
    for split, pool in (("train", "train"), ("val", "train"), ("test", "test")):
        m = build_manifest(cfg, seed, split, pools[pool][0], pools[pool][1], out_dir)
        paths[split] = out_dir / f"{split}.manifest"
        m.save(paths[split])
    return paths
