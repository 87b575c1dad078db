"""Training loop, offline enhancement and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import ParamStore, adam_step, checkpoint, no_grad
from .config import ModelConfig
from .crm import StageEstimate
from .dsp import ComplexSpectrogram, WaveBuffer, compress, decompress, istft, stft
from .model import forward, model_init
from .objective import sdr_energy, si_sdr, total_loss
from .synth import Manifest, synth_pair


class NumericError(RuntimeError):
    """Raised when the training loss stops being finite."""


def analyse(wave: WaveBuffer, cfg: ModelConfig) -> ComplexSpectrogram:
    return compress(stft(wave, cfg.frame_len, cfg.hop, cfg.n_fft), cfg.beta)


def enhance(params: ParamStore, noisy: WaveBuffer, cfg: ModelConfig) -> WaveBuffer:
    """Offline enhancement of a whole signal.

    The output has the input's length; samples past the last complete
    frame are not reconstructible and are returned as zeros.
    """
    if noisy.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz input, got {noisy.sample_rate}")
    spec = analyse(noisy, cfg)
    with no_grad():
        est = forward(params, spec, cfg).final
    re, im = (np.asarray(a, dtype=np.float64)[0] for a in est.numpy())
    out = istft(decompress(ComplexSpectrogram(re, im, cfg.frame_len, cfg.hop, cfg.n_fft, cfg.beta,
                                              cfg.sample_rate))).samples
    full = np.zeros(len(noisy))
    full[:len(out)] = out
    return WaveBuffer(full, noisy.sample_rate)


# -- data ----------------------------------------------------------------

@dataclass
class Example:
    noisy_re: np.ndarray
    noisy_im: np.ndarray
    clean_re: np.ndarray
    clean_im: np.ndarray

    @property
    def frames(self) -> int:
        return self.noisy_re.shape[0]


def load_examples(manifest: Manifest, cfg: ModelConfig) -> list[Example]:
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    out = []
    for spec in manifest.items:
        noisy, clean = synth_pair(spec, manifest.chunk, manifest.root)
        n, c = analyse(noisy, cfg), analyse(clean, cfg)
        out.append(Example(n.real, n.imag, c.real, c.imag))
    return out


def make_batch(examples: list[Example], dtype) -> tuple[tuple[np.ndarray, np.ndarray], StageEstimate, np.ndarray]:
    """Zero-pad to the longest item; the mask ``[B, T, 1]`` marks real frames."""
    T = max(e.frames for e in examples)
    F = examples[0].noisy_re.shape[1]
    B = len(examples)
    arrs = np.zeros((4, B, T, F), dtype=dtype)
    mask = np.zeros((B, T, 1), dtype=dtype)
    for b, e in enumerate(examples):
        t = e.frames
        arrs[0, b, :t], arrs[1, b, :t] = e.noisy_re, e.noisy_im
        arrs[2, b, :t], arrs[3, b, :t] = e.clean_re, e.clean_im
        mask[b, :t] = 1.0
    return (arrs[0], arrs[1]), StageEstimate(arrs[2], arrs[3]), mask


def steps_per_epoch(n_items: int, batch: int) -> int:
    return max(1, n_items // batch)


def batch_indices(n_items: int, batch: int, seed: int, step: int) -> np.ndarray:
    """Items for 0-based ``step``; a pure function of its arguments so resume replays exactly."""
    spe = steps_per_epoch(n_items, batch)
    epoch, k = divmod(step, spe)
    perm = np.random.default_rng([seed, 7, epoch]).permutation(n_items)
    size = min(batch, n_items)
    return perm[k * size:(k + 1) * size]


def total_steps(cfg: ModelConfig, n_items: int) -> int:
    return cfg.steps if cfg.steps > 0 else cfg.epochs * steps_per_epoch(n_items, cfg.batch)


# -- training ------------------------------------------------------------

@dataclass
class TrainResult:
    params: ParamStore
    losses: list[tuple[int, float, list[float]]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def first_loss(self) -> float:
        return self.losses[0][1]

    @property
    def last_loss(self) -> float:
        return self.losses[-1][1]


def loss_on_batch(params: ParamStore, examples: list[Example], cfg: ModelConfig):
    noisy, target, mask = make_batch(examples, params.dtype)
    outs = forward(params, noisy, cfg)
    return total_loss(outs.estimates, target, cfg.loss_weights, mask)


def train(cfg: ModelConfig, manifest: Manifest, out_dir, resume=None,
          log: Callable[[str], None] | None = None) -> TrainResult:
    """Adam training; writes ``loss.tsv`` and checkpoints into ``out_dir``.

    Checkpoints land at every epoch boundary (``epoch_<n>.ggck``) and at the
    end (``final.ggck``). ``resume`` continues from a checkpoint written by
    this function, replaying the same batch order.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples = load_examples(manifest, cfg)
    n = len(examples)
    spe = steps_per_epoch(n, cfg.batch)
    n_steps = total_steps(cfg, n)
    if resume is not None:
        params, _ = checkpoint.load(resume)
        params = params.astype(np.dtype(cfg.dtype)) if params.dtype != np.dtype(cfg.dtype) else params
    else:
        params = model_init(cfg, cfg.seed)
    result = TrainResult(params)
    loss_path = out_dir / "loss.tsv"
    rows = []
    if resume is not None and loss_path.exists():
        rows = [r for r in loss_path.read_text().splitlines()[1:] if r and int(r.split("\t")[0]) <= params.step]
    header = "step\ttotal\t" + "\t".join(f"stage{q}" for q in range(1, cfg.Q + 1))
    cfg_text = cfg.to_text()
    with open(loss_path, "w") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(r + "\n")
        while params.step < n_steps:
            step = params.step
            batch = [examples[i] for i in batch_indices(n, cfg.batch, cfg.seed, step)]
            params.zero_grad()
            loss, per_stage = loss_on_batch(params, batch, cfg)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"loss became {value} at step {step + 1}")
            params.backward(loss)
            adam_step(params, cfg.lr)
            stages = [float(l.data) for l in per_stage]
            result.losses.append((params.step, value, stages))
            fh.write(f"{params.step}\t{value!r}\t" + "\t".join(repr(s) for s in stages) + "\n")
            fh.flush()
            if log:
                log(f"step {params.step}/{n_steps} loss {value:.5f}")
            if params.step % spe == 0:
                path = out_dir / f"epoch_{params.step // spe}.ggck"
                checkpoint.save(path, params, cfg_text)
                result.checkpoints.append(path)
    final = out_dir / "final.ggck"
    checkpoint.save(final, params, cfg_text)
    result.checkpoints.append(final)
    return result


def load_model(path) -> tuple[ParamStore, ModelConfig]:
    params, text = checkpoint.load(path)
    if text is None:
        raise checkpoint.CheckpointError(f"{path}: checkpoint carries no model config")
    cfg = ModelConfig.from_text(text)
    return params, cfg


# -- evaluation ----------------------------------------------------------

@dataclass
class EvalRow:
    index: int
    snr_db: float
    noisy_si_sdr: float
    si_sdr: float
    noisy_sdr: float
    sdr: float


def evaluate(params: ParamStore, cfg: ModelConfig, manifest: Manifest) -> list[EvalRow]:
    rows = []
    for k, spec in enumerate(manifest.items):
        noisy, clean = synth_pair(spec, manifest.chunk, manifest.root)
        est = enhance(params, noisy, cfg)
        rows.append(EvalRow(k, spec.snr_db, si_sdr(noisy, clean), si_sdr(est, clean),
                            sdr_energy(noisy, clean), sdr_energy(est, clean)))
    return rows


def write_report(rows: list[EvalRow], path) -> str:
    lines = ["utterance\tsnr_db\tnoisy_si_sdr\tsi_sdr\tnoisy_sdr\tsdr"]
    for r in rows:
        lines.append(f"{r.index:04d}\t{r.snr_db:.3f}\t{r.noisy_si_sdr:.4f}\t{r.si_sdr:.4f}"
                     f"\t{r.noisy_sdr:.4f}\t{r.sdr:.4f}")
    if rows:
        mean = lambda xs: float(np.mean(xs))  # noqa: E731
        lines.append(f"mean\t{mean([r.snr_db for r in rows]):.3f}"
                     f"\t{mean([r.noisy_si_sdr for r in rows]):.4f}\t{mean([r.si_sdr for r in rows]):.4f}"
                     f"\t{mean([r.noisy_sdr for r in rows]):.4f}\t{mean([r.sdr for r in rows]):.4f}")
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    return text
