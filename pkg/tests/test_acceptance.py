"""Acceptance criteria 1-9, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed together in the
terminal summary (see ``conftest.py``) and also when this file is run as a
script.
"""

import functools
import time

import numpy as np
import pytest

from glancegaze.autodiff import ParamStore, Tensor
from glancegaze.autodiff.tensor import add, mul, tsum
from glancegaze.cli import main
from glancegaze.config import PQ_GRID, ModelConfig, toy_config
from glancegaze.crm import ReconMode, StageEstimate, crm_reconstruct, reconstruct_variant
from glancegaze.dsp import ComplexSpectrogram, WaveBuffer, compress, decompress, istft, stft
from glancegaze.engine import enhance, evaluate, train
from glancegaze.glance_gaze import gaze_forward, glance_forward, init_gaze, init_glance
from glancegaze.model import count_params, forward, model_init
from glancegaze.objective import sdr_energy, si_sdr, stage_loss, total_loss
from glancegaze.streaming import stream_signal
from glancegaze.synth import Manifest, make_dataset, mix_at_snr

from oracles import GRAD_TOL, SEEDS, check_grad, param_gradcheck, small_config

RESULTS: dict[int, str] = {}


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS[number] = f"criterion {number} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0]
                raise
            elapsed = time.perf_counter() - t0
            RESULTS[number] = f"criterion {number} PASS  {title}: {detail} ({elapsed:.1f} s)"
        return run
    return wrap


# -- 1 -------------------------------------------------------------------

TABLE_SIZES = {(1, 3): 4.31e6, (2, 3): 5.94e6, (3, 3): 7.58e6, (2, 1): 2.33e6, (2, 2): 4.14e6, (2, 4): 7.76e6}


@criterion(1, "parameter counts within 5% and ordered")
def test_criterion_1_parameter_counts():
    counts = {pq: count_params(ModelConfig(P=pq[0], Q=pq[1])) for pq in PQ_GRID}
    worst = 0.0
    for pq, target in TABLE_SIZES.items():
        dev = abs(counts[pq] - target) / target
        worst = max(worst, dev)
        assert dev <= 0.05, f"{pq}: {counts[pq]} vs {target:.0f} ({dev:.1%})"
    by_ours = sorted(TABLE_SIZES, key=counts.get)
    by_table = sorted(TABLE_SIZES, key=TABLE_SIZES.get)
    assert by_ours == by_table, f"ordering {by_ours} != {by_table}"
    return f"worst deviation {worst:.2%}"


# -- 2 -------------------------------------------------------------------

def _composed_stage(seed):
    cfg = small_config()
    s = ParamStore(np.float64)
    init_glance(s, np.random.default_rng(seed), "g", cfg)
    init_gaze(s, np.random.default_rng(seed + 1), "z", cfg)
    rng = np.random.default_rng(seed + 2)
    u = rng.standard_normal((1, 8, cfg.stage_in_dim))
    mag = 0.05 + np.abs(rng.standard_normal((1, 8, 161)))
    ph = rng.uniform(-np.pi, np.pi, (1, 8, 161))
    prev = StageEstimate(mag * np.cos(ph), mag * np.sin(ph))
    target = StageEstimate(rng.standard_normal((1, 8, 161)), rng.standard_normal((1, 8, 161)))

    def loss(store):
        gain = glance_forward(Tensor(u), store, "g", cfg)
        res = gaze_forward(Tensor(u), store, "z", cfg)
        return stage_loss(crm_reconstruct(prev, gain, res), target)
    return s, loss


@criterion(2, "finite-difference gradient checks")
def test_criterion_2_gradient_oracles():
    import test_autodiff
    t0 = time.perf_counter()
    worst = {}
    for name, (build, fn) in sorted(test_autodiff.PRIMITIVES.items()):
        worst[name] = max(check_grad(fn, build(np.random.default_rng(s)), s) for s in SEEDS)
    worst["composed_stage"] = max(param_gradcheck(*_composed_stage(s), s, per_param=1) for s in SEEDS)
    bad = {k: v for k, v in worst.items() if not v < GRAD_TOL}
    assert not bad, f"relative error >= {GRAD_TOL}: {bad}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 300, f"took {elapsed:.0f} s"
    return f"{len(worst)} graphs x {len(SEEDS)} seeds, worst {max(worst.values()):.1e}"


# -- 3 -------------------------------------------------------------------

@criterion(3, "STFT roundtrip and compression inverse")
def test_criterion_3_stft_roundtrip():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        x = rng.uniform(-1, 1, int(rng.integers(640, 16000)))
        y = istft(stft(WaveBuffer(x))).samples
        inner = slice(160, len(y) - 160)
        worst = max(worst, np.max(np.abs(y[inner] - x[inner])) / np.max(np.abs(x)))
    assert worst <= 1e-6, f"interior error {worst:.2e}"
    inv = 0.0
    for _ in range(50):
        spec = ComplexSpectrogram(rng.standard_normal((6, 161)), rng.standard_normal((6, 161)))
        back = decompress(compress(spec, 0.5))
        scale = np.maximum(spec.magnitude(), 1e-12)
        inv = max(inv, np.max(np.abs(back.real - spec.real) / scale), np.max(np.abs(back.imag - spec.imag) / scale))
    assert inv <= 1e-6, f"compress inverse error {inv:.2e}"
    return f"roundtrip {worst:.1e}, compress inverse {inv:.1e}"


# -- 4 -------------------------------------------------------------------

@criterion(4, "CRM identities and variant contracts")
def test_criterion_4_crm_identities():
    rng = np.random.default_rng(4)
    shape = (1, 20, 161)
    mag = np.abs(rng.standard_normal(shape))
    ph = rng.uniform(-np.pi, np.pi, shape)
    prev = StageEstimate(mag * np.cos(ph), mag * np.sin(ph))
    zeros = np.zeros(shape)
    out = crm_reconstruct(prev, np.ones(shape), (zeros, zeros))
    ident = max(np.max(np.abs(out.real.data - prev.real.data)), np.max(np.abs(out.imag.data - prev.imag.data)))
    assert ident <= 1e-6, f"identity error {ident:.2e}"
    fr, fi = rng.standard_normal(shape), rng.standard_normal(shape)
    out = crm_reconstruct(prev, zeros, (fr, fi))
    assert np.array_equal(out.real.data, fr) and np.array_equal(out.imag.data, fi), "G=0 does not give F"
    hand = crm_reconstruct(StageEstimate(np.array([[3.0]]), np.array([[4.0]])), np.array([[0.5]]),
                           (np.zeros((1, 1)), np.zeros((1, 1))))
    assert abs(hand.real.data[0, 0] - 1.5) <= 1e-9 and abs(hand.imag.data[0, 0] - 2.0) <= 1e-9
    # degenerate cases per variant
    ones = np.ones(shape)
    mag_id = reconstruct_variant(ReconMode.MAG_RM, prev, gain=ones)
    assert np.allclose(mag_id.real.data, prev.real.data, atol=1e-6)
    assert np.allclose(mag_id.imag.data, prev.imag.data, atol=1e-6)
    com = reconstruct_variant(ReconMode.COM_RM, prev, residual=(fr, fi))
    assert np.array_equal(com.real.data, fr) and np.array_equal(com.imag.data, fi)
    c, s = np.cos(ph), np.sin(ph)
    phs = reconstruct_variant(ReconMode.PHASEN_RM, prev, gain=ones, residual=(2 * c, 2 * s))
    assert np.allclose(phs.real.data, prev.real.data, atol=1e-6)
    assert np.allclose(phs.imag.data, prev.imag.data, atol=1e-6)
    crm = reconstruct_variant(ReconMode.CRM, prev, gain=ones, residual=(zeros, zeros))
    assert np.allclose(crm.real.data, prev.real.data, atol=1e-6)
    return f"identity error {ident:.1e}, hand case exact, 4 variants"


# -- 5 -------------------------------------------------------------------

STREAM_CONFIGS = [(p, q) for p in (1, 2) for q in (1, 2, 3)]


@criterion(5, "streaming equals offline; future input leaves the past untouched")
def test_criterion_5_streaming_and_causality():
    t0 = time.perf_counter()
    worst = 0.0
    x = WaveBuffer(np.random.default_rng(5).uniform(-0.5, 0.5, 48000))
    for P, Q in STREAM_CONFIGS:
        cfg = ModelConfig(P=P, Q=Q, dtype="float64")
        p = model_init(cfg, P * 10 + Q)
        rng = np.random.default_rng(Q)
        for name in p.params:
            if name.endswith((".beta", ".b")):
                p[name].data += 0.1 * rng.standard_normal(p[name].shape)
        diff = float(np.max(np.abs(enhance(p, x, cfg).samples - stream_signal(p, x, cfg))))
        worst = max(worst, diff)
        assert diff < 1e-5, f"({P},{Q}): max abs diff {diff:.2e}"
        spec = compress(stft(x), cfg.beta)
        re, im = spec.real.copy(), spec.imag.copy()
        a = forward(p, (re, im), cfg).final
        cut = 150
        re[cut + 1:] += rng.standard_normal(re[cut + 1:].shape)
        b = forward(p, (re, im), cfg).final
        assert a.real.data[:, :cut + 1].tobytes() == b.real.data[:, :cut + 1].tobytes(), f"({P},{Q}) leaks future"
        assert a.imag.data[:, :cut + 1].tobytes() == b.imag.data[:, :cut + 1].tobytes(), f"({P},{Q}) leaks future"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120, f"took {elapsed:.0f} s"
    return f"{len(STREAM_CONFIGS)} configs, worst diff {worst:.1e}, past bit-identical"


# -- 6 -------------------------------------------------------------------

@criterion(6, "multi-stage loss weights and hand cases")
def test_criterion_6_loss_contract():
    rng = np.random.default_rng(6)

    def est():
        return StageEstimate(rng.standard_normal((2, 5, 161)), rng.standard_normal((2, 5, 161)))
    target = est()
    stages = [est() for _ in range(3)]
    total, per = total_loss(stages, target)
    terms = []
    for s in stages:
        er, ei, tr, ti = s.real.data, s.imag.data, target.real.data, target.imag.data
        cell = (er - tr) ** 2 + (ei - ti) ** 2 + (np.hypot(er, ei) - np.hypot(tr, ti)) ** 2
        terms.append(0.5 * cell.mean())
    assert all(abs(float(l.data) - t) <= 1e-12 for l, t in zip(per, terms))
    expected = 0.1 * terms[0] + 0.1 * terms[1] + 1.0 * terms[2]
    assert abs(float(total.data) - expected) <= 1e-12
    one = StageEstimate(np.array([[0.0]]), np.array([[0.0]]))
    hand = stage_loss(StageEstimate(np.array([[3.0]]), np.array([[4.0]])), one)
    assert abs(float(hand.data) - 0.5 * (9 + 16 + 25)) <= 1e-12
    rot = stage_loss(StageEstimate(np.array([[4.0]]), np.array([[3.0]])),
                     StageEstimate(np.array([[3.0]]), np.array([[4.0]])))
    assert abs(float(rot.data) - 1.0) <= 1e-12
    return "weights (0.1, 0.1, 1.0) and hand cases to 1e-12"


# -- 7 -------------------------------------------------------------------

@criterion(7, "toy convergence")
def test_criterion_7_toy_convergence(tmp_path):
    t0 = time.perf_counter()
    cfg = toy_config(train_snr_low=0.0, train_snr_high=0.0, eval_snrs=(0.0,), steps=200, lr=5e-4)
    paths = make_dataset(cfg, 0, tmp_path / "data")
    train_set = Manifest.load(paths["train"])
    audio_s = len(train_set) * train_set.chunk / cfg.sample_rate
    res = train(cfg, train_set, tmp_path / "run")
    drop = 1.0 - res.last_loss / res.first_loss
    rows = evaluate(res.params, cfg, Manifest.load(paths["test"]))
    gain = float(np.mean([r.si_sdr - r.noisy_si_sdr for r in rows]))
    elapsed = time.perf_counter() - t0
    detail = (f"{audio_s:.0f} s audio, loss {res.first_loss:.3f} -> {res.last_loss:.3f} ({drop:.0%} drop), "
              f"held-out SI-SDR gain {gain:+.2f} dB")
    assert drop >= 0.5, detail
    assert gain >= 3.0, detail
    assert elapsed < 900, f"{detail}; took {elapsed:.0f} s"
    return detail


# -- 8 -------------------------------------------------------------------

@criterion(8, "metric properties")
def test_criterion_8_metrics():
    rng = np.random.default_rng(8)
    worst_si = 0.0
    for _ in range(20):
        s = rng.standard_normal(8000)
        e = s + 0.7 * rng.standard_normal(8000)
        for c in (1e-3, 0.37, 5.0, 1e3):
            worst_si = max(worst_si, abs(si_sdr(c * e, s) - si_sdr(e, s)))
    assert worst_si <= 1e-9, f"scale invariance {worst_si:.2e} dB"
    worst_k = 0.0
    for k in (-10.0, -5.0, 0.0, 2.5, 5.0, 20.0):
        clean = WaveBuffer(0.1 * rng.standard_normal(16000))
        noisy = mix_at_snr(clean, WaveBuffer(0.2 * rng.standard_normal(16000)), k)
        worst_k = max(worst_k, abs(sdr_energy(noisy, clean) - k))
    assert worst_k <= 1e-6, f"sdr_energy off by {worst_k:.2e} dB"
    return f"scale invariance {worst_si:.1e} dB, mixture SDR {worst_k:.1e} dB"


# -- 9 -------------------------------------------------------------------

@criterion(9, "deterministic training")
def test_criterion_9_determinism(tmp_path):
    cfg = toy_config(pool_size=6, train_items=8, val_items=2, test_items=2, steps=3, batch=4,
                     data_dir="data", out_dir="run")
    blobs = []
    for name in ("a", "b"):
        root = tmp_path / name
        root.mkdir()
        (root / "toy.cfg").write_text(cfg.to_text())
        assert main(["mix", "--config", str(root / "toy.cfg"), "--seed", "0", "--out", str(root / "data")]) == 0
        assert main(["train", "--config", str(root / "toy.cfg"), "--quiet"]) == 0
        blobs.append((root / "run/final.ggck").read_bytes())
    assert blobs[0] == blobs[1], "checkpoints differ"
    return f"two runs, {len(blobs[0])} identical checkpoint bytes"


if __name__ == "__main__":
    import sys
    rc = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(rc)
