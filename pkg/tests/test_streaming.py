import threading

import numpy as np
import pytest

from glancegaze.config import ModelConfig
from glancegaze.dsp import WaveBuffer
from glancegaze.engine import enhance
from glancegaze.model import model_init
from glancegaze.streaming import (StreamError, StreamState, enhance_stream, flush, init_stream,
                                  stream_signal, stream_state_size)

from oracles import small_config


def _wave(seed, n):
    return WaveBuffer(np.random.default_rng(seed).uniform(-0.5, 0.5, n))


@pytest.mark.parametrize("recon", ["crm", "mag_rm", "com_rm", "phasen_rm"])
def test_stream_matches_offline(recon):
    cfg = small_config(recon=recon, P=2, Q=2)
    p = model_init(cfg, 1)
    # perturb norms and biases away from their neutral init so every path matters
    rng = np.random.default_rng(0)
    for name in p.params:
        if name.endswith((".beta", ".bias")) or name.endswith(".b"):
            p[name].data += 0.1 * rng.standard_normal(p[name].shape)
    x = _wave(2, 160 * 40)
    off = enhance(p, x, cfg).samples
    on = stream_signal(p, x, cfg)
    assert np.max(np.abs(off - on)) < 1e-9


def test_output_timing():
    cfg = small_config()
    state = init_stream(model_init(cfg, 0), cfg)
    x = _wave(3, 160 * 6).samples
    outs = [enhance_stream(state, x[k * 160:(k + 1) * 160], k) for k in range(6)]
    assert outs[0].size == 0
    assert all(o.size == 160 for o in outs[1:])
    assert flush(state).size == 160


def test_future_input_does_not_change_past_output():
    cfg = small_config()
    p = model_init(cfg, 0)
    x = _wave(4, 160 * 20).samples
    y = x.copy()
    y[160 * 12:] += 1.0
    a, b = stream_signal(p, x, cfg), stream_signal(p, y, cfg)
    # frames that never saw sample 1920 finish before sample 1920 - 160
    cut = 160 * 11
    assert a[:cut].tobytes() == b[:cut].tobytes()
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("kw", [{}, {"P": 2, "Q": 3}, {"recon": "mag_rm"}, {"recon": "com_rm"},
                                {"dilations": (1, 2, 4)}])
def test_state_size_closed_form(kw):
    cfg = small_config(**kw)
    assert StreamState(model_init(cfg, 0), cfg).num_floats() == stream_state_size(cfg)


def test_state_size_default():
    cfg = ModelConfig()
    assert StreamState(model_init(cfg, 0), cfg).num_floats() == stream_state_size(cfg)


def test_state_size_does_not_grow():
    cfg = small_config()
    state = init_stream(model_init(cfg, 0), cfg)
    x = _wave(5, 160 * 30).samples
    sizes = []
    for k in range(30):
        enhance_stream(state, x[k * 160:(k + 1) * 160], k)
        sizes.append(state.num_floats())
    assert len(set(sizes)) == 1


def test_rejects_bad_frames():
    cfg = small_config()
    state = init_stream(model_init(cfg, 0), cfg)
    with pytest.raises(StreamError, match="160 samples"):
        enhance_stream(state, np.zeros(100))
    enhance_stream(state, np.zeros(160), 0)
    with pytest.raises(StreamError, match="out-of-order"):
        enhance_stream(state, np.zeros(160), 5)


def test_rejects_instance_norm():
    cfg = small_config(norm="instance")
    with pytest.raises(StreamError, match="cumulative"):
        init_stream(model_init(cfg, 0), cfg)


def test_independent_states_in_threads():
    cfg = small_config()
    p = model_init(cfg, 0)
    waves = [_wave(s, 160 * 15) for s in range(3)]
    expected = [stream_signal(p, w, cfg) for w in waves]
    got = [None] * 3

    def run(i):
        got[i] = stream_signal(p, waves[i], cfg)

    threads = [threading.Thread(target=run, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for e, g in zip(expected, got):
        assert e.tobytes() == g.tobytes()
