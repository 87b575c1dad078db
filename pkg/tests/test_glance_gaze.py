import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glancegaze.autodiff import ParamStore, Tensor
from glancegaze.autodiff.tensor import add, mul, tsum
from glancegaze.config import ModelConfig
from glancegaze.glance_gaze import (block_param_count, gaze_forward, glance_forward, init_gaze, init_glance,
                                    init_stcm, receptive_field, stcm_forward)

from oracles import GRAD_TOL, SEEDS, param_gradcheck, small_config

CFG = small_config()


def _u(seed, T=6, B=1):
    return np.random.default_rng(seed).standard_normal((B, T, CFG.stage_in_dim))


def _store(init, prefix, seed=0, cfg=CFG):
    s = ParamStore(np.float64)
    init(s, np.random.default_rng(seed), prefix, cfg)
    return s


def test_receptive_field_one_group_is_35():
    assert receptive_field(ModelConfig()) == 35
    assert receptive_field(ModelConfig(), groups=2) == 69


def test_stcm_zero_branch_is_identity():
    s = _store(init_stcm, "t")
    for name in ("t.out.w", "t.out.b"):
        s[name].data[...] = 0.0
    x = Tensor(np.random.default_rng(1).standard_normal((1, 7, CFG.D)))
    np.testing.assert_array_equal(stcm_forward(x, s, "t", 5, CFG).data, x.data)


def test_stcm_sees_exactly_its_window():
    """A dilation-9 S-TCM output at t depends on t-18, t-9 and t only through its conv taps."""
    s = _store(init_stcm, "t")
    x = np.random.default_rng(2).standard_normal((1, 30, CFG.D))
    base = stcm_forward(Tensor(x), s, "t", 9, CFG).data
    x2 = x.copy()
    x2[:, 29] += 1.0
    assert np.array_equal(stcm_forward(Tensor(x2), s, "t", 9, CFG).data[:, :29], base[:, :29])


def test_glance_range_and_zero_head():
    s = _store(init_glance, "g")
    g = glance_forward(Tensor(10 * _u(0)), s, "g", CFG).data
    assert g.shape == (1, 6, 161) and np.all((g > 0) & (g < 1))
    s["g.head.w"].data[...] = 0.0
    s["g.head.b"].data[...] = 0.0
    assert np.all(glance_forward(Tensor(_u(1)), s, "g", CFG).data == 0.5)


def test_gaze_zero_heads_and_shapes():
    s = _store(init_gaze, "z")
    fr, fi = gaze_forward(Tensor(_u(0, B=2)), s, "z", CFG)
    assert fr.shape == fi.shape == (2, 6, 161)
    for part in ("real", "imag"):
        s[f"z.{part}.head.w"].data[...] = 0.0
        s[f"z.{part}.head.b"].data[...] = 0.0
    fr, fi = gaze_forward(Tensor(_u(1)), s, "z", CFG)
    assert not fr.data.any() and not fi.data.any()


def test_gaze_paths_share_one_compressor_glance_has_its_own():
    s = ParamStore(np.float64)
    init_glance(s, np.random.default_rng(0), "q.glance", CFG)
    init_gaze(s, np.random.default_rng(0), "q.gaze", CFG)
    glus = sorted({n.rsplit(".", 3)[0] for n in s.params if ".glu." in n})
    assert glus == ["q.gaze", "q.glance"]


def test_default_glu_input_width():
    assert ModelConfig(tail_layer=False).stage_in_dim == 576 + 322


@pytest.mark.parametrize("cfg", [CFG, ModelConfig(), ModelConfig(P=3)])
def test_block_param_count_matches_store(cfg):
    for init, paths in ((init_glance, 1), (init_gaze, 2)):
        s = ParamStore(np.float32)
        init(s, np.random.default_rng(0), "b", cfg)
        assert s.num_elements() == block_param_count(cfg, paths)


@settings(max_examples=10, deadline=None)
@given(t=st.integers(0, 8), seed=st.integers(0, 1000))
def test_stage_is_causal(t, seed):
    s = ParamStore(np.float64)
    init_glance(s, np.random.default_rng(seed), "g", CFG)
    init_gaze(s, np.random.default_rng(seed), "z", CFG)
    u = _u(seed, T=10)

    def run(a):
        fr, fi = gaze_forward(Tensor(a), s, "z", CFG)
        return glance_forward(Tensor(a), s, "g", CFG).data, fr.data, fi.data

    before = run(u)
    u[:, t + 1:] += 1.0
    after = run(u)
    for a, b in zip(before, after):
        assert np.array_equal(a[:, :t + 1], b[:, :t + 1])


def test_stcm_gradient():
    def build(seed):
        s = _store(init_stcm, "t", seed)
        x = np.random.default_rng(seed + 1).standard_normal((1, 12, CFG.D))
        proj = np.random.default_rng(seed + 2).standard_normal((1, 12, CFG.D))
        return s, lambda st_: tsum(mul(stcm_forward(Tensor(x), st_, "t", 2, CFG), proj))

    assert max(param_gradcheck(*build(s), s, per_param=3) for s in SEEDS) < GRAD_TOL


def test_full_stage_gradient():
    def build(seed):
        s = ParamStore(np.float64)
        init_glance(s, np.random.default_rng(seed), "g", CFG)
        init_gaze(s, np.random.default_rng(seed + 1), "z", CFG)
        u = _u(seed + 2, T=8)
        rng = np.random.default_rng(seed + 3)
        pg, pr, pi = (rng.standard_normal((1, 8, 161)) for _ in range(3))

        def loss(st_):
            g = glance_forward(Tensor(u), st_, "g", CFG)
            fr, fi = gaze_forward(Tensor(u), st_, "z", CFG)
            return add(add(tsum(mul(g, pg)), tsum(mul(fr, pr))), tsum(mul(fi, pi)))
        return s, loss

    assert max(param_gradcheck(*build(s), s, per_param=1) for s in SEEDS) < GRAD_TOL
