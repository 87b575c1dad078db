import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glancegaze.autodiff import ParamStore, Tensor
from glancegaze.autodiff.nn import conv_out_size
from glancegaze.autodiff.tensor import mul, tsum
from glancegaze.config import ConfigError, ModelConfig
from glancegaze.fem import (fem_forward, fem_param_count, fem_shape_chain, gated_unit, init_fem, init_rel,
                            init_unet_block, rel_forward, unet_block, unet_widths)

from oracles import GRAD_TOL, SEEDS, param_gradcheck, small_config

CFG = small_config()


def _zero(store, prefix):
    for name, t in store.items():
        if name.startswith(prefix) and not name.endswith((".gamma", ".alpha")):
            t.data[...] = 0.0


def test_frequency_chain_iterates_size_formula():
    w, seen = 161, []
    for _ in range(4):
        w = conv_out_size(w, 3, 2)
        seen.append(w)
    assert seen == [80, 39, 19, 9]
    assert ModelConfig().freq_chain == [161, 80, 39, 19, 9, 4]
    assert ModelConfig(tail_layer=False).freq_chain == [161, 80, 39, 19, 9]


def test_default_shape_chain_and_literal_chain():
    assert fem_shape_chain(ModelConfig(), 7) == [(2, 7, 161), (64, 7, 80), (64, 7, 39), (64, 7, 19),
                                                 (64, 7, 9), (64, 7, 4), (256, 7)]
    literal = ModelConfig(tail_layer=False)
    assert fem_shape_chain(literal, 7)[-1] == (576, 7)
    assert literal.stage_in_dim == 898 and ModelConfig().stage_in_dim == 578


@pytest.mark.parametrize("tail", [True, False])
def test_fem_output_shape(tail):
    cfg = small_config(tail_layer=tail)
    store = ParamStore(np.float64)
    init_fem(store, np.random.default_rng(0), cfg)
    x = np.random.default_rng(1).standard_normal((2, 5, 161, 2))
    h = fem_forward(Tensor(x), store, cfg)
    assert h.shape == (2, 5, cfg.feat_dim)
    assert cfg.feat_dim == cfg.channels * (4 if tail else 9)


def test_fem_param_count_matches_store():
    for cfg in (CFG, ModelConfig(), ModelConfig(tail_layer=False)):
        store = ParamStore(np.float32)
        init_fem(store, np.random.default_rng(0), cfg)
        assert store.num_elements() == fem_param_count(cfg)


def test_fem_rejects_bad_input():
    store = ParamStore(np.float64)
    init_fem(store, np.random.default_rng(0), CFG)
    with pytest.raises(ValueError, match="\\[B, T, F, 2\\]"):
        fem_forward(Tensor(np.zeros((1, 3, 161, 3))), store, CFG)
    with pytest.raises(ValueError, match="bins"):
        fem_forward(Tensor(np.zeros((1, 3, 160, 2))), store, CFG)


def test_unet_block_preserves_shape_default_width():
    cfg = ModelConfig(channels=6)
    store = ParamStore(np.float64)
    init_unet_block(store, np.random.default_rng(0), "u", 6, 4, 3)
    x = Tensor(np.random.default_rng(1).standard_normal((1, 10, 80, 6)))
    assert unet_block(x, store, "u", 4, cfg).shape == (1, 10, 80, 6)
    assert unet_widths(80, 4) == [80, 39, 19, 9, 4]


@pytest.mark.parametrize("width, depth", [(80, 4), (39, 3), (19, 2), (9, 1), (12, 2), (7, 1)])
def test_unet_block_shape_any_width(width, depth):
    store = ParamStore(np.float64)
    init_unet_block(store, np.random.default_rng(0), "u", 3, depth, 3)
    x = Tensor(np.random.default_rng(1).standard_normal((2, 3, width, 3)))
    assert unet_block(x, store, "u", depth, small_config(channels=3)).shape == x.shape


def test_unet_block_zero_params_gives_bias_then_zero():
    store = ParamStore(np.float64)
    init_unet_block(store, np.random.default_rng(0), "u", 4, 1, 3)
    _zero(store, "u")
    x = Tensor(np.random.default_rng(1).standard_normal((1, 4, 9, 4)))
    assert not unet_block(x, store, "u", 1, CFG).data.any()
    store["u.dec1.b"].data[...] = [0.5, -1.0, 2.0, 0.0]
    np.testing.assert_array_equal(unet_block(x, store, "u", 1, CFG).data,
                                  np.broadcast_to([0.5, -1.0, 2.0, 0.0], (1, 4, 9, 4)))


def test_rel_with_zero_unet_equals_gated_branch():
    store = ParamStore(np.float64)
    init_rel(store, np.random.default_rng(0), "r", 2, CFG, 4)
    _zero(store, "r.unet")
    x = Tensor(np.random.default_rng(1).standard_normal((1, 6, 161, 2)))
    y = rel_forward(x, store, "r", CFG, 4)
    assert y.shape == (1, 6, 80, 4)
    np.testing.assert_array_equal(y.data, gated_unit(x, store, "r", CFG).data)


def test_zero_input_zero_bias_gives_zero_features():
    store = ParamStore(np.float64)
    init_fem(store, np.random.default_rng(0), CFG)
    assert not fem_forward(Tensor(np.zeros((1, 4, 161, 2))), store, CFG).data.any()


def test_unet_gradient_depth_two():
    cfg = small_config(channels=3)

    def build(seed):
        store = ParamStore(np.float64)
        init_unet_block(store, np.random.default_rng(seed), "u", 3, 2, 3)
        x = np.random.default_rng(seed + 100).standard_normal((1, 3, 19, 3))
        proj = np.random.default_rng(seed + 200).standard_normal((1, 3, 19, 3))
        return store, lambda s: tsum(mul(unet_block(Tensor(x), s, "u", 2, cfg), proj))

    worst = max(param_gradcheck(*build(s), s) for s in SEEDS)
    assert worst < GRAD_TOL


@settings(max_examples=8, deadline=None)
@given(t=st.integers(0, 4), seed=st.integers(0, 1000))
def test_fem_is_causal(t, seed):
    store = ParamStore(np.float64)
    init_fem(store, np.random.default_rng(seed), CFG)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((1, 6, 161, 2))
    y0 = fem_forward(Tensor(x), store, CFG).data
    x[:, t + 1:] = rng.standard_normal(x[:, t + 1:].shape)
    y1 = fem_forward(Tensor(x), store, CFG).data
    assert np.array_equal(y0[:, :t + 1], y1[:, :t + 1])
    assert not np.array_equal(y0[:, t + 1:], y1[:, t + 1:])


def test_config_rejects_unet_too_deep():
    with pytest.raises(ConfigError, match="unet_depths"):
        ModelConfig(unet_depths=(4, 3, 2, 6)).validate()
