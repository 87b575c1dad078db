"""Parameter initialisation and small building blocks shared by the model modules."""

from __future__ import annotations

import numpy as np

from .autodiff import ParamStore
from .autodiff import nn
from .autodiff.tensor import Tensor


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_conv2d(store: ParamStore, rng, name: str, cin: int, cout: int, kernel) -> None:
    kt, kf = kernel
    store.add(f"{name}.w", glorot(rng, (kt, kf, cin, cout), cin * kt * kf, cout * kt * kf))
    store.add(f"{name}.b", np.zeros(cout))


def init_conv_transpose(store: ParamStore, rng, name: str, cin: int, cout: int, kf: int) -> None:
    store.add(f"{name}.w", glorot(rng, (kf, cin, cout), cin * kf, cout * kf))
    store.add(f"{name}.b", np.zeros(cout))


def init_conv1d(store: ParamStore, rng, name: str, cin: int, cout: int, k: int) -> None:
    store.add(f"{name}.w", glorot(rng, (k, cin, cout), cin * k, cout * k))
    store.add(f"{name}.b", np.zeros(cout))


def init_linear(store: ParamStore, rng, name: str, n_in: int, n_out: int) -> None:
    store.add(f"{name}.w", glorot(rng, (n_in, n_out), n_in, n_out))
    store.add(f"{name}.b", np.zeros(n_out))


def init_norm(store: ParamStore, name: str, c: int) -> None:
    store.add(f"{name}.gamma", np.ones(c))
    store.add(f"{name}.beta", np.zeros(c))


def init_prelu(store: ParamStore, name: str, c: int) -> None:
    store.add(f"{name}.alpha", np.full(c, 0.25))


def init_glu2d(store: ParamStore, rng, name: str, cin: int, cout: int, kernel) -> None:
    init_conv2d(store, rng, f"{name}.lin", cin, cout, kernel)
    init_conv2d(store, rng, f"{name}.gate", cin, cout, kernel)


def init_glu1d(store: ParamStore, rng, name: str, n_in: int, n_out: int) -> None:
    init_linear(store, rng, f"{name}.lin", n_in, n_out)
    init_linear(store, rng, f"{name}.gate", n_in, n_out)


def norm(x: Tensor, p, name: str, kind: str, eps: float, joint_channels: bool = False) -> Tensor:
    if kind == "instance":
        return nn.instance_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"], eps)
    return nn.cumulative_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"], eps, joint_channels)


def act(x: Tensor, p, name: str) -> Tensor:
    return nn.prelu(x, p[f"{name}.alpha"])
