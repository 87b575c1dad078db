"""Named parameter storage and the Adam optimiser."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .tensor import Tensor, backward


class ParamStore:
    """Ordered collection of trainable tensors plus Adam moments.

    Insertion order is significant: it fixes initialisation draws and the
    checkpoint layout.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_elements(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def backward(self, loss: Tensor) -> list[Tensor]:
        """Backpropagate and give every unreached parameter an explicit zero gradient."""
        graph = backward(loss)
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        return graph

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(dtype)
        for k, t in self.params.items():
            out.add(k, t.data)
        out.step = self.step
        out.m = {k: v.astype(dtype) for k, v in self.m.items()}
        out.v = {k: v.astype(dtype) for k, v in self.v.items()}
        return out

    def copy(self) -> "ParamStore":
        return self.astype(self.dtype)


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamStore:
    """One bias-corrected Adam update, in place. Returns ``store``."""
    missing = [k for k, t in store.items() if t.grad is None]
    if missing:
        raise ValueError(f"adam_step: no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.items():
        g = p.grad
        if name not in store.m:
            store.m[name] = np.zeros_like(p.data)
            store.v[name] = np.zeros_like(p.data)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
    return store
