from .tensor import Tensor, backward, no_grad, topo_order
from .optim import ParamStore, adam_step
from . import nn, checkpoint

__all__ = ["Tensor", "backward", "no_grad", "topo_order", "ParamStore", "adam_step", "nn", "checkpoint"]
