from acvg.tensor.gradcheck import directional_check, grad_check
from acvg.tensor.optim import Adam, adam_step, clip_grad_norm
from acvg.tensor.params import ParamStore
from acvg.tensor.tensor import Tensor, backward, default_dtype, grad_enabled, no_grad, precision

__all__ = [
    "Adam",
    "ParamStore",
    "Tensor",
    "adam_step",
    "backward",
    "clip_grad_norm",
    "default_dtype",
    "directional_check",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "precision",
]
