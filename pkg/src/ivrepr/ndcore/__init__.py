from .autodiff import (
    NonFiniteError,
    Tape,
    Tensor2,
    Var,
    max_relative_error,
    numeric_grad,
    value_and_grad,
)
from .layers import Dense, RffLayer, dense_forward, mlp_forward, rff_forward
from .optim import EarlyStopping, RmspropState, rmsprop_step

__all__ = [
    "Dense",
    "EarlyStopping",
    "NonFiniteError",
    "RffLayer",
    "RmspropState",
    "Tape",
    "Tensor2",
    "Var",
    "dense_forward",
    "max_relative_error",
    "mlp_forward",
    "numeric_grad",
    "rff_forward",
    "rmsprop_step",
    "value_and_grad",
]
