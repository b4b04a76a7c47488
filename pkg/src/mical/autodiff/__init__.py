from . import checkpoint
from .optim import SGD, Adam, OptimizerState, adam_step
from .tensor import *  # noqa: F401,F403
from .tensor import __all__ as _tensor_all


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Uniform draw in +/- sqrt(6 / (fan_in + fan_out))."""
    limit = (6.0 / (fan_in + fan_out)) ** 0.5
    return rng.uniform(-limit, limit, size=shape)


__all__ = list(_tensor_all) + [
    "Adam",
    "SGD",
    "OptimizerState",
    "adam_step",
    "checkpoint",
    "glorot_uniform",
]
