"""Gradient-descent optimizers operating in place on parameter tensors."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = OptimizerState(
            learning_rate=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=eps,
            first_moment=[np.zeros_like(p.values) for p in self.params],
            second_moment=[np.zeros_like(p.values) for p in self.params],
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.state, self.params)


def adam_step(state, params):
    """Apply one Adam update to ``params`` in place and advance ``state.step``."""
    for p in params:
        if p.grad is None:
            raise ValueError("parameter has no gradient; call backward() first")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.values -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


class SGD:
    def __init__(self, params, lr=1e-2):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ValueError("parameter has no gradient; call backward() first")
            p.values -= self.lr * p.grad
