"""Momentum SGD.

The update is applied literally as

    v  <- momentum * v + grad
    w  <- w - lr * v

i.e. the learning rate scales the velocity at update time instead of being
folded into it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError


@dataclass
class MomentumState:
    velocity: np.ndarray
    momentum: float = 0.9
    lr: float = 1e-2

    @classmethod
    def zeros_like(cls, param, momentum=0.9, lr=1e-2):
        return cls(np.zeros_like(param, dtype=np.float64), momentum, lr)


def sgd_momentum_step(param, grad, state):
    """Return the updated parameter; ``state.velocity`` is replaced in place."""
    if not (param.shape == grad.shape == state.velocity.shape):
        raise ShapeError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, velocity {state.velocity.shape}")
    if not np.all(np.isfinite(grad)):
        bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
        raise NonFiniteError(f"non-finite gradient ({bad} entries); step aborted")
    v = state.momentum * state.velocity + grad
    state.velocity = v
    return param - v * state.lr


class MomentumSGD:
    """Keeps one :class:`MomentumState` per parameter id."""

    def __init__(self, lr, momentum=0.9):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self.states = {}

    def step(self, params, grads):
        """Apply one update to every parameter in ``grads``; returns the new values."""
        for pid in sorted(grads):
            if not np.all(np.isfinite(grads[pid])):
                raise NonFiniteError(f"non-finite gradient for {pid}; step aborted")
        updated = {}
        for pid in sorted(grads):
            state = self.states.get(pid)
            if state is None:
                state = self.states[pid] = MomentumState.zeros_like(params[pid], self.momentum, self.lr)
            state.lr = self.lr
            state.momentum = self.momentum
            updated[pid] = sgd_momentum_step(params[pid], grads[pid], state)
        return updated

    def step_network(self, net, grads):
        for pid, value in self.step(net.parameters(), grads).items():
            net.set_parameter(pid, value)
