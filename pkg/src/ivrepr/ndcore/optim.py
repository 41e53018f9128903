"""RMSprop without momentum, plus a patience-based early-stopping tracker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RmspropState:
    lr: float = 5e-4
    alpha: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 1e-6
    square_avg: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return rmsprop_step(self, params, grads)


def rmsprop_step(
    state: RmspropState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Return updated parameters; accumulators in ``state`` are updated in place.

    s <- alpha*s + (1-alpha)*g^2 with g including the L2 term, then
    w <- w - lr*g/(sqrt(s)+eps).
    """
    out = {}
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        if state.weight_decay:
            g = g + state.weight_decay * w
        s = state.square_avg.get(name)
        if s is None:
            s = np.zeros_like(w)
        s = state.alpha * s + (1.0 - state.alpha) * g * g
        state.square_avg[name] = s
        out[name] = w - state.lr * g / (np.sqrt(s) + state.eps)
    return out


@dataclass
class EarlyStopping:
    patience: int
    best: float = np.inf
    best_epoch: int = -1
    bad_epochs: int = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record a validation loss; True when it is a new best."""
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience
