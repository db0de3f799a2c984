"""
Stochastic Optimizers

SGD (optional momentum) and Adam over named parameter sets, plus the
plateau scheduler that callers use to shrink the learning rate.

Parameter sets are dicts of name -> numpy array. Updates return a new dict;
the OptimizerState is the only mutable object and has a single owner.

Author: TrajGuard Development Team
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from utils.errors import NumericError, StructuralError
from utils.validators import ensure_same_shape

logger = logging.getLogger(__name__)

SGD = "SGD"
ADAM = "Adam"


@dataclass
class OptimizerState:
    """Learning rate, step counter and per-parameter moment buffers."""
    kind: str
    lr: float
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def _check_pairing(params, grads):
    if set(params) != set(grads):
        raise StructuralError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    for name, value in params.items():
        ensure_same_shape(grads[name], value, f"gradient for '{name}'")


def sgd_update(params, grads, state):
    """
    One SGD step: p <- p - lr * (momentum buffer or gradient).

    Args:
        params: dict of parameter arrays
        grads: dict of gradient arrays with matching names and shapes
        state: OptimizerState of kind SGD

    Returns:
        dict: Updated parameters
    """
    _check_pairing(params, grads)
    updated = {}
    for name, value in params.items():
        direction = grads[name]
        if state.momentum:
            buf = state.first_moment.get(name)
            buf = direction.copy() if buf is None else state.momentum * buf + direction
            state.first_moment[name] = buf
            direction = buf
        updated[name] = (value - state.lr * direction).astype(value.dtype, copy=False)
    state.step += 1
    return updated


def adam_update(params, grads, state):
    """
    One Adam step with bias-corrected moments.

    Args:
        params: dict of parameter arrays
        grads: dict of gradient arrays with matching names and shapes
        state: OptimizerState of kind Adam

    Returns:
        dict: Updated parameters

    Raises:
        NumericError: if any gradient is non-finite
    """
    _check_pairing(params, grads)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for '{name}'")

    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    updated = {}
    for name, value in params.items():
        g = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / bias1
        v_hat = v / bias2
        updated[name] = (value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(value.dtype, copy=False)
    return updated


class PlateauScheduler:
    """
    Shrinks an optimizer's learning rate when the loss stops improving.

    A plateau is `patience` consecutive epochs in which the loss fails to
    improve on the best seen so far by at least `threshold` (relative).
    """

    def __init__(self, state, factor=0.5, patience=5, threshold=1e-4, min_lr=1e-8):
        self.state = state
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = None
        self.bad_epochs = 0

    def step(self, loss):
        """
        Record an epoch loss.

        Returns:
            bool: True if the learning rate was reduced at this call
        """
        if self.best is None or loss < self.best * (1.0 - self.threshold):
            self.best = loss
            self.bad_epochs = 0
            return False

        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return False

        old_lr = self.state.lr
        self.state.lr = max(old_lr * self.factor, self.min_lr)
        self.bad_epochs = 0
        logger.info(f"Loss plateaued at {loss:.6g}; learning rate {old_lr:.3g} -> {self.state.lr:.3g}")
        return True
