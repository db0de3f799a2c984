"""Finite-difference gradient oracle used by the gradient checks."""

import numpy as np

from utils.validators import ensure_same_shape


def finite_diff_grad(objective, x, h=1e-5):
    """
    Central-difference gradient of a scalar function.

    Args:
        objective: Callable x -> float (scalar)
        x: Point of evaluation (any shape)
        h: Step size, > 0

    Returns:
        np.ndarray shaped like x
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        f_plus = float(objective(x))
        flat[i] = saved - h
        f_minus = float(objective(x))
        flat[i] = saved
        grad_flat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-12):
    """Inf-norm of the difference relative to the larger of the two inf-norms."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    ensure_same_shape(analytic, numeric, "analytic and numeric gradients")
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)
