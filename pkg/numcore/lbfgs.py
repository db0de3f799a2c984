"""
Box-Constrained L-BFGS

Limited-memory BFGS with gradient projection onto a box and a projected
backtracking (Armijo) line search. Variables sitting on a bound with the
gradient pushing outward are frozen for the step; the search direction is
the two-loop recursion restricted to the free variables.

The objective is any callable x -> (f, grad) over arrays of a fixed shape.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from utils.errors import NumericError, StructuralError

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
SHRINK = 0.5
MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class BoxBounds:
    """Elementwise [lower, upper] box, same shape as the variable."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.shape(self.lower) != np.shape(self.upper):
            raise StructuralError("box bounds must share a shape")
        if np.any(self.lower > self.upper):
            raise StructuralError("box lower bound exceeds upper bound")

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, atol=0.0):
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    @classmethod
    def around(cls, center, radius, lower=0.0, upper=1.0):
        """Box of half-width radius around center, intersected with [lower, upper]."""
        return cls(np.maximum(lower, center - radius), np.minimum(upper, center + radius))


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    stopped_by_callback: bool


def _two_loop(grad, history):
    """Apply the L-BFGS inverse-Hessian approximation to grad."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def box_lbfgs_minimize(objective, x0, bounds, max_iter=100, tol=1e-6, callback=None, history_size=10):
    """
    Minimize a smooth function over a box.

    Args:
        objective: Callable x -> (f, grad) with grad shaped like x
        x0: Starting point; projected onto the box before use
        bounds: BoxBounds with the shape of x0
        max_iter: Maximum number of accepted iterations
        tol: Stop when the projected gradient's inf-norm is <= tol
        callback: Optional hook (iteration, x, f) -> bool; True stops the run
        history_size: Number of curvature pairs kept

    Returns:
        MinimizeResult with the final in-box iterate

    Raises:
        NumericError: if the objective is non-finite at the start point
    """
    shape = np.shape(x0)
    lower = np.asarray(bounds.lower, dtype=np.float64).ravel()
    upper = np.asarray(bounds.upper, dtype=np.float64).ravel()
    if lower.shape != (int(np.prod(shape)),):
        raise StructuralError(f"bounds shape {np.shape(bounds.lower)} does not match x0 {shape}")

    def evaluate(flat):
        f, g = objective(flat.reshape(shape))
        return float(f), np.asarray(g, dtype=np.float64).ravel()

    x = np.clip(np.asarray(x0, dtype=np.float64).ravel(), lower, upper)
    f, g = evaluate(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericError("objective is not finite at the starting point")

    history = deque(maxlen=history_size)
    iterations = 0
    converged = False
    stopped = False

    while iterations < max_iter:
        projected_grad = x - np.clip(x - g, lower, upper)
        if np.max(np.abs(projected_grad), initial=0.0) <= tol:
            converged = True
            break

        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free_grad = np.where(active, 0.0, g)
        direction = -_two_loop(free_grad, history)
        direction[active] = 0.0
        slope = np.dot(free_grad, direction)
        if not slope < 0:
            history.clear()
            direction = -free_grad
            slope = np.dot(free_grad, direction)

        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            candidate = np.clip(x + step * direction, lower, upper)
            f_new, g_new = evaluate(candidate)
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C1 * min(np.dot(g, candidate - x), 0.0):
                accepted = True
                break
            step *= SHRINK

        if accepted and not np.any(candidate != x):
            accepted = False
        if not accepted:
            if history:
                logger.debug("Line search failed; discarding curvature history")
                history.clear()
                continue
            logger.debug("Line search failed along steepest descent; stopping")
            break

        s = candidate - x
        y = g_new - g
        sy = np.dot(s, y)
        if sy > 1e-12 * max(np.dot(y, y), 1e-300):
            history.append((s, y, 1.0 / sy))

        x, f, g = candidate, f_new, g_new
        iterations += 1
        if callback is not None and callback(iterations, x.reshape(shape), f):
            stopped = True
            break

    return MinimizeResult(
        x=x.reshape(shape),
        fun=f,
        iterations=iterations,
        converged=converged,
        stopped_by_callback=stopped,
    )
