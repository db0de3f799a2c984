"""
Box-constrained L-BFGS attack: minimise c * ||r||_2 + CE(x + r, t) subject to
x + r in [0, 1], with c tuned by bracketing and bisection over successful constants.
"""

import logging

import numpy as np

from attacks.types import LBFGS, check_target, make_result
from model.extractor import CROSS_ENTROPY
from numcore import BoxBounds, box_lbfgs_minimize
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

NORM_SMOOTHING = 1e-12
BRACKET_TOLERANCE = 1e-3


def lbfgs_objective(model, x, target, const):
    """c * ||z - x||_2 + CE(z, target) and its gradient in z."""
    def objective(z):
        r = z - x
        norm = np.sqrt(np.sum(r * r) + NORM_SMOOTHING)
        loss, grad = model.loss_and_input_grad(z, target, CROSS_ENTROPY)
        return const * norm + loss, const * r / norm + np.asarray(grad, dtype=np.float64)
    return objective


def lbfgs_attack(model, image, target, cfg):
    """
    Targeted L-BFGS attack.

    The constant is bracketed first: it grows tenfold while runs succeed and
    shrinks tenfold while they fail. Once a successful and a failing constant
    are both known, the bracket is bisected until its relative width drops
    below BRACKET_TOLERANCE or cfg.lbfgs_search_steps runs are spent. The
    smallest successful perturbation over all runs is returned.

    Raises:
        PreconditionError: if target equals the true class
    """
    if cfg.kind != LBFGS:
        raise PreconditionError(f"attack config of kind {cfg.kind} passed to lbfgs_attack")
    if target is None or int(target) == int(image.label):
        raise PreconditionError("L-BFGS attack needs a target different from the true class")
    targeted_cfg = cfg if cfg.targeted else type(cfg)(**{**cfg.to_dict(), "targeted": True})
    target = check_target(targeted_cfg, image, target, model.num_classes)

    x = np.asarray(image.pixels, dtype=np.float64)
    bounds = BoxBounds(np.zeros_like(x), np.ones_like(x))
    const = cfg.lbfgs_initial_const
    # largest successful and smallest failing constant seen so far
    lower, upper = None, None
    best_adv, best_l2 = None, np.inf
    last_adv = x
    total_iters = 0

    for search_step in range(cfg.lbfgs_search_steps):
        result = box_lbfgs_minimize(lbfgs_objective(model, x, target, const), x, bounds,
                                    max_iter=cfg.lbfgs_max_iterations, tol=cfg.solver_tol)
        total_iters += result.iterations
        last_adv = result.x
        succeeded = model.predict(result.x) == target
        if succeeded:
            l2 = float(np.sqrt(np.sum((result.x - x) ** 2)))
            if l2 < best_l2:
                best_adv, best_l2 = result.x.copy(), l2
            lower = const if lower is None else max(lower, const)
        else:
            upper = const if upper is None else min(upper, const)

        if upper is None:
            const *= 10.0
        elif lower is None:
            const /= 10.0
        elif upper - lower <= BRACKET_TOLERANCE * upper:
            logger.debug(f"lbfgs {image.image_id}: bracket closed at c={lower:.6g} after {search_step + 1} runs")
            break
        else:
            const = (lower + upper) / 2.0
        logger.debug(f"lbfgs {image.image_id}: step {search_step} success={succeeded} next c={const:.3g}")

    adv = best_adv if best_adv is not None else last_adv
    predicted = model.predict(adv)
    final_const = lower if lower is not None else const
    return make_result(x, adv, best_adv is not None, predicted, total_iters, targeted_cfg, image, target,
                       linf_bound=None, final_const=final_const)
