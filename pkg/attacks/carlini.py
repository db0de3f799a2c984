"""
Logit-margin optimisation attacks (L2 with tanh change of variables, and
the thresholded L-infinity variant).

Both work on any model exposing num_classes, logits(image) and
logit_vjp(image, grad_logits).

Author: TrajGuard Development Team
"""

import logging

import numpy as np

from attacks.types import CWL2, CWLINF, check_target, make_result
from numcore import ADAM, OptimizerState, adam_update
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

TANH_EDGE = 1.0 - 1e-6
UNBOUNDED_CONST = 1e9


def logit_margin(logits, label, target):
    """
    Margin the attack drives below -confidence.

    Targeted: max_{i != t} Z_i - Z_t. Untargeted: Z_y - max_{i != y} Z_i.

    Returns:
        tuple: (margin, d margin / d logits)
    """
    logits = np.asarray(logits, dtype=np.float64)
    anchor = target if target is not None else label
    others = logits.copy()
    others[anchor] = -np.inf
    rival = int(np.argmax(others))
    grad = np.zeros_like(logits)
    if target is not None:
        margin = logits[rival] - logits[anchor]
        grad[rival], grad[anchor] = 1.0, -1.0
    else:
        margin = logits[anchor] - logits[rival]
        grad[anchor], grad[rival] = 1.0, -1.0
    return float(margin), grad


def _margin_and_input_grad(model, adv, label, target):
    logits = model.logits(adv)
    margin, grad_logits = logit_margin(logits, label, target)
    _, grad = model.logit_vjp(adv, grad_logits)
    return margin, np.asarray(grad, dtype=np.float64), logits


def to_tanh_space(x):
    return np.arctanh(np.clip(2.0 * np.asarray(x, dtype=np.float64) - 1.0, -TANH_EDGE, TANH_EDGE))


def from_tanh_space(w):
    return 0.5 * (np.tanh(w) + 1.0)


def _next_const(const, lower, upper, succeeded, const_range):
    if succeeded:
        upper = min(upper, const)
        const = (lower + upper) / 2.0 if upper < UNBOUNDED_CONST else const / 2.0
    else:
        lower = max(lower, const)
        const = (lower + upper) / 2.0 if upper < UNBOUNDED_CONST else const * 10.0
    return float(np.clip(const, *const_range)), lower, upper


def cw_l2(model, image, cfg, target=None):
    """
    Minimise ||x_adv - x||^2 + c * max(margin, -k) with x_adv = (tanh(w) + 1) / 2.

    An outer binary search tunes c; each inner run is Adam on w for up to
    cfg.cw_max_iterations steps. Returns the successful iterate with the
    smallest L2 distortion, or the iterate with the lowest margin when no
    run succeeded.
    """
    if cfg.kind != CWL2:
        raise PreconditionError(f"attack config of kind {cfg.kind} passed to cw_l2")
    target = check_target(cfg, image, target, model.num_classes)
    x = np.asarray(image.pixels, dtype=np.float64)
    w0 = to_tanh_space(x)
    k = cfg.confidence

    const = cfg.cw_initial_const
    lower, upper = 0.0, np.inf
    best_adv, best_l2, best_pred = None, np.inf, None
    fallback_adv, fallback_margin = x, np.inf
    total_iters = 0

    for search_step in range(cfg.cw_binary_steps):
        params = {"w": w0.copy()}
        state = OptimizerState(kind=ADAM, lr=cfg.cw_learning_rate)
        prev_loss = np.inf
        succeeded = False
        check_every = max(cfg.cw_max_iterations // 10, 1)

        for it in range(cfg.cw_max_iterations):
            w = params["w"]
            adv = from_tanh_space(w)
            margin, grad_margin, logits = _margin_and_input_grad(model, adv, image.label, target)
            total_iters += 1
            diff = adv - x
            l2_sq = float(np.sum(diff * diff))
            loss = l2_sq + const * max(margin, -k)

            if margin < -k:
                succeeded = True
                if l2_sq < best_l2:
                    best_adv, best_l2, best_pred = adv.copy(), l2_sq, int(np.argmax(logits))
            if margin < fallback_margin:
                fallback_adv, fallback_margin = adv.copy(), margin

            if cfg.abort_early and it % check_every == 0:
                if loss > prev_loss * 0.9999:
                    break
                prev_loss = loss

            grad_adv = 2.0 * diff + (const * grad_margin if margin > -k else 0.0)
            grad_w = grad_adv * 0.5 * (1.0 - np.tanh(w) ** 2)
            params = adam_update(params, {"w": grad_w}, state)

        logger.debug(f"cw_l2 {image.image_id}: step {search_step} c={const:.3g} success={succeeded}")
        const, lower, upper = _next_const(const, lower, upper, succeeded, cfg.cw_const_range)

    if best_adv is not None:
        return make_result(x, best_adv, True, best_pred, total_iters, cfg, image, target)
    predicted = model.predict(fallback_adv)
    return make_result(x, fallback_adv, False, predicted, total_iters, cfg, image, target)


def linf_penalty(delta, tau):
    """Hinge sum over pixels of max(|delta_i| - tau, 0)."""
    return float(np.sum(np.maximum(np.abs(delta) - tau, 0.0)))


def cw_linf(model, image, cfg, target=None):
    """
    Minimise c * max(margin, -k) + sum_i max(|delta_i| - tau, 0).

    For the current tau, c starts at cfg.cw_initial_const and doubles until
    an inner run reaches an adversarial with every |delta_i| <= tau. Each such
    success shrinks tau by cfg.tau_decay and warm-starts the next round. The
    whole run is capped at cfg.cw_max_iterations gradient evaluations.
    """
    if cfg.kind != CWLINF:
        raise PreconditionError(f"attack config of kind {cfg.kind} passed to cw_linf")
    target = check_target(cfg, image, target, model.num_classes)
    x = np.asarray(image.pixels, dtype=np.float64)
    k = cfg.confidence
    low_box, high_box = -x, 1.0 - x

    tau = cfg.tau0
    delta = np.zeros_like(x)
    const = cfg.cw_initial_const
    best = None
    total_iters = 0
    budget = cfg.cw_max_iterations

    while total_iters < budget:
        found = False
        while total_iters < budget and const <= cfg.cw_const_range[1]:
            params = {"delta": delta.copy()}
            state = OptimizerState(kind=ADAM, lr=cfg.cw_learning_rate)
            for _ in range(cfg.cw_linf_inner_steps):
                if total_iters >= budget:
                    break
                current = params["delta"]
                margin, grad_margin, logits = _margin_and_input_grad(model, x + current, image.label, target)
                total_iters += 1
                excess = np.abs(current) - tau
                if margin < -k and np.all(excess <= 0):
                    found = True
                    delta = current
                    best = (x + current, tau, int(np.argmax(logits)))
                    break
                grad = (const * grad_margin if margin > -k else 0.0) + np.where(excess > 0, np.sign(current), 0.0)
                updated = adam_update(params, {"delta": grad}, state)
                params = {"delta": np.clip(updated["delta"], low_box, high_box)}
            if found:
                break
            const *= 2.0

        if not found:
            break
        if np.max(np.abs(delta), initial=0.0) < tau:
            tau *= cfg.tau_decay
        else:
            break

    if best is not None:
        adv, bound, predicted = best
        return make_result(x, adv, True, predicted, total_iters, cfg, image, target, linf_bound=bound)
    adv = x + delta
    predicted = model.predict(adv)
    return make_result(x, adv, False, predicted, total_iters, cfg, image, target, linf_bound=tau)
