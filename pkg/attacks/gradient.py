"""
Sign- and momentum-gradient attacks: FGSM, BIM and MI-FGSM.

Each attack ascends J: the cross-entropy of the true class for untargeted
runs, the negated cross-entropy of the target class for targeted runs.
"""

import logging

import numpy as np

from attacks.types import FGSM, BIM, MIFGSM, check_target, classifier_success, make_result
from model.extractor import CROSS_ENTROPY, NEGATED_CROSS_ENTROPY
from numcore import ops
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)


def _ascent_grad(model, x, label, target):
    if target is None:
        return model.loss_and_input_grad(x, label, CROSS_ENTROPY)[1]
    return model.loss_and_input_grad(x, target, NEGATED_CROSS_ENTROPY)[1]


def _check_kind(cfg, *kinds):
    if cfg.kind not in kinds:
        raise PreconditionError(f"attack config of kind {cfg.kind} passed to {'/'.join(kinds)}")


def fgsm(model, image, cfg, target=None):
    """
    One signed-gradient step of size epsilon.

    Args:
        model: Classifier exposing loss_and_input_grad and predict
        image: LabeledImage
        cfg: AttackConfig of kind FGSM
        target: Target class for targeted runs

    Returns:
        AdversarialResult
    """
    _check_kind(cfg, FGSM)
    target = check_target(cfg, image, target, model.num_classes)
    x = np.asarray(image.pixels, dtype=np.float64)
    grad = _ascent_grad(model, x, image.label, target)
    adv = np.clip(x + cfg.epsilon * ops.sign(grad), 0.0, 1.0)
    predicted = model.predict(adv)
    success = classifier_success(predicted, image.label, target)
    return make_result(x, adv, success, predicted, 1, cfg, image, target, linf_bound=cfg.epsilon)


def bim(model, image, cfg, target=None):
    """
    Iterated FGSM with step alpha, clipped to the epsilon box and [0, 1].

    Stops at the first successful iterate when cfg.early_stop is set.
    """
    _check_kind(cfg, BIM)
    target = check_target(cfg, image, target, model.num_classes)
    x = np.asarray(image.pixels, dtype=np.float64)
    lower = np.maximum(0.0, x - cfg.epsilon)
    upper = np.minimum(1.0, x + cfg.epsilon)
    alpha = cfg.step_size

    adv = x.copy()
    predicted = model.predict(adv)
    used = 0
    for n in range(1, cfg.iterations + 1):
        grad = _ascent_grad(model, adv, image.label, target)
        adv = np.clip(adv + alpha * ops.sign(grad), lower, upper)
        used = n
        predicted = model.predict(adv)
        if cfg.early_stop and classifier_success(predicted, image.label, target):
            break

    success = classifier_success(predicted, image.label, target)
    return make_result(x, adv, success, predicted, used, cfg, image, target, linf_bound=cfg.epsilon)


def mifgsm(model, image, cfg, target=None):
    """
    Momentum iterative attack.

    The velocity accumulates L1-normalised gradients with decay mu; each step
    moves an L2 distance of alpha = epsilon / T along velocity / ||velocity||_2,
    so T steps move at most epsilon in L2.
    Iterates are clipped to the epsilon box and [0, 1].
    """
    _check_kind(cfg, MIFGSM)
    target = check_target(cfg, image, target, model.num_classes)
    x = np.asarray(image.pixels, dtype=np.float64)
    lower = np.maximum(0.0, x - cfg.epsilon)
    upper = np.minimum(1.0, x + cfg.epsilon)
    alpha = cfg.step_size

    velocity = np.zeros_like(x)
    adv = x.copy()
    predicted = model.predict(adv)
    used = 0
    for n in range(1, cfg.iterations + 1):
        grad = _ascent_grad(model, adv, image.label, target)
        l1 = np.sum(np.abs(grad))
        normalized = grad / l1 if l1 > 0 else np.zeros_like(grad)
        velocity = cfg.momentum * velocity + normalized
        l2 = np.sqrt(np.sum(velocity * velocity))
        if l2 > 0:
            adv = np.clip(adv + alpha * velocity / l2, lower, upper)
        used = n
        predicted = model.predict(adv)
        if cfg.early_stop and classifier_success(predicted, image.label, target):
            break

    success = classifier_success(predicted, image.label, target)
    return make_result(x, adv, success, predicted, used, cfg, image, target, linf_bound=cfg.epsilon,
                       velocity_l2=float(np.sqrt(np.sum(velocity * velocity))))
