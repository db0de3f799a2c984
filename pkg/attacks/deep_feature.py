"""
Deep-feature attack: move an image's final descriptor onto a guide's
descriptor inside a per-pixel box, stopping as soon as the kNN identifier
is fooled.
"""

import logging

import numpy as np

from attacks.types import DEEP_FEATURE, make_result
from numcore import BoxBounds, box_lbfgs_minimize
from recognition.identification import knn_identify
from recognition.metrics import pairwise_distance
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)


def nearest_other_class(descriptor, templates, source_class, metric):
    """Class whose template is closest to descriptor, excluding source_class."""
    dists = pairwise_distance(np.asarray(descriptor)[None, :], templates, metric)[0]
    dists[int(source_class)] = np.inf
    return int(np.argmin(dists))


def deep_feature_attack(model, source, guide, representatives, cfg):
    """
    Box-constrained descriptor matching guided by kNN identification.

    Targeted runs pull the source towards the guide image's descriptor and
    succeed when kNN returns the guide's class. Untargeted runs ignore any guide
    and pull towards the representative of the nearest other class, succeeding
    when kNN returns anything but the source class.

    Args:
        model: FeatureExtractor
        source: LabeledImage to perturb
        guide: LabeledImage of the target identity, or None when untargeted
        representatives: ClassRepresentatives providing the kNN gallery
        cfg: AttackConfig of kind DeepFeature (delta on the 0-255 scale)

    Returns:
        AdversarialResult; predicted_class is the kNN identity of the result

    Raises:
        PreconditionError: in targeted mode, on a missing guide or a guide of
            the source's class
    """
    if cfg.kind != DEEP_FEATURE:
        raise PreconditionError(f"attack config of kind {cfg.kind} passed to deep_feature_attack")
    if cfg.targeted:
        if guide is None:
            raise PreconditionError("targeted deep-feature attack needs a guide image")
        if int(guide.label) == int(source.label):
            raise PreconditionError(f"guide class {guide.label} equals the source class")
    elif guide is not None:
        logger.debug(f"deep-feature {source.image_id}: untargeted run ignores guide {guide.image_id}")
        guide = None

    templates = representatives.descriptor_templates()
    metric = representatives.metric
    k = cfg.knn_k

    def identify(z):
        return knn_identify(model.trace(z).descriptor, templates, k=k, metric=metric)

    x = np.asarray(source.pixels, dtype=np.float64)
    if guide is not None:
        target_class = int(guide.label)
        target_descriptor = model.trace(guide.pixels).descriptor
    else:
        target_class = nearest_other_class(model.trace(x).descriptor, templates, source.label, metric)
        target_descriptor = templates[target_class]

    def fooled(cls):
        return cls == target_class if cfg.targeted else cls != int(source.label)

    def objective(z):
        loss, grad = model.feature_loss_grad(z, target_descriptor)
        return loss, np.asarray(grad, dtype=np.float64)

    def stop_when_fooled(iteration, z, f):
        return fooled(identify(z))

    bounds = BoxBounds.around(x, cfg.pixel_delta)
    if fooled(identify(x)):
        result_x, iterations = x, 0
    else:
        solved = box_lbfgs_minimize(objective, x, bounds, max_iter=cfg.df_max_iterations,
                                    tol=cfg.solver_tol, callback=stop_when_fooled)
        result_x, iterations = solved.x, solved.iterations

    adv = bounds.project(result_x)
    predicted = identify(adv.astype(np.float32))
    success = fooled(predicted)
    logger.debug(f"deep-feature {source.image_id} -> class {target_class}: "
                 f"success={success} after {iterations} iterations")
    return make_result(x, adv, success, predicted, iterations, cfg, source,
                       target_class if cfg.targeted else None, linf_bound=cfg.pixel_delta,
                       guide_class=target_class)
