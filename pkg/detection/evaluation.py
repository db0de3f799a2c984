"""
Per-attack detector evaluation: one ROC per attack group and the
unweighted mean of their AUCs.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from recognition.verification import roc_curve
from utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class DetectorEvaluation:
    curves: dict = field(default_factory=dict)
    macro_auc: float = float("nan")

    @property
    def aucs(self):
        return {tag: curve.auc for tag, curve in self.curves.items()}


def macro_auc(aucs):
    values = list(aucs)
    if not values:
        raise DataError("macro AUC of an empty group")
    return float(np.mean(values))


def evaluate_detector(det, datasets):
    """
    Score each attack group and build its ROC.

    Args:
        det: Detector
        datasets: dict attack tag -> DetectorDataset holding that attack's
                  adversarial rows and the natural rows

    Returns:
        DetectorEvaluation

    Raises:
        DataError: on an empty group or a group without both labels
    """
    if not datasets:
        raise DataError("no attack groups to evaluate")
    evaluation = DetectorEvaluation()
    for tag in sorted(datasets):
        data = datasets[tag]
        if len(data) == 0:
            raise DataError(f"attack group '{tag}' is empty")
        if not data.has_both_labels():
            raise DataError(f"attack group '{tag}' lacks natural or adversarial rows")
        scores = det.scores(data.embeddings)
        evaluation.curves[tag] = roc_curve(scores[data.labels == 1], scores[data.labels == 0])
    evaluation.macro_auc = macro_auc(evaluation.aucs.values())
    logger.info(f"{det.arch} detector: macro AUC {evaluation.macro_auc:.3f} over {len(datasets)} attacks")
    return evaluation


def split_by_attack(data):
    """Per attack tag, that attack's adversarial rows plus every natural row."""
    natural = np.flatnonzero(data.labels == 0)
    groups = {}
    for tag in sorted({k for k, y in zip(data.attack_kinds, data.labels) if y == 1}):
        adv = [i for i, k in enumerate(data.attack_kinds) if k == tag and data.labels[i] == 1]
        groups[tag] = data.subset(np.concatenate([natural, adv]).astype(np.int64))
    return groups
