"""
Face Verification Evaluation

Provides the 1:1 verification toolchain:
- ROC curves and AUC over similarity scores (scikit-learn)
- Equal Error Rate threshold with linear interpolation
- Impersonation and evading scenario evaluation
- Seeded positive/negative pair sampling and ROC export

Author: TrajGuard Development Team
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np
from sklearn import metrics

from recognition.metrics import cosine_similarity
from utils.errors import DataError, PreconditionError
from utils.validators import ensure_finite

logger = logging.getLogger(__name__)

IMPERSONATION = "impersonation"
EVADING = "evading"
SCENARIOS = (IMPERSONATION, EVADING)


@dataclass
class RocCurve:
    """
    Operating points sorted by descending threshold.

    thresholds[0] is +inf (nothing accepted); a score s is accepted at
    threshold t when s >= t. fpr and tpr are therefore non-decreasing along
    the arrays, i.e. non-increasing in the threshold.
    """
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass
class VerificationPair:
    """A probe/partner pair and the adversarial crafted from the probe."""
    probe_id: str
    probe_class: int
    partner_id: str
    partner_class: int
    adversarial_id: str = ""


@dataclass
class VerificationOutcome:
    scenario: str
    pct_original: float
    pct_adversarial: float
    pairs: int = 0
    label: str = ""


def roc_curve(positives, negatives):
    """
    Sweep every distinct score as a threshold.

    Args:
        positives: Similarity scores of genuine pairs
        negatives: Similarity scores of impostor pairs

    Returns:
        RocCurve

    Raises:
        DataError: if either list is empty
        NumericError: if a score is NaN or infinite
    """
    pos = np.asarray(positives, dtype=np.float64).ravel()
    neg = np.asarray(negatives, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataError("ROC needs both positive and negative scores")
    ensure_finite(pos, "positive scores")
    ensure_finite(neg, "negative scores")

    labels = np.concatenate([np.ones(pos.size, dtype=int), np.zeros(neg.size, dtype=int)])
    scores = np.concatenate([pos, neg])
    fpr, tpr, thresholds = metrics.roc_curve(labels, scores, pos_label=1, drop_intermediate=False)
    auc = float(metrics.roc_auc_score(labels, scores))
    return RocCurve(thresholds=thresholds.astype(np.float64), fpr=fpr, tpr=tpr, auc=auc)


def pairwise_auc(positives, negatives):
    """P(positive > negative) + 0.5 * P(tie), by exhaustive pair counting."""
    pos = np.asarray(positives, dtype=np.float64).ravel()
    neg = np.asarray(negatives, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataError("AUC needs both positive and negative scores")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def eer_threshold(curve):
    """
    Threshold where the false acceptance rate equals the false rejection rate.

    FAR = fpr and FRR = 1 - tpr. Where several sweep points have FAR == FRR
    exactly, the midpoint of their thresholds is returned; otherwise the
    crossing is interpolated linearly between the two bracketing points.

    Returns:
        tuple: (threshold, eer)
    """
    far = curve.fpr
    frr = 1.0 - curve.tpr
    gap = far - frr
    thresholds = curve.thresholds

    exact = np.flatnonzero(gap == 0)
    if exact.size:
        finite = thresholds[exact][np.isfinite(thresholds[exact])]
        return float(finite.mean()), float(far[exact[0]])

    i = int(np.argmax(gap > 0))
    j = i - 1
    frac = -gap[j] / (gap[i] - gap[j])
    upper = thresholds[j] if np.isfinite(thresholds[j]) else thresholds[i]
    threshold = upper + frac * (thresholds[i] - upper)
    eer = far[j] + frac * (far[i] - far[j])
    return float(threshold), float(eer)


def _threat_side(scenario, scores, threshold):
    scores = np.asarray(scores, dtype=np.float64)
    if scenario == IMPERSONATION:
        return scores >= threshold
    return scores < threshold


def run_verification_scenario(kind, pairs, descriptors, adversarial_lookup, threshold, label=""):
    """
    Share of pairs on the attacker's side of the threshold before and after
    substituting the probe with its adversarial.

    Args:
        kind: 'impersonation' (negative pairs pushed above threshold) or
              'evading' (positive pairs pushed below threshold)
        pairs: list of VerificationPair
        descriptors: dict image id -> descriptor of natural images
        adversarial_lookup: dict adversarial id -> (descriptor, adversarial class)
        threshold: Verification threshold on cosine similarity
        label: Row label carried into the outcome (attack kind or delta)

    Returns:
        VerificationOutcome with percentages in [0, 100]

    Raises:
        DataError: if a pair or its adversarial violates the scenario's class rules
    """
    if kind not in SCENARIOS:
        raise PreconditionError(f"unknown verification scenario '{kind}'")
    if not pairs:
        raise DataError(f"{kind} scenario has no pairs")

    original, adversarial = [], []
    for pair in pairs:
        if pair.adversarial_id not in adversarial_lookup:
            raise DataError(f"no adversarial '{pair.adversarial_id}' for probe {pair.probe_id}")
        adv_descriptor, adv_class = adversarial_lookup[pair.adversarial_id]
        if kind == IMPERSONATION:
            consistent = pair.probe_class != pair.partner_class and adv_class == pair.partner_class
        else:
            consistent = pair.probe_class == pair.partner_class and adv_class != pair.partner_class
        if not consistent:
            raise DataError(f"{kind} pair ({pair.probe_id}, {pair.partner_id}) violates class rules")
        partner = descriptors[pair.partner_id]
        original.append(cosine_similarity(descriptors[pair.probe_id], partner))
        adversarial.append(cosine_similarity(adv_descriptor, partner))

    pct_original = 100.0 * float(np.mean(_threat_side(kind, original, threshold)))
    pct_adversarial = 100.0 * float(np.mean(_threat_side(kind, adversarial, threshold)))
    logger.info(f"{kind} {label}: {len(pairs)} pairs, original {pct_original:.1f}% -> adversarial {pct_adversarial:.1f}%")
    return VerificationOutcome(kind, pct_original, pct_adversarial, len(pairs), label)


def sample_verification_pairs(ids, labels, n_positive, n_negative, rng):
    """
    Seeded uniform sampling without replacement of genuine and impostor pairs.

    Returns:
        tuple: (positive pairs, negative pairs) as lists of (id_a, id_b)
    """
    ids = list(ids)
    labels = np.asarray(labels)
    first, second = np.triu_indices(len(ids), k=1)
    same = labels[first] == labels[second]
    chosen = []
    for mask, wanted in ((same, n_positive), (~same, n_negative)):
        candidates = np.flatnonzero(mask)
        take = min(int(wanted), candidates.size)
        picked = np.sort(rng.choice(candidates, size=take, replace=False)) if take else np.zeros(0, dtype=int)
        chosen.append([(ids[first[p]], ids[second[p]]) for p in picked])
    return chosen[0], chosen[1]


def export_roc_csv(path, curve):
    """Write threshold, fpr, tpr rows; the leading +inf threshold is written as "inf"."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            writer.writerow(["inf" if not np.isfinite(t) else f"{t:.6f}", f"{f:.6f}", f"{p:.6f}"])
