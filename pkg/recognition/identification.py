"""
kNN Identification

Assigns an identity to a probe descriptor from a gallery of templates.
"""

import logging
from collections import defaultdict

import numpy as np

from recognition.metrics import L2, pairwise_distance
from utils.errors import DataError, PreconditionError

logger = logging.getLogger(__name__)


def knn_identify(descriptor, templates, k=1, metric=L2, labels=None):
    """
    Majority class among the k nearest templates.

    Ties between classes are broken by the smaller summed distance of their
    voters, then by the lower class id.

    Args:
        descriptor: Probe vector (D,)
        templates: (M, D) gallery
        k: Number of neighbours, 1 <= k <= M
        metric: 'L2' or 'cosine'
        labels: Class of each template (defaults to the row index)

    Returns:
        int: Class id
    """
    templates = np.atleast_2d(np.asarray(templates))
    if templates.shape[0] == 0:
        raise DataError("knn_identify needs at least one template")
    if not 1 <= k <= templates.shape[0]:
        raise PreconditionError(f"k={k} outside [1, {templates.shape[0]}]")
    labels = np.arange(templates.shape[0]) if labels is None else np.asarray(labels)

    dists = pairwise_distance(np.asarray(descriptor)[None, :], templates, metric)[0]
    nearest = np.argsort(dists, kind="stable")[:k]
    votes = defaultdict(int)
    sums = defaultdict(float)
    for idx in nearest:
        votes[int(labels[idx])] += 1
        sums[int(labels[idx])] += float(dists[idx])
    return min(votes, key=lambda c: (-votes[c], sums[c], c))


def identification_accuracy(descriptors, true_labels, templates, k=1, metric=L2, labels=None):
    """Fraction of descriptors that knn_identify assigns to their true class."""
    descriptors = np.atleast_2d(descriptors)
    if descriptors.shape[0] == 0:
        return 0.0
    hits = sum(int(knn_identify(d, templates, k, metric, labels) == int(y))
               for d, y in zip(descriptors, true_labels))
    return hits / descriptors.shape[0]


def assigned_centroid_distances(descriptors, assigned_classes, centroids):
    """
    Euclidean distance from each descriptor to the centroid of its assigned class.

    Args:
        descriptors: (N, D)
        assigned_classes: (N,) class ids the system gives each descriptor
        centroids: (C, D) descriptor centroids

    Returns:
        np.ndarray of N distances
    """
    descriptors = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if descriptors.shape[0] == 0:
        return np.zeros(0)
    chosen = np.asarray(centroids, dtype=np.float64)[np.asarray(assigned_classes, dtype=np.int64)]
    return np.sqrt(((descriptors - chosen) ** 2).sum(axis=1))
