"""
Class Representatives

Per-layer, per-class centroids (means) or medoids (the member with the
smallest total distance to its classmates) of pooled activations.

Author: TrajGuard Development Team
"""

import logging
from dataclasses import dataclass

import numpy as np

from recognition.metrics import L2, check_metric, pairwise_distance
from utils.errors import DataError, StructuralError

logger = logging.getLogger(__name__)

CENTROID = "centroid"
MEDOID = "medoid"
REPRESENTATIVE_KINDS = (CENTROID, MEDOID)


@dataclass
class ClassRepresentatives:
    """layers[b] is a (C, d_b) array; row c represents class c at block b."""
    kind: str
    metric: str
    layers: list

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def num_classes(self):
        return self.layers[0].shape[0]

    def descriptor_templates(self):
        """Final-layer vectors: one descriptor template per class."""
        return self.layers[-1]

    @property
    def tag(self):
        return f"{self.kind}-{self.metric}"


def _pooled_layers(traces):
    pooled = [np.asarray(p, dtype=np.float64) for p in traces.pooled]
    if not pooled or pooled[0].ndim != 2:
        raise StructuralError("representatives need a batched trace (one row per image)")
    return pooled


def _class_members(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    members = []
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise DataError(f"class {c} has no members")
        members.append(idx)
    return members


def compute_centroids(traces, labels, num_classes, metric=L2):
    """
    Arithmetic mean of each class's pooled vectors at every layer.

    Args:
        traces: Batched ForwardTrace
        labels: Class id per trace row
        num_classes: C
        metric: Metric tag carried to the embedding step

    Returns:
        ClassRepresentatives of kind 'centroid'

    Raises:
        DataError: if a class has no members
    """
    check_metric(metric)
    pooled = _pooled_layers(traces)
    members = _class_members(labels, num_classes)
    layers = [np.stack([layer[idx].mean(axis=0) for idx in members]) for layer in pooled]
    return ClassRepresentatives(kind=CENTROID, metric=metric, layers=layers)


def medoid_index(vectors, metric=L2):
    """Index of the row minimising total distance to all rows (lowest index on ties)."""
    totals = pairwise_distance(vectors, vectors, metric).sum(axis=1)
    return int(np.argmin(totals))


def compute_medoids(traces, labels, num_classes, metric=L2):
    """
    Per-layer, per-class medoids under metric.

    Returns:
        ClassRepresentatives of kind 'medoid'
    """
    check_metric(metric)
    pooled = _pooled_layers(traces)
    members = _class_members(labels, num_classes)
    layers = []
    for layer in pooled:
        rows = [layer[idx][medoid_index(layer[idx], metric)] for idx in members]
        layers.append(np.stack(rows))
    logger.debug(f"Computed {metric} medoids for {num_classes} classes over {len(pooled)} layers")
    return ClassRepresentatives(kind=MEDOID, metric=metric, layers=layers)


def compute_representatives(traces, labels, num_classes, kind, metric):
    if kind == CENTROID:
        return compute_centroids(traces, labels, num_classes, metric)
    if kind == MEDOID:
        return compute_medoids(traces, labels, num_classes, metric)
    raise DataError(f"unknown representative kind '{kind}'")
