"""
Trajectory embeddings: per-block distances from an image's pooled
activations to every class representative.
"""

import logging
from dataclasses import dataclass

import numpy as np

from model.checkpoint import read_tensors, write_tensors
from recognition.metrics import pairwise_distance
from utils.errors import StructuralError

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryEmbedding:
    """B x C matrix; row b holds the distances of block b to each class."""
    matrix: np.ndarray
    metric: str
    kind: str

    @property
    def flat(self):
        return self.matrix.ravel()

    @property
    def shape(self):
        return self.matrix.shape

    def __len__(self):
        return self.matrix.size


def _check_layers(pooled, reps):
    if len(pooled) != reps.num_layers:
        raise StructuralError(f"trace has {len(pooled)} blocks, representatives have {reps.num_layers}")
    for b, (vec, layer) in enumerate(zip(pooled, reps.layers)):
        if np.shape(vec)[-1] != layer.shape[1]:
            raise StructuralError(f"block {b}: activation width {np.shape(vec)[-1]} != representative width {layer.shape[1]}")


def embed_trajectory(trace, reps):
    """
    Embed one forward trace.

    Args:
        trace: Single-image ForwardTrace
        reps: ClassRepresentatives with one layer per block

    Returns:
        TrajectoryEmbedding
    """
    _check_layers(trace.pooled, reps)
    rows = [pairwise_distance(np.asarray(vec)[None, :], layer, reps.metric)[0]
            for vec, layer in zip(trace.pooled, reps.layers)]
    return TrajectoryEmbedding(np.maximum(np.stack(rows), 0.0), reps.metric, reps.kind)


def embed_traces(traces, reps):
    """
    Embed a batched trace.

    Returns:
        np.ndarray (N, B, C)
    """
    _check_layers(traces.pooled, reps)
    blocks = [pairwise_distance(vec, layer, reps.metric) for vec, layer in zip(traces.pooled, reps.layers)]
    return np.maximum(np.stack(blocks, axis=1), 0.0)


def embed_images(model, images, reps, batch_size=256):
    """Forward a stack of images in batches and embed every trace."""
    images = np.asarray(images)
    if len(images) == 0:
        return np.zeros((0, reps.num_layers, reps.num_classes))
    chunks = [embed_traces(model.trace(images[i:i + batch_size]), reps) for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


def save_embeddings(path, keys, embeddings):
    """Store one record per key ('<image id>|<attack tag>')."""
    write_tensors(path, {key: emb for key, emb in zip(keys, embeddings)})
    logger.info(f"Saved {len(keys)} embeddings to {path}")


def load_embeddings(path):
    tensors = read_tensors(path)
    return list(tensors), np.stack(list(tensors.values())) if tensors else np.zeros((0, 0, 0))
