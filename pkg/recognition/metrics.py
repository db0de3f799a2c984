"""
Vector distances used by kNN, representatives and trajectory embeddings.
"""

import numpy as np

from utils.errors import NumericError, PreconditionError, StructuralError

L2 = "L2"
COSINE = "cosine"
METRICS = (L2, COSINE)

NORM_FLOOR = 1e-12


def check_metric(metric):
    if metric not in METRICS:
        raise PreconditionError(f"unknown metric '{metric}', expected one of {METRICS}")
    return metric


def cosine_similarity(a, b):
    """
    Cosine of the angle between two vectors.

    Raises:
        NumericError: if either vector has zero norm
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise StructuralError(f"cosine_similarity: lengths {a.size} and {b.size} differ")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise NumericError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def pairwise_distance(a, b, metric=L2):
    """
    Distance matrix between the rows of a (n, d) and b (m, d).

    Cosine distance is 1 - cosine similarity; zero rows are treated as
    orthogonal to everything (distance 1).
    """
    check_metric(metric)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise StructuralError(f"pairwise_distance: dimensions {a.shape[1]} and {b.shape[1]} differ")
    if metric == L2:
        # Direct differences keep self-distances exactly 0; the Gram form is for large blocks.
        if a.shape[0] * b.shape[0] * a.shape[1] <= 4_000_000:
            return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        return np.sqrt(np.maximum(sq, 0.0))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.maximum(na, NORM_FLOOR)[:, None] * np.maximum(nb, NORM_FLOOR)[None, :]
    sim = np.clip(a @ b.T / denom, -1.0, 1.0)
    return 1.0 - sim


def distance(a, b, metric=L2):
    return float(pairwise_distance(a, b, metric)[0, 0])
