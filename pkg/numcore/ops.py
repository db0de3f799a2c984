"""
Dense Array Operations

Forward and backward passes for the fixed layer set used by the feature
extractor and the detectors:
- 3x3 convolution with edge-replicated padding
- 2x2 stride-2 average downsampling
- global average pooling
- ReLU, sigmoid, softmax and their numerically stable log forms

Arrays are NCHW numpy arrays; every function preserves the input dtype.

Author: TrajGuard Development Team
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.errors import StructuralError


def conv2d_forward(x, weight, bias):
    """
    Same-size convolution with edge-replicated padding.

    Edge padding keeps a constant input constant, which makes the layer's
    response to flat images computable from the kernel sums alone.

    Args:
        x: Input batch (N, C, H, W)
        weight: Kernels (O, C, k, k), k odd
        bias: Per-output-channel bias (O,)

    Returns:
        tuple: (output (N, O, H, W), cache for conv2d_backward)
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise StructuralError(f"conv2d: input {x.shape} incompatible with kernels {weight.shape}")
    k = weight.shape[-1]
    p = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge")
    cols = sliding_window_view(padded, (k, k), axis=(2, 3))
    out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out), (cols, weight, x.shape)


def conv2d_backward(grad_out, cache):
    """
    Backward pass of conv2d_forward.

    Args:
        grad_out: Upstream gradient (N, O, H, W)
        cache: Value returned by conv2d_forward

    Returns:
        tuple: (grad_x, grad_weight, grad_bias)
    """
    cols, weight, x_shape = cache
    k = weight.shape[-1]
    p = k // 2
    _, _, h, w = x_shape

    grad_weight = np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))

    # (N, H, W, C, k, k)
    grad_cols = np.tensordot(grad_out, weight, axes=([1], [0]))
    grad_padded = np.zeros((x_shape[0], x_shape[1], h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            grad_padded[:, :, i:i + h, j:j + w] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return _fold_edge_padding(grad_padded, p), grad_weight, grad_bias


def _fold_edge_padding(grad_padded, p):
    """Route gradients of replicated border cells back onto the border they copy."""
    if p == 0:
        return grad_padded
    g = grad_padded
    inner = g[:, :, p:-p, p:-p].copy()
    inner[:, :, 0, :] += g[:, :, :p, p:-p].sum(axis=2)
    inner[:, :, -1, :] += g[:, :, -p:, p:-p].sum(axis=2)
    inner[:, :, :, 0] += g[:, :, p:-p, :p].sum(axis=3)
    inner[:, :, :, -1] += g[:, :, p:-p, -p:].sum(axis=3)
    inner[:, :, 0, 0] += g[:, :, :p, :p].sum(axis=(2, 3))
    inner[:, :, 0, -1] += g[:, :, :p, -p:].sum(axis=(2, 3))
    inner[:, :, -1, 0] += g[:, :, -p:, :p].sum(axis=(2, 3))
    inner[:, :, -1, -1] += g[:, :, -p:, -p:].sum(axis=(2, 3))
    return inner


def avg_pool2_forward(x):
    """2x2 stride-2 average downsampling of an (N, C, H, W) batch with even H, W."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise StructuralError(f"avg_pool2: spatial size {h}x{w} is not even")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avg_pool2_backward(grad_out):
    """Backward pass of avg_pool2_forward."""
    return np.repeat(np.repeat(grad_out, 2, axis=2), 2, axis=3) * 0.25


def global_avg_pool_forward(x):
    """Average each channel map to one value: (N, C, H, W) -> (N, C)."""
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(grad_out, spatial_shape):
    """Backward pass of global_avg_pool_forward."""
    h, w = spatial_shape
    return np.broadcast_to(grad_out[:, :, None, None] / (h * w), grad_out.shape + (h, w)).copy()


def relu(x):
    return np.maximum(x, 0)


def sigmoid(z):
    """Logistic function, stable for large |z|."""
    return np.exp(-np.logaddexp(0, -np.asarray(z)))


def softplus(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0, z)


def log_softmax(logits):
    """Row-wise log-softmax of a (N, C) array."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def sign(x):
    """Elementwise sign with sign(0) = 0."""
    return np.sign(x)
