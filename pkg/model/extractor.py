"""
Convolutional Feature Extractor

A stack of B blocks {3x3 conv, ReLU, 2x2 stride-2 average downsample}; each
block's output is globally average-pooled into one vector per block. The last
pooled vector is the descriptor, and a linear head maps it to C logits.

Images are (H, W, 1) arrays in [0, 1]; batches are (N, H, W, 1).
All gradients are hand-written for this fixed topology.

Author: TrajGuard Development Team
"""

import logging
from dataclasses import dataclass

import numpy as np

from numcore import ops
from utils.errors import DataError, PreconditionError, StructuralError
from utils.validators import ensure_class_id, ensure_pixel_range, ensure_shape

logger = logging.getLogger(__name__)

CROSS_ENTROPY = "cross-entropy"
NEGATED_CROSS_ENTROPY = "negated-cross-entropy"
LOSS_KINDS = (CROSS_ENTROPY, NEGATED_CROSS_ENTROPY)

DEFAULT_CHANNELS = (8, 16, 32, 64)


@dataclass
class LabeledImage:
    """An image with its class label and dataset id."""
    pixels: np.ndarray
    label: int
    image_id: str = ""

    def __post_init__(self):
        ensure_pixel_range(self.pixels, f"image {self.image_id or '?'}")


@dataclass
class ForwardTrace:
    """
    Activations collected during a forward pass.

    For a single image, pooled holds B vectors and descriptor/logits are 1-D.
    For a batch every entry gains a leading N axis.
    """
    pooled: list
    descriptor: np.ndarray
    logits: np.ndarray

    def row(self, i):
        """Trace of the i-th image of a batched trace."""
        return ForwardTrace([p[i] for p in self.pooled], self.descriptor[i], self.logits[i])


class FeatureExtractor:
    """Convolutional extractor exposing per-block pooled activations."""

    def __init__(self, params, image_size):
        self.params = {name: np.asarray(value) for name, value in params.items()}
        self.image_size = int(image_size)
        self.num_blocks = sum(1 for name in self.params if name.endswith(".weight") and name.startswith("block"))
        if self.num_blocks == 0 or "head.weight" not in self.params:
            raise StructuralError("parameter set lacks blocks or a classifier head")
        if self.image_size % (2 ** self.num_blocks):
            raise StructuralError(f"image size {self.image_size} not divisible by 2^{self.num_blocks}")
        self.channels = tuple(self.params[f"block{b}.weight"].shape[0] for b in range(self.num_blocks))
        head = self.params["head.weight"]
        if head.shape[0] != self.channels[-1]:
            raise StructuralError(f"head expects {head.shape[0]} features, last block has {self.channels[-1]}")

    @classmethod
    def create(cls, num_classes=10, channels=DEFAULT_CHANNELS, image_size=32, seed=0, dtype=np.float32):
        """
        Build a freshly initialised extractor (He-normal kernels, zero biases).

        Args:
            num_classes: Classifier head width C
            channels: Output channels per block; its length is B
            image_size: Side of the square grayscale input
            seed: Initialisation seed
            dtype: Parameter dtype

        Returns:
            FeatureExtractor
        """
        if num_classes < 2:
            raise DataError("a classifier needs at least two classes")
        rng = np.random.default_rng(seed)
        params = {}
        in_ch = 1
        for b, out_ch in enumerate(channels):
            std = np.sqrt(2.0 / (in_ch * 9))
            params[f"block{b}.weight"] = (rng.standard_normal((out_ch, in_ch, 3, 3)) * std).astype(dtype)
            params[f"block{b}.bias"] = np.zeros(out_ch, dtype=dtype)
            in_ch = out_ch
        params["head.weight"] = (rng.standard_normal((in_ch, num_classes)) * np.sqrt(1.0 / in_ch)).astype(dtype)
        return cls(params, image_size)

    @property
    def num_classes(self):
        return self.params["head.weight"].shape[1]

    @property
    def descriptor_dim(self):
        return self.channels[-1]

    @property
    def dtype(self):
        return self.params["head.weight"].dtype

    def astype(self, dtype):
        """Copy of the model with every parameter cast to dtype."""
        return FeatureExtractor({k: v.astype(dtype) for k, v in self.params.items()}, self.image_size)

    def with_params(self, params):
        return FeatureExtractor(params, self.image_size)

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------

    def _as_batch(self, images):
        images = np.asarray(images, dtype=self.dtype)
        single = images.ndim == 3
        if single:
            images = images[None]
        expected = (self.image_size, self.image_size, 1)
        if images.ndim != 4 or images.shape[1:] != expected:
            raise StructuralError(f"expected image shape {expected}, got {images.shape[-3:]}")
        return images.transpose(0, 3, 1, 2), single

    def _forward(self, x):
        caches = []
        pooled = []
        h = x
        for b in range(self.num_blocks):
            z, conv_cache = ops.conv2d_forward(h, self.params[f"block{b}.weight"], self.params[f"block{b}.bias"])
            a = ops.relu(z)
            d = ops.avg_pool2_forward(a)
            pooled.append(ops.global_avg_pool_forward(d))
            caches.append((conv_cache, z > 0, d.shape[2:]))
            h = d
        descriptor = pooled[-1]
        logits = descriptor @ self.params["head.weight"]
        return pooled, logits, caches

    def _backward(self, pooled, caches, grad_logits=None, grad_descriptor=None, want_params=False):
        """
        Backpropagate from logits and/or descriptor to the input.

        Returns:
            tuple: (grad wrt NCHW input, dict of parameter grads or None)
        """
        descriptor = pooled[-1]
        grad_desc = np.zeros_like(descriptor) if grad_descriptor is None else grad_descriptor
        param_grads = {} if want_params else None
        if grad_logits is not None:
            grad_desc = grad_desc + grad_logits @ self.params["head.weight"].T
            if want_params:
                param_grads["head.weight"] = descriptor.T @ grad_logits
        elif want_params:
            param_grads["head.weight"] = np.zeros_like(self.params["head.weight"])

        grad_h = None
        for b in reversed(range(self.num_blocks)):
            conv_cache, mask, spatial = caches[b]
            grad_d = ops.global_avg_pool_backward(grad_desc if b == self.num_blocks - 1 else
                                                  np.zeros_like(pooled[b]), spatial)
            if grad_h is not None:
                grad_d = grad_d + grad_h
            grad_z = ops.avg_pool2_backward(grad_d) * mask
            grad_h, grad_w, grad_b = ops.conv2d_backward(grad_z, conv_cache)
            if want_params:
                param_grads[f"block{b}.weight"] = grad_w
                param_grads[f"block{b}.bias"] = grad_b
        return grad_h, param_grads

    def trace(self, images):
        """
        Forward pass.

        Args:
            images: (H, W, 1) image or (N, H, W, 1) batch

        Returns:
            ForwardTrace (batched when the input is a batch)
        """
        x, single = self._as_batch(images)
        pooled, logits, _ = self._forward(x)
        if single:
            return ForwardTrace([p[0] for p in pooled], pooled[-1][0], logits[0])
        return ForwardTrace(pooled, pooled[-1], logits)

    def predict(self, images):
        """Argmax class of an image (int) or a batch (array)."""
        logits = self.trace(images).logits
        return int(np.argmax(logits)) if logits.ndim == 1 else np.argmax(logits, axis=1)

    def logits(self, image):
        return self.trace(image).logits

    def logit_vjp(self, image, grad_logits):
        """
        Logits of one image and the input gradient of <grad_logits, logits>.

        Returns:
            tuple: (logits (C,), grad shaped like image)
        """
        x, _ = self._as_batch(image)
        pooled, logits, caches = self._forward(x)
        grad_x, _ = self._backward(pooled, caches, grad_logits=np.asarray(grad_logits, dtype=self.dtype)[None])
        return logits[0], grad_x[0].transpose(1, 2, 0)

    def loss_and_input_grad(self, image, cls, kind=CROSS_ENTROPY):
        """
        Classification loss of one image and its pixel gradient.

        Args:
            image: (H, W, 1) pixels
            cls: Class id the loss refers to
            kind: 'cross-entropy' or 'negated-cross-entropy'

        Returns:
            tuple: (loss, grad shaped like image)
        """
        if kind not in LOSS_KINDS:
            raise PreconditionError(f"unknown loss kind '{kind}'")
        cls = ensure_class_id(cls, self.num_classes)
        x, _ = self._as_batch(image)
        pooled, logits, caches = self._forward(x)
        log_probs = ops.log_softmax(logits)
        loss = -log_probs[0, cls]
        grad_logits = np.exp(log_probs)
        grad_logits[0, cls] -= 1.0
        if kind == NEGATED_CROSS_ENTROPY:
            loss, grad_logits = -loss, -grad_logits
        grad_x, _ = self._backward(pooled, caches, grad_logits=grad_logits)
        return float(loss), grad_x[0].transpose(1, 2, 0)

    def feature_loss_grad(self, image, target_descriptor):
        """
        Squared L2 distance between the image's descriptor and a target.

        Returns:
            tuple: (loss, grad shaped like image)
        """
        target = np.asarray(target_descriptor, dtype=self.dtype)
        ensure_shape(target, (self.descriptor_dim,), "target descriptor")
        x, _ = self._as_batch(image)
        pooled, _, caches = self._forward(x)
        diff = pooled[-1][0] - target
        loss = float(np.dot(diff, diff))
        grad_x, _ = self._backward(pooled, caches, grad_descriptor=(2.0 * diff)[None])
        return loss, grad_x[0].transpose(1, 2, 0)

    def loss_and_param_grads(self, images, labels):
        """
        Mean cross-entropy over a batch and its parameter gradients.

        Returns:
            tuple: (loss, grads dict, number of correct predictions)
        """
        x, _ = self._as_batch(images)
        labels = np.asarray(labels, dtype=np.int64)
        pooled, logits, caches = self._forward(x)
        n = x.shape[0]
        log_probs = ops.log_softmax(logits)
        loss = float(-log_probs[np.arange(n), labels].mean())
        grad_logits = np.exp(log_probs)
        grad_logits[np.arange(n), labels] -= 1.0
        grad_logits /= n
        _, grads = self._backward(pooled, caches, grad_logits=grad_logits, want_params=True)
        correct = int(np.sum(np.argmax(logits, axis=1) == labels))
        return loss, grads, correct


def forward(model, image):
    """Deterministic forward trace of an image (or batch)."""
    return model.trace(image)


def loss_and_input_grad(model, image, cls, kind=CROSS_ENTROPY):
    return model.loss_and_input_grad(image, cls, kind)


def feature_loss_grad(model, image, target_descriptor):
    return model.feature_loss_grad(image, target_descriptor)
