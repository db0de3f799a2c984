"""Shared fixtures: tiny models, a toy linear classifier and a testing profile."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.settings import TestingConfig  # noqa: E402
from model.extractor import CROSS_ENTROPY, NEGATED_CROSS_ENTROPY, FeatureExtractor  # noqa: E402
from numcore import ops  # noqa: E402


class LinearClassifier:
    """
    logits = W^T vec(x) + b over images of any fixed shape.

    Exposes the same attack-facing surface as FeatureExtractor, with
    closed-form gradients.
    """

    def __init__(self, weight, bias, image_shape):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.image_shape = tuple(image_shape)

    @property
    def num_classes(self):
        return self.weight.shape[1]

    def logits(self, image):
        return np.asarray(image, dtype=np.float64).reshape(-1) @ self.weight + self.bias

    def logit_vjp(self, image, grad_logits):
        return self.logits(image), (self.weight @ np.asarray(grad_logits, dtype=np.float64)).reshape(self.image_shape)

    def loss_and_input_grad(self, image, cls, kind=CROSS_ENTROPY):
        log_probs = ops.log_softmax(self.logits(image)[None])[0]
        grad_logits = np.exp(log_probs)
        grad_logits[cls] -= 1.0
        loss = -log_probs[cls]
        if kind == NEGATED_CROSS_ENTROPY:
            loss, grad_logits = -loss, -grad_logits
        return float(loss), (self.weight @ grad_logits).reshape(self.image_shape)

    def predict(self, image):
        return int(np.argmax(self.logits(image)))


@pytest.fixture
def single_pixel_classifier():
    """Two classes on a 1x1 image; raising the pixel favours class 1."""
    return LinearClassifier(weight=[[-1.0, 1.0]], bias=[0.5, -0.5], image_shape=(1, 1, 1))


@pytest.fixture
def linear_classifier():
    """Three classes on 4x4 images with a fixed random weight matrix."""
    rng = np.random.default_rng(7)
    return LinearClassifier(weight=rng.standard_normal((16, 3)), bias=np.zeros(3), image_shape=(4, 4, 1))


@pytest.fixture
def tiny_extractor():
    """Two-block float64 extractor on 8x8 images with non-zero biases."""
    model = FeatureExtractor.create(num_classes=3, channels=(3, 4), image_size=8, seed=3, dtype=np.float64)
    rng = np.random.default_rng(11)
    params = dict(model.params)
    for b in range(model.num_blocks):
        params[f"block{b}.bias"] = rng.uniform(0.05, 0.3, params[f"block{b}.bias"].shape)
    return model.with_params(params)


@pytest.fixture
def gradcheck_extractor():
    """Four-block float64 extractor on 16x16 images."""
    return FeatureExtractor.create(num_classes=4, channels=(3, 4, 5, 6), image_size=16, seed=5, dtype=np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def testing_settings():
    return TestingConfig().settings()


@pytest.fixture
def grouped_classifier():
    """Three classes on 4x4 images; class c sums the pixels p with p % 3 == c."""
    weight = np.zeros((16, 3))
    weight[np.arange(16), np.arange(16) % 3] = 1.0
    return LinearClassifier(weight=weight, bias=np.zeros(3), image_shape=(4, 4, 1))
