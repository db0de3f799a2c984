"""
Adversarial Detectors

Binary classifiers over trajectory embeddings:
- MLP: flattened embedding -> 100 ReLU units -> dropout -> linear -> sigmoid
- LSTM: one step per block (shallow to deep), final hidden state -> dropout
  -> linear -> sigmoid

Both return raw logits from forward() and expose the gradients of the mean
binary cross-entropy with logits. Dropout is only active when a random
generator is passed, i.e. during training.

Author: TrajGuard Development Team
"""

import logging

import numpy as np

from model.checkpoint import read_tensors, write_tensors
from numcore import ops
from utils.errors import ContainerFormatError, PreconditionError, StructuralError

logger = logging.getLogger(__name__)

MLP = "MLP"
LSTM = "LSTM"
ARCHS = (MLP, LSTM)

_ARCH_CODES = {MLP: 0.0, LSTM: 1.0}
META_KEY = "meta.detector"


def _mlp_params(input_shape, hidden, rng):
    d = int(np.prod(input_shape))
    return {
        "hidden.weight": rng.standard_normal((d, hidden)) * np.sqrt(2.0 / d),
        "hidden.bias": np.zeros(hidden),
        "out.weight": rng.standard_normal(hidden) * np.sqrt(1.0 / hidden),
        "out.bias": np.zeros(1),
    }


def _lstm_params(input_shape, hidden, rng):
    _, c = input_shape
    scale = np.sqrt(1.0 / hidden)
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0  # forget gate
    return {
        "lstm.weight_x": rng.uniform(-scale, scale, (c, 4 * hidden)),
        "lstm.weight_h": rng.uniform(-scale, scale, (hidden, 4 * hidden)),
        "lstm.bias": bias,
        "out.weight": rng.uniform(-scale, scale, hidden),
        "out.bias": np.zeros(1),
    }


class Detector:
    """Feed-forward or recurrent detector over (B, C) embeddings."""

    def __init__(self, arch, params, input_shape, dropout=0.5):
        if arch not in ARCHS:
            raise PreconditionError(f"unknown detector architecture '{arch}'")
        if not 0.0 <= dropout < 1.0:
            raise PreconditionError(f"dropout rate {dropout} outside [0, 1)")
        self.arch = arch
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dropout = float(dropout)

    @classmethod
    def create(cls, arch, input_shape, hidden=100, dropout=0.5, seed=0):
        rng = np.random.default_rng(seed)
        build = _mlp_params if arch == MLP else _lstm_params
        if arch not in ARCHS:
            raise PreconditionError(f"unknown detector architecture '{arch}'")
        return cls(arch, build(input_shape, hidden, rng), input_shape, dropout)

    @property
    def hidden_units(self):
        return self.params["out.weight"].shape[0]

    def with_params(self, params):
        return Detector(self.arch, params, self.input_shape, self.dropout)

    def _as_batch(self, embeddings):
        x = np.asarray(getattr(embeddings, "matrix", embeddings), dtype=np.float64)
        b, c = self.input_shape
        if x.size % (b * c) or (x.ndim > 1 and x.shape[-1] not in (c, b * c)):
            raise StructuralError(f"embedding of shape {x.shape} does not fit detector input {self.input_shape}")
        return x.reshape(-1, b, c)

    def _dropout_mask(self, shape, rng):
        if rng is None or self.dropout == 0.0:
            return None
        keep = 1.0 - self.dropout
        return (rng.random(shape) < keep) / keep

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------

    def forward(self, embeddings, rng=None):
        """
        Logits of a batch.

        Args:
            embeddings: (N, B, C), (N, B*C), a single embedding or TrajectoryEmbedding
            rng: Generator enabling dropout; None evaluates deterministically

        Returns:
            tuple: (logits (N,), cache for backward)
        """
        x = self._as_batch(embeddings)
        if self.arch == MLP:
            return self._mlp_forward(x, rng)
        return self._lstm_forward(x, rng)

    def _mlp_forward(self, x, rng):
        p = self.params
        flat = x.reshape(x.shape[0], -1)
        pre = flat @ p["hidden.weight"] + p["hidden.bias"]
        hidden = ops.relu(pre)
        mask = self._dropout_mask(hidden.shape, rng)
        dropped = hidden if mask is None else hidden * mask
        logits = dropped @ p["out.weight"] + p["out.bias"][0]
        return logits, (flat, pre, mask, dropped)

    def _lstm_forward(self, x, rng):
        p = self.params
        n, steps, _ = x.shape
        hsize = self.hidden_units
        h = np.zeros((n, hsize))
        c = np.zeros((n, hsize))
        tape = []
        for t in range(steps):
            a = x[:, t, :] @ p["lstm.weight_x"] + h @ p["lstm.weight_h"] + p["lstm.bias"]
            i = ops.sigmoid(a[:, :hsize])
            f = ops.sigmoid(a[:, hsize:2 * hsize])
            g = np.tanh(a[:, 2 * hsize:3 * hsize])
            o = ops.sigmoid(a[:, 3 * hsize:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            tape.append((x[:, t, :], h_prev, c_prev, i, f, g, o, tc))
        mask = self._dropout_mask(h.shape, rng)
        dropped = h if mask is None else h * mask
        logits = dropped @ p["out.weight"] + p["out.bias"][0]
        return logits, (tape, mask, dropped)

    def loss_and_grads(self, embeddings, labels, rng=None):
        """
        Mean binary cross-entropy with logits and its parameter gradients.

        Returns:
            tuple: (loss, grads dict)
        """
        labels = np.asarray(labels, dtype=np.float64)
        logits, cache = self.forward(embeddings, rng)
        n = logits.shape[0]
        loss = float(np.mean(ops.softplus(logits) - labels * logits))
        grad_logits = (ops.sigmoid(logits) - labels) / n
        if self.arch == MLP:
            grads = self._mlp_backward(grad_logits, cache)
        else:
            grads = self._lstm_backward(grad_logits, cache)
        return loss, grads

    def _mlp_backward(self, grad_logits, cache):
        p = self.params
        flat, pre, mask, dropped = cache
        grads = {
            "out.weight": dropped.T @ grad_logits,
            "out.bias": np.array([grad_logits.sum()]),
        }
        grad_hidden = np.outer(grad_logits, p["out.weight"])
        if mask is not None:
            grad_hidden = grad_hidden * mask
        grad_pre = grad_hidden * (pre > 0)
        grads["hidden.weight"] = flat.T @ grad_pre
        grads["hidden.bias"] = grad_pre.sum(axis=0)
        return grads

    def _lstm_backward(self, grad_logits, cache):
        p = self.params
        tape, mask, dropped = cache
        grads = {
            "out.weight": dropped.T @ grad_logits,
            "out.bias": np.array([grad_logits.sum()]),
            "lstm.weight_x": np.zeros_like(p["lstm.weight_x"]),
            "lstm.weight_h": np.zeros_like(p["lstm.weight_h"]),
            "lstm.bias": np.zeros_like(p["lstm.bias"]),
        }
        dh = np.outer(grad_logits, p["out.weight"])
        if mask is not None:
            dh = dh * mask
        dc = np.zeros_like(dh)
        for x_t, h_prev, c_prev, i, f, g, o, tc in reversed(tape):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            grads["lstm.weight_x"] += x_t.T @ da
            grads["lstm.weight_h"] += h_prev.T @ da
            grads["lstm.bias"] += da.sum(axis=0)
            dh = da @ p["lstm.weight_h"].T
            dc = dc * f
        return grads

    def scores(self, embeddings):
        """Eval-mode sigmoid scores of a batch."""
        logits, _ = self.forward(embeddings)
        return ops.sigmoid(logits)


def detector_score(det, embedding):
    """
    Probability-like adversarial score in (0, 1) of one embedding.

    Raises:
        StructuralError: if the embedding length is not B * C
    """
    values = np.asarray(getattr(embedding, "matrix", embedding))
    if values.size != int(np.prod(det.input_shape)):
        raise StructuralError(f"embedding length {values.size} != detector input {int(np.prod(det.input_shape))}")
    return float(det.scores(values)[0])


def save_detector(det, path):
    meta = np.array([_ARCH_CODES[det.arch], det.input_shape[0], det.input_shape[1], det.dropout])
    write_tensors(path, {META_KEY: meta, **det.params})
    logger.info(f"Saved {det.arch} detector to {path}")


def load_detector(path):
    tensors = read_tensors(path)
    if META_KEY not in tensors:
        raise ContainerFormatError(f"{path}: not a detector checkpoint")
    code, b, c, dropout = tensors.pop(META_KEY).tolist()
    arch = MLP if code == _ARCH_CODES[MLP] else LSTM
    return Detector(arch, tensors, (int(b), int(c)), round(dropout, 6))
