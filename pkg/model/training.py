"""
Classifier Training

Mini-batch SGD over the extractor and its head jointly, with the learning
rate halved whenever the epoch loss plateaus.

Author: TrajGuard Development Team
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config.settings import ClassifierSettings
from numcore import OptimizerState, PlateauScheduler, SGD, sgd_update
from utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class TrainingHistory:
    """Per-epoch records: loss, train accuracy, validation accuracy, lr."""
    epochs: list = field(default_factory=list)
    lr_halvings: list = field(default_factory=list)
    final_train_accuracy: float = 0.0


def accuracy(model, images, labels, batch_size=256):
    """Fraction of images whose argmax class equals the label."""
    if len(images) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(images), batch_size):
        pred = model.predict(images[start:start + batch_size])
        correct += int(np.sum(np.atleast_1d(pred) == labels[start:start + batch_size]))
    return correct / len(images)


def train_classifier(model, images, labels, config=None, seed=0, val_images=None, val_labels=None):
    """
    Train extractor and classifier head with SGD.

    Args:
        model: FeatureExtractor to start from (not mutated)
        images: (N, H, W, 1) training images
        labels: (N,) class ids
        config: ClassifierSettings
        seed: Shuffling seed
        val_images: Optional validation images
        val_labels: Optional validation labels

    Returns:
        tuple: (trained FeatureExtractor, TrainingHistory)

    Raises:
        DataError: on an empty dataset or fewer than two classes
    """
    config = config or ClassifierSettings()
    images = np.asarray(images, dtype=model.dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise DataError("cannot train a classifier on an empty dataset")
    if len(np.unique(labels)) < 2:
        raise DataError("classifier training needs at least two classes")

    rng = np.random.default_rng(seed)
    state = OptimizerState(kind=SGD, lr=config.learning_rate, momentum=config.momentum)
    scheduler = PlateauScheduler(state, factor=config.plateau_factor, patience=config.plateau_patience,
                                 threshold=config.plateau_threshold)
    history = TrainingHistory()
    params = dict(model.params)
    n = len(images)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            current = model.with_params(params)
            loss, grads, correct = current.loss_and_param_grads(images[batch], labels[batch])
            params = sgd_update(params, grads, state)
            total_loss += loss * len(batch)
            total_correct += correct

        epoch_loss = total_loss / n
        record = {
            "epoch": epoch + 1,
            "loss": epoch_loss,
            "train_accuracy": total_correct / n,
            "lr": state.lr,
        }
        if val_images is not None and len(val_images):
            record["val_accuracy"] = accuracy(model.with_params(params), val_images, val_labels)
        history.epochs.append(record)
        logger.debug(f"epoch {epoch + 1}: loss={epoch_loss:.4f} acc={record['train_accuracy']:.3f} lr={state.lr:.3g}")

        if scheduler.step(epoch_loss):
            history.lr_halvings.append(epoch + 1)

    trained = model.with_params(params)
    final_acc = accuracy(trained, images, labels)
    history.final_train_accuracy = final_acc
    logger.info(f"Classifier trained for {config.epochs} epochs: train accuracy {final_acc:.3f}")
    return trained, history
