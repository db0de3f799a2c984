"""
Detector Training

Datasets of labelled trajectory embeddings, the group-balanced sampler,
stratified splits and the Adam training loop.

Author: TrajGuard Development Team
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from config.settings import DetectorSettings
from detection.detectors import Detector
from numcore import ADAM, OptimizerState, PlateauScheduler, adam_update
from utils.errors import DataError

logger = logging.getLogger(__name__)

NATURAL = "natural"


@dataclass
class DetectorDataset:
    """
    Embeddings with binary labels (0 natural, 1 adversarial).

    attack_kinds tags every row; natural rows carry 'natural'. ids are
    unique per row and define the canonical order.
    """
    embeddings: np.ndarray
    labels: np.ndarray
    attack_kinds: list
    ids: list

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.attack_kinds = list(self.attack_kinds)
        self.ids = [str(i) for i in self.ids]
        n = len(self.labels)
        if not (len(self.embeddings) == len(self.attack_kinds) == len(self.ids) == n):
            raise DataError("detector dataset columns have different lengths")
        if len(set(self.ids)) != n:
            raise DataError("detector dataset ids must be unique")

    def __len__(self):
        return len(self.labels)

    @property
    def groups(self):
        """(label, attack kind) per row."""
        return list(zip(self.labels.tolist(), self.attack_kinds))

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        return DetectorDataset(self.embeddings[index], self.labels[index],
                               [self.attack_kinds[i] for i in index], [self.ids[i] for i in index])

    def canonical(self):
        """Rows sorted by id."""
        return self.subset(sorted(range(len(self)), key=self.ids.__getitem__))

    def has_both_labels(self):
        return len(set(self.labels.tolist())) == 2

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise DataError("no rows to concatenate")
        return cls(np.concatenate([p.embeddings for p in parts]), np.concatenate([p.labels for p in parts]),
                   [k for p in parts for k in p.attack_kinds], [i for p in parts for i in p.ids])


@dataclass
class DetectorTrainingLog:
    epochs: list = field(default_factory=list)
    lr_reductions: list = field(default_factory=list)


def build_detector_dataset(natural, adversarial):
    """
    Assemble a dataset from natural and adversarial embedding groups.

    Args:
        natural: tuple (ids, embeddings)
        adversarial: dict attack tag -> (ids, embeddings)

    Returns:
        DetectorDataset
    """
    nat_ids, nat_emb = natural
    parts = [DetectorDataset(nat_emb, np.zeros(len(nat_ids)), [NATURAL] * len(nat_ids), nat_ids)]
    for tag in sorted(adversarial):
        ids, emb = adversarial[tag]
        parts.append(DetectorDataset(emb, np.ones(len(ids)), [tag] * len(ids), [f"{i}|{tag}" for i in ids]))
    return DetectorDataset.concat(parts)


def sampling_weights(groups):
    """Weight 1 / (size of the row's group) for every row."""
    counts = Counter(groups)
    weights = np.array([1.0 / counts[g] for g in groups])
    return weights / weights.sum()


def weighted_sampler(groups, batch_size, rng):
    """
    Draw one batch of row indices with replacement so that every
    (label, attack kind) group is equally likely.
    """
    if not groups:
        raise DataError("cannot sample from an empty dataset")
    return rng.choice(len(groups), size=batch_size, replace=True, p=sampling_weights(groups))


def stratified_split(data, test_fraction, rng):
    """
    Split each (label, attack kind) group by test_fraction.

    Returns:
        tuple: (train DetectorDataset, test DetectorDataset)

    Raises:
        DataError: if the train part lacks a label
    """
    data = data.canonical()
    by_group = {}
    for idx, group in enumerate(data.groups):
        by_group.setdefault(group, []).append(idx)
    train_idx, test_idx = [], []
    for group in sorted(by_group, key=lambda g: (g[0], g[1])):
        members = np.asarray(by_group[group])
        members = members[rng.permutation(len(members))]
        n_test = int(round(test_fraction * len(members)))
        if len(members) > 1:
            n_test = min(max(n_test, 1), len(members) - 1)
        test_idx.extend(members[:n_test].tolist())
        train_idx.extend(members[n_test:].tolist())
    train, test = data.subset(sorted(train_idx)), data.subset(sorted(test_idx))
    if not train.has_both_labels():
        raise DataError("training split lacks natural or adversarial examples")
    return train, test


def train_detector(data, arch, config=None, seed=0):
    """
    Train a detector with Adam on binary cross-entropy.

    Batches come from the group-balanced sampler; the learning rate drops by
    config.plateau_factor when the epoch loss plateaus. Rows are put into
    canonical id order first, so the result does not depend on input order.

    Args:
        data: DetectorDataset with both labels
        arch: 'MLP' or 'LSTM'
        config: DetectorSettings
        seed: Initialisation, sampling and dropout seed

    Returns:
        tuple: (Detector, DetectorTrainingLog)

    Raises:
        DataError: on single-label data
    """
    config = config or DetectorSettings()
    if len(data) == 0 or not data.has_both_labels():
        raise DataError("detector training needs natural and adversarial examples")
    data = data.canonical()
    rng = np.random.default_rng(seed)
    input_shape = data.embeddings.shape[1:]
    detector = Detector.create(arch, input_shape, hidden=config.hidden_units, dropout=config.dropout,
                               seed=int(rng.integers(2 ** 31)))
    state = OptimizerState(kind=ADAM, lr=config.learning_rate)
    scheduler = PlateauScheduler(state, factor=config.plateau_factor, patience=config.plateau_patience,
                                 threshold=config.plateau_threshold)
    groups = data.groups
    steps = max(1, int(np.ceil(len(data) / config.batch_size)))
    params = detector.params
    log = DetectorTrainingLog()

    for epoch in range(config.epochs):
        total = 0.0
        for _ in range(steps):
            batch = weighted_sampler(groups, config.batch_size, rng)
            loss, grads = detector.with_params(params).loss_and_grads(
                data.embeddings[batch], data.labels[batch], rng=rng)
            params = adam_update(params, grads, state)
            total += loss
        epoch_loss = total / steps
        log.epochs.append({"epoch": epoch + 1, "loss": epoch_loss, "lr": state.lr})
        if scheduler.step(epoch_loss):
            log.lr_reductions.append(epoch + 1)

    trained = detector.with_params(params)
    logger.info(f"Trained {arch} detector on {len(data)} embeddings for {config.epochs} epochs "
                f"(final loss {log.epochs[-1]['loss'] if log.epochs else float('nan'):.4f})")
    return trained, log
