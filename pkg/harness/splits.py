"""
Per-class dataset splits.

Each class contributes natural_per_class detector-natural images,
adversarial_per_class attack sources, and a remainder divided into
classifier train / validation / test.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config.settings import SyntheticDatasetConfig
from utils.errors import DataError
from utils.seeding import rng_for

logger = logging.getLogger(__name__)

TRAIN = "classifier-train"
VAL = "classifier-val"
TEST = "classifier-test"
NATURAL = "natural"
ADVERSARIAL_SOURCE = "adversarial-source"
SPLIT_NAMES = (TRAIN, VAL, TEST, NATURAL, ADVERSARIAL_SOURCE)

MIN_REMAINDER = 5


@dataclass
class DataSplits:
    """Sorted dataset indices per split."""
    indices: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.indices[name]

    def split_of(self, ids):
        """dict image id -> split name."""
        return {ids[i]: name for name, idx in self.indices.items() for i in idx}

    @classmethod
    def from_assignment(cls, ids, split_of):
        indices = {name: [] for name in SPLIT_NAMES}
        for i, image_id in enumerate(ids):
            name = split_of.get(image_id)
            if name not in indices:
                raise DataError(f"image {image_id} has no known split")
            indices[name].append(i)
        return cls({name: np.asarray(idx, dtype=np.int64) for name, idx in indices.items()})


def remainder_sizes(remainder, fractions):
    """(train, val, test) counts for the per-class remainder."""
    _, val_frac, test_frac = fractions
    n_val = max(1, int(val_frac * remainder))
    n_test = max(1, int(test_frac * remainder))
    return remainder - n_val - n_test, n_val, n_test


def split_dataset(dataset, seed, cfg=None):
    """
    Split every class independently.

    Args:
        dataset: SyntheticDataset
        seed: Master seed
        cfg: SyntheticDatasetConfig providing the per-class counts

    Returns:
        DataSplits; the five index sets are disjoint

    Raises:
        DataError: if a class is too small
    """
    cfg = cfg or SyntheticDatasetConfig()
    rng = rng_for(seed, "split")
    fixed = cfg.natural_per_class + cfg.adversarial_per_class
    parts = {name: [] for name in SPLIT_NAMES}
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == cls)
        if len(members) < fixed + MIN_REMAINDER:
            raise DataError(f"class {cls} has {len(members)} images, at least {fixed + MIN_REMAINDER} needed")
        members = members[rng.permutation(len(members))]
        n_train, n_val, _ = remainder_sizes(len(members) - fixed, cfg.split_fractions)
        cuts = np.cumsum([cfg.natural_per_class, cfg.adversarial_per_class, n_train, n_val])
        natural, source, train, val, test = np.split(members, cuts)
        parts[NATURAL].extend(natural)
        parts[ADVERSARIAL_SOURCE].extend(source)
        parts[TRAIN].extend(train)
        parts[VAL].extend(val)
        parts[TEST].extend(test)

    splits = DataSplits({name: np.sort(np.asarray(idx, dtype=np.int64)) for name, idx in parts.items()})
    logger.info("Split sizes: " + ", ".join(f"{name}={len(splits[name])}" for name in SPLIT_NAMES))
    return splits
