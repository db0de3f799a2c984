"""
Synthetic Identity Dataset

Stands in for face crops: every identity is a seeded mixture of Gaussian
blobs, and every image of an identity jitters the blob positions and adds
pixel noise.

Author: TrajGuard Development Team
"""

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np

from config.settings import SyntheticDatasetConfig
from model.checkpoint import read_tensors, write_tensors
from model.extractor import LabeledImage
from utils.errors import DataError, DependencyError
from utils.seeding import rng_for

logger = logging.getLogger(__name__)

MAX_PROTOTYPE_DRAWS = 1000
REFERENCE_SIZE = 32.0


@dataclass
class IdentityPattern:
    """Blob centres (row, col), widths and amplitudes of one class."""
    centers: np.ndarray
    scales: np.ndarray
    amplitudes: np.ndarray


@dataclass
class SyntheticDataset:
    images: np.ndarray
    labels: np.ndarray
    ids: list
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def image(self, i):
        return LabeledImage(self.images[i], int(self.labels[i]), self.ids[i])

    def by_id(self):
        return {image_id: i for i, image_id in enumerate(self.ids)}


def render_pattern(pattern, size, offsets=None):
    """Sum of Gaussian blobs on a size x size grid (unclipped)."""
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    centers = pattern.centers if offsets is None else pattern.centers + offsets
    image = np.zeros((size, size))
    for (cy, cx), scale, amp in zip(centers, pattern.scales, pattern.amplitudes):
        image += amp * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * scale ** 2))
    return image


def _draw_pattern(cfg, rng):
    size = cfg.image_size
    ratio = size / REFERENCE_SIZE
    margin = cfg.blob_margin * ratio
    centers = rng.uniform(margin, size - 1 - margin, (cfg.blobs_per_class, 2))
    scales = rng.uniform(*cfg.blob_scale_range, cfg.blobs_per_class) * ratio
    amplitudes = rng.uniform(*cfg.blob_amplitude_range, cfg.blobs_per_class)
    return IdentityPattern(centers, scales, amplitudes)


def draw_identity_patterns(cfg, rng):
    """
    One pattern per class; a draw whose rendered prototype lies closer than
    cfg.min_prototype_distance (L2, pixels) to an accepted one is redrawn.

    Raises:
        DataError: if the separation cannot be met
    """
    patterns, prototypes = [], []
    for cls in range(cfg.num_classes):
        for _ in range(MAX_PROTOTYPE_DRAWS):
            pattern = _draw_pattern(cfg, rng)
            proto = np.clip(render_pattern(pattern, cfg.image_size), 0.0, 1.0)
            if all(np.linalg.norm(proto - other) >= cfg.min_prototype_distance for other in prototypes):
                break
        else:
            raise DataError(f"could not draw a class-{cls} pattern {cfg.min_prototype_distance} away from the others")
        patterns.append(pattern)
        prototypes.append(proto)
    return patterns


def generate_synthetic_dataset(cfg=None, seed=0):
    """
    Generate the identity dataset.

    Args:
        cfg: SyntheticDatasetConfig
        seed: Master seed

    Returns:
        SyntheticDataset with images (N, H, W, 1) in [0, 1], class-major order

    Raises:
        DataError: on fewer than two classes or no images
    """
    cfg = cfg or SyntheticDatasetConfig()
    if cfg.num_classes < 2:
        raise DataError("the dataset needs at least two classes")
    if cfg.images_per_class < 1:
        raise DataError("the dataset needs at least one image per class")

    patterns = draw_identity_patterns(cfg, rng_for(seed, "gen-data", "patterns"))
    rng = rng_for(seed, "gen-data", "images")
    size = cfg.image_size
    images, labels, ids = [], [], []
    for cls, pattern in enumerate(patterns):
        for i in range(cfg.images_per_class):
            offsets = rng.normal(0.0, cfg.position_jitter * size / REFERENCE_SIZE, pattern.centers.shape)
            pixels = render_pattern(pattern, size, offsets) + rng.normal(0.0, cfg.pixel_noise, (size, size))
            images.append(np.clip(pixels, 0.0, 1.0))
            labels.append(cls)
            ids.append(f"c{cls:03d}_{i:04d}")

    dataset = SyntheticDataset(
        images=np.stack(images)[..., None].astype(np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        ids=ids,
        num_classes=cfg.num_classes,
    )
    logger.info(f"Generated {len(dataset)} images of {cfg.num_classes} identities at {size}x{size}")
    return dataset


def save_dataset(directory, dataset, split_of=None):
    """
    Write images.tgm and manifest.csv (image_id, class, split).

    Returns:
        list: Relative output names
    """
    os.makedirs(directory, exist_ok=True)
    write_tensors(os.path.join(directory, "images.tgm"), {"images": dataset.images})
    split_of = split_of or {}
    with open(os.path.join(directory, "manifest.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "class", "split"])
        for image_id, label in zip(dataset.ids, dataset.labels):
            writer.writerow([image_id, int(label), split_of.get(image_id, "")])
    return ["images.tgm", "manifest.csv"]


def load_dataset(directory):
    """
    Read a dataset written by save_dataset.

    Returns:
        tuple: (SyntheticDataset, dict image id -> split name)
    """
    manifest = os.path.join(directory, "manifest.csv")
    container = os.path.join(directory, "images.tgm")
    if not (os.path.exists(manifest) and os.path.exists(container)):
        raise DependencyError("gen-data")
    with open(manifest, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    images = read_tensors(container)["images"]
    if len(rows) != len(images):
        raise DataError(f"{manifest} lists {len(rows)} images, container holds {len(images)}")
    labels = np.array([int(r["class"]) for r in rows], dtype=np.int64)
    dataset = SyntheticDataset(images, labels, [r["image_id"] for r in rows], int(labels.max()) + 1)
    return dataset, {r["image_id"]: r["split"] for r in rows}
