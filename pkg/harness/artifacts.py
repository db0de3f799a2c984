"""
Run directory layout and artifact loaders.

Every stage writes into <out>/<stage name>/ and records a .stage.json
marker. Loaders raise DependencyError naming the stage whose output is
missing.
"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from harness.dataset import load_dataset
from harness.splits import TRAIN, DataSplits
from model.checkpoint import load_checkpoint, read_tensors, write_tensors
from recognition.representatives import ClassRepresentatives, compute_centroids
from recognition.metrics import L2
from utils.cache import MARKER_NAME
from utils.errors import DependencyError

logger = logging.getLogger(__name__)

GEN_DATA = "gen-data"
TRAIN_CLASSIFIER = "train-classifier"
GEN_ATTACKS = "gen-attacks"
BUILD_REPS = "build-reps"
TRAIN_DETECTOR = "train-detector"
EVAL_DETECTOR = "eval-detector"
IDENTIFY = "identify"
VERIFY = "verify"
REPORT = "report"


@dataclass
class AdversarialRecord:
    """Index entry of one stored adversarial."""
    key: str
    image_id: str
    tag: str
    kind: str
    targeted: bool
    budget: float
    steps: int
    iterations_used: int
    success: bool
    predicted_class: int
    source_label: int
    target_class: int = None

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class RunContext:
    """Settings of a run and the directory it writes into."""
    settings: object
    out_dir: str

    @property
    def seed(self):
        return self.settings.seed

    def stage_dir(self, stage):
        return os.path.join(self.out_dir, stage)

    def path(self, stage, name):
        return os.path.join(self.stage_dir(stage), name)

    def is_complete(self, stage):
        return os.path.exists(os.path.join(self.stage_dir(stage), MARKER_NAME))

    def require(self, stage, name):
        path = self.path(stage, name)
        if not os.path.exists(path):
            raise DependencyError(stage, f"'{name}' from stage '{stage}' is missing under {self.out_dir}")
        return path

    # ------------------------------------------------------------------
    # Loaders
    # ------------------------------------------------------------------

    def load_data(self):
        """Dataset and its splits from gen-data."""
        dataset, split_of = load_dataset(self.stage_dir(GEN_DATA))
        return dataset, DataSplits.from_assignment(dataset.ids, split_of)

    def load_model(self):
        return load_checkpoint(self.require(TRAIN_CLASSIFIER, "classifier.tgm"))

    def load_adversarials(self):
        """
        Returns:
            tuple: (list of AdversarialRecord, dict key -> adversarial pixels)
        """
        with open(self.require(GEN_ATTACKS, "index.json"), "r", encoding="utf-8") as fh:
            records = [AdversarialRecord(**r) for r in json.load(fh)]
        pixels = read_tensors(self.require(GEN_ATTACKS, "adversarials.tgm"))
        return records, pixels

    def load_representatives(self, kind, metric):
        tensors = read_tensors(self.require(BUILD_REPS, representatives_name(kind, metric)))
        layers = [tensors[f"layer{b}"].astype(np.float64) for b in range(len(tensors))]
        return ClassRepresentatives(kind=kind, metric=metric, layers=layers)

    def read_json(self, stage, name):
        with open(self.require(stage, name), "r", encoding="utf-8") as fh:
            return json.load(fh)


def representatives_name(kind, metric):
    return f"reps_{kind}_{metric}.tgm"


def save_representatives(path, reps):
    write_tensors(path, {f"layer{b}": layer for b, layer in enumerate(reps.layers)})


def write_json(path, payload):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)


def guidance_representatives(model, dataset, splits):
    """Class centroids (L2) of the classifier-train split; the kNN gallery."""
    idx = splits[TRAIN]
    return compute_centroids(model.trace(dataset.images[idx]), dataset.labels[idx], dataset.num_classes, L2)
