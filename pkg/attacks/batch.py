"""
Attack Batch Runner

Handles attack jobs at dataset scale:
- AttackJob records and the JSON-lines batch manifest
- Dispatch from an AttackConfig to the matching crafting procedure
- A process pool over independent images with order-preserving results
- The per-run results CSV

Author: TrajGuard Development Team
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from attacks.carlini import cw_l2, cw_linf
from attacks.deep_feature import deep_feature_attack
from attacks.gradient import bim, fgsm, mifgsm
from attacks.lbfgs_attack import lbfgs_attack
from attacks.types import (
    AttackConfig, BIM, CWL2, CWLINF, DEEP_FEATURE, FGSM, LBFGS, MIFGSM,
)
from utils.errors import DataError, PreconditionError

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["id", "kind", "targeted", "eps_or_delta", "success", "iters", "linf", "l2", "predicted_class"]

_CLASSIFIER_ATTACKS = {
    FGSM: fgsm,
    BIM: bim,
    MIFGSM: mifgsm,
    CWL2: cw_l2,
    CWLINF: cw_linf,
}

# Set in each pool process by _init_worker
_WORKER_CONTEXT = {}


@dataclass
class AttackJob:
    """One attack run: which image, which configuration, which target."""
    image_id: str
    config: AttackConfig
    target: int = None
    guide_id: str = None
    output_path: str = ""

    @property
    def key(self):
        return f"{self.image_id}/{self.config.tag}"

    def to_record(self):
        return {
            "image_id": self.image_id,
            "kind": self.config.kind,
            "targeted": self.config.targeted,
            "params": self.config.to_dict(),
            "target": self.target,
            "guide_id": self.guide_id,
            "output": self.output_path,
        }

    @classmethod
    def from_record(cls, record):
        params = dict(record["params"])
        params["cw_const_range"] = tuple(params.get("cw_const_range", (1e-5, 1e10)))
        config = AttackConfig(**params)
        if config.kind != record["kind"] or config.targeted != record["targeted"]:
            raise DataError(f"manifest record for {record['image_id']} disagrees with its parameters")
        return cls(record["image_id"], config, record.get("target"), record.get("guide_id"),
                   record.get("output", ""))


def write_manifest(path, jobs):
    """Write one JSON record per job."""
    with open(path, "w", encoding="utf-8") as fh:
        for job in jobs:
            fh.write(json.dumps(job.to_record(), sort_keys=True) + "\n")
    logger.info(f"Wrote attack manifest with {len(jobs)} jobs to {path}")


def read_manifest(path):
    jobs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                jobs.append(AttackJob.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise DataError(f"{path}:{line_no}: malformed manifest record ({e})")
    return jobs


def run_attack(model, image, cfg, target=None, guide=None, representatives=None):
    """
    Run the crafting procedure named by cfg.kind.

    Args:
        model: FeatureExtractor (or any model with the same gradient methods)
        image: LabeledImage
        cfg: AttackConfig
        target: Target class for targeted classifier attacks
        guide: Guide image for targeted deep-feature runs
        representatives: ClassRepresentatives for deep-feature runs

    Returns:
        AdversarialResult
    """
    if cfg.kind in _CLASSIFIER_ATTACKS:
        return _CLASSIFIER_ATTACKS[cfg.kind](model, image, cfg, target=target)
    if cfg.kind == LBFGS:
        return lbfgs_attack(model, image, target, cfg)
    if cfg.kind == DEEP_FEATURE:
        if representatives is None:
            raise PreconditionError("deep-feature attack needs class representatives")
        return deep_feature_attack(model, image, guide, representatives, cfg)
    raise PreconditionError(f"no attack registered for kind '{cfg.kind}'")


def _execute(job, model, images, representatives):
    if job.image_id not in images:
        raise DataError(f"attack job refers to unknown image '{job.image_id}'")
    guide = None
    if job.guide_id is not None:
        if job.guide_id not in images:
            raise DataError(f"attack job refers to unknown guide image '{job.guide_id}'")
        guide = images[job.guide_id]
    return run_attack(model, images[job.image_id], job.config, target=job.target, guide=guide,
                      representatives=representatives)


def _init_worker(model, images, representatives):
    _WORKER_CONTEXT["model"] = model
    _WORKER_CONTEXT["images"] = images
    _WORKER_CONTEXT["representatives"] = representatives


def _run_in_worker(job):
    ctx = _WORKER_CONTEXT
    return _execute(job, ctx["model"], ctx["images"], ctx["representatives"])


def run_attack_batch(model, jobs, images, representatives=None, workers=1):
    """
    Run jobs over a read-only model, in parallel when workers > 1.

    Args:
        model: Shared model
        jobs: list of AttackJob
        images: dict image id -> LabeledImage (sources and guides)
        representatives: ClassRepresentatives for deep-feature jobs
        workers: Process count; 1 runs in the calling process

    Returns:
        list of AdversarialResult in job order
    """
    jobs = list(jobs)
    if not jobs:
        return []
    logger.info(f"Running {len(jobs)} attack jobs on {max(1, workers)} worker(s)")
    if workers <= 1:
        return [_execute(job, model, images, representatives) for job in jobs]

    chunk = max(1, len(jobs) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(model, images, representatives)) as pool:
        return list(pool.map(_run_in_worker, jobs, chunksize=chunk))


def result_row(result):
    return {
        "id": result.image_id,
        "kind": result.kind,
        "targeted": int(result.targeted),
        "eps_or_delta": f"{result.budget:g}" if result.budget is not None else "",
        "success": int(result.success),
        "iters": result.iterations_used,
        "linf": f"{result.perturbation_linf:.6f}",
        "l2": f"{result.perturbation_l2:.6f}",
        "predicted_class": result.predicted_class,
    }


def append_results_csv(path, results):
    """Append one row per result, writing the header when the file is new."""
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new_file:
            writer.writeheader()
        for result in results:
            writer.writerow(result_row(result))
