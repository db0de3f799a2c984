"""
Single-stage commands: gen-data, train-classifier, gen-attacks, build-reps,
train-detector, eval-detector, identify, verify and report.
"""

import json
import logging

from harness.artifacts import RunContext
from harness.pipeline import STAGE_ORDER, run_stage
from middleware.error_handlers import EXIT_OK

logger = logging.getLogger(__name__)

STAGE_HELP = {
    "gen-data": "generate the synthetic identity dataset and its splits",
    "train-classifier": "train the feature extractor and classifier head",
    "gen-attacks": "craft every configured attack on the adversarial-source split",
    "build-reps": "compute class centroids and medoids per block",
    "train-detector": "embed trajectories and train the detector grid",
    "eval-detector": "per-attack and cross-attack detector AUCs",
    "identify": "kNN identification accuracy and centroid distances",
    "verify": "EER threshold and impersonation/evading scenarios",
    "report": "collect tables and figures into the report directory",
}


def _stage_handler(stage):
    def handler(args, settings):
        summary = run_stage(RunContext(settings, args.out), stage, force=args.force)
        logger.info(f"{stage} summary: {json.dumps(summary, sort_keys=True, default=str)}")
        return EXIT_OK
    return handler


def register_stage_commands(app):
    for stage in STAGE_ORDER:
        parser = app.add_command(stage, STAGE_HELP[stage], _stage_handler(stage))
        parser.add_argument("--force", action="store_true", help="ignore cached outputs")
