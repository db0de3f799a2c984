"""
Experiment Pipeline

Orchestrates the stages of a run:
- ExperimentPlan: which stages, in dependency order, into which directory
- run_stage: dependency check, content-addressed cache lookup, execution
- run_experiment: the whole plan, stage by stage

Author: TrajGuard Development Team
"""

import logging
import os
from dataclasses import dataclass, field

from config.settings import to_plain
from harness import stages
from harness.artifacts import (
    BUILD_REPS, EVAL_DETECTOR, GEN_ATTACKS, GEN_DATA, IDENTIFY, REPORT, RunContext,
    TRAIN_CLASSIFIER, TRAIN_DETECTOR, VERIFY,
)
from utils.cache import cache_delete, cache_get, cache_set, config_hash, stage_key
from utils.errors import DependencyError, PreconditionError

logger = logging.getLogger(__name__)

STAGE_ORDER = (GEN_DATA, TRAIN_CLASSIFIER, GEN_ATTACKS, BUILD_REPS, TRAIN_DETECTOR, EVAL_DETECTOR,
               IDENTIFY, VERIFY, REPORT)

DEPENDENCIES = {
    GEN_DATA: (),
    TRAIN_CLASSIFIER: (GEN_DATA,),
    GEN_ATTACKS: (GEN_DATA, TRAIN_CLASSIFIER),
    BUILD_REPS: (GEN_DATA, TRAIN_CLASSIFIER),
    TRAIN_DETECTOR: (GEN_DATA, TRAIN_CLASSIFIER, GEN_ATTACKS, BUILD_REPS),
    EVAL_DETECTOR: (GEN_ATTACKS, TRAIN_DETECTOR),
    IDENTIFY: (GEN_DATA, TRAIN_CLASSIFIER, GEN_ATTACKS),
    VERIFY: (GEN_DATA, TRAIN_CLASSIFIER, GEN_ATTACKS),
    REPORT: (GEN_DATA, GEN_ATTACKS, EVAL_DETECTOR, IDENTIFY, VERIFY),
}

STAGE_FUNCTIONS = {
    GEN_DATA: stages.gen_data,
    TRAIN_CLASSIFIER: stages.train_classifier_stage,
    GEN_ATTACKS: stages.gen_attacks,
    BUILD_REPS: stages.build_reps,
    TRAIN_DETECTOR: stages.train_detectors,
    EVAL_DETECTOR: stages.eval_detectors,
    IDENTIFY: stages.identify,
    VERIFY: stages.verify,
    REPORT: stages.report,
}

# Settings each stage's output depends on (besides upstream stage keys)
STAGE_SETTINGS = {
    GEN_DATA: lambda s: {"data": s.data},
    TRAIN_CLASSIFIER: lambda s: {"classifier": s.classifier},
    GEN_ATTACKS: lambda s: {"attacks": s.attacks},
    BUILD_REPS: lambda s: {"representatives": s.representatives},
    TRAIN_DETECTOR: lambda s: {"detector": s.detector, "kinds": s.attacks.classifier_kinds},
    EVAL_DETECTOR: lambda s: {"deltas": s.attacks.df_deltas},
    IDENTIFY: lambda s: {"knn_k": s.attacks.knn_k},
    VERIFY: lambda s: {"verification": s.verification},
    REPORT: lambda s: {},
}


@dataclass
class ExperimentPlan:
    """Stages to run (kept in dependency order) and where to write them."""
    settings: object
    out_dir: str
    stages: list = field(default_factory=lambda: list(STAGE_ORDER))

    def __post_init__(self):
        unknown = [s for s in self.stages if s not in STAGE_ORDER]
        if unknown:
            raise PreconditionError(f"unknown stage(s) {unknown}; expected names from {list(STAGE_ORDER)}")
        wanted = set(self.stages)
        self.stages = [s for s in STAGE_ORDER if s in wanted]

    def context(self):
        return RunContext(self.settings, self.out_dir)


def stage_cache_key(ctx, stage):
    """Hash of the stage name, its settings, the seed and its upstream keys."""
    settings = {name: to_plain(value) for name, value in STAGE_SETTINGS[stage](ctx.settings).items()}
    upstream = {dep: stage_key(ctx.stage_dir(dep)) for dep in DEPENDENCIES[stage]}
    return config_hash(stage, settings, ctx.seed, upstream)


def check_dependencies(plan):
    """
    Every dependency must be in the plan or already completed on disk.

    Raises:
        DependencyError: naming the first absent stage
    """
    ctx = plan.context()
    for stage in plan.stages:
        for dep in DEPENDENCIES[stage]:
            if dep not in plan.stages and not ctx.is_complete(dep):
                raise DependencyError(
                    dep, f"stage '{stage}' needs '{dep}', which is neither in the plan nor completed under {plan.out_dir}")


def run_stage(ctx, stage, force=False):
    """
    Run one stage unless its cached outputs match the current inputs.

    Args:
        ctx: RunContext
        stage: Stage name
        force: Ignore the cache

    Returns:
        dict: The stage summary (cached or fresh)

    Raises:
        DependencyError: if an upstream stage has not completed
    """
    if stage not in STAGE_FUNCTIONS:
        raise PreconditionError(f"unknown stage '{stage}'")
    for dep in DEPENDENCIES[stage]:
        if not ctx.is_complete(dep):
            raise DependencyError(dep)

    stage_dir = ctx.stage_dir(stage)
    key = stage_cache_key(ctx, stage)
    if not force:
        record = cache_get(stage_dir, key)
        if record is not None:
            logger.info(f"Stage {stage}: inputs unchanged, skipping")
            return record.get("extra", {})

    logger.info(f"Stage {stage}: running")
    # Incomplete until cache_set below
    cache_delete(stage_dir)
    os.makedirs(stage_dir, exist_ok=True)
    outputs, summary = STAGE_FUNCTIONS[stage](ctx)
    cache_set(stage_dir, key, outputs, summary)
    logger.info(f"Stage {stage}: done")
    return summary


def run_experiment(plan, force=False):
    """
    Run a plan end to end.

    Returns:
        dict: stage name -> summary
    """
    check_dependencies(plan)
    ctx = plan.context()
    os.makedirs(plan.out_dir, exist_ok=True)
    logger.info(f"Running {len(plan.stages)} stage(s) into {plan.out_dir} with seed {ctx.seed}")
    return {stage: run_stage(ctx, stage, force=force) for stage in plan.stages}
