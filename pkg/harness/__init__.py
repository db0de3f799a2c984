# Harness Package
from harness.dataset import SyntheticDataset, generate_synthetic_dataset, save_dataset, load_dataset
from harness.splits import DataSplits, split_dataset, SPLIT_NAMES
from harness.artifacts import RunContext, AdversarialRecord
from harness.pipeline import (
    ExperimentPlan, STAGE_ORDER, DEPENDENCIES, run_stage, run_experiment, check_dependencies,
)
from harness.acceptance import AcceptanceReport, CriterionResult, run_acceptance
