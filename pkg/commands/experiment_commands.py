"""
Whole-run commands: run-experiment and check.
"""

import logging
import os

from harness.acceptance import run_acceptance
from harness.pipeline import STAGE_ORDER, ExperimentPlan, run_experiment
from middleware.error_handlers import EXIT_ACCEPTANCE_FAILED, EXIT_OK

logger = logging.getLogger(__name__)


def _acceptance_exit(report):
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE_FAILED


def run_experiment_command(args, settings):
    """Run the plan; with --check the exit status follows the acceptance suite."""
    stages = args.stages.split(",") if args.stages else list(STAGE_ORDER)
    plan = ExperimentPlan(settings, args.out, [s.strip() for s in stages if s.strip()])
    run_experiment(plan, force=args.force)
    if not args.check:
        return EXIT_OK
    return _acceptance_exit(run_acceptance(settings, os.path.join(args.out, "acceptance"), force=args.force))


def check_command(args, settings):
    """Run the acceptance suite over the configured seeds."""
    return _acceptance_exit(run_acceptance(settings, args.out, force=args.force))


def register_experiment_commands(app):
    parser = app.add_command("run-experiment", "run every stage of the plan", run_experiment_command)
    parser.add_argument("--stages", default="", help=f"comma-separated subset of {','.join(STAGE_ORDER)}")
    parser.add_argument("--check", action="store_true", help="also run the acceptance suite")
    parser.add_argument("--force", action="store_true", help="ignore cached outputs")

    parser = app.add_command("check", "run the acceptance suite", check_command)
    parser.add_argument("--force", action="store_true", help="ignore cached outputs")
