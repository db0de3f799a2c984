"""
Commands Package

This package contains the CLI subcommands organized by functionality.
Register them on the application in the app factory.

Author: TrajGuard Development Team
"""

from commands.stage_commands import register_stage_commands
from commands.experiment_commands import register_experiment_commands


def register_commands(app):
    """
    Register all subcommands with the CLI application.

    Args:
        app: TrajGuardApp instance
    """
    # One command per pipeline stage
    register_stage_commands(app)

    # Whole-plan runs and the acceptance suite
    register_experiment_commands(app)
