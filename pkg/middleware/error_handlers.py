"""
Error Handlers for the TrajGuard CLI

Provides centralized error handling including:
- Exit codes per domain error family
- Logging of every failure before the process exits
- A catch-all for unexpected exceptions

Author: TrajGuard Development Team
"""

import logging

from utils.errors import ConfigError, DataError, DependencyError, NumericError, TrajGuardError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_DOMAIN = 6
EXIT_ACCEPTANCE_FAILED = 10
EXIT_INTERRUPTED = 130


def register_error_handlers(app):
    """
    Register all error handlers with the CLI application.

    Args:
        app: TrajGuardApp instance
    """

    @app.errorhandler(ConfigError)
    def config_error(error):
        """Handle malformed run configuration."""
        logger.error(f"Configuration error: {error}")
        return EXIT_CONFIG

    @app.errorhandler(DependencyError)
    def dependency_error(error):
        """Handle a stage whose upstream artifact is missing."""
        logger.error(f"Missing dependency '{error.stage}': {error}")
        return EXIT_DEPENDENCY

    @app.errorhandler(DataError)
    def data_error(error):
        logger.error(f"Data error: {error}")
        return EXIT_DATA

    @app.errorhandler(NumericError)
    def numeric_error(error):
        logger.error(f"Numeric error: {error}")
        return EXIT_NUMERIC

    @app.errorhandler(TrajGuardError)
    def domain_error(error):
        """Handle every other domain error."""
        logger.error(f"{type(error).__name__}: {error}")
        return EXIT_DOMAIN

    @app.errorhandler(KeyboardInterrupt)
    def interrupted(error):
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED

    @app.errorhandler(Exception)
    def handle_exception(error):
        """Handle all unhandled exceptions."""
        logger.error(f"Unhandled exception: {error}", exc_info=True)
        return EXIT_UNEXPECTED
