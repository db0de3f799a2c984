"""
TrajGuard Command-Line Entry Point

Adversarial attack and trajectory-detection pipeline for similarity-based
face recognition. Every pipeline stage is a subcommand; run-experiment
chains them and check runs the acceptance suite.

Author: TrajGuard Development Team
Version: 1.0
"""

import argparse
import logging
import os
import sys

# Import configuration
from config.settings import config_map, get_config, load_settings

# Import middleware
from middleware.error_handlers import register_error_handlers

# Import commands
from commands import register_commands

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class TrajGuardApp:
    """
    Argument parser plus exception-to-exit-code dispatch.

    Commands register through add_command; error handlers through the
    errorhandler decorator and are matched along the exception's MRO.
    """

    def __init__(self, config):
        self.config = config
        self.parser = argparse.ArgumentParser(
            prog="trajguard",
            description="Adversarial attacks and trajectory detectors for face recognition",
        )
        self.common = argparse.ArgumentParser(add_help=False)
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="COMMAND")
        self.subparsers.required = True
        self.error_handlers = {}

    def add_command(self, name, help_text, handler):
        parser = self.subparsers.add_parser(name, help=help_text, parents=[self.common])
        parser.set_defaults(handler=handler)
        return parser

    def errorhandler(self, exc_type):
        def decorator(func):
            self.error_handlers[exc_type] = func
            return func
        return decorator

    def handle_error(self, error):
        for cls in type(error).__mro__:
            if cls in self.error_handlers:
                return self.error_handlers[cls](error)
        raise error

    def run(self, argv=None):
        """
        Parse arguments, configure logging and dispatch one command.

        Returns:
            int: Process exit code
        """
        args = self.parser.parse_args(argv)
        _configure_logging(args.log_level or self.config.LOG_LEVEL, args.log_file or self.config.LOG_FILE)
        args.out = os.path.abspath(args.out or self.config.OUT_DIR)
        try:
            settings = load_settings(args.config, env=args.env, seed=args.seed, workers=args.workers)
            logging.getLogger(__name__).info(
                f"Running '{args.command}' (seed={settings.seed}, workers={settings.workers}, out={args.out})"
            )
            return args.handler(args, settings)
        except (Exception, KeyboardInterrupt) as e:
            return self.handle_error(e)


def create_app(config_class=None):
    """
    Application factory for creating CLI app instances.

    Args:
        config_class: Configuration class to use (default from environment)

    Returns:
        TrajGuardApp instance
    """
    if config_class is None:
        config = get_config()
    else:
        config = config_class()

    app = TrajGuardApp(config)
    _add_common_arguments(app.common, config)

    # Register error handlers
    register_error_handlers(app)

    # Register subcommands
    register_commands(app)

    return app


def _add_common_arguments(parser, config):
    """Flags accepted by every subcommand."""
    parser.add_argument("--config", default=None, help="JSON run file overriding the profile")
    parser.add_argument("--env", default=config.TRAJGUARD_ENV, choices=sorted(config_map),
                        help="settings profile")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default=None, help="output directory for artifacts")
    parser.add_argument("--workers", type=int, default=None, help="attack worker processes")
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", default=None, help="also write the log to this file")


def _configure_logging(level, log_file=None):
    """Configure application logging."""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler()],
        force=True,
    )

    # Reduce noise from third-party libraries
    logging.getLogger('reportlab').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)

    if log_file:
        try:
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logging.getLogger().addHandler(file_handler)
        except OSError as e:
            logging.getLogger(__name__).warning(f"Cannot open log file {log_file}: {e}")


def main(argv=None):
    return create_app().run(argv)


if __name__ == '__main__':
    sys.exit(main())
