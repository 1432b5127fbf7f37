"""
Multi-View Anomaly Detection toolkit
CLI: sintesi del benchmark, iniezione anomalie, training, scoring, valutazione e analisi spettrale
"""
import argparse
import logging
import sys
from typing import List, Optional

import yaml
from pydantic import ValidationError

from logging_config import configure_logging
from middleware.errors import InputValidationError, ToolkitError

# Import commands
from commands import COMMANDS

logger = logging.getLogger("mvad")


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Gli errori di parsing sono errori di validazione (exit 1)"""

    def error(self, message: str):
        raise InputValidationError(f"{self.prog}: {message}")


# ==================== CLI Configuration ====================

def build_parser() -> argparse.ArgumentParser:
    parser = ToolkitArgumentParser(
        prog="mvad",
        description="Anomaly detection on multi-view attributed networks",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


# ==================== Exception Handlers ====================

def main(argv: Optional[List[str]] = None) -> int:
    """Esegue un sottocomando e restituisce l'exit code (0 ok, 1 validazione, 2 numerico, 3 I/O)"""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose, args.quiet)
        return args.func(args)
    except ToolkitError as e:
        logger.error(e.detail)
        return e.exit_code
    except (ValidationError, yaml.YAMLError, ValueError) as e:
        logger.error(f"Validation error: {e}")
        return 1
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
