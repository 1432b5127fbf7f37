import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

# Carica variabili d'ambiente
load_dotenv()

LOG_LEVEL_VAR = "MVAD_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def resolve_level(verbose: bool = False, quiet: bool = False) -> int:
    """Livello da flag CLI, altrimenti da MVAD_LOG_LEVEL (default INFO)"""
    if verbose:
        return logging.DEBUG
    if quiet:
        return logging.WARNING
    name = os.getenv(LOG_LEVEL_VAR, "INFO").strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"{LOG_LEVEL_VAR} must be a logging level name, got '{name}'")
    return level


def configure_logging(verbose: bool = False, quiet: bool = False, stream: Optional[object] = None) -> int:
    """Configura il root logger su stderr; gli artefatti e stdout restano deterministici"""
    level = resolve_level(verbose, quiet)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=stream or sys.stderr, force=True)
    return level
