"""
Caricamento e validazione della config di run

La config YAML viene validata con RunConfig; gli errori riportano file, riga e
percorso della chiave. I flag della CLI sovrascrivono i valori del file.
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import yaml
from pydantic import ValidationError

from middleware.errors import InputValidationError, StorageError
from models import RunConfig
from services.storage import MANIFEST_NAME, artifact_store

logger = logging.getLogger(__name__)

PATH_KEYS = ("dataset", "output_dir")

# flag CLI → chiave puntata nella config
FLAG_KEYS = {
    "dataset": ("dataset",),
    "output_dir": ("output_dir",),
    "seed": ("hyperparams.seed", "injection.seed", "synthetic.seed"),
    "epochs": ("hyperparams.epochs",),
    "learning_rate": ("hyperparams.learning_rate",),
    "epsilon": ("hyperparams.epsilon",),
    "filter_order": ("hyperparams.filter_order",),
    "fusion_mode": ("hyperparams.fusion_mode",),
    "encoder_mode": ("hyperparams.encoder_mode",),
    "negative_samples": ("hyperparams.negative_samples",),
    "k_list": ("k_list",),
}


# ==================== Shared CLI Arguments ====================

def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Argomenti condivisi da tutti i sottocomandi"""
    parser.add_argument("--config", required=True, type=Path, help="Run config YAML")
    parser.add_argument("--dataset", type=Path, help="Dataset manifest (overrides config)")
    parser.add_argument("--output-dir", type=Path, help="Output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="Seed for every random stream")


def add_training_arguments(parser: argparse.ArgumentParser, epsilon: bool = True) -> None:
    """Override degli iperparametri per train, score e sweep (senza --epsilon se la griglia lo fissa)"""
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--learning-rate", type=float)
    if epsilon:
        parser.add_argument("--epsilon", type=float)
    parser.add_argument("--filter-order", type=int)
    parser.add_argument("--fusion-mode", choices=["attention", "average"])
    parser.add_argument("--encoder-mode", choices=["simplified", "multilayer"])
    parser.add_argument("--negative-samples", type=int)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag valorizzati → {chiave puntata: valore}"""
    overrides: Dict[str, Any] = {}
    for flag, keys in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        for key in keys:
            overrides[key] = str(value) if isinstance(value, Path) else value
    return overrides


# ==================== YAML Positions ====================

def _node_line(root: Optional[yaml.Node], loc: Sequence[Any]) -> Optional[int]:
    """Riga (1-based) del nodo più profondo raggiungibile lungo `loc`"""
    node, line = root, None
    if node is not None:
        line = node.start_mark.line + 1
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((value for key, value in node.value if key.value == str(part)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            match = node.value[part]
        else:
            match = None
        if match is None:
            break
        node = match
        line = node.start_mark.line + 1
    return line


def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    target = data
    for part in parents:
        child = target.get(part)
        if not isinstance(child, dict):
            child = {}
            target[part] = child
        target = child
    target[leaf] = value


def format_validation_error(error: ValidationError, source: Path, root: Optional[yaml.Node],
                            overrides: Iterable[str] = ()) -> str:
    """Un messaggio `file:riga: chiave: errore` per ogni errore pydantic"""
    overridden = set(overrides)
    lines = []
    for item in error.errors():
        dotted = ".".join(str(part) for part in item["loc"])
        if any(dotted == key or dotted.startswith(key + ".") for key in overridden):
            where = "command-line flag"
        else:
            where = f"{source}:{_node_line(root, item['loc']) or 1}"
        lines.append(f"{where}: {dotted}: {item['msg']}")
    return "\n".join(lines)


# ==================== Config Loading ====================

def load_run_config(path: Path, overrides: Optional[Dict[str, Any]] = None,
                    require_dataset: bool = True) -> RunConfig:
    """
    Legge, completa e valida la config

    I percorsi relativi nel file sono risolti rispetto alla cartella della config;
    quelli passati da flag rispetto alla directory corrente.
    """
    path = Path(path)
    text = artifact_store.read_text(path, "Config file")
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        problem = getattr(e, "problem", None) or str(e)
        raise InputValidationError(f"{path}:{line}: invalid YAML: {problem}") from None

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InputValidationError(f"{path}:1: config must be a mapping of keys to values")

    for key in PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(path.parent / value)

    overrides = overrides or {}
    for dotted, value in overrides.items():
        _set_dotted(data, dotted, value)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise InputValidationError(format_validation_error(e, path, root, overrides)) from None

    if require_dataset and not config.dataset.is_file():
        raise StorageError(f"Dataset manifest not found: {config.dataset}")
    logger.debug(f"Loaded config {path} (overrides: {sorted(overrides)})")
    return config


def config_from_args(args: argparse.Namespace, require_dataset: bool = True) -> RunConfig:
    return load_run_config(args.config, overrides_from_args(args), require_dataset)


# ==================== Pre-write Guards ====================

def training_dataset(config: RunConfig, explicit: bool = False) -> Path:
    """Dataset perturbato di output_dir se presente, altrimenti quello della config

    Con `explicit` (flag --dataset) il dataset indicato vince sempre.
    """
    if explicit:
        return config.dataset
    perturbed = config.output_dir / "perturbed" / MANIFEST_NAME
    if perturbed.is_file():
        logger.info(f"Using perturbed dataset {perturbed}")
        return perturbed
    return config.dataset


def require_inputs(*paths: Tuple[Path, str]) -> None:
    """Ogni input deve esistere prima di produrre qualsiasi output"""
    for path, what in paths:
        if not Path(path).is_file():
            raise StorageError(f"{what} not found: {path}")


def ensure_output_dir(config: RunConfig) -> Path:
    """output_dir deve essere una cartella (o non esistere ancora)"""
    output_dir = config.output_dir
    if output_dir.exists() and not output_dir.is_dir():
        raise StorageError(f"Output path exists and is not a directory: {output_dir}")
    return output_dir


def check_k_list(config: RunConfig, n: int) -> None:
    """Tutti i k devono essere ≤ n"""
    too_large = [k for k in config.k_list if k > n]
    if too_large:
        raise InputValidationError(f"k_list entries {too_large} exceed the number of nodes ({n})")
