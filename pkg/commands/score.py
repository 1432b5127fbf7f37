"""
Comando `score`: calcola lo score di anomalia di ogni nodo da un checkpoint
"""
import argparse
import logging
from pathlib import Path

from middleware.validation import (
    add_common_arguments,
    config_from_args,
    ensure_output_dir,
    require_inputs,
    training_dataset,
)
from services.model import anomaly_scores
from services.storage import artifact_store
from services.training import check_compatible, params_from_checkpoint
from commands.train import CHECKPOINT_NAME

logger = logging.getLogger(__name__)

SCORES_NAME = "scores.csv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("score", help="Score every node with a trained checkpoint")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, help=f"Checkpoint (default: <output_dir>/{CHECKPOINT_NAME})")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    output_dir = ensure_output_dir(config)
    checkpoint = args.checkpoint or output_dir / CHECKPOINT_NAME
    require_inputs((checkpoint, "Checkpoint"))

    document = artifact_store.load_checkpoint(checkpoint)
    dataset = training_dataset(config, explicit=args.dataset is not None)
    require_inputs((dataset, "Dataset manifest"))
    network = artifact_store.read_network(dataset)
    check_compatible(document, network)
    params = params_from_checkpoint(document)

    scores = anomaly_scores(network, params, document.hyperparams)
    path = artifact_store.write_scores(output_dir / SCORES_NAME, scores)
    print(f"scores: {network.n} nodes -> {path}")
    return 0
