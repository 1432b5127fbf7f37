"""
Comando `train`: addestra il detector e salva checkpoint + report
"""
import argparse
import logging

from middleware.errors import DivergenceError
from middleware.validation import (
    add_common_arguments,
    add_training_arguments,
    config_from_args,
    ensure_output_dir,
    require_inputs,
    training_dataset,
)
from services.storage import artifact_store
from services.training import checkpoint_document, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.json"
REPORT_NAME = "train_report.json"


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train the multi-view detector")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    output_dir = ensure_output_dir(config)
    dataset = training_dataset(config, explicit=args.dataset is not None)
    require_inputs((dataset, "Dataset manifest"))
    network = artifact_store.read_network(dataset)

    try:
        params, report = train(network, config.hyperparams)
    except DivergenceError as e:
        # il report parziale documenta le epoche completate prima della divergenza
        if e.partial_report is not None:
            artifact_store.write_model(output_dir / REPORT_NAME, e.partial_report)
        raise

    document = checkpoint_document(params, report.hyperparams, network)
    artifact_store.save_checkpoint(output_dir / CHECKPOINT_NAME, document)
    artifact_store.write_model(output_dir / REPORT_NAME, report)
    print(f"loss: {report.initial_loss:.6f} -> {report.final_loss:.6f} over {len(report.epochs)} epochs")
    print(f"checkpoint: {output_dir / CHECKPOINT_NAME}")
    return 0
