"""
Comando `inject`: perturba il dataset e scrive la ground truth
"""
import argparse
import logging

from middleware.validation import add_common_arguments, config_from_args, ensure_output_dir
from services.anomaly_lab import inject
from services.storage import artifact_store

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("inject", help="Inject structural and attribute anomalies")
    add_common_arguments(parser)
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    """Dataset perturbato in output_dir/perturbed, etichette in output_dir"""
    config = config_from_args(args)
    output_dir = ensure_output_dir(config)
    network = artifact_store.read_network(config.dataset)
    perturbed, truth = inject(network, config.injection)

    manifest = artifact_store.write_network(perturbed, output_dir / "perturbed")
    truth_path = artifact_store.write_ground_truth(truth, output_dir)
    print(f"perturbed dataset: {manifest}")
    print(f"ground truth: {truth.count} anomalies -> {truth_path}")
    return 0
