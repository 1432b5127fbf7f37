"""
Comando `synthesize`: genera il benchmark sintetico a comunità nel percorso `dataset`
"""
import argparse
import logging

from middleware.validation import add_common_arguments, config_from_args
from services.storage import artifact_store
from services.synthetic import generate

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synthesize", help="Write a seeded community-structured benchmark dataset")
    add_common_arguments(parser)
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    network, _ = generate(config.synthetic)
    manifest = artifact_store.write_network(network, config.dataset.parent, config.dataset.name)
    print(f"synthetic dataset: n={network.n}, d={network.d}, views={network.view_names} -> {manifest}")
    return 0
