"""
Comando `sweep-epsilon`: train + score + eval per ogni valore di ε
"""
import argparse
import logging
from pathlib import Path

from middleware.validation import (
    add_common_arguments,
    add_training_arguments,
    check_k_list,
    config_from_args,
    ensure_output_dir,
    require_inputs,
    training_dataset,
)
from services.anomaly_lab import evaluate
from services.model import anomaly_scores, prepare
from services.storage import GROUND_TRUTH_NAME, artifact_store
from services.training import bind_views, train

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep-epsilon", help="Evaluate the detector over a grid of epsilon values")
    add_common_arguments(parser)
    add_training_arguments(parser, epsilon=False)
    parser.add_argument("--ground-truth", type=Path,
                        help=f"Ground-truth ids (default: <output_dir>/{GROUND_TRUTH_NAME})")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    output_dir = ensure_output_dir(config)
    truth_path = args.ground_truth or output_dir / GROUND_TRUTH_NAME
    require_inputs((truth_path, "Ground-truth file"))

    dataset = training_dataset(config, explicit=args.dataset is not None)
    require_inputs((dataset, "Dataset manifest"))
    network = artifact_store.read_network(dataset)
    truth = artifact_store.read_ground_truth(truth_path, network.n)
    check_k_list(config, network.n)

    base = bind_views(config.hyperparams, network)
    prepared = prepare(network, base)
    reports = []
    for epsilon in config.epsilon_sweep or DEFAULT_EPSILONS:
        hp = base.model_copy(update={"epsilon": epsilon})
        params, _ = train(network, hp, prepared)
        report, _ = evaluate(anomaly_scores(network, params, hp, prepared), truth, config.k_list, epsilon)
        logger.info(f"epsilon={epsilon}: AUC={report.auc:.4f}")
        reports.append(report)

    artifact_store.write_metrics_lines(output_dir / "sweep_epsilon.jsonl", reports)
    artifact_store.write_sweep_table(output_dir / "sweep_epsilon.tsv", reports, config.k_list)
    best = max(reports, key=lambda report: report.auc)
    print(f"best epsilon={best.epsilon} AUC={best.auc:.4f}")
    return 0
