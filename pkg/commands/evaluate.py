"""
Comando `eval`: Accuracy@K, AUC e curva ROC degli score rispetto alla ground truth
"""
import argparse
import logging
from pathlib import Path

from middleware.errors import ShapeMismatchError
from middleware.validation import (
    add_common_arguments,
    check_k_list,
    config_from_args,
    ensure_output_dir,
    require_inputs,
    training_dataset,
)
from services.anomaly_lab import evaluate
from services.storage import GROUND_TRUTH_NAME, artifact_store
from commands.score import SCORES_NAME

logger = logging.getLogger(__name__)

METRICS_NAME = "metrics.json"
ROC_NAME = "roc.tsv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Evaluate scores against the ground truth")
    add_common_arguments(parser)
    parser.add_argument("--scores", type=Path, help=f"Scores CSV (default: <output_dir>/{SCORES_NAME})")
    parser.add_argument("--ground-truth", type=Path,
                        help=f"Ground-truth ids (default: <output_dir>/{GROUND_TRUTH_NAME})")
    parser.add_argument("--k-list", type=int, nargs="+", help="Override the configured k values")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    output_dir = ensure_output_dir(config)
    scores_path = args.scores or output_dir / SCORES_NAME
    truth_path = args.ground_truth or output_dir / GROUND_TRUTH_NAME
    require_inputs((scores_path, "Scores file"), (truth_path, "Ground-truth file"))

    scores = artifact_store.read_scores(scores_path)
    dataset = training_dataset(config, explicit=args.dataset is not None)
    if dataset.is_file():
        network = artifact_store.read_network(dataset)
        if network.n != len(scores):
            raise ShapeMismatchError(f"{len(scores)} scores but the dataset has {network.n} nodes")
    truth = artifact_store.read_ground_truth(truth_path, len(scores))
    check_k_list(config, len(scores))

    report, points = evaluate(scores, truth, config.k_list)
    artifact_store.write_model(output_dir / METRICS_NAME, report)
    artifact_store.write_roc(output_dir / ROC_NAME, points)

    accuracy = " ".join(f"Acc@{k}={value:.3f}" for k, value in report.accuracy_at_k.items())
    print(f"{accuracy} AUC={report.auc:.4f}")
    return 0
