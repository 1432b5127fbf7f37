"""
Comando `spectral`: frequenze delle viste e risposta del filtro passa-basso
"""
import argparse
import logging

from middleware.errors import InputValidationError
from middleware.validation import (
    add_common_arguments,
    config_from_args,
    ensure_output_dir,
    require_inputs,
    training_dataset,
)
from services.spectral import attribute_spectrum, spectrum
from services.storage import artifact_store

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("spectral", help="Spectral analysis of the view graphs")
    add_common_arguments(parser)
    parser.add_argument("--view", action="append", help="View name (repeatable; default: all views)")
    parser.add_argument("--num-top", type=int, help="Extreme frequencies to compute on large graphs")
    parser.add_argument("--signal-column", type=int,
                        help="Attribute column whose graph Fourier spectrum is reported")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, require_dataset=False)
    output_dir = ensure_output_dir(config)
    dataset = training_dataset(config, explicit=args.dataset is not None)
    require_inputs((dataset, "Dataset manifest"))
    network = artifact_store.read_network(dataset)
    order = config.hyperparams.filter_order

    names = args.view or network.view_names
    indices = [network.view_index(name) for name in names]
    if args.signal_column is not None and not 0 <= args.signal_column < network.d:
        raise InputValidationError(f"--signal-column must lie in [0, {network.d - 1}]")

    reports = []
    for k in indices:
        view = network.views[k]
        if args.signal_column is None:
            reports.append(spectrum(view, num_top=args.num_top, filter_order=order))
        else:
            reports.append(attribute_spectrum(view, network.attributes[:, args.signal_column], order))

    for report in reports:
        artifact_store.write_spectrum(output_dir / f"spectrum_{report.view_name}.tsv", report)
        summary = report.summary()
        low = "n/a" if summary.low_band_gain is None else f"{summary.low_band_gain:.4f}"
        high = "n/a" if summary.high_band_gain is None else f"{summary.high_band_gain:.4f}"
        print(f"{summary.view}: max_frequency={summary.max_frequency:.6f} "
              f"gain[0,0.5]={low} gain[0.5,1.5]={high}")
    return 0
