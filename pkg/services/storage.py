"""
Persistenza degli artefatti su filesystem

Tutte le scritture sono atomiche (file temporaneo nella stessa cartella, poi
os.replace): un comando interrotto non lascia mai file parziali.
"""
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from middleware.errors import InputValidationError, ShapeMismatchError, StorageError
from models import AnomalyMechanism, CheckpointFile, MetricsReport
from services.anomaly_lab import GroundTruth, ranking
from services.graph_core import MultiViewNetwork, load_network
from services.spectral import SpectrumReport

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.ini"
ATTRIBUTES_NAME = "attributes.csv"
GROUND_TRUTH_NAME = "ground_truth.txt"
MECHANISMS_NAME = "mechanisms.tsv"


class ArtifactStore:
    """Letture e scritture di dataset, checkpoint, report e tabelle"""

    # ==================== Low Level ====================

    @staticmethod
    def write_text(path: Path, text: str) -> Path:
        """Scrittura atomica di un file di testo (newline '\\n')"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
                    handle.write(text)
                os.replace(tmp_name, path)
            except BaseException:
                if os.path.exists(tmp_name):
                    os.unlink(tmp_name)
                raise
        except OSError as e:
            raise StorageError(f"Cannot write {path}: {e.strerror or e}") from e
        logger.debug(f"Wrote {path}")
        return path

    @staticmethod
    def read_text(path: Path, what: str = "File") -> str:
        path = Path(path)
        if not path.is_file():
            raise StorageError(f"{what} not found: {path}")
        try:
            return path.read_text(encoding="utf-8")
        except OSError as e:
            raise StorageError(f"Cannot read {path}: {e.strerror or e}") from e

    @staticmethod
    def write_model(path: Path, model: BaseModel) -> Path:
        """Documento JSON indentato di un modello pydantic"""
        return ArtifactStore.write_text(path, model.model_dump_json(indent=2) + "\n")

    @staticmethod
    def write_frame(path: Path, frame: pd.DataFrame, sep: str = ",", header: bool = True) -> Path:
        buffer = io.StringIO()
        frame.to_csv(buffer, sep=sep, index=False, header=header, lineterminator="\n")
        return ArtifactStore.write_text(path, buffer.getvalue())

    # ==================== Datasets ====================

    @staticmethod
    def write_network(network: MultiViewNetwork, directory: Path, manifest_name: str = MANIFEST_NAME) -> Path:
        """Scrive attributi, una edge list per vista e il manifest; restituisce il manifest"""
        directory = Path(directory)
        ArtifactStore.write_frame(directory / ATTRIBUTES_NAME, pd.DataFrame(network.attributes), header=False)

        lines = [f"attributes = {ATTRIBUTES_NAME}"]
        if network.node_labels is not None:
            ArtifactStore.write_text(directory / "labels.txt",
                                     "".join(f"{label}\n" for label in network.node_labels))
            lines.append("labels = labels.txt")

        for view in network.views:
            rows, cols = view.adjacency.csr.nonzero()
            upper = rows < cols
            edges = "".join(f"{i} {j}\n" for i, j in zip(rows[upper], cols[upper]))
            ArtifactStore.write_text(directory / f"{view.view_name}.edges", edges)
            lines += ["", f"[view.{view.view_name}]", f"edges = {view.view_name}.edges"]

        return ArtifactStore.write_text(directory / manifest_name, "\n".join(lines) + "\n")

    @staticmethod
    def read_network(manifest: Path) -> MultiViewNetwork:
        return load_network(manifest)

    # ==================== Ground Truth ====================

    @staticmethod
    def write_ground_truth(truth: GroundTruth, directory: Path) -> Path:
        """File con un id anomalo per riga + mechanisms.tsv accanto"""
        directory = Path(directory)
        ids = truth.anomaly_ids()
        path = ArtifactStore.write_text(directory / GROUND_TRUTH_NAME, "".join(f"{i}\n" for i in ids))
        ArtifactStore.write_frame(
            directory / MECHANISMS_NAME,
            pd.DataFrame({"node_id": ids, "mechanism": [truth.mechanism[i] for i in ids]}),
            sep="\t",
        )
        return path

    @staticmethod
    def read_ground_truth(path: Path, n: int) -> GroundTruth:
        """Legge gli id anomali; usa mechanisms.tsv se presente nella stessa cartella"""
        path = Path(path)
        ids = []
        for line_number, line in enumerate(ArtifactStore.read_text(path, "Ground-truth file").splitlines(), 1):
            token = line.strip()
            if not token or token.startswith("#"):
                continue
            if not token.isdigit():
                raise InputValidationError(f"{path}:{line_number}: expected a node id, got '{token}'")
            ids.append(int(token))

        mechanisms: Optional[Dict[int, str]] = None
        tagged = path.parent / MECHANISMS_NAME
        if tagged.is_file():
            frame = pd.read_csv(tagged, sep="\t", dtype={"node_id": np.int64, "mechanism": str})
            allowed = {m.value for m in AnomalyMechanism}
            unknown = set(frame["mechanism"]) - allowed
            if unknown:
                raise InputValidationError(f"{tagged}: unknown mechanisms {sorted(unknown)}")
            mechanisms = dict(zip(frame["node_id"].tolist(), frame["mechanism"].tolist()))
        return GroundTruth.from_ids(n, ids, mechanisms)

    # ==================== Checkpoints ====================

    @staticmethod
    def save_checkpoint(path: Path, document: CheckpointFile) -> Path:
        return ArtifactStore.write_model(path, document)

    @staticmethod
    def load_checkpoint(path: Path) -> CheckpointFile:
        text = ArtifactStore.read_text(path, "Checkpoint")
        try:
            return CheckpointFile.model_validate_json(text)
        except ValidationError as e:
            raise StorageError(f"{path}: not a valid checkpoint ({e.error_count()} errors)") from e

    # ==================== Scores ====================

    @staticmethod
    def write_scores(path: Path, scores: np.ndarray) -> Path:
        """CSV node_id,score,rank ordinato per score decrescente (pareggi per id)"""
        order = ranking(scores)
        frame = pd.DataFrame({
            "node_id": order,
            "score": [repr(float(s)) for s in np.asarray(scores)[order]],
            "rank": np.arange(1, len(order) + 1),
        })
        return ArtifactStore.write_frame(path, frame)

    @staticmethod
    def read_scores(path: Path, n: Optional[int] = None) -> np.ndarray:
        """Vettore di score indicizzato per node_id"""
        path = Path(path)
        if not path.is_file():
            raise StorageError(f"Scores file not found: {path}")
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InputValidationError(f"{path}: {e}") from None
        if list(frame.columns[:2]) != ["node_id", "score"]:
            raise InputValidationError(f"{path}: header must start with 'node_id,score'")
        ids = frame["node_id"].to_numpy()
        size = len(frame)
        if sorted(ids.tolist()) != list(range(size)):
            raise InputValidationError(f"{path}: node ids must be a permutation of 0..{size - 1}")
        if n is not None and size != n:
            raise ShapeMismatchError(f"{path}: {size} scores for {n} labelled nodes")
        scores = np.empty(size, dtype=np.float64)
        scores[ids] = frame["score"].to_numpy(dtype=np.float64)
        return scores

    # ==================== Evaluation Outputs ====================

    @staticmethod
    def write_roc(path: Path, points: Sequence[Tuple[float, float]]) -> Path:
        frame = pd.DataFrame({"fpr": [repr(p[0]) for p in points], "tpr": [repr(p[1]) for p in points]})
        return ArtifactStore.write_frame(path, frame, sep="\t")

    @staticmethod
    def write_metrics_lines(path: Path, reports: Iterable[MetricsReport]) -> Path:
        """Un record JSON per riga"""
        return ArtifactStore.write_text(path, "".join(report.model_dump_json() + "\n" for report in reports))

    @staticmethod
    def write_sweep_table(path: Path, reports: List[MetricsReport], k_list: Sequence[int]) -> Path:
        frame = pd.DataFrame({
            "epsilon": [report.epsilon for report in reports],
            "auc": [report.auc for report in reports],
            **{f"acc@{k}": [report.accuracy_at_k[str(k)] for report in reports] for k in k_list},
        })
        return ArtifactStore.write_frame(path, frame, sep="\t")

    @staticmethod
    def write_spectrum(path: Path, report: SpectrumReport) -> Path:
        """TSV frequency, response e, se calcolate, raw_energy e filtered_energy"""
        columns = {
            "frequency": [repr(float(f)) for f in report.frequencies],
            "response": [repr(float(g)) for g in report.response],
        }
        if report.raw_energy is not None:
            columns["raw_energy"] = [repr(float(e)) for e in report.raw_energy]
            columns["filtered_energy"] = [repr(float(e)) for e in report.filtered_energy]
        return ArtifactStore.write_frame(path, pd.DataFrame(columns), sep="\t")


# Istanza singleton
artifact_store = ArtifactStore()
