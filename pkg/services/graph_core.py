"""
Modello dati e ingestion per reti attribuite multi-vista

Contiene la matrice sparsa CSR condivisa da tutto il toolkit, le viste, la rete
multi-vista, la proiezione bipartita utenti-item e la normalizzazione simmetrica
con self-loop.
"""
import configparser
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from middleware.errors import NetworkFormatError, ShapeMismatchError, StorageError

logger = logging.getLogger(__name__)


# ==================== Sparse Matrix ====================

@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """
    Matrice CSR immutabile a 64 bit

    Forma canonica: colonne strettamente crescenti in ogni riga, nessuno zero
    esplicito memorizzato.
    """
    csr: sp.csr_matrix

    @classmethod
    def from_scipy(cls, matrix) -> "SparseMatrix":
        """Converte qualsiasi matrice scipy nella forma canonica"""
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(csr)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def n_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def row_block(self, start: int, stop: int) -> np.ndarray:
        """Righe [start, stop) come blocco denso"""
        return self.csr[start:stop].toarray()

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def is_symmetric(self) -> bool:
        if self.n_rows != self.n_cols:
            return False
        return (abs(self.csr - self.csr.T) > 0).nnz == 0

    def validate(self) -> None:
        """Verifica gli invarianti CSR, solleva ValueError se violati"""
        offsets, cols = self.row_offsets, self.col_indices
        if len(offsets) != self.n_rows + 1 or offsets[0] != 0:
            raise ValueError("row_offsets must have length n_rows+1 and start at 0")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if offsets[-1] != len(cols) or len(cols) != len(self.values):
            raise ValueError("row_offsets[-1], col_indices and values lengths disagree")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            if np.any(np.diff(cols[offsets[i]:offsets[i + 1]]) <= 0):
                raise ValueError(f"columns of row {i} are not strictly increasing")
        if np.any(self.values == 0):
            raise ValueError("explicit zeros are not allowed")


def binary_adjacency(rows: Sequence[int], cols: Sequence[int], n: int) -> SparseMatrix:
    """Adiacenza binaria simmetrica da una lista di archi (duplicati e inversi uniti)"""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    both_rows = np.concatenate([rows, cols])
    both_cols = np.concatenate([cols, rows])
    coo = sp.coo_matrix((np.ones(len(both_rows)), (both_rows, both_cols)), shape=(n, n))
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.data[:] = 1.0
    return SparseMatrix.from_scipy(csr)


def binarize(matrix) -> SparseMatrix:
    """Pattern binario di una matrice scipy (valori non nulli → 1.0)"""
    csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    csr.eliminate_zeros()
    csr.data[:] = 1.0
    return SparseMatrix.from_scipy(csr)


# ==================== Views and Network ====================

@dataclass(frozen=True, eq=False)
class ViewGraph:
    """Singola vista: adiacenza binaria simmetrica senza diagonale + forma normalizzata"""
    view_name: str
    adjacency: SparseMatrix
    normalized: Optional[SparseMatrix] = None

    def __post_init__(self):
        adjacency = self.adjacency
        if adjacency.n_rows != adjacency.n_cols:
            raise ShapeMismatchError(f"View '{self.view_name}': adjacency must be square")
        if adjacency.csr.diagonal().any():
            raise NetworkFormatError(f"View '{self.view_name}': adjacency diagonal must be empty")
        if np.any(adjacency.values != 1.0):
            raise NetworkFormatError(f"View '{self.view_name}': adjacency must be binary")
        if not adjacency.is_symmetric():
            raise NetworkFormatError(f"View '{self.view_name}': adjacency must be symmetric")

    @classmethod
    def build(cls, view_name: str, adjacency: SparseMatrix) -> "ViewGraph":
        """Costruisce la vista calcolando subito la matrice normalizzata"""
        return cls(view_name=view_name, adjacency=adjacency, normalized=normalize(adjacency))

    @property
    def n(self) -> int:
        return self.adjacency.n_rows

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2


@dataclass(frozen=True, eq=False)
class MultiViewNetwork:
    """K viste su un insieme di nodi condiviso + matrice attributi densa n×d"""
    views: Tuple[ViewGraph, ...]
    attributes: np.ndarray
    node_labels: Optional[Tuple[str, ...]] = None
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        attributes = np.array(self.attributes, dtype=np.float64, copy=True)
        if attributes.ndim != 2:
            raise ShapeMismatchError("Attribute matrix must be two-dimensional")
        if not np.isfinite(attributes).all():
            raise NetworkFormatError("Attribute matrix contains non-finite values")
        attributes.flags.writeable = False
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "n", attributes.shape[0])
        object.__setattr__(self, "d", attributes.shape[1])

        if not self.views:
            raise NetworkFormatError("A network needs at least one view")
        names = [view.view_name for view in self.views]
        if len(set(names)) != len(names):
            raise NetworkFormatError(f"Duplicate view names: {names}")
        for view in self.views:
            if view.n != self.n:
                raise ShapeMismatchError(
                    f"View '{view.view_name}' has {view.n} nodes, attributes have {self.n} rows"
                )
        if self.node_labels is not None and len(self.node_labels) != self.n:
            raise ShapeMismatchError(f"Expected {self.n} node labels, got {len(self.node_labels)}")

    @property
    def K(self) -> int:
        return len(self.views)

    @property
    def view_names(self) -> List[str]:
        return [view.view_name for view in self.views]

    def view_index(self, view_name: str) -> int:
        try:
            return self.view_names.index(view_name)
        except ValueError:
            raise NetworkFormatError(
                f"Unknown view '{view_name}'. Available views: {self.view_names}"
            ) from None


# ==================== Graph Operations ====================

def project_bipartite(interactions: Sequence[Tuple[int, int]], n_users: int) -> SparseMatrix:
    """
    Proiezione utenti-item → utenti-utenti

    Due utenti distinti sono collegati se condividono almeno un item. Gli id degli
    item sono arbitrari interi non negativi.
    """
    pairs = np.asarray(interactions, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return SparseMatrix.from_scipy(sp.csr_matrix((n_users, n_users)))
    users, items = pairs[:, 0], pairs[:, 1]
    if users.min() < 0 or users.max() >= n_users:
        raise NetworkFormatError("node id out of range in interactions")
    if items.min() < 0:
        raise NetworkFormatError("item ids must be non-negative")

    _, item_index = np.unique(items, return_inverse=True)
    incidence = sp.csr_matrix(
        (np.ones(len(users)), (users, item_index)),
        shape=(n_users, int(item_index.max()) + 1),
    )
    incidence.data[:] = 1.0
    co_occurrence = (incidence @ incidence.T).tolil()
    co_occurrence.setdiag(0)
    return binarize(co_occurrence.tocsr())


def normalize(adjacency: SparseMatrix) -> SparseMatrix:
    """Ã = D̃^{-1/2} (A + I) D̃^{-1/2} con D̃ grado di A + I"""
    if adjacency.n_rows != adjacency.n_cols:
        raise ShapeMismatchError(f"normalize expects a square matrix, got {adjacency.shape}")
    n = adjacency.n_rows
    looped = adjacency.csr + sp.identity(n, format="csr")
    degree = np.asarray(looped.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    return SparseMatrix.from_scipy(d_inv_sqrt @ looped @ d_inv_sqrt)


def union_adjacency(network: MultiViewNetwork) -> SparseMatrix:
    """OR elemento per elemento delle adiacenze di tutte le viste"""
    total = network.views[0].adjacency.csr.copy()
    for view in network.views[1:]:
        total = total + view.adjacency.csr
    return binarize(total)


# ==================== Ingestion ====================

def _resolve(base: Path, value: str) -> Path:
    path = Path(value.strip())
    return path if path.is_absolute() else base / path


def _read_pairs(path: Path, what: str) -> Tuple[np.ndarray, np.ndarray]:
    """Legge un file di coppie di interi separati da spazi (`#` commenti)"""
    if not path.is_file():
        raise StorageError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=r"\s+", header=None, comment="#", dtype=str)
    except pd.errors.EmptyDataError:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    except pd.errors.ParserError as e:
        raise NetworkFormatError(f"{path}: {e}") from None

    if frame.shape[1] != 2:
        raise NetworkFormatError(f"{path}: expected two ids per line, found {frame.shape[1]} columns")
    bad = ~frame.apply(lambda column: column.str.fullmatch(r"\d+", na=False)).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise NetworkFormatError(
            f"{path}: data row {row + 1} is not a pair of non-negative integers: "
            f"{' '.join(map(str, frame.iloc[row].tolist()))}"
        )
    pairs = frame.to_numpy(dtype=str).astype(np.int64)
    return pairs[:, 0], pairs[:, 1]


def read_edge_file(path: Path, n: int) -> SparseMatrix:
    """Edge list utente-utente → adiacenza binaria simmetrica"""
    rows, cols = _read_pairs(path, "Edge")
    if len(rows) and max(rows.max(), cols.max()) >= n:
        raise NetworkFormatError(f"{path}: node id out of range (n={n})")
    loops = np.flatnonzero(rows == cols)
    if len(loops):
        raise NetworkFormatError(f"{path}: self-loop '{rows[loops[0]]} {rows[loops[0]]}' is not allowed")
    return binary_adjacency(rows, cols, n)


def read_interaction_file(path: Path, n: int) -> SparseMatrix:
    """Coppie utente-item → adiacenza proiettata"""
    users, items = _read_pairs(path, "Interaction")
    if len(users) and users.max() >= n:
        raise NetworkFormatError(f"{path}: node id out of range (n={n})")
    return project_bipartite(np.column_stack([users, items]), n)


def read_attribute_file(path: Path) -> np.ndarray:
    """CSV numerico n×d, header opzionale rilevato automaticamente"""
    if not path.is_file():
        raise StorageError(f"Attribute file not found: {path}")
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True,
                          keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise NetworkFormatError(f"{path}: attribute file is empty") from None
    except pd.errors.ParserError as e:
        raise NetworkFormatError(f"{path}: {e}") from None

    first_line = 1
    first_row = pd.to_numeric(raw.iloc[0], errors="coerce")
    if first_row.isna().all():
        # header non numerico
        raw = raw.iloc[1:]
        first_line = 2
    if raw.empty:
        raise NetworkFormatError(f"{path}: attribute file has no data rows")

    parsed = raw.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(parsed)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NetworkFormatError(
            f"{path}: non-numeric attribute cell at line {row + first_line}, column {col + 1}: "
            f"'{raw.iloc[row, col]}'"
        )
    # parsing esatto (repr dei float round-trip)
    return raw.to_numpy(dtype=str).astype(np.float64)


def read_label_file(path: Path) -> Tuple[str, ...]:
    if not path.is_file():
        raise StorageError(f"Label file not found: {path}")
    return tuple(line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines())


_DATASET_HEADER = re.compile(r"^\s*\[dataset\]\s*$", re.MULTILINE)


def _manifest_error(path: Path, error: configparser.Error, offset: int) -> str:
    """Messaggio di configparser riportato alle righe del file reale"""
    if isinstance(error, configparser.MissingSectionHeaderError):
        return f"{path}:{error.lineno - offset}: key outside any section: {error.line.strip()}"
    if isinstance(error, configparser.ParsingError):
        lineno, line = error.errors[0]
        return f"{path}:{lineno - offset}: cannot parse line {line}"
    if isinstance(error, configparser.DuplicateSectionError) and error.lineno:
        return f"{path}:{error.lineno - offset}: duplicate section [{error.section}]"
    if isinstance(error, configparser.DuplicateOptionError) and error.lineno:
        return f"{path}:{error.lineno - offset}: duplicate key '{error.option}' in [{error.section}]"
    return f"{path}: {error.message}"


def load_network(manifest_path: Union[str, Path]) -> MultiViewNetwork:
    """
    Carica e valida una rete multi-vista da manifest

    Il numero di nodi è dato dalle righe del file attributi; le edge list vengono
    deduplicate e simmetrizzate.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise StorageError(f"Manifest not found: {manifest_path}")
    base = manifest_path.parent

    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
    )
    text = manifest_path.read_text(encoding="utf-8")
    # le chiavi di primo livello finiscono nella sezione implicita [dataset]
    offset = 0 if _DATASET_HEADER.search(text) else 1
    try:
        parser.read_string("[dataset]\n" * offset + text, source=str(manifest_path))
    except configparser.Error as e:
        raise NetworkFormatError(_manifest_error(manifest_path, e, offset)) from None

    dataset = parser["dataset"]
    unknown = set(dataset.keys()) - {"attributes", "labels"}
    if unknown:
        raise NetworkFormatError(f"{manifest_path}: unknown keys {sorted(unknown)}")
    if "attributes" not in dataset:
        raise NetworkFormatError(f"{manifest_path}: missing 'attributes' entry")

    attributes = read_attribute_file(_resolve(base, dataset["attributes"]))
    n = attributes.shape[0]
    labels = read_label_file(_resolve(base, dataset["labels"])) if "labels" in dataset else None

    views: List[ViewGraph] = []
    for section in parser.sections():
        if section == "dataset":
            continue
        if not section.startswith("view.") or len(section) == len("view."):
            raise NetworkFormatError(f"{manifest_path}: unexpected section [{section}]")
        name = section[len("view."):]
        entries = parser[section]
        keys = set(entries.keys())
        if keys == {"edges"}:
            adjacency = read_edge_file(_resolve(base, entries["edges"]), n)
        elif keys == {"interactions"}:
            adjacency = read_interaction_file(_resolve(base, entries["interactions"]), n)
        else:
            raise NetworkFormatError(
                f"{manifest_path}: view '{name}' must declare exactly one of 'edges' or 'interactions'"
            )
        views.append(ViewGraph.build(name, adjacency))
        logger.debug(f"Loaded view '{name}' with {adjacency.nnz // 2} edges")

    if not views:
        raise NetworkFormatError(f"{manifest_path}: zero views declared")

    network = MultiViewNetwork(views=tuple(views), attributes=attributes, node_labels=labels)
    logger.info(f"Loaded network: n={network.n}, d={network.d}, views={network.view_names}")
    return network
