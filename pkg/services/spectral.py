"""
Analisi spettrale delle viste

Frequenze = autovalori del Laplaciano normalizzato I − Ã. La risposta del filtro
dell'encoder è (1 − λ)^L: guadagno 1 in continua, attenuazione alle frequenze medie.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigvalsh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from middleware.errors import ConvergenceError, InputValidationError, ShapeMismatchError
from models import SpectrumSummary
from services.graph_core import ViewGraph

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
ARPACK_TOL = 1e-8
LOW_BAND = (0.0, 0.5)
HIGH_BAND = (0.5, 1.5)


@dataclass
class SpectrumReport:
    """Frequenze di una vista, risposta del filtro ed eventuale spettro di un segnale"""
    view_name: str
    n_nodes: int
    frequencies: np.ndarray
    response: np.ndarray
    filter_order: int
    complete: bool = True
    raw_energy: Optional[np.ndarray] = None
    filtered_energy: Optional[np.ndarray] = None

    @property
    def max_frequency(self) -> float:
        return float(self.frequencies[-1])

    def summary(self) -> SpectrumSummary:
        return SpectrumSummary(
            view=self.view_name,
            n_nodes=self.n_nodes,
            max_frequency=self.max_frequency,
            low_band_gain=band_gain(self.frequencies, self.filter_order, *LOW_BAND),
            high_band_gain=band_gain(self.frequencies, self.filter_order, *HIGH_BAND),
        )


def _laplacian(view: ViewGraph) -> sp.csr_matrix:
    if view.normalized is None:
        raise InputValidationError(f"View '{view.view_name}' has no normalized adjacency")
    return (sp.identity(view.n, format="csr") - view.normalized.csr).tocsr()


def _clip(frequencies: np.ndarray) -> np.ndarray:
    # rumore di arrotondamento sotto lo zero
    return np.sort(np.clip(frequencies, 0.0, None))


def _extreme_eigenvalues(matrix: sp.csr_matrix, k: int, which: str, view_name: str) -> np.ndarray:
    try:
        return eigsh(matrix, k=k, which=which, tol=ARPACK_TOL, return_eigenvectors=False)
    except ArpackNoConvergence as e:
        residual = np.inf
        if e.eigenvectors is not None and len(e.eigenvalues):
            residual = float(np.max(np.linalg.norm(
                matrix @ e.eigenvectors - e.eigenvectors * e.eigenvalues, axis=0
            )))
        raise ConvergenceError(
            f"Iterative eigensolver did not converge on view '{view_name}' ({which})", residual
        ) from e


def spectrum(view: ViewGraph, num_top: Optional[int] = None, filter_order: int = 3,
             dense_limit: int = DENSE_LIMIT) -> SpectrumReport:
    """
    Frequenze della vista

    Fino a `dense_limit` nodi decomposizione completa; oltre, solo le `num_top`
    frequenze più alte e più basse con il metodo iterativo (ARPACK, tol 1e-8).
    """
    laplacian = _laplacian(view)
    n = view.n
    if n <= dense_limit:
        frequencies = _clip(eigvalsh(laplacian.toarray()))
        return SpectrumReport(view.view_name, n, frequencies,
                              filter_response(frequencies, filter_order), filter_order)

    k = num_top or 6
    if not 1 <= k < n:
        raise InputValidationError(f"num_top must lie in [1, {n - 1}], got {k}")
    logger.info(f"View '{view.view_name}': {n} nodes, computing {k} extreme frequencies iteratively")
    highest = _extreme_eigenvalues(laplacian, k, "LA", view.view_name)
    # le più basse di I − Ã sono 1 − (più alte di Ã)
    lowest = 1.0 - _extreme_eigenvalues(view.normalized.csr, k, "LA", view.view_name)
    frequencies = _clip(np.unique(np.concatenate([lowest, highest])))
    return SpectrumReport(view.view_name, n, frequencies, filter_response(frequencies, filter_order),
                          filter_order, complete=False)


def filter_response(frequencies: np.ndarray, L: int) -> np.ndarray:
    """Guadagno (1 − λ)^L del filtro passa-basso"""
    return (1.0 - np.asarray(frequencies, dtype=np.float64)) ** L


def band_gain(frequencies: np.ndarray, L: int, low: float, high: float) -> Optional[float]:
    """Media di |guadagno| sulle frequenze in [low, high]; None se la banda è vuota"""
    frequencies = np.asarray(frequencies, dtype=np.float64)
    in_band = (frequencies >= low) & (frequencies <= high)
    if not in_band.any():
        return None
    return float(np.abs(filter_response(frequencies[in_band], L)).mean())


def signal_spectrum(view: ViewGraph, signal: np.ndarray, filter_order: int = 3,
                    dense_limit: int = DENSE_LIMIT) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frequenze, energia del segnale per frequenza ed energia dopo il filtro"""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (view.n,):
        raise ShapeMismatchError(f"signal has shape {signal.shape}, view has {view.n} nodes")
    if view.n > dense_limit:
        raise InputValidationError(
            f"signal spectrum needs a full eigendecomposition; {view.n} nodes exceed the limit of {dense_limit}"
        )
    eigenvalues, basis = eigh(_laplacian(view).toarray())
    coefficients = basis.T @ signal
    gain = filter_response(np.clip(eigenvalues, 0.0, None), filter_order)
    return _clip(eigenvalues), coefficients ** 2, (coefficients * gain) ** 2


def attribute_spectrum(view: ViewGraph, signal: np.ndarray, filter_order: int = 3,
                       dense_limit: int = DENSE_LIMIT) -> SpectrumReport:
    """Report completo con spettro di un segnale attributo"""
    frequencies, raw, filtered = signal_spectrum(view, signal, filter_order, dense_limit)
    return SpectrumReport(view.view_name, view.n, frequencies, filter_response(frequencies, filter_order),
                          filter_order, raw_energy=raw, filtered_energy=filtered)
