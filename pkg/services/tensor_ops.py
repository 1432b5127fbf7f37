"""
Kernel numerici densi/sparsi usati da modello, gradienti e analisi spettrale
"""
from typing import Literal

import numpy as np
import numpy.typing as npt

from middleware.errors import NonFiniteError, ShapeMismatchError
from services.graph_core import SparseMatrix

DenseMatrix = npt.NDArray[np.float64]

# oltre questa soglia sigmoid vale 0/1 a precisione macchina
SIGMOID_CLAMP = 30.0


def ensure_finite(m: np.ndarray, primitive: str) -> np.ndarray:
    """Solleva NonFiniteError se `m` contiene NaN o infiniti"""
    if not np.isfinite(m).all():
        raise NonFiniteError(primitive)
    return m


def spmm(sparse: SparseMatrix, dense: DenseMatrix) -> DenseMatrix:
    """Prodotto sparso × denso esatto"""
    if sparse.n_cols != dense.shape[0]:
        raise ShapeMismatchError(
            f"spmm: sparse has {sparse.n_cols} columns, dense has {dense.shape[0]} rows"
        )
    return ensure_finite(np.asarray(sparse.csr @ dense, dtype=np.float64), "spmm")


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Prodotto denso standard (b può essere un vettore)"""
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} incompatible with {b.shape}")
    return ensure_finite(np.matmul(a, b), "matmul")


def sigmoid(m: DenseMatrix) -> DenseMatrix:
    """Sigmoid con logit limitati a [-30, 30]"""
    clipped = np.clip(m, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-clipped))


def elementwise(kind: Literal["relu", "tanh", "sigmoid", "identity"], m: DenseMatrix) -> DenseMatrix:
    """Applica l'attivazione indicata elemento per elemento"""
    if kind == "relu":
        return np.maximum(m, 0.0)
    if kind == "tanh":
        return np.tanh(m)
    if kind == "sigmoid":
        return sigmoid(m)
    if kind == "identity":
        return m.copy()
    raise ValueError(f"Unknown elementwise kind: {kind}")


def softmax(v: np.ndarray) -> np.ndarray:
    """Softmax stabile (sottrazione del massimo)"""
    v = np.asarray(v, dtype=np.float64)
    shifted = np.exp(v - v.max())
    return shifted / shifted.sum()
