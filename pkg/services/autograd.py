"""
GradientTape: differenziazione reverse-mode limitata alle primitive del modello

Ogni primitiva calcola il valore in avanti con i kernel di tensor_ops e registra
sul nastro una closure che, dato il gradiente a valle, restituisce i gradienti
degli input. Il nastro è ordinato topologicamente per costruzione.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from middleware.errors import InputValidationError, NonFiniteError, ShapeMismatchError
from services.graph_core import SparseMatrix
from services import tensor_ops
from services.tensor_ops import SIGMOID_CLAMP

logger = logging.getLogger(__name__)

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Variable:
    """Riferimento a un valore registrato sul nastro"""
    value: np.ndarray
    name: str
    is_parameter: bool = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape


@dataclass(eq=False)
class TapeEntry:
    """Primitiva registrata: input, output e closure di backward"""
    op: str
    inputs: Tuple[Variable, ...]
    output: Variable
    backward: Backward
    # pattern dei punti di non derivabilità (maschere relu/clamp) per il gradient check
    kinks: Optional[np.ndarray] = None


@dataclass
class GradientTape:
    """Nastro delle operazioni per il calcolo dei gradienti della loss"""
    entries: List[TapeEntry] = field(default_factory=list)
    leaves: List[Variable] = field(default_factory=list)

    # ==================== Leaves ====================

    def parameter(self, value: np.ndarray, name: str) -> Variable:
        variable = Variable(np.asarray(value, dtype=np.float64), name, is_parameter=True)
        self.leaves.append(variable)
        return variable

    def constant(self, value: np.ndarray, name: str) -> Variable:
        variable = Variable(np.asarray(value, dtype=np.float64), name)
        self.leaves.append(variable)
        return variable

    def _record(self, op: str, inputs: Sequence[Variable], value: np.ndarray, name: str,
                backward: Backward, kinks: Optional[np.ndarray] = None) -> Variable:
        if not np.isfinite(value).all():
            raise NonFiniteError(op, f"non-finite value produced by primitive '{op}' ({name})")
        output = Variable(value, name)
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward, kinks))
        return output

    # ==================== Primitives ====================

    def spmm_const(self, matrix: SparseMatrix, x: Variable, name: str) -> Variable:
        """Ã · x con Ã costante"""
        value = tensor_ops.spmm(matrix, x.value)
        transposed = matrix.csr.T.tocsr()
        return self._record("spmm-const", [x], value, name,
                            lambda g: [np.asarray(transposed @ g)])

    def matmul(self, a: Variable, b: Variable, name: str) -> Variable:
        value = tensor_ops.matmul(a.value, b.value)

        def backward(g):
            if b.value.ndim == 1:
                return [np.outer(g, b.value), a.value.T @ g]
            return [g @ b.value.T, a.value.T @ g]

        return self._record("matmul", [a, b], value, name, backward)

    def add_bias(self, x: Variable, bias: Variable, name: str) -> Variable:
        if x.shape[-1] != bias.shape[0]:
            raise ShapeMismatchError(f"add-bias: {x.shape} incompatible with bias {bias.shape}")
        return self._record("add-bias", [x, bias], x.value + bias.value, name,
                            lambda g: [g, g.sum(axis=0)])

    def relu(self, x: Variable, name: str) -> Variable:
        mask = x.value > 0
        # relu'(0) = 0
        return self._record("relu", [x], np.where(mask, x.value, 0.0), name,
                            lambda g: [g * mask], kinks=mask)

    def tanh(self, x: Variable, name: str) -> Variable:
        value = np.tanh(x.value)
        return self._record("tanh", [x], value, name, lambda g: [g * (1.0 - value * value)])

    def activation(self, kind: str, x: Variable, name: str) -> Variable:
        """g configurabile: relu o identità"""
        if kind == "relu":
            return self.relu(x, name)
        if kind == "identity":
            return x
        raise InputValidationError(f"Unsupported activation: {kind}")

    def sigmoid_inner_product_l1(self, z: Variable, target: SparseMatrix, block_size: int,
                                 name: str) -> Tuple[Variable, np.ndarray]:
        """
        ||σ(Z Zᵀ) − A||₁ calcolata a blocchi di righe

        Non materializza mai la matrice n×n: memoria O(block_size · n). Restituisce
        anche l'errore L1 per riga (usato come score di struttura).
        """
        Z = z.value
        n = Z.shape[0]
        if target.shape != (n, n):
            raise ShapeMismatchError(f"structure target {target.shape} does not match {n} embeddings")

        row_errors = np.empty(n, dtype=np.float64)
        clamp_masks = []
        for start in range(0, n, block_size):
            stop = min(start + block_size, n)
            logits = Z[start:stop] @ Z.T
            residual = tensor_ops.sigmoid(logits) - target.row_block(start, stop)
            row_errors[start:stop] = np.abs(residual).sum(axis=1)
            clamp_masks.append(np.abs(logits) < SIGMOID_CLAMP)
        kinks = np.concatenate([m.ravel() for m in clamp_masks]) if clamp_masks else None

        def backward(g):
            grad = np.zeros_like(Z)
            for start in range(0, n, block_size):
                stop = min(start + block_size, n)
                logits = Z[start:stop] @ Z.T
                probs = tensor_ops.sigmoid(logits)
                residual = probs - target.row_block(start, stop)
                # sign(0) = 0 e derivata nulla fuori dal clamp
                local = np.sign(residual) * probs * (1.0 - probs) * (np.abs(logits) < SIGMOID_CLAMP)
                grad[start:stop] += local @ Z
                grad += local.T @ Z[start:stop]
            return [g * grad]

        loss = self._record("sigmoid-inner-product-L1", [z], np.asarray(row_errors.sum()), name,
                            backward, kinks=kinks)
        return loss, row_errors

    def sigmoid_inner_product_l1_sampled(self, z: Variable, target: SparseMatrix,
                                         columns: np.ndarray, name: str) -> Tuple[Variable, np.ndarray]:
        """
        Stima della loss di struttura con colonne negative campionate

        Archi esatti; il termine dei non-archi di ogni riga è stimato sulle colonne
        `columns` (condivise tra le righe) e scalato di n/m.
        """
        Z = z.value
        n = Z.shape[0]
        scale = n / len(columns)
        csr = target.csr

        rows, cols = csr.nonzero()
        edge_logits = np.einsum("ij,ij->i", Z[rows], Z[cols])
        edge_probs = tensor_ops.sigmoid(edge_logits)
        sampled_logits = Z @ Z[columns].T
        sampled_probs = tensor_ops.sigmoid(sampled_logits)
        non_edge = 1.0 - csr[:, columns].toarray()

        row_errors = np.bincount(rows, weights=1.0 - edge_probs, minlength=n)
        row_errors += scale * (sampled_probs * non_edge).sum(axis=1)

        def backward(g):
            grad = np.zeros_like(Z)
            edge_local = -edge_probs * (1.0 - edge_probs) * (np.abs(edge_logits) < SIGMOID_CLAMP)
            np.add.at(grad, rows, edge_local[:, None] * Z[cols])
            np.add.at(grad, cols, edge_local[:, None] * Z[rows])
            local = scale * non_edge * sampled_probs * (1.0 - sampled_probs)
            local *= np.abs(sampled_logits) < SIGMOID_CLAMP
            grad += local @ Z[columns]
            np.add.at(grad, columns, local.T @ Z)
            return [g * grad]

        loss = self._record("sigmoid-inner-product-L1", [z], np.asarray(row_errors.sum()), name, backward)
        return loss, row_errors

    def softmax_weighted_sum(self, scores: Sequence[Variable], values: Sequence[Variable],
                             name: str, uniform: bool = False) -> Tuple[Variable, np.ndarray]:
        """
        Σ_k α_k V_k con α = softmax(media sui nodi degli score di vista)

        Con `uniform` i pesi sono fissi a 1/K e gli score non servono.
        """
        K = len(values)
        shape = values[0].shape
        for v in values:
            if v.shape != shape:
                raise ShapeMismatchError(f"fusion: view embeddings differ in shape ({v.shape} vs {shape})")

        if uniform:
            alpha = np.full(K, 1.0 / K)
        else:
            importance = np.array([s.value.mean() for s in scores])
            alpha = tensor_ops.softmax(importance)
        value = sum(alpha[k] * values[k].value for k in range(K))

        def backward(g):
            grads_values = [alpha[k] * g for k in range(K)]
            if uniform:
                return grads_values
            d_alpha = np.array([(g * values[k].value).sum() for k in range(K)])
            d_importance = alpha * (d_alpha - np.dot(alpha, d_alpha))
            grads_scores = [np.full(scores[k].shape, d_importance[k] / scores[k].value.size)
                            for k in range(K)]
            return grads_scores + grads_values

        inputs = list(values) if uniform else list(scores) + list(values)
        return self._record("softmax-weighted-sum", inputs, value, name, backward), alpha

    def frobenius_loss(self, x: Variable, target: np.ndarray, name: str) -> Tuple[Variable, np.ndarray]:
        """||x − target||²_F; restituisce anche l'errore quadratico per riga"""
        if x.shape != target.shape:
            raise ShapeMismatchError(f"frobenius-loss: {x.shape} vs target {target.shape}")
        residual = x.value - target
        row_errors = (residual * residual).sum(axis=1)
        loss = self._record("frobenius-loss", [x], np.asarray(row_errors.sum()), name,
                            lambda g: [2.0 * g * residual])
        return loss, row_errors

    def weighted_sum(self, scalars: Sequence[Variable], weights: Sequence[float], name: str) -> Variable:
        """Combinazione lineare di loss scalari"""
        value = np.asarray(sum(w * s.value for w, s in zip(weights, scalars)))
        return self._record("weighted-sum", scalars, value, name,
                            lambda g: [w * g for w in weights])

    # ==================== Reverse pass ====================

    def gradient(self, loss: Variable) -> Dict[str, np.ndarray]:
        """Gradienti di `loss` rispetto a tutti i parametri registrati"""
        if loss.value.size != 1:
            raise InputValidationError("gradient() requires a scalar loss")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}

        for entry in reversed(self.entries):
            upstream = grads.pop(id(entry.output), None)
            if upstream is None:
                continue
            local = entry.backward(upstream)
            for variable, contribution in zip(entry.inputs, local):
                if contribution is None:
                    continue
                if not np.isfinite(contribution).all():
                    raise NonFiniteError(entry.op, f"non-finite gradient in primitive '{entry.op}'")
                key = id(variable)
                grads[key] = grads[key] + contribution if key in grads else contribution

        return {
            leaf.name: grads.get(id(leaf), np.zeros_like(leaf.value))
            for leaf in self.leaves if leaf.is_parameter
        }

    def kink_signature(self) -> List[np.ndarray]:
        """Maschere di attivazione registrate, in ordine di nastro"""
        return [entry.kinks for entry in self.entries if entry.kinks is not None]

    def dangling_outputs(self, terminals: Sequence[Variable]) -> List[str]:
        """Output mai consumati a valle e non marcati come terminali"""
        consumed = {id(v) for entry in self.entries for v in entry.inputs}
        consumed.update(id(t) for t in terminals)
        return [entry.output.name for entry in self.entries if id(entry.output) not in consumed]
