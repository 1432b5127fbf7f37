"""
Forward pass del detector multi-vista

Encoder per vista (filtro passa-basso L-hop o GCN multilayer), fusione con
attenzione (o media), decoder di struttura per vista, decoder di attributi sul
grafo unione, loss congiunta e score di anomalia per nodo.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from middleware.errors import InputValidationError, ShapeMismatchError
from models import EncoderMode, FusionMode, HyperParams
from services.autograd import GradientTape, Variable
from services.graph_core import MultiViewNetwork, SparseMatrix, normalize, union_adjacency
from services.seeding import named_stream
from services.tensor_ops import DenseMatrix, spmm

logger = logging.getLogger(__name__)


# ==================== Parameters ====================

@dataclass
class ModelParams:
    """Tutti i tensori addestrabili del modello"""
    enc_weights: List[List[DenseMatrix]]   # per vista: 1 matrice (simplified) o L (multilayer)
    attn_W: DenseMatrix                    # F_L × F_A
    attn_b: np.ndarray                     # F_A
    attn_q: np.ndarray                     # F_A
    dec_W: DenseMatrix                     # F_L × d

    def named(self) -> Dict[str, np.ndarray]:
        """Parametri in ordine canonico con nomi stabili"""
        named: Dict[str, np.ndarray] = {}
        for k, layers in enumerate(self.enc_weights):
            for layer, weight in enumerate(layers):
                named[f"encoder.{k}.{layer}"] = weight
        named["attention.W"] = self.attn_W
        named["attention.b"] = self.attn_b
        named["attention.q"] = self.attn_q
        named["decoder.W"] = self.dec_W
        return named

    @classmethod
    def from_named(cls, named: Dict[str, np.ndarray]) -> "ModelParams":
        encoder: Dict[int, Dict[int, np.ndarray]] = {}
        for name, value in named.items():
            if name.startswith("encoder."):
                _, k, layer = name.split(".")
                encoder.setdefault(int(k), {})[int(layer)] = np.asarray(value, dtype=np.float64)
        enc_weights = [
            [encoder[k][layer] for layer in sorted(encoder[k])] for k in sorted(encoder)
        ]
        try:
            return cls(
                enc_weights=enc_weights,
                attn_W=np.asarray(named["attention.W"], dtype=np.float64),
                attn_b=np.asarray(named["attention.b"], dtype=np.float64),
                attn_q=np.asarray(named["attention.q"], dtype=np.float64),
                dec_W=np.asarray(named["decoder.W"], dtype=np.float64),
            )
        except KeyError as e:
            raise InputValidationError(f"Missing parameter tensor {e}") from None

    def map(self, fn) -> "ModelParams":
        """Applica `fn(name, array)` a ogni tensore"""
        return ModelParams.from_named({name: fn(name, value) for name, value in self.named().items()})

    def copy(self) -> "ModelParams":
        return self.map(lambda _, value: value.copy())

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, value in self.named().items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(value, dtype=np.float64).tobytes())
        return digest.hexdigest()

    @property
    def n_views(self) -> int:
        return len(self.enc_weights)

    @classmethod
    def zeros(cls, n_attributes: int, hp: HyperParams) -> "ModelParams":
        """Parametri tutti nulli (caso unità morte)"""
        return _build_params(n_attributes, hp, lambda shape: np.zeros(shape))


def _layer_shapes(n_attributes: int, hp: HyperParams) -> List[Tuple[int, int]]:
    # larghezze nascoste tutte pari a F_L
    if hp.encoder_mode == EncoderMode.SIMPLIFIED:
        return [(n_attributes, hp.embedding_dim)]
    return [(n_attributes, hp.embedding_dim)] + [
        (hp.embedding_dim, hp.embedding_dim) for _ in range(hp.filter_order - 1)
    ]


def _build_params(n_attributes: int, hp: HyperParams, make) -> ModelParams:
    if hp.n_views is None:
        raise InputValidationError("HyperParams.n_views must be set before building parameters")
    F_L, F_A = hp.embedding_dim, hp.attention_dim
    return ModelParams(
        enc_weights=[[make(shape) for shape in _layer_shapes(n_attributes, hp)]
                     for _ in range(hp.n_views)],
        attn_W=make((F_L, F_A)),
        attn_b=np.zeros(F_A),
        attn_q=make((F_A,)),
        dec_W=make((F_L, n_attributes)),
    )


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Glorot uniforme; un vettore è trattato come matrice colonna"""
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(n_attributes: int, hp: HyperParams, rng: Optional[np.random.Generator] = None) -> ModelParams:
    """Inizializzazione Glorot seedata, bias a zero"""
    rng = rng or named_stream(hp.seed, "init")
    return _build_params(n_attributes, hp, lambda shape: glorot_uniform(rng, shape))


def validate_params(params: ModelParams, n_attributes: int, hp: HyperParams) -> None:
    """Controlla che le forme dei parametri siano coerenti con d, K, F_L, F_A"""
    expected = _build_params(n_attributes, hp, lambda shape: np.empty(shape)).named()
    actual = params.named()
    if list(expected) != list(actual):
        raise ShapeMismatchError(f"Parameter set mismatch: expected {list(expected)}, got {list(actual)}")
    for name, value in actual.items():
        if value.shape != expected[name].shape:
            raise ShapeMismatchError(f"Parameter '{name}' has shape {value.shape}, expected {expected[name].shape}")
        if not np.isfinite(value).all():
            raise InputValidationError(f"Parameter '{name}' contains non-finite values")


# ==================== Prepared Network ====================

@dataclass(frozen=True, eq=False)
class PreparedNetwork:
    """Quantità senza parametri calcolate una volta per dataset"""
    network: MultiViewNetwork
    normalized: Tuple[SparseMatrix, ...]
    union_normalized: SparseMatrix
    propagated: Optional[Tuple[DenseMatrix, ...]]
    filter_order: int


def prepare(network: MultiViewNetwork, hp: HyperParams) -> PreparedNetwork:
    """Normalizzazioni e propagazione P = Ã^L X in cache"""
    if hp.n_views is not None and hp.n_views != network.K:
        raise ShapeMismatchError(f"HyperParams declare {hp.n_views} views, network has {network.K}")
    normalized = []
    for view in network.views:
        if view.normalized is None:
            raise InputValidationError(f"View '{view.view_name}' has no normalized adjacency")
        normalized.append(view.normalized)

    propagated = None
    if hp.encoder_mode == EncoderMode.SIMPLIFIED:
        propagated = []
        for matrix in normalized:
            features = np.array(network.attributes)
            for _ in range(hp.filter_order):
                features = spmm(matrix, features)
            propagated.append(features)
        propagated = tuple(propagated)

    logger.debug(f"Prepared network with {network.K} views (L={hp.filter_order})")
    return PreparedNetwork(
        network=network,
        normalized=tuple(normalized),
        union_normalized=normalize(union_adjacency(network)),
        propagated=propagated,
        filter_order=hp.filter_order,
    )


def _ensure_prepared(network: MultiViewNetwork, hp: HyperParams,
                     prepared: Optional[PreparedNetwork]) -> PreparedNetwork:
    if prepared is not None and prepared.network is network and prepared.filter_order == hp.filter_order:
        if hp.encoder_mode == EncoderMode.MULTILAYER or prepared.propagated is not None:
            return prepared
    return prepare(network, hp)


# ==================== Forward Outputs ====================

@dataclass
class ForwardOutputs:
    """Tutti i prodotti di un forward pass"""
    per_view_Z: List[DenseMatrix]
    fused_Z: DenseMatrix
    attn_weights: np.ndarray
    recon_X: DenseMatrix
    loss_structure: List[float]
    loss_attribute: float
    loss_total: float
    structure_row_errors: List[np.ndarray]
    attribute_row_errors: np.ndarray
    epsilon: float

    @property
    def loss_structure_mean(self) -> float:
        return float(np.mean(self.loss_structure))

    def node_scores(self) -> np.ndarray:
        """ε · media_k errore L1 di riga + (1 − ε) · errore attributi quadratico"""
        structure = np.mean(np.vstack(self.structure_row_errors), axis=0)
        return self.epsilon * structure + (1.0 - self.epsilon) * self.attribute_row_errors


# ==================== Graph Construction ====================

def _encode(tape: GradientTape, prepared: PreparedNetwork, k: int,
            weights: List[Variable], hp: HyperParams) -> Variable:
    name = prepared.network.views[k].view_name
    g = hp.activation.value
    if hp.encoder_mode == EncoderMode.SIMPLIFIED:
        P = tape.constant(prepared.propagated[k], f"P[{name}]")
        return tape.activation(g, tape.matmul(P, weights[0], f"PW[{name}]"), f"Z[{name}]")

    H = tape.constant(prepared.network.attributes, "X")
    for layer, W in enumerate(weights):
        H = tape.spmm_const(prepared.normalized[k], H, f"AH[{name}][{layer}]")
        H = tape.matmul(H, W, f"AHW[{name}][{layer}]")
        H = tape.activation(g, H, f"H[{name}][{layer + 1}]")
    return H


def _fuse(tape: GradientTape, per_view: List[Variable], attn_W: Variable, attn_b: Variable,
          attn_q: Variable, hp: HyperParams) -> Tuple[Variable, np.ndarray]:
    if hp.fusion_mode == FusionMode.AVERAGE:
        return tape.softmax_weighted_sum([], per_view, "Z_fused", uniform=True)
    scores = []
    for k, Z in enumerate(per_view):
        projected = tape.add_bias(tape.matmul(Z, attn_W, f"ZW[{k}]"), attn_b, f"ZW+b[{k}]")
        scores.append(tape.matmul(tape.tanh(projected, f"tanh[{k}]"), attn_q, f"score[{k}]"))
    return tape.softmax_weighted_sum(scores, per_view, "Z_fused")


def _decode_attributes(tape: GradientTape, fused: Variable, union_normalized: SparseMatrix,
                       dec_W: Variable, hp: HyperParams) -> Variable:
    propagated = tape.spmm_const(union_normalized, fused, "A_union Z_fused")
    return tape.activation(hp.activation.value, tape.matmul(propagated, dec_W, "A_union Z_fused W"), "X_hat")


def _structure_term(tape: GradientTape, Z: Variable, target: SparseMatrix, hp: HyperParams,
                    view_index: int, sample_round: int) -> Tuple[Variable, np.ndarray]:
    n = Z.shape[0]
    m = hp.negative_samples
    if m is not None and m < n:
        rng = named_stream(hp.seed, f"negative-sampling/{sample_round}/{view_index}")
        columns = np.sort(rng.choice(n, size=m, replace=False))
        return tape.sigmoid_inner_product_l1_sampled(Z, target, columns, f"L_s[{view_index}]")
    return tape.sigmoid_inner_product_l1(Z, target, hp.block_size, f"L_s[{view_index}]")


def run_forward(prepared: PreparedNetwork, params: ModelParams, hp: HyperParams,
                sample_round: int = 0) -> Tuple[GradientTape, Variable, ForwardOutputs]:
    """Costruisce il grafo di calcolo su un nuovo nastro e restituisce nastro, loss e output"""
    network = prepared.network
    validate_params(params, network.d, hp.model_copy(update={"n_views": network.K}))

    tape = GradientTape()
    enc = [[tape.parameter(W, f"encoder.{k}.{layer}") for layer, W in enumerate(layers)]
           for k, layers in enumerate(params.enc_weights)]
    attn_W = tape.parameter(params.attn_W, "attention.W")
    attn_b = tape.parameter(params.attn_b, "attention.b")
    attn_q = tape.parameter(params.attn_q, "attention.q")
    dec_W = tape.parameter(params.dec_W, "decoder.W")

    per_view = [_encode(tape, prepared, k, enc[k], hp) for k in range(network.K)]
    fused, alpha = _fuse(tape, per_view, attn_W, attn_b, attn_q, hp)
    recon = _decode_attributes(tape, fused, prepared.union_normalized, dec_W, hp)

    structure_losses, structure_rows = [], []
    for k, view in enumerate(network.views):
        loss, rows = _structure_term(tape, per_view[k], view.adjacency, hp, k, sample_round)
        structure_losses.append(loss)
        structure_rows.append(rows)
    attribute_loss, attribute_rows = tape.frobenius_loss(recon, network.attributes, "L_a")

    eps, K = hp.epsilon, network.K
    total = tape.weighted_sum(structure_losses + [attribute_loss],
                              [eps / K] * K + [1.0 - eps], "L")

    outputs = ForwardOutputs(
        per_view_Z=[Z.value for Z in per_view],
        fused_Z=fused.value,
        attn_weights=alpha,
        recon_X=recon.value,
        loss_structure=[float(loss.value) for loss in structure_losses],
        loss_attribute=float(attribute_loss.value),
        loss_total=float(total.value),
        structure_row_errors=structure_rows,
        attribute_row_errors=attribute_rows,
        epsilon=eps,
    )
    return tape, total, outputs


# ==================== Public Operations ====================

def encode_view(network: MultiViewNetwork, view_index: int, params: ModelParams, hp: HyperParams,
                prepared: Optional[PreparedNetwork] = None) -> DenseMatrix:
    """Z^(k) = g(Ã^L X W^(k)) oppure la catena di L layer GCN"""
    if not 0 <= view_index < network.K:
        raise InputValidationError(f"view_index {view_index} out of range for {network.K} views")
    prepared = _ensure_prepared(network, hp, prepared)
    tape = GradientTape()
    weights = [tape.parameter(W, f"encoder.{view_index}.{layer}")
               for layer, W in enumerate(params.enc_weights[view_index])]
    return _encode(tape, prepared, view_index, weights, hp).value


def fuse(per_view_Z: List[DenseMatrix], params: ModelParams, hp: HyperParams) -> Tuple[DenseMatrix, np.ndarray]:
    """Z̃ = Σ α_k Z^(k) con α = softmax(importanza media delle viste)"""
    tape = GradientTape()
    per_view = [tape.constant(Z, f"Z[{k}]") for k, Z in enumerate(per_view_Z)]
    fused, alpha = _fuse(tape, per_view, tape.parameter(params.attn_W, "attention.W"),
                         tape.parameter(params.attn_b, "attention.b"),
                         tape.parameter(params.attn_q, "attention.q"), hp)
    return fused.value, alpha


def structure_row_errors(Z_view: DenseMatrix, target: SparseMatrix, block_size: int = 256) -> np.ndarray:
    """Errore L1 per riga di σ(Z Zᵀ) − A, a blocchi"""
    tape = GradientTape()
    _, rows = tape.sigmoid_inner_product_l1(tape.constant(Z_view, "Z"), target, block_size, "L_s")
    return rows


def decode_structure(Z_view: DenseMatrix, target: SparseMatrix, block_size: int = 256) -> float:
    """||σ(Z Zᵀ) − A||₁ senza materializzare la matrice n×n"""
    return float(structure_row_errors(Z_view, target, block_size).sum())


def decode_attributes(fused_Z: DenseMatrix, union_norm: SparseMatrix, params: ModelParams,
                      hp: Optional[HyperParams] = None) -> DenseMatrix:
    """X̂ = g(Ã_union Z̃ W)"""
    hp = hp or HyperParams()
    if fused_Z.shape[1] != params.dec_W.shape[0]:
        raise ShapeMismatchError(f"fused embedding width {fused_Z.shape[1]} vs decoder {params.dec_W.shape}")
    tape = GradientTape()
    return _decode_attributes(tape, tape.constant(fused_Z, "Z_fused"), union_norm,
                              tape.parameter(params.dec_W, "decoder.W"), hp).value


def forward(network: MultiViewNetwork, params: ModelParams, hp: HyperParams,
            prepared: Optional[PreparedNetwork] = None, sample_round: int = 0) -> ForwardOutputs:
    """Forward completo: encoder, fusione, decoder e loss congiunta"""
    prepared = _ensure_prepared(network, hp, prepared)
    _, _, outputs = run_forward(prepared, params, hp, sample_round)
    return outputs


def anomaly_scores(network: MultiViewNetwork, params: ModelParams, hp: HyperParams,
                   prepared: Optional[PreparedNetwork] = None) -> np.ndarray:
    """Score di anomalia per nodo (più alto = più anomalo)"""
    return forward(network, params, hp, prepared).node_scores()
