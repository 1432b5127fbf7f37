"""
Training del detector: gradienti, verifica alle differenze finite, Adam e checkpoint
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from middleware.errors import (
    DivergenceError,
    InputValidationError,
    NonFiniteError,
    ShapeMismatchError,
    StorageError,
)
from models import CheckpointFile, EpochRecord, GradientCheckReport, HyperParams, TrainReport
from services.graph_core import MultiViewNetwork
from services.model import ModelParams, PreparedNetwork, init_params, prepare, run_forward

logger = logging.getLogger(__name__)


def bind_views(hp: HyperParams, network: MultiViewNetwork) -> HyperParams:
    """Fissa K dal dataset; errore se la config dichiara un K diverso"""
    if hp.n_views is None:
        return hp.model_copy(update={"n_views": network.K})
    if hp.n_views != network.K:
        raise ShapeMismatchError(f"HyperParams declare {hp.n_views} views, network has {network.K}")
    return hp


# ==================== Gradients ====================

def grad(network: MultiViewNetwork, params: ModelParams, hp: HyperParams,
         prepared: Optional[PreparedNetwork] = None, sample_round: int = 0) -> ModelParams:
    """Gradienti esatti (reverse-mode) di loss_total rispetto a ogni tensore"""
    hp = bind_views(hp, network)
    prepared = prepared or prepare(network, hp)
    tape, loss, _ = run_forward(prepared, params, hp, sample_round)
    return ModelParams.from_named(tape.gradient(loss))


def _loss_and_kinks(prepared: PreparedNetwork, params: ModelParams,
                    hp: HyperParams) -> Tuple[float, List[np.ndarray]]:
    tape, loss, _ = run_forward(prepared, params, hp)
    return float(loss.value), tape.kink_signature()


def _same_kinks(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(network: MultiViewNetwork, params: ModelParams, hp: HyperParams,
                   h: float = 1e-5, rtol: float = 1e-4, floor: float = 1e-3,
                   names: Optional[Iterable[str]] = None) -> GradientCheckReport:
    """
    Confronta il gradiente analitico con differenze finite centrali

    L'errore relativo usa come denominatore max(|analitico|, |numerico|, floor).
    Una coordinata è esclusa quando il pattern dei kink (maschere relu e clamp)
    cambia tra θ+h e θ−h: lì la derivata non è definita.
    """
    hp = bind_views(hp, network)
    prepared = prepare(network, hp)
    analytic = grad(network, params, hp, prepared).named()
    base = params.named()
    selected = list(names) if names is not None else list(base)

    n_checked = n_passed = n_excluded = 0
    worst = 0.0
    failures: List[str] = []
    for name in selected:
        if name not in base:
            raise InputValidationError(f"Unknown parameter '{name}'")
        for index in np.ndindex(base[name].shape):
            plus = {key: value.copy() for key, value in base.items()}
            minus = {key: value.copy() for key, value in base.items()}
            plus[name][index] += h
            minus[name][index] -= h
            loss_plus, kinks_plus = _loss_and_kinks(prepared, ModelParams.from_named(plus), hp)
            loss_minus, kinks_minus = _loss_and_kinks(prepared, ModelParams.from_named(minus), hp)
            if not _same_kinks(kinks_plus, kinks_minus):
                n_excluded += 1
                logger.debug(f"Kink within h at {name}{list(index)}: excluded")
                continue

            numeric = (loss_plus - loss_minus) / (2.0 * h)
            exact = float(analytic[name][index])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            n_checked += 1
            worst = max(worst, error)
            if error <= rtol:
                n_passed += 1
            else:
                failures.append(f"{name}{list(index)}: analytic={exact:.6e} numeric={numeric:.6e}")

    if n_excluded:
        logger.info(f"Gradient check: {n_excluded} coordinates excluded (kink within h)")
    return GradientCheckReport(
        n_checked=n_checked,
        n_passed=n_passed,
        n_excluded=n_excluded,
        worst_relative_error=worst,
        failures=failures,
    )


# ==================== Adam ====================

@dataclass
class AdamState:
    """Momenti di primo e secondo ordine per parametro, più il contatore di step"""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shapes: Dict[str, Tuple[int, ...]] = field(init=False)

    def __post_init__(self):
        if self.step < 0:
            raise InputValidationError("Adam step counter must be non-negative")
        if list(self.m) != list(self.v):
            raise ShapeMismatchError("Adam moment sets differ")
        for name in self.m:
            if self.m[name].shape != self.v[name].shape:
                raise ShapeMismatchError(f"Adam moments for '{name}' differ in shape")
        self.shapes = {name: value.shape for name, value in self.m.items()}

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        named = params.named()
        return cls(
            m={name: np.zeros_like(value) for name, value in named.items()},
            v={name: np.zeros_like(value) for name, value in named.items()},
        )


def adam_step(params: ModelParams, gradients: ModelParams, state: AdamState,
              lr: float) -> Tuple[ModelParams, AdamState]:
    """Un passo di Adam con bias correction; non modifica gli input"""
    named_params = params.named()
    named_grads = gradients.named()
    if list(named_params) != list(named_grads) or list(named_params) != list(state.shapes):
        raise ShapeMismatchError("Adam: parameters, gradients and state name different tensors")

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step

    updated, m, v = {}, {}, {}
    for name, value in named_params.items():
        g = named_grads[name]
        if g.shape != value.shape or state.shapes[name] != value.shape:
            raise ShapeMismatchError(f"Adam: shape mismatch for '{name}' ({value.shape} vs {g.shape})")
        m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m[name] / correction1
        v_hat = v[name] / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)

    new_state = AdamState(m=m, v=v, step=step, beta1=b1, beta2=b2, eps=state.eps)
    return ModelParams.from_named(updated), new_state


# ==================== Training Loop ====================

def train(network: MultiViewNetwork, hp: HyperParams,
          prepared: Optional[PreparedNetwork] = None) -> Tuple[ModelParams, TrainReport]:
    """Training full-batch per hp.epochs epoche; abort se la loss diventa non finita"""
    if hp.epochs < 1:
        raise InputValidationError(f"epochs must be at least 1, got {hp.epochs}")
    hp = bind_views(hp, network)
    prepared = prepared or prepare(network, hp)
    params = init_params(network.d, hp)
    state = AdamState.zeros_like(params)

    report = TrainReport(
        hyperparams=hp,
        view_names=network.view_names,
        n_nodes=network.n,
        n_attributes=network.d,
    )
    logger.info(f"Training on {network.n} nodes, {network.K} views for {hp.epochs} epochs")

    for epoch in range(hp.epochs):
        started = time.perf_counter()
        try:
            tape, loss, outputs = run_forward(prepared, params, hp, sample_round=epoch)
            gradients = ModelParams.from_named(tape.gradient(loss))
        except NonFiniteError as e:
            report.status = "diverged"
            logger.error(f"Divergence at epoch {epoch}: {e.detail}")
            raise DivergenceError(f"loss became non-finite at epoch {epoch} ({e.primitive})",
                                  partial_report=report) from e

        params, state = adam_step(params, gradients, state, hp.learning_rate)
        record = EpochRecord(
            epoch=epoch,
            loss_total=outputs.loss_total,
            loss_structure=outputs.loss_structure_mean,
            loss_attribute=outputs.loss_attribute,
            attention=[float(a) for a in outputs.attn_weights],
            seconds=time.perf_counter() - started,
        )
        report.epochs.append(record)

        if epoch % hp.log_every == 0 or epoch == hp.epochs - 1:
            logger.info(
                f"epoch {epoch}: loss={record.loss_total:.6f} "
                f"structure={record.loss_structure:.6f} attribute={record.loss_attribute:.6f} "
                f"attention={[round(a, 4) for a in record.attention]} ({record.seconds:.3f}s)"
            )

    if not all(np.isfinite(value).all() for value in params.named().values()):
        report.status = "diverged"
        raise DivergenceError("parameters became non-finite after the last update", partial_report=report)

    report.params_checksum = params.checksum()
    return params, report


# ==================== Checkpoints ====================

def checkpoint_document(params: ModelParams, hp: HyperParams,
                        network: MultiViewNetwork) -> CheckpointFile:
    """Documento di checkpoint versionato (i float JSON fanno round-trip esatto)"""
    return CheckpointFile(
        hyperparams=bind_views(hp, network),
        n_nodes=network.n,
        n_attributes=network.d,
        view_names=network.view_names,
        params={name: value.tolist() for name, value in params.named().items()},
        params_checksum=params.checksum(),
    )


def params_from_checkpoint(document: CheckpointFile) -> ModelParams:
    """Ricostruisce i parametri verificando il checksum"""
    params = ModelParams.from_named(
        {name: np.asarray(value, dtype=np.float64) for name, value in document.params.items()}
    )
    if params.checksum() != document.params_checksum:
        raise StorageError("Checkpoint checksum mismatch: file is corrupted or was edited")
    return params


def check_compatible(document: CheckpointFile, network: MultiViewNetwork) -> None:
    """n, d e K del checkpoint devono coincidere con il dataset"""
    if (document.n_nodes, document.n_attributes, len(document.view_names)) != (network.n, network.d, network.K):
        raise ShapeMismatchError(
            f"Checkpoint was trained on n={document.n_nodes}, d={document.n_attributes}, "
            f"K={len(document.view_names)}; dataset has n={network.n}, d={network.d}, K={network.K}"
        )
    if document.view_names != network.view_names:
        raise ShapeMismatchError(
            f"Checkpoint views {document.view_names} differ from dataset views {network.view_names}"
        )
