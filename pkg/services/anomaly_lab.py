"""
Laboratorio anomalie: iniezione (clique strutturali + scambio attributi) e metriche

Lo schema di perturbazione aggiunge p clique di q nodi nelle viste bersaglio e
sostituisce gli attributi di altri nodi con quelli del candidato più distante.
Le metriche ordinano sempre per score decrescente con pareggi per id crescente.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from middleware.errors import InputValidationError, ShapeMismatchError
from models import AnomalyMechanism, InjectionSpec, MechanismMetrics, MetricsReport, TargetViewsMode
from services.graph_core import MultiViewNetwork, ViewGraph, binary_adjacency
from services.seeding import named_stream

logger = logging.getLogger(__name__)


# ==================== Ground Truth ====================

@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Etichette per nodo: anomalo sì/no e meccanismo di iniezione"""
    anomalous: np.ndarray
    mechanism: np.ndarray

    def __post_init__(self):
        anomalous = np.asarray(self.anomalous, dtype=bool)
        mechanism = np.asarray(self.mechanism, dtype=object)
        if anomalous.shape != mechanism.shape or anomalous.ndim != 1:
            raise ShapeMismatchError("anomalous and mechanism vectors must have the same length")
        allowed = {m.value for m in AnomalyMechanism}
        for tag in mechanism:
            if tag not in allowed:
                raise InputValidationError(f"Unknown anomaly mechanism '{tag}'")
        if np.any(anomalous != (mechanism != AnomalyMechanism.NONE.value)):
            raise InputValidationError("anomalous flags disagree with mechanism tags")
        object.__setattr__(self, "anomalous", anomalous)
        object.__setattr__(self, "mechanism", mechanism)

    @classmethod
    def from_ids(cls, n: int, ids: Sequence[int],
                 mechanisms: Optional[Dict[int, str]] = None) -> "GroundTruth":
        """Da una lista di id anomali; senza meccanismi noti si assume 'structural'"""
        ids = np.asarray(list(ids), dtype=np.int64)
        if len(ids) and (ids.min() < 0 or ids.max() >= n):
            raise InputValidationError(f"ground-truth node id out of range for n={n}")
        if len(np.unique(ids)) != len(ids):
            raise InputValidationError("ground-truth ids must be unique")
        mechanism = np.full(n, AnomalyMechanism.NONE.value, dtype=object)
        for node in ids:
            tag = (mechanisms or {}).get(int(node), AnomalyMechanism.STRUCTURAL.value)
            if tag == AnomalyMechanism.NONE.value:
                raise InputValidationError(f"node {node} listed as anomalous but tagged 'none'")
            mechanism[node] = tag
        return cls(anomalous=mechanism != AnomalyMechanism.NONE.value, mechanism=mechanism)

    @property
    def n(self) -> int:
        return len(self.anomalous)

    @property
    def count(self) -> int:
        return int(self.anomalous.sum())

    def anomaly_ids(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.anomalous)]

    def ids_for(self, mechanism: AnomalyMechanism) -> np.ndarray:
        return np.flatnonzero(self.mechanism == mechanism.value)


# ==================== Injection ====================

def _target_views(spec: InjectionSpec, network: MultiViewNetwork,
                  n_cliques: int, rng: np.random.Generator) -> List[List[int]]:
    if isinstance(spec.target_views, list):
        indices = [network.view_index(name) for name in spec.target_views]
        return [indices for _ in range(n_cliques)]
    if spec.target_views == TargetViewsMode.RANDOM_ONE:
        return [[int(rng.integers(network.K))] for _ in range(n_cliques)]
    return [list(range(network.K)) for _ in range(n_cliques)]


def inject(network: MultiViewNetwork, spec: InjectionSpec) -> Tuple[MultiViewNetwork, GroundTruth]:
    """Restituisce una copia perturbata della rete e le etichette di ground truth"""
    n = network.n
    p, q = spec.n_cliques, spec.clique_size
    if q < 2:
        raise InputValidationError(f"clique_size must be at least 2, got {q}")
    if p and q > n:
        raise InputValidationError(f"clique_size {q} exceeds the number of nodes ({n})")
    if spec.total_anomalies > n:
        raise InputValidationError(
            f"insufficient nodes: {p}·{q} structural + {spec.n_attr_anomalies} attribute anomalies "
            f"= {spec.total_anomalies} > {n} nodes"
        )
    if spec.n_attr_anomalies and n < 2:
        raise InputValidationError("attribute anomalies need at least two nodes")

    rng = named_stream(spec.seed, "injection")
    structural = rng.choice(n, size=p * q, replace=False).reshape(p, q)
    targets = _target_views(spec, network, p, rng)

    clique_edges: Dict[int, List[Tuple[int, int]]] = {k: [] for k in range(network.K)}
    for clique, views in zip(structural, targets):
        pairs = list(combinations(sorted(int(i) for i in clique), 2))
        for k in views:
            clique_edges[k].extend(pairs)

    views = []
    for k, view in enumerate(network.views):
        if not clique_edges[k]:
            views.append(view)
            continue
        existing_rows, existing_cols = view.adjacency.csr.nonzero()
        added = np.asarray(clique_edges[k], dtype=np.int64)
        adjacency = binary_adjacency(
            np.concatenate([existing_rows, added[:, 0]]),
            np.concatenate([existing_cols, added[:, 1]]),
            n,
        )
        views.append(ViewGraph.build(view.view_name, adjacency))

    remaining = np.setdiff1d(np.arange(n), structural.ravel())
    attribute_nodes = np.sort(rng.choice(remaining, size=spec.n_attr_anomalies, replace=False))

    original = network.attributes
    perturbed = np.array(original)
    pool = min(spec.candidate_pool, n - 1)
    candidate_rng = named_stream(spec.seed, "candidate-sampling")
    for i in attribute_nodes:
        others = np.delete(np.arange(n), i)
        candidates = candidate_rng.choice(others, size=pool, replace=False)
        distances = np.linalg.norm(original[candidates] - original[i], axis=1)
        farthest = candidates[distances == distances.max()].min()
        perturbed[i] = original[farthest]

    mechanism = np.full(n, AnomalyMechanism.NONE.value, dtype=object)
    mechanism[structural.ravel()] = AnomalyMechanism.STRUCTURAL.value
    mechanism[attribute_nodes] = AnomalyMechanism.ATTRIBUTE.value
    truth = GroundTruth(anomalous=mechanism != AnomalyMechanism.NONE.value, mechanism=mechanism)

    logger.info(
        f"Injected {p} cliques of size {q} ({p * q} nodes) and {len(attribute_nodes)} attribute anomalies"
    )
    return MultiViewNetwork(views=tuple(views), attributes=perturbed, node_labels=network.node_labels), truth


# ==================== Metrics ====================

def _check_scores(scores: np.ndarray, truth: GroundTruth) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != truth.anomalous.shape:
        raise ShapeMismatchError(f"{len(scores)} scores for {truth.n} labelled nodes")
    if not np.isfinite(scores).all():
        raise InputValidationError("scores contain non-finite values")
    return scores


def ranking(scores: np.ndarray) -> np.ndarray:
    """Indici dei nodi per score decrescente, pareggi per indice crescente"""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(scores)), -scores))


def accuracy_at_k(scores: np.ndarray, truth: GroundTruth, k: int) -> float:
    """Frazione dei primi k nodi per score che sono anomalie vere"""
    scores = _check_scores(scores, truth)
    if k <= 0:
        raise InputValidationError(f"k must be positive, got {k}")
    if k > truth.n:
        raise InputValidationError(f"k={k} exceeds the number of nodes ({truth.n})")
    return float(truth.anomalous[ranking(scores)[:k]].mean())


def auc_roc(scores: np.ndarray, truth: GroundTruth) -> Tuple[float, List[Tuple[float, float]]]:
    """
    AUC come statistica di Mann-Whitney con midrank + punti della curva ROC

    I punti ROC corrispondono a tutte le soglie distinte in ordine decrescente,
    da (0, 0) a (1, 1).
    """
    scores = _check_scores(scores, truth)
    labels = truth.anomalous
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputValidationError("AUC needs at least one anomalous and one normal node")

    ranks = rankdata(scores, method="average")
    u_statistic = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    auc = float(u_statistic / (n_pos * n_neg))

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    true_positives = np.cumsum(labels[order])
    false_positives = np.cumsum(~labels[order])
    # ultimo indice di ogni gruppo di score uguali
    thresholds = np.append(np.flatnonzero(np.diff(sorted_scores)), len(scores) - 1)
    points = [(0.0, 0.0)] + [
        (float(false_positives[i] / n_neg), float(true_positives[i] / n_pos)) for i in thresholds
    ]
    return auc, points


def trapezoid_auc(points: Sequence[Tuple[float, float]]) -> float:
    """Area sotto i punti ROC con la regola dei trapezi"""
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def mechanism_breakdown(scores: np.ndarray, truth: GroundTruth,
                        k_list: Sequence[int]) -> Dict[str, MechanismMetrics]:
    """Hit nei top-k e AUC (meccanismo vs nodi normali) per ogni meccanismo presente"""
    scores = _check_scores(scores, truth)
    order = ranking(scores)
    normal = truth.ids_for(AnomalyMechanism.NONE)
    breakdown: Dict[str, MechanismMetrics] = {}
    for mechanism in (AnomalyMechanism.STRUCTURAL, AnomalyMechanism.ATTRIBUTE):
        ids = truth.ids_for(mechanism)
        if len(ids) == 0:
            continue
        tagged = truth.mechanism[order] == mechanism.value
        hits = {str(k): int(tagged[:k].sum()) for k in k_list if 0 < k <= truth.n}
        auc = None
        if len(normal):
            subset = np.sort(np.concatenate([ids, normal]))
            sub_truth = GroundTruth(anomalous=truth.anomalous[subset], mechanism=truth.mechanism[subset])
            auc, _ = auc_roc(scores[subset], sub_truth)
        breakdown[mechanism.value] = MechanismMetrics(count=len(ids), hits_at_k=hits, auc=auc)
    return breakdown


def evaluate(scores: np.ndarray, truth: GroundTruth, k_list: Sequence[int],
             epsilon: Optional[float] = None) -> Tuple[MetricsReport, List[Tuple[float, float]]]:
    """Metriche complete per un vettore di score"""
    auc, points = auc_roc(scores, truth)
    report = MetricsReport(
        n_nodes=truth.n,
        n_anomalies=truth.count,
        accuracy_at_k={str(k): accuracy_at_k(scores, truth, k) for k in k_list},
        auc=auc,
        epsilon=epsilon,
        mechanisms=mechanism_breakdown(scores, truth, k_list),
    )
    return report, points
