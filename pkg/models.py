"""
Modelli Pydantic per validazione e serializzazione di config, iperparametri e report
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Dict, Literal, Union
from pathlib import Path
from enum import Enum


# ==================== Enums ====================

class FusionMode(str, Enum):
    """Strategia di fusione degli embedding delle viste"""
    ATTENTION = "attention"
    AVERAGE = "average"


class EncoderMode(str, Enum):
    """Encoder per vista: filtro L-hop semplificato o GCN multilayer"""
    SIMPLIFIED = "simplified"
    MULTILAYER = "multilayer"


class Activation(str, Enum):
    """Attivazione g di encoder e decoder attributi"""
    RELU = "relu"
    IDENTITY = "identity"


class TargetViewsMode(str, Enum):
    """Viste in cui iniettare le clique"""
    ALL = "all"
    RANDOM_ONE = "random-one"


class AnomalyMechanism(str, Enum):
    """Meccanismo con cui un nodo è stato reso anomalo"""
    NONE = "none"
    STRUCTURAL = "structural"
    ATTRIBUTE = "attribute"


# ==================== Model Configuration ====================

class HyperParams(BaseModel):
    """Iperparametri di modello e training"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_views: Optional[int] = Field(None, ge=1, description="K, fissato dal dataset al training")
    filter_order: int = Field(3, ge=1, description="L, ordine del filtro / numero di layer")
    embedding_dim: int = Field(30, ge=1, description="F_L")
    attention_dim: int = Field(30, ge=1, description="F_A")
    epsilon: float = Field(0.5, gt=0, lt=1, description="Peso struttura vs attributi")
    fusion_mode: FusionMode = FusionMode.ATTENTION
    encoder_mode: EncoderMode = EncoderMode.SIMPLIFIED
    activation: Activation = Activation.RELU
    learning_rate: float = Field(0.001, ge=0)
    epochs: int = Field(300, ge=1)
    seed: int = Field(0, ge=0)
    block_size: int = Field(256, ge=1, description="Righe per blocco nella loss di struttura")
    negative_samples: Optional[int] = Field(None, ge=1, description="Approssimazione per grafi enormi")
    log_every: int = Field(50, ge=1)


class InjectionSpec(BaseModel):
    """Parametri dello schema di perturbazione (clique + scambio attributi)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    clique_size: int = Field(6, ge=2, description="q")
    n_cliques: int = Field(25, ge=0, description="p")
    n_attr_anomalies: int = Field(150, ge=0)
    candidate_pool: int = Field(50, ge=1, description="k candidati per lo scambio attributi")
    target_views: Union[TargetViewsMode, List[str]] = TargetViewsMode.ALL
    seed: int = Field(0, ge=0)

    @field_validator('target_views')
    @classmethod
    def validate_view_list(cls, v):
        """Una lista esplicita di viste non può essere vuota"""
        if isinstance(v, list):
            if not v:
                raise ValueError("target_views list must name at least one view")
            return list(dict.fromkeys(v))
        return v

    @property
    def total_anomalies(self) -> int:
        return self.n_cliques * self.clique_size + self.n_attr_anomalies


class SyntheticSpec(BaseModel):
    """Benchmark sintetico a comunità (n, K, d e densità dei blocchi)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_nodes: int = Field(200, ge=2)
    n_views: int = Field(3, ge=1)
    n_communities: int = Field(4, ge=1)
    n_attributes: int = Field(24, ge=1)
    p_in: float = Field(0.06, ge=0, le=1)
    p_out: float = Field(0.002, ge=0, le=1)
    signal: float = Field(1.0, gt=0)
    noise: float = Field(0.1, ge=0)
    seed: int = Field(0, ge=0)


class RunConfig(BaseModel):
    """Config dichiarativa di una run (file YAML + override da CLI)"""
    model_config = ConfigDict(extra="forbid")

    dataset: Path
    output_dir: Path = Path("runs/latest")
    hyperparams: HyperParams = HyperParams()
    injection: InjectionSpec = InjectionSpec()
    synthetic: SyntheticSpec = SyntheticSpec()
    k_list: List[int] = Field(default_factory=lambda: [50, 150, 300], min_length=1)
    epsilon_sweep: Optional[List[float]] = None

    @field_validator('k_list')
    @classmethod
    def validate_k_list(cls, v):
        """Ogni k deve essere positivo; duplicati rimossi mantenendo l'ordine"""
        for k in v:
            if k < 1:
                raise ValueError(f"k must be positive, got {k}")
        return list(dict.fromkeys(v))

    @field_validator('epsilon_sweep')
    @classmethod
    def validate_sweep(cls, v):
        if v is None:
            return v
        if not v:
            raise ValueError("epsilon_sweep must contain at least one value")
        for eps in v:
            if not 0 < eps < 1:
                raise ValueError(f"epsilon values must lie in (0, 1), got {eps}")
        return v


# ==================== Training Reports ====================

class EpochRecord(BaseModel):
    """Loss e pesi di attenzione di una singola epoca"""
    epoch: int
    loss_total: float
    loss_structure: float
    loss_attribute: float
    attention: List[float]
    # tempi esclusi dalla serializzazione: il report deve essere byte-identico tra run
    seconds: float = Field(0.0, exclude=True)


class TrainReport(BaseModel):
    """Report completo del training"""
    status: Literal["completed", "diverged"] = "completed"
    hyperparams: HyperParams
    view_names: List[str]
    n_nodes: int
    n_attributes: int
    epochs: List[EpochRecord] = []
    params_checksum: Optional[str] = None

    @property
    def initial_loss(self) -> Optional[float]:
        return self.epochs[0].loss_total if self.epochs else None

    @property
    def final_loss(self) -> Optional[float]:
        return self.epochs[-1].loss_total if self.epochs else None


class GradientCheckReport(BaseModel):
    """Esito del confronto gradiente analitico vs differenze finite"""
    n_checked: int
    n_passed: int
    n_excluded: int
    worst_relative_error: float
    failures: List[str] = []

    @property
    def pass_rate(self) -> float:
        return self.n_passed / self.n_checked if self.n_checked else 1.0


class CheckpointFile(BaseModel):
    """Checkpoint testuale versionato: iperparametri + tensori"""
    format_version: Literal[1] = 1
    hyperparams: HyperParams
    n_nodes: int
    n_attributes: int
    view_names: List[str]
    params: Dict[str, list]
    params_checksum: str


# ==================== Evaluation Models ====================

class MechanismMetrics(BaseModel):
    """Metriche ristrette a un meccanismo di anomalia"""
    count: int
    hits_at_k: Dict[str, int]
    auc: Optional[float] = None


class MetricsReport(BaseModel):
    """Metriche di valutazione: Accuracy@K, AUC e conteggi"""
    n_nodes: int
    n_anomalies: int
    accuracy_at_k: Dict[str, float]
    auc: float
    epsilon: Optional[float] = None
    mechanisms: Optional[Dict[str, MechanismMetrics]] = None

    @model_validator(mode='after')
    def check_counts(self):
        if not 0 < self.n_anomalies < self.n_nodes:
            raise ValueError("metrics need at least one anomalous and one normal node")
        return self


class SpectrumSummary(BaseModel):
    """Riassunto spettrale di una vista"""
    view: str
    n_nodes: int
    max_frequency: float
    low_band_gain: Optional[float] = None
    high_band_gain: Optional[float] = None
