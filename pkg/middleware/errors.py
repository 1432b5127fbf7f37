"""
Gerarchia delle eccezioni del toolkit

Ogni eccezione porta con sé l'exit code che main.py restituisce alla shell:
0 successo, 1 errore di validazione, 2 errore numerico, 3 errore di I/O.
"""
from typing import Any, Optional


class ToolkitError(Exception):
    """Errore base del toolkit"""
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ==================== Validation (exit 1) ====================

class InputValidationError(ToolkitError, ValueError):
    """Input, config o precondizione non validi"""
    exit_code = 1


class NetworkFormatError(InputValidationError):
    """File di rete (manifest, edge list, attributi) malformato"""


class ShapeMismatchError(InputValidationError):
    """Dimensioni incompatibili tra matrici, checkpoint o dataset"""


# ==================== Numeric (exit 2) ====================

class NumericError(ToolkitError):
    """Fallimento numerico: divergenza, non-finiti, mancata convergenza"""
    exit_code = 2


class NonFiniteError(NumericError):
    """Una primitiva ha prodotto valori non finiti"""

    def __init__(self, primitive: str, detail: Optional[str] = None):
        super().__init__(detail or f"non-finite value produced by primitive '{primitive}'")
        self.primitive = primitive


class DivergenceError(NumericError):
    """La loss è diventata non finita durante il training"""

    def __init__(self, detail: str, partial_report: Any = None):
        super().__init__(detail)
        self.partial_report = partial_report


class ConvergenceError(NumericError):
    """Il solver iterativo non ha raggiunto la tolleranza"""

    def __init__(self, detail: str, residual: float):
        super().__init__(f"{detail} (achieved residual {residual:.3e})")
        self.residual = residual


# ==================== Storage (exit 3) ====================

class StorageError(ToolkitError):
    """File mancante o non leggibile/scrivibile"""
    exit_code = 3
