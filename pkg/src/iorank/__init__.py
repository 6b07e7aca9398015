"""Influence vectors on input-output networks and their error certificates."""
from .errors import IorankError, NumericalError, ValidationError
from .influence import InfluenceResult, influence_direct, influence_power, leontief_inverse
from .io_graph import IoMatrix, load_matrix, save_matrix, validate
from .missing_data import BoundCertificate, MissingSpec, certify, observe

__all__ = [
    "BoundCertificate",
    "InfluenceResult",
    "IoMatrix",
    "IorankError",
    "MissingSpec",
    "NumericalError",
    "ValidationError",
    "certify",
    "influence_direct",
    "influence_power",
    "leontief_inverse",
    "load_matrix",
    "observe",
    "save_matrix",
    "validate",
]
