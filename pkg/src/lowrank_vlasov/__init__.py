"""Dynamical low-rank finite element solver for the Vlasov equation with inflow boundaries."""

from .dlra import LowRankState, StepConfig, compress_initial, psi_step, rauc_step
from .exceptions import (
    ConfigError,
    GaugeError,
    LowRankVlasovError,
    MeshValidationError,
    NotPositiveDefiniteError,
    NumericalBlowupError,
    RankDeficientError,
)
from .fem import OperatorSet, assemble_operator_set
from .field import ElectricField
from .inflow import InflowProvider, SeparableFunction
from .mesh import Mesh

__all__ = [
    "ConfigError",
    "ElectricField",
    "GaugeError",
    "InflowProvider",
    "LowRankState",
    "LowRankVlasovError",
    "Mesh",
    "MeshValidationError",
    "NotPositiveDefiniteError",
    "NumericalBlowupError",
    "OperatorSet",
    "RankDeficientError",
    "SeparableFunction",
    "StepConfig",
    "assemble_operator_set",
    "compress_initial",
    "psi_step",
    "rauc_step",
]
