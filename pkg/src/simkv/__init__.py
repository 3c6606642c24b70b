"""Self-interacting diffusions for McKean-Vlasov invariant measures."""

from simkv.core import CylindricalModel, drift, gibbs_potential, loss
from simkv.errors import (
    ConfigurationError,
    DivergenceError,
    EstimationError,
    NumericError,
    StabilityError,
)
from simkv.schedules import LambdaSchedule, constant, paper_annealing, value_at

__version__ = "0.1.0"

__all__ = [
    "CylindricalModel",
    "ConfigurationError",
    "DivergenceError",
    "EstimationError",
    "LambdaSchedule",
    "NumericError",
    "StabilityError",
    "constant",
    "drift",
    "gibbs_potential",
    "loss",
    "paper_annealing",
    "value_at",
]
