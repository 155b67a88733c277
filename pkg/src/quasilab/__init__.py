"""Sharp-peak Wright-Fisher quasispecies: exact chains, bounding couplings, limit dynamics and rate functions."""
from .model import (ConvergenceError, CouplingViolation, GuardError, ModelParams, OptimizationError,
                    QuasilabError, ValidationError, replica_rng, validate)

__version__ = "0.1.0"

__all__ = ["ConvergenceError", "CouplingViolation", "GuardError", "ModelParams", "OptimizationError",
           "QuasilabError", "ValidationError", "replica_rng", "validate"]
