"""Forward and adjoint sensitivity analysis for hybrid DAE systems."""

from ._core import (
    HybridError,
    Problem,
    em_constants,
    em_memory_update,
    em_stress,
    problem_names,
)

__all__ = [
    "HybridError",
    "Problem",
    "em_constants",
    "em_memory_update",
    "em_stress",
    "problem_names",
]
