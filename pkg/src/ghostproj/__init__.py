"""Ghost-projection planning and simulation.

Generate a random binary mask, capture the ensemble of its translated views,
solve for nonnegative exposure weights that sum those views into a target
pattern, simulate the exposure under detector and beam noise, and score it.
"""

from .ensemble import BeamModel, IlluminationEnsemble, WindowGeometry, capture_ensemble, flux_correct
from .errors import GeometryError, GhostProjError, NNLSIterationError, PlanningError, ValidationError
from .maskgen import MaskClass, MaskField, MaskSpec, binarize, fractal_kernel, generate_mask
from .metrics import QualityReport, measure_pedestal, score_projection
from .nnls import solve_nnls
from .planner import (
    DetectorMargin,
    ExposurePlan,
    FixedIntegratedMs,
    PlanEntry,
    TargetPattern,
    enforce_pedestal,
    make_plan,
    order_exposures,
)
from .simulator import NoiseConfig, ProjectionResult, accumulate_sequence, simulate_exposure

__version__ = "0.1.0"

__all__ = [
    "BeamModel",
    "DetectorMargin",
    "ExposurePlan",
    "FixedIntegratedMs",
    "GeometryError",
    "GhostProjError",
    "IlluminationEnsemble",
    "MaskClass",
    "MaskField",
    "MaskSpec",
    "NNLSIterationError",
    "NoiseConfig",
    "PlanEntry",
    "PlanningError",
    "ProjectionResult",
    "QualityReport",
    "TargetPattern",
    "ValidationError",
    "WindowGeometry",
    "accumulate_sequence",
    "binarize",
    "capture_ensemble",
    "enforce_pedestal",
    "flux_correct",
    "fractal_kernel",
    "generate_mask",
    "make_plan",
    "measure_pedestal",
    "order_exposures",
    "score_projection",
    "simulate_exposure",
    "solve_nnls",
]
