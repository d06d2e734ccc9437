from .operators import chemotaxis_divergence, face_gradients, laplacian_neumann, nonlocal_mass
from .stepping import StencilWorkspace, StepOutcome, simulate, stable_dt, step

__all__ = [
    "StencilWorkspace",
    "StepOutcome",
    "chemotaxis_divergence",
    "face_gradients",
    "laplacian_neumann",
    "nonlocal_mass",
    "simulate",
    "stable_dt",
    "step",
]
