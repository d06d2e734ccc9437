"""Simulation and verification harness for a parabolic-parabolic chemotaxis
model with local and nonlocal logistic source on rectangles."""
from .core import (
    CheckSettings,
    Constant,
    CosinePerturbed,
    GridDomain,
    ModelParams,
    PersistenceSettings,
    RandomSmooth,
    RunConfig,
    Scheme,
    Separable,
    State,
    Tabulated,
    TrigSum,
    TrigTerm,
    Uniform,
    evaluate_coefficient,
    make_initial_data,
)
from .solver import simulate, stable_dt, step

__version__ = "0.1.0"
