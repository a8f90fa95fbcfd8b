"""Robust GNSS positioning: factor-graph pseudorange/Doppler fusion with graduated non-convexity."""

from .errors import (DivergenceError, GeometryError, GnssError, GraphConstructionError,
                     InsufficientObservationsError)
from .gnc import GncSchedule, irls_solve, run_gnc, update_weights
from .graph import build_graph, solve
from .pipeline import METHODS, RunConfig, run_method
from .sim import Scenario, reference_scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "DivergenceError", "GeometryError", "GnssError", "GraphConstructionError",
    "InsufficientObservationsError", "GncSchedule", "irls_solve", "run_gnc", "update_weights",
    "build_graph", "solve", "METHODS", "RunConfig", "run_method", "Scenario",
    "reference_scenario", "simulate",
]
