"""Bi-objective (cost, GHG) planning of multi-period biomass supply networks."""

from pathlib import Path

from .domain import Instance, validate_instance
from .ingest import load_instance, write_instance
from .model import apply_epsilon, build_model, build_variables
from .pareto import epsilon_front, filter_dominated, solve_extremes
from .solve import solve_instance

FIXTURES = Path(__file__).parent / "fixtures"
TINY_MANIFEST = FIXTURES / "tiny" / "manifest.json"

__all__ = [
    "FIXTURES", "Instance", "TINY_MANIFEST", "apply_epsilon", "build_model", "build_variables", "epsilon_front",
    "filter_dominated", "load_instance", "solve_extremes", "solve_instance", "validate_instance", "write_instance",
]
