"""One-call solve of an instance: build, branch-and-bound, map back to named decisions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .domain import Instance
from .model import MilpModel, VariableIndex, apply_epsilon, build_model, build_variables
from .solution import Solution, extract_solution
from .solver import MilpOutcome, SolveOptions, branch_and_bound


@dataclass
class SolveResult:
    outcome: MilpOutcome
    solution: Solution | None
    model: MilpModel
    vars: VariableIndex

    @property
    def status(self):
        return self.outcome.status


def solve_instance(instance: Instance, epsilon: float | None = None, opts: SolveOptions | None = None,
                   minimize: str = "cost", node_log: Callable[[str], None] | None = None,
                   base: tuple[MilpModel, VariableIndex] | None = None) -> SolveResult:
    """Minimise cost (or GHG), optionally subject to ``ghg <= epsilon``.

    ``base`` lets callers reuse an already built model and variable index.
    """
    if base is None:
        vars = build_variables(instance)
        model = build_model(instance, vars=vars)
    else:
        model, vars = base
    if epsilon is not None:
        model = apply_epsilon(model, epsilon)
    model = model.with_objective(minimize)
    outcome = branch_and_bound(model, opts, node_log=node_log)
    solution = extract_solution(instance, vars, outcome.x, model) if outcome.has_solution else None
    return SolveResult(outcome, solution, model, vars)
