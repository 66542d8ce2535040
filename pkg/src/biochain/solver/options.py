from __future__ import annotations

import enum
from dataclasses import dataclass


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-7
    int_tol: float = 1e-6
    mip_gap: float = 1e-6
    time_limit: float | None = None
    node_limit: int | None = None
    seed: int = 0  # no randomised component today; kept so runs are keyed reproducibly
    presolve: bool = True
    log_nodes: bool = False
    pivot_tol: float = 1e-9
    refactor_every: int = 50
    bland_after: int = 50
    max_iter: int | None = None


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"
