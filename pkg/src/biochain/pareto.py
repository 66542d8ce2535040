"""Cost versus GHG trade-off curve by the epsilon-constraint method.

The two lexicographic optima (cost first, GHG first) fix the GHG range; a
uniform grid of GHG caps over that range is then solved as
``min cost s.t. ghg <= cap`` and the resulting plans are reduced to a
non-dominated set.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import Instance
from .errors import InfeasibleError, LimitReached, ParamError
from .model import apply_cost_cap, build_model, build_variables
from .solution import Solution
from .solve import solve_instance
from .solver import SolveOptions, Status

log = logging.getLogger(__name__)

#: relative widening of each GHG cap, absorbs round-off between the cap row and the recomputed GHG
CAP_SLACK = 1e-9


@dataclass
class ParetoPoint:
    """A plan on the curve; ``epsilon`` is None for the two single-objective optima."""

    cost: float
    ghg: float
    epsilon: float | None = None
    solution: Solution | None = None
    status: Status = Status.OPTIMAL
    gap: float = 0.0
    nodes: int = 0
    index: int = 0

    @property
    def complete(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class ParetoFront:
    points: list[ParetoPoint]
    min_cost: ParetoPoint | None = None
    min_ghg: ParetoPoint | None = None
    notes: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _fg(p):
    if isinstance(p, ParetoPoint):
        return p.cost, p.ghg
    return float(p[0]), float(p[1])


def filter_dominated(points, rel_tol: float = 0.0) -> list:
    """Drop every point weakly dominated in (cost, ghg) by another one.

    Exact duplicates keep their first occurrence. With ``rel_tol`` > 0 a point
    must beat the cheaper-so-far cost by more than ``rel_tol * max(1, |cost|)``
    to survive. Accepts :class:`ParetoPoint` objects or ``(cost, ghg)`` pairs;
    the survivors come back ordered by increasing ghg.
    """
    order = sorted(range(len(points)), key=lambda i: (_fg(points[i])[1], _fg(points[i])[0], i))
    kept = []
    best = math.inf
    for i in order:
        f, _g = _fg(points[i])
        if f < best - (rel_tol * max(1.0, abs(best)) if math.isfinite(best) else 0.0):
            kept.append(points[i])
            best = f
    return kept


def _point(result, epsilon=None, index=0) -> ParetoPoint:
    out = result.outcome
    sol = result.solution
    return ParetoPoint(cost=sol.cost, ghg=sol.ghg, epsilon=epsilon, solution=sol, status=out.status,
                       gap=out.gap, nodes=out.nodes, index=index)


def _widen(value: float) -> float:
    return value + CAP_SLACK * max(1.0, abs(value))


def _checked(res, what):
    if res.solution is None:
        if res.status is Status.INFEASIBLE:
            raise InfeasibleError(f"no feasible plan exists ({what})")
        raise LimitReached(f"no plan found ({what}): {res.status.value}", res.status)
    return res


def solve_extremes(instance: Instance, opts: SolveOptions | None = None, base=None):
    """The lexicographic cost-first and GHG-first optima, each with both objectives evaluated.

    Each end takes two solves: one objective alone, then the other one with the
    first capped at the value just found.
    """
    if base is None:
        vars = build_variables(instance)
        base = (build_model(instance, vars=vars), vars)
    model, vars = base
    first = _checked(solve_instance(instance, opts=opts, minimize="cost", base=base), "minimising cost")
    capped = (apply_cost_cap(model, _widen(first.solution.cost)), vars)
    min_cost = _checked(solve_instance(instance, opts=opts, minimize="ghg", base=capped),
                        "minimising ghg at min cost")
    first = _checked(solve_instance(instance, opts=opts, minimize="ghg", base=base), "minimising ghg")
    min_ghg = _checked(solve_instance(instance, epsilon=_widen(first.solution.ghg), opts=opts, base=base),
                       "minimising cost at min ghg")
    return _point(min_cost), _point(min_ghg)


def threads_from_env(default: int | None = None) -> int:
    raw = os.environ.get("BIOCHAIN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring BIOCHAIN_THREADS=%r, not an integer", raw)
    return default or os.cpu_count() or 1


def epsilon_grid(g_low: float, g_high: float, num_points: int) -> list[float]:
    grid = np.linspace(g_low, g_high, num_points).tolist()
    grid[0], grid[-1] = g_low, g_high
    return grid


def epsilon_front(instance: Instance, num_points: int, opts: SolveOptions | None = None,
                  threads: int | None = None) -> ParetoFront:
    """Solve ``num_points`` evenly spaced GHG caps between the two extremes.

    Caps are solved independently and may run on ``threads`` workers (default:
    ``BIOCHAIN_THREADS`` or the CPU count); the assembled front does not depend
    on the number of workers. Infeasible caps are skipped with a note; a cap
    that hits a time or node limit keeps its incumbent, flagged incomplete.
    """
    if not isinstance(num_points, (int, np.integer)) or num_points < 2:
        raise ParamError(f"num_points must be an integer >= 2, got {num_points!r}")
    opts = opts or SolveOptions()
    vars = build_variables(instance)
    base = (build_model(instance, vars=vars), vars)
    min_cost, min_ghg = solve_extremes(instance, opts, base)
    grid = epsilon_grid(min_ghg.ghg, max(min_cost.ghg, min_ghg.ghg), num_points)

    def solve_cap(i):
        eps = grid[i]
        return solve_instance(instance, epsilon=_widen(eps), opts=opts, base=base)

    workers = max(1, min(threads or threads_from_env(), num_points))
    if workers == 1:
        results = [solve_cap(i) for i in range(num_points)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_cap, range(num_points)))

    notes, points = [], []
    for i, (eps, res) in enumerate(zip(grid, results)):
        if res.solution is None:
            notes.append(f"cap {i} (epsilon={eps!r}) skipped: {res.status.value}")
            continue
        if res.status is not Status.OPTIMAL:
            notes.append(f"cap {i} (epsilon={eps!r}) incomplete: {res.status.value}, gap {res.outcome.gap:.3g}")
        points.append(_point(res, eps, i))
    kept = filter_dominated(points, rel_tol=opts.mip_gap)
    kept_ids = {id(p) for p in kept}
    for p in points:
        if id(p) not in kept_ids:
            notes.append(f"cap {p.index} (epsilon={p.epsilon!r}) dropped as dominated")
    return ParetoFront(kept, min_cost, min_ghg, notes)
