"""Best-bound branch-and-bound over the binary columns of a :class:`MilpModel`."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..model import MilpModel
from .options import SolveOptions, Status
from .presolve import presolve
from .simplex import Basis, LpOutcome, SimplexEngine


@dataclass
class MilpOutcome:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.inf
    bound: float = -math.inf
    gap: float = math.inf
    nodes: int = 0
    wall_time: float = 0.0
    lp_iterations: int = 0
    log: list[str] = field(default_factory=list)
    bound_history: list[float] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, (incumbent - bound) / max(1.0, abs(incumbent)))


def solve_lp(model: MilpModel, opts: SolveOptions | None = None, deadline: float | None = None) -> LpOutcome:
    """LP relaxation of ``model`` (integrality ignored), with objective offset included."""
    opts = opts or SolveOptions()
    eng = SimplexEngine(model.A, model.sense, model.rhs, model.objective, opts)
    out = eng.solve(model.lb, model.ub, deadline=deadline)
    if out.status is Status.OPTIMAL:
        out.objective += model.objective_offset
        out.dual_objective += model.objective_offset
    return out


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    fixings: tuple = field(compare=False)
    basis: Basis | None = field(compare=False, default=None)


def branch_and_bound(model: MilpModel, opts: SolveOptions | None = None,
                     node_log: Callable[[str], None] | None = None) -> MilpOutcome:
    """Solve ``model`` to optimality (gap <= ``opts.mip_gap``) or until a limit is hit.

    The returned ``x`` is in the space of ``model`` (presolve is undone) and
    ``objective`` includes the model's objective offset.
    """
    opts = opts or SolveOptions()
    start = time.perf_counter()
    deadline = None if opts.time_limit is None else start + opts.time_limit
    out = MilpOutcome(Status.INFEASIBLE)

    def finish(status):
        out.status = status
        out.wall_time = time.perf_counter() - start
        out.gap = relative_gap(out.objective, out.bound)
        return out

    if opts.presolve:
        pre = presolve(model, int_tol=opts.int_tol)
        if pre.infeasible:
            out.log.append(f"presolve: {pre.message}")
            return finish(Status.INFEASIBLE)
        work = pre.model
        back = pre.postsolve
    else:
        work = model
        back = np.asarray

    engine = SimplexEngine(work.A, work.sense, work.rhs, work.objective, opts)
    offset = work.objective_offset
    binaries = np.flatnonzero(work.integrality)
    base_lb = np.array(work.lb, dtype=float)
    base_ub = np.array(work.ub, dtype=float)
    int_tol = opts.int_tol

    incumbent_x = None
    incumbent = math.inf
    pruned_bound = math.inf  # smallest bound among subtrees discarded by the gap test
    dive: list[_Node] = []
    heap: list[_Node] = []

    def log(line):
        out.log.append(line)
        if node_log is not None:
            node_log(line)

    def prune_threshold():
        if not math.isfinite(incumbent):
            return math.inf
        return incumbent - opts.mip_gap * max(1.0, abs(incumbent))

    def record_bound(current=math.inf):
        b = min([n.bound for n in heap] + [n.bound for n in dive] + [current, pruned_bound, incumbent])
        if out.bound_history and b < out.bound_history[-1]:
            b = out.bound_history[-1]  # guard against round-off; the true bound never drops
        out.bound_history.append(b)
        out.bound = b

    dive.append(_Node((-math.inf, 0), 0, 0, -math.inf, ()))
    counter = 1
    status = Status.OPTIMAL

    while dive or heap:
        if deadline is not None and time.perf_counter() > deadline:
            status = Status.TIME_LIMIT
            break
        if opts.node_limit is not None and out.nodes >= opts.node_limit:
            status = Status.NODE_LIMIT
            break
        node = dive.pop() if dive else heapq.heappop(heap)
        if node.bound >= prune_threshold():
            pruned_bound = min(pruned_bound, node.bound)
            continue
        lb, ub = base_lb.copy(), base_ub.copy()
        for j, v in node.fixings:
            lb[j] = ub[j] = v
        lp = engine.solve(lb, ub, warm=node.basis, deadline=deadline)
        out.nodes += 1
        out.lp_iterations += lp.iterations
        if lp.status is Status.TIME_LIMIT:
            dive.append(node)
            status = Status.TIME_LIMIT
            break
        if lp.status is Status.UNBOUNDED:
            # a feasible restriction with an unbounded ray means the whole problem is unbounded
            log(f"{node.id} {node.depth} unbounded")
            out.bound = -math.inf
            return finish(Status.UNBOUNDED)
        if lp.status is Status.INFEASIBLE:
            log(f"{node.id} {node.depth} infeasible {incumbent!r}")
            record_bound()
            continue
        node_bound = max(node.bound, lp.objective + offset)
        if node_bound >= prune_threshold():
            pruned_bound = min(pruned_bound, node_bound)
            log(f"{node.id} {node.depth} {node_bound!r} {incumbent!r} pruned")
            record_bound()
            continue
        xb = lp.x[binaries]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        fractional = frac > int_tol
        if not fractional.any():
            x_red = _polish(engine, lp, binaries, lb, ub, deadline)
            value = float(work.objective @ x_red) + offset
            if value < incumbent:
                incumbent = value
                incumbent_x = x_red
                out.objective = incumbent
                out.x = back(x_red)
                while dive:  # the first incumbent ends the dive
                    heapq.heappush(heap, dive.pop())
            log(f"{node.id} {node.depth} {node_bound!r} {incumbent!r} integral")
            record_bound()
            continue
        # most fractional binary, ties to the lowest column index
        pos = int(np.argmax(np.where(fractional, frac, -1.0)))
        j = int(binaries[pos])
        log(f"{node.id} {node.depth} {node_bound!r} {incumbent!r} branch {work.col_names[j]}")
        first = 1.0 if lp.x[j] >= 0.5 else 0.0
        children = []
        for v in (first, 1.0 - first):
            children.append(_Node((node_bound, counter), counter, node.depth + 1, node_bound,
                                  node.fixings + ((j, v),), lp.basis))
            counter += 1
        if incumbent_x is None:
            dive.append(children[1])
            dive.append(children[0])
        else:
            for child in children:
                heapq.heappush(heap, child)
        record_bound(node_bound)

    if status is Status.OPTIMAL and incumbent_x is None:
        out.bound = math.inf
        return finish(Status.INFEASIBLE)
    record_bound()
    return finish(status)


def _polish(engine: SimplexEngine, lp: LpOutcome, binaries, lb, ub, deadline):
    """Re-solve with every binary fixed at its rounded value so ``x`` is exactly integral."""
    x = lp.x
    rounded = np.round(x[binaries])
    if np.array_equal(x[binaries], rounded):
        return x.copy()
    lb, ub = lb.copy(), ub.copy()
    lb[binaries] = ub[binaries] = rounded
    again = engine.solve(lb, ub, warm=lp.basis, deadline=deadline)
    x = again.x.copy() if again.status is Status.OPTIMAL else x.copy()
    x[binaries] = rounded  # a degenerate basic binary can carry round-off
    return x
