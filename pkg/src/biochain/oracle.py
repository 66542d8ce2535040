"""Independent checks of supply plans and of the MILP solver.

Nothing here touches the constraint assembly in :mod:`biochain.model`: plans
are re-simulated directly from the :class:`Instance`, and small MILPs are
certified by enumerating every 0/1 assignment and solving each LP with HiGHS.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .domain import Finding, Instance, NodeKind, ValidationReport
from .errors import TooManyBinaries
from .model import EQ, GE, LE, MilpModel
from .solution import Solution
from .solver.bnb import MilpOutcome
from .solver.options import Status

COST_CATEGORIES = ("production", "refinery", "transport", "handling", "storage")


def _served(instance: Instance, solution: Solution, node, product: str, t: int) -> float:
    """Demand drawn at a refinery slot in period ``t`` by whichever type is open there."""
    if node.kind is not NodeKind.REFINERY_SLOT:
        return 0.0
    total = 0.0
    for k in instance.refinery_types:
        if solution.open.get((node.zone, k.id), 0):
            total += k.demand.get((product, t), 0.0)
    return total


def _net_inflow(instance: Instance, solution: Solution) -> dict[tuple[str, str, int], float]:
    """Harvest plus arrivals minus departures per (node, product, period)."""
    net: dict[tuple[str, str, int], float] = {}
    for (z, p, t), v in solution.harvest.items():
        net[z, p, t] = net.get((z, p, t), 0.0) + v
    for (a, b, p, t), v in solution.flow.items():
        net[b, p, t] = net.get((b, p, t), 0.0) + v
        net[a, p, t] = net.get((a, p, t), 0.0) - v
    return net


def simulate_inventories(instance: Instance, solution: Solution) -> dict[tuple[str, str, int], float]:
    """Roll stocks forward from the opening inventories using the plan's harvests, flows and demands.

    Each period the previous stock first shrinks by the node's loss rate, then
    receives inflows and releases outflows and demand.
    """
    net = _net_inflow(instance, solution)
    inv = {}
    for n in instance.nodes:
        for p in instance.products:
            stock = n.initial(p.id)
            for t in instance.periods:
                stock = (1.0 - n.loss(p.id, t)) * stock + net.get((n.id, p.id, t), 0.0) \
                    - _served(instance, solution, n, p.id, t)
                inv[n.id, p.id, t] = stock
    return inv


@dataclass(frozen=True)
class MassBalance:
    harvested: float
    initial: float
    shrinkage: float
    served: float
    final: float

    @property
    def residual(self) -> float:
        return self.harvested + self.initial - self.shrinkage - self.served - self.final


def mass_conservation(instance: Instance, solution: Solution) -> MassBalance:
    """Network-wide tonnage account.

    Shrinkage comes from the simulated stocks; ``final`` is the plan's own
    closing inventory, so ``residual`` measures how far the plan is from closing.
    """
    sim = simulate_inventories(instance, solution)
    T = instance.horizon
    shrink = served = initial = final = 0.0
    for n in instance.nodes:
        for p in instance.products:
            prev = n.initial(p.id)
            initial += prev
            for t in instance.periods:
                shrink += n.loss(p.id, t) * prev
                served += _served(instance, solution, n, p.id, t)
                prev = sim[n.id, p.id, t]
            final += solution.inventory.get((n.id, p.id, T), 0.0)
    return MassBalance(sum(solution.harvest.values()), initial, shrink, served, final)


def cost_components(instance: Instance, solution: Solution) -> tuple[dict[str, float], dict[str, float]]:
    """Euro and kg CO2-eq totals per category, recomputed from instance rates."""
    nodes = instance.node_by_id
    vehicles = {}
    for a in instance.arcs:
        vehicles[a.origin, a.destination] = (a.distance, instance.vehicle_by_id.get(a.vehicle))
    eur = dict.fromkeys(COST_CATEGORIES, 0.0)
    kg = dict.fromkeys(COST_CATEGORIES, 0.0)
    for (z, _p, _t), v in solution.harvest.items():
        if z in nodes:  # unknown keys are reported by validate_solution
            eur["production"] += nodes[z].production_cost * v
            kg["production"] += nodes[z].production_emission * v
    for (a, b, _p, _t), v in solution.flow.items():
        dist, veh = vehicles.get((a, b), (0.0, None))
        if veh is not None:
            eur["transport"] += dist * veh.transport_cost * v
            kg["transport"] += dist * veh.transport_emission * v
        for end in (a, b):
            if end in nodes:
                eur["handling"] += nodes[end].handling_cost * v
                kg["handling"] += nodes[end].handling_emission * v
    for (n, _p, _t), v in solution.inventory.items():
        if n in nodes:
            eur["storage"] += nodes[n].storage_cost * v
            kg["storage"] += nodes[n].storage_emission * v
    refs = instance.refinery_by_id
    for (_z, k), v in solution.open.items():
        if v and k in refs:
            eur["refinery"] += refs[k].setup_cost
            kg["refinery"] += refs[k].setup_emission
    return eur, kg


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def validate_solution(instance: Instance, solution: Solution, tol: float = 1e-6) -> ValidationReport:
    """Check a plan against every rule of the instance and recompute its cost and GHG.

    Limits are tested with slack ``tol * max(1, |limit|)``; claimed totals must
    agree with the recomputation to ``tol`` relative.
    """
    findings: list[Finding] = []

    def add(code, entity, message, period=None, magnitude=None):
        findings.append(Finding(code, str(entity), message, period, magnitude))

    def over(value, limit):
        return value - limit > tol * max(1.0, abs(limit))

    nodes = instance.node_by_id
    products = instance.product_by_id
    arcs = {(a.origin, a.destination): a for a in instance.arcs}
    T = instance.horizon

    # keys must name real entities; values nonnegative
    for key, v in solution.harvest.items():
        z, p, t = key
        if z not in nodes or nodes[z].kind is not NodeKind.PRODUCTION_ZONE or p not in products \
                or not 1 <= t <= T:
            add("UNKNOWN_KEY", f"{z}/{p}", "harvest entry does not match a zone and product", t)
        elif v and t not in products[p].harvest_window:
            add("HARVEST_WINDOW", f"{z}/{p}", "harvest outside the harvest window", t, v)
    for (a, b, p, t), v in solution.flow.items():
        arc = arcs.get((a, b))
        if arc is None or p not in products or not 1 <= t <= T:
            add("UNKNOWN_KEY", f"{a}->{b}/{p}", "flow entry does not match an arc and product", t)
        elif v and p not in arc.products:
            add("PRODUCT_NOT_ALLOWED", f"{a}->{b}", f"product {p} may not travel on this arc", t, v)
    for (n, p, t), v in solution.inventory.items():
        if n not in nodes or p not in products or not 1 <= t <= T:
            add("UNKNOWN_KEY", f"{n}/{p}", "inventory entry does not match a node and product", t)
    for label, values in (("harvest", solution.harvest), ("flow", solution.flow), ("inventory", solution.inventory)):
        for key, v in values.items():
            if not v >= -tol:
                add("NEGATIVE", "/".join(map(str, key)), f"{label} is negative", magnitude=v)

    # stock balances, with the plan's own previous-period stock
    net = _net_inflow(instance, solution)
    max_res = 0.0
    for n in instance.nodes:
        for p in instance.products:
            prev = n.initial(p.id)
            for t in instance.periods:
                expected = (1.0 - n.loss(p.id, t)) * prev + net.get((n.id, p.id, t), 0.0) \
                    - _served(instance, solution, n, p.id, t)
                got = solution.inventory.get((n.id, p.id, t), 0.0)
                res = abs(got - expected)
                max_res = max(max_res, res)
                if res > tol:
                    add("BALANCE", f"{n.id}/{p.id}", "stock does not follow from the previous period", t, got - expected)
                prev = got

    # capacities, final floors, throughput
    outflow: dict[tuple[str, int], float] = {}
    for (a, _b, _p, t), v in solution.flow.items():
        outflow[a, t] = outflow.get((a, t), 0.0) + v
    for n in instance.nodes:
        for p, cap in n.capacity.items():
            for t in instance.periods:
                v = solution.inventory.get((n.id, p, t), 0.0)
                if over(v, cap):
                    add("CAPACITY", f"{n.id}/{p}", "stock above capacity", t, v - cap)
        for p, fmin in n.final_inventory_min.items():
            v = solution.inventory.get((n.id, p, T), 0.0)
            if over(fmin, v):
                add("FINAL_INVENTORY", f"{n.id}/{p}", "closing stock below the required floor", T, fmin - v)
        if n.max_throughput is not None:
            for t in instance.periods:
                out = outflow.get((n.id, t), 0.0)
                if over(out, n.max_throughput):
                    add("THROUGHPUT", n.id, "outflow above maximum throughput", t, out - n.max_throughput)
    for g in instance.shared_groups:
        for t in instance.periods:
            v = sum(solution.inventory.get((n, p, t), 0.0) for n, p in g.members)
            if over(v, g.capacity):
                add("SHARED_CAPACITY", g.id, "group stock above shared capacity", t, v - g.capacity)

    # harvest totals
    for p in instance.products:
        for z in instance.zones:
            got = sum(solution.harvest.get((z.id, p.id, t), 0.0) for t in instance.periods)
            limit = p.annual_yield.get(z.id, 0.0)
            if over(got, limit):
                add("YIELD", f"{z.id}/{p.id}", "harvest above annual yield", magnitude=got - limit)

    # refinery locations
    per_zone: dict[str, int] = {}
    for (z, k), v in sorted(solution.open.items()):
        if v not in (0, 1):
            add("NOT_BINARY", f"{z}/{k}", "location decision must be 0 or 1", magnitude=v)
            continue
        ref = instance.refinery_by_id.get(k)
        if ref is None:
            add("UNKNOWN_KEY", f"{z}/{k}", "unknown refinery type")
            continue
        if v and z not in ref.allowed_zones:
            add("LOCATION_NOT_ALLOWED", f"{z}/{k}", "refinery opened outside its allowed zones")
        per_zone[z] = per_zone.get(z, 0) + v
    for z, count in sorted(per_zone.items()):
        if count > 1:
            add("ZONE_LIMIT", z, f"{count} refineries opened in one zone", magnitude=count)
    for k in instance.refinery_types:
        opened = sum(v for (z, kk), v in solution.open.items() if kk == k.id and v in (0, 1))
        if opened != k.count_required:
            add("CARDINALITY", k.id, f"{opened} opened, {k.count_required} required", magnitude=opened)
        for z in sorted(k.pre_located):
            if not solution.open.get((z, k.id), 0):
                add("PRELOCATED_CLOSED", f"{z}/{k.id}", "pre-located refinery is not open")

    eur, kg = cost_components(instance, solution)
    cost, ghg = math.fsum(eur.values()), math.fsum(kg.values())
    if _rel(cost, solution.cost) > tol:
        add("COST_MISMATCH", "plan", f"claimed cost {solution.cost!r} vs recomputed {cost!r}",
            magnitude=solution.cost - cost)
    if _rel(ghg, solution.ghg) > tol:
        add("GHG_MISMATCH", "plan", f"claimed GHG {solution.ghg!r} vs recomputed {ghg!r}",
            magnitude=solution.ghg - ghg)
    return ValidationReport(findings=findings, cost=cost, ghg=ghg, max_residual=max_res, tol=tol)


# --------------------------------------------------------------------------
# exhaustive MILP oracle

def _highs_lp(model: MilpModel, lb, ub):
    A = model.A.tocsr()
    finite = np.isfinite(model.rhs)
    le = (model.sense == LE) & finite
    ge = (model.sense == GE) & finite
    eq = model.sense == EQ
    A_ub = sp.vstack([A[le], -A[ge]], format="csr")
    b_ub = np.concatenate([model.rhs[le], -model.rhs[ge]])
    kw = {}
    if A_ub.shape[0]:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if eq.any():
        kw.update(A_eq=A[eq], b_eq=model.rhs[eq])
    bounds = list(zip(lb, [None if math.isinf(u) else u for u in ub]))
    return linprog(model.objective, bounds=bounds, method="highs", **kw)


def _binary_only_rows(model: MilpModel, free: np.ndarray, lb):
    """Rows touching only free binaries and fixed columns, for a cheap pre-check of assignments."""
    A = model.A.tocsr()
    fixed = model.lb == model.ub
    free_set = np.zeros(model.ncols, dtype=bool)
    free_set[free] = True
    pos = {int(j): i for i, j in enumerate(free)}
    rows = []
    for i in range(model.nrows):
        cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        vals = A.data[A.indptr[i]:A.indptr[i + 1]]
        if len(cols) and np.all(free_set[cols] | fixed[cols]) and free_set[cols].any():
            const = float(sum(v * lb[j] for j, v in zip(cols, vals) if not free_set[j]))
            terms = [(pos[int(j)], float(v)) for j, v in zip(cols, vals) if free_set[j]]
            rows.append((terms, model.sense[i], float(model.rhs[i]) - const))
    return rows


def _violates(rows, assignment, tol=1e-9) -> bool:
    for terms, sense, rhs in rows:
        act = sum(v * assignment[k] for k, v in terms)
        if (sense == LE and act > rhs + tol) or (sense == GE and act < rhs - tol) \
                or (sense == EQ and abs(act - rhs) > tol):
            return True
    return False


def enumerate_mini_milp(model: MilpModel, cap: int = 12) -> MilpOutcome:
    """Best LP over every 0/1 assignment of the free binaries (brute force).

    Assignments are tried in lexicographic order and the first of equal
    objectives is kept. Rows made only of binaries are evaluated directly, an
    assignment violating one is infeasible without an LP solve.
    """
    start = time.perf_counter()
    integ = np.asarray(model.integrality, dtype=bool)
    lb0 = np.array(model.lb, dtype=float)
    ub0 = np.array(model.ub, dtype=float)
    free = np.flatnonzero(integ & (lb0 < ub0))
    if len(free) > cap:
        raise TooManyBinaries(f"{len(free)} free binaries exceed the enumeration cap of {cap}")
    pure_rows = _binary_only_rows(model, free, lb0)
    best = MilpOutcome(Status.INFEASIBLE)
    lps = 0
    for assignment in itertools.product((0.0, 1.0), repeat=len(free)):
        if any(not lb0[j] <= v <= ub0[j] for j, v in zip(free, assignment)):
            continue
        if _violates(pure_rows, assignment):
            continue
        lb, ub = lb0.copy(), ub0.copy()
        lb[free] = ub[free] = assignment
        res = _highs_lp(model, lb, ub)
        lps += 1
        if res.status == 3:
            best = MilpOutcome(Status.UNBOUNDED, nodes=lps)
            break
        if res.status != 0:
            continue
        value = float(res.fun) + model.objective_offset
        if value < best.objective:
            best = MilpOutcome(Status.OPTIMAL, x=np.asarray(res.x, dtype=float), objective=value, bound=value, gap=0.0)
    best.nodes = lps
    if best.status is Status.OPTIMAL:
        best.bound, best.gap = best.objective, 0.0
    best.wall_time = time.perf_counter() - start
    return best
