"""MILP assembly: variable index, constraint families and the cost / GHG objective rows.

Columns come in four families, in this order:

* ``h_z_p_t``  harvest in zone ``z`` of product ``p`` during period ``t``
* ``f_a_p_t``  tonnes shipped on arc number ``a``
* ``s_n_p_t``  end-of-period stock at node ``n``
* ``y_z_k``    binary, a refinery of type ``k`` is open in zone ``z``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .domain import Instance, NodeKind
from .errors import EpsilonError

LE, EQ, GE = "L", "E", "G"


@dataclass(frozen=True)
class VariableIndex:
    harvest: dict[tuple[str, str, int], int]
    flow: dict[tuple[int, str, int], int]
    inv: dict[tuple[str, str, int], int]
    open: dict[tuple[str, str], int]
    names: tuple[str, ...]

    @property
    def ncols(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class Rows:
    """A batch of sparse rows in triplet form, local row numbering from 0."""

    names: list[str] = field(default_factory=list)
    sense: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    r: list[int] = field(default_factory=list)
    c: list[int] = field(default_factory=list)
    v: list[float] = field(default_factory=list)

    def add(self, name, coefs, sense, rhs):
        i = len(self.names)
        self.names.append(name)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        for col, val in coefs:
            self.r.append(i)
            self.c.append(col)
            self.v.append(float(val))

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True, eq=False)
class MilpModel:
    """Sparse MILP ``min obj.x  s.t.  A x (sense) rhs,  lb <= x <= ub``.

    ``cost`` and ``ghg`` are both carried; ``minimize`` selects which one is the
    objective. ``*_offset`` hold constants folded in by presolve.
    """

    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    cost: np.ndarray
    ghg: np.ndarray
    col_names: tuple[str, ...]
    row_names: tuple[str, ...]
    cost_offset: float = 0.0
    ghg_offset: float = 0.0
    minimize: str = "cost"
    epsilon_row: int | None = None

    def __post_init__(self):
        for name in ("sense", "rhs", "lb", "ub", "integrality", "cost", "ghg"):
            getattr(self, name).flags.writeable = False

    @property
    def ncols(self) -> int:
        return self.A.shape[1]

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    @property
    def objective(self) -> np.ndarray:
        return self.cost if self.minimize == "cost" else self.ghg

    @property
    def objective_offset(self) -> float:
        return self.cost_offset if self.minimize == "cost" else self.ghg_offset

    def objective_value(self, x) -> float:
        return float(self.objective @ x) + self.objective_offset

    def cost_value(self, x) -> float:
        return float(self.cost @ x) + self.cost_offset

    def ghg_value(self, x) -> float:
        return float(self.ghg @ x) + self.ghg_offset

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def max_violation(self, x) -> float:
        """Largest row or bound violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        act = self.row_activity(x)
        viol = np.zeros(self.nrows)
        le, eq, ge = self.sense == LE, self.sense == EQ, self.sense == GE
        viol[le] = np.maximum(act[le] - self.rhs[le], 0)
        viol[ge] = np.maximum(self.rhs[ge] - act[ge], 0)
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        bound = np.maximum(np.maximum(self.lb - x, x - self.ub), 0)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))

    def with_objective(self, which: str) -> "MilpModel":
        if which not in ("cost", "ghg"):
            raise ValueError(f"unknown objective {which!r}")
        return replace(self, minimize=which)

    def identical_to(self, other: "MilpModel") -> bool:
        """Bitwise equality of every array and name."""
        if self.A.shape != other.A.shape:
            return False
        a, b = self.A.tocsr(), other.A.tocsr()
        return (
            np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and all(np.array_equal(getattr(self, f), getattr(other, f))
                    for f in ("sense", "rhs", "lb", "ub", "integrality", "cost", "ghg"))
            and self.col_names == other.col_names and self.row_names == other.row_names
            and (self.cost_offset, self.ghg_offset, self.minimize, self.epsilon_row)
            == (other.cost_offset, other.ghg_offset, other.minimize, other.epsilon_row)
        )


def swap_objectives(model: MilpModel) -> MilpModel:
    """Model that minimises the other objective row."""
    return model.with_objective("ghg" if model.minimize == "cost" else "cost")


# --------------------------------------------------------------------------
# variables

def build_variables(instance: Instance) -> VariableIndex:
    names: list[str] = []
    harvest, flow, inv, opened = {}, {}, {}, {}

    def new(name):
        names.append(name)
        return len(names) - 1

    for z in instance.zones:
        for p in instance.products:
            if p.annual_yield.get(z.id, 0.0) > 0:
                for t in sorted(p.harvest_window):
                    if 1 <= t <= instance.horizon:
                        harvest[z.id, p.id, t] = new(f"h_{z.id}_{p.id}_{t}")
    for a_idx, arc in enumerate(instance.arcs):
        for p in instance.products:
            if p.id in arc.products:
                for t in instance.periods:
                    flow[a_idx, p.id, t] = new(f"f_{a_idx}_{p.id}_{t}")
    for n in instance.nodes:
        for p in instance.products:
            for t in instance.periods:
                inv[n.id, p.id, t] = new(f"s_{n.id}_{p.id}_{t}")
    for z, k in instance.open_candidates():
        opened[z, k] = new(f"y_{z}_{k}")
    return VariableIndex(harvest, flow, inv, opened, tuple(names))


# --------------------------------------------------------------------------
# constraint families

def build_inventory_balance(instance: Instance, vars: VariableIndex) -> Rows:
    """Stock balances for every node, product and period.

    ``s[t] - (1-loss) s[t-1] - inflow + outflow (+ demand * y) = 0``; in period 1 the
    previous stock is the initial inventory, moved to the right-hand side. Refinery
    slots have no outgoing arcs, their outflow is the demand of whichever refinery
    type opens there.
    """
    rows = Rows()
    for n in instance.nodes:
        demand_terms = []
        if n.kind is NodeKind.REFINERY_SLOT:
            for k in instance.refinery_types:
                if (n.zone, k.id) in vars.open:
                    demand_terms.append((k, vars.open[n.zone, k.id]))
        prefix = "dem" if n.kind is NodeKind.REFINERY_SLOT else "bal"
        into, out_of = instance.arcs_into(n.id), instance.arcs_out_of(n.id)
        for p in instance.products:
            for t in instance.periods:
                keep = 1.0 - n.loss(p.id, t)
                coefs = [(vars.inv[n.id, p.id, t], 1.0)]
                rhs = 0.0
                if t == 1:
                    rhs = keep * n.initial(p.id)
                else:
                    coefs.append((vars.inv[n.id, p.id, t - 1], -keep))
                h = vars.harvest.get((n.id, p.id, t))
                if h is not None:
                    coefs.append((h, -1.0))
                for a in into:
                    col = vars.flow.get((a, p.id, t))
                    if col is not None:
                        coefs.append((col, -1.0))
                for a in out_of:
                    col = vars.flow.get((a, p.id, t))
                    if col is not None:
                        coefs.append((col, 1.0))
                for k, col in demand_terms:
                    d = k.demand.get((p.id, t), 0.0)
                    if d:
                        coefs.append((col, d))
                rows.add(f"{prefix}_{n.id}_{p.id}_{t}", coefs, EQ, rhs)
    return rows


def build_demand_constraints(instance: Instance, vars: VariableIndex) -> Rows:
    """The refinery-slot subset of the balance family (rows named ``dem_*``)."""
    slots = tuple(n for n in instance.nodes if n.kind is NodeKind.REFINERY_SLOT)
    return build_inventory_balance(replace(instance, nodes=slots), vars)


def build_capacity_constraints(instance: Instance, vars: VariableIndex) -> Rows:
    rows = Rows()
    T = instance.horizon
    for n in instance.nodes:
        for p in instance.products:
            cap = n.capacity.get(p.id)
            if cap is not None:
                for t in instance.periods:
                    rows.add(f"cap_{n.id}_{p.id}_{t}", [(vars.inv[n.id, p.id, t], 1.0)], LE, cap)
    for g in instance.shared_groups:
        members = sorted(g.members)
        for t in instance.periods:
            rows.add(f"shr_{g.id}_{t}", [(vars.inv[n, p, t], 1.0) for n, p in members], LE, g.capacity)
    for n in instance.nodes:
        for p in instance.products:
            fmin = n.final_min(p.id)
            if fmin > 0:
                rows.add(f"fin_{n.id}_{p.id}", [(vars.inv[n.id, p.id, T], 1.0)], GE, fmin)
    return rows


def build_throughput_constraints(instance: Instance, vars: VariableIndex) -> Rows:
    rows = Rows()
    for n in instance.nodes:
        if n.max_throughput is None:
            continue
        out_of = instance.arcs_out_of(n.id)
        for t in instance.periods:
            coefs = [(vars.flow[a, p.id, t], 1.0) for a in out_of for p in instance.products
                     if (a, p.id, t) in vars.flow]
            if coefs:
                rows.add(f"thr_{n.id}_{t}", coefs, LE, n.max_throughput)
    return rows


def build_yield_constraints(instance: Instance, vars: VariableIndex) -> Rows:
    """Total harvest over the horizon bounded by the annual yield of each zone."""
    rows = Rows()
    for z in instance.zones:
        for p in instance.products:
            cols = [vars.harvest[z.id, p.id, t] for t in instance.periods if (z.id, p.id, t) in vars.harvest]
            if cols:
                rows.add(f"yld_{z.id}_{p.id}", [(c, 1.0) for c in cols], LE, p.annual_yield[z.id])
    return rows


def build_location_constraints(instance: Instance, vars: VariableIndex) -> Rows:
    rows = Rows()
    by_zone: dict[str, list[int]] = {}
    for (z, _k), col in vars.open.items():
        by_zone.setdefault(z, []).append(col)
    for z, cols in by_zone.items():
        rows.add(f"loc_{z}", [(c, 1.0) for c in cols], LE, 1.0)
    for k in instance.refinery_types:
        cols = [vars.open[z, k.id] for z in sorted(k.allowed_zones) if (z, k.id) in vars.open]
        rows.add(f"cnt_{k.id}", [(c, 1.0) for c in cols], EQ, k.count_required)
    return rows


# --------------------------------------------------------------------------
# objectives

def _objective_row(instance, vars, rate) -> np.ndarray:
    row = np.zeros(vars.ncols)
    nodes = instance.node_by_id
    for (z, _p, _t), col in vars.harvest.items():
        row[col] = rate("production", nodes[z])
    for (a_idx, _p, _t), col in vars.flow.items():
        arc = instance.arcs[a_idx]
        row[col] = (arc.distance * rate("transport", instance.vehicle_by_id[arc.vehicle])
                    + rate("handling", nodes[arc.origin]) + rate("handling", nodes[arc.destination]))
    for (n, _p, _t), col in vars.inv.items():
        row[col] = rate("storage", nodes[n])
    for (_z, k), col in vars.open.items():
        row[col] = rate("setup", instance.refinery_by_id[k])
    return row


_COST_ATTR = {"production": "production_cost", "transport": "transport_cost", "handling": "handling_cost",
              "storage": "storage_cost", "setup": "setup_cost"}
_GHG_ATTR = {"production": "production_emission", "transport": "transport_emission",
             "handling": "handling_emission", "storage": "storage_emission", "setup": "setup_emission"}


def build_cost_objective(instance: Instance, vars: VariableIndex) -> np.ndarray:
    """Euro coefficients per column."""
    return _objective_row(instance, vars, lambda what, obj: getattr(obj, _COST_ATTR[what]))


def build_ghg_objective(instance: Instance, vars: VariableIndex) -> np.ndarray:
    """kg CO2-eq coefficients per column."""
    return _objective_row(instance, vars, lambda what, obj: getattr(obj, _GHG_ATTR[what]))


# --------------------------------------------------------------------------
# assembly

def _stack(ncols: int, batches: list[Rows]):
    names, sense, rhs, r, c, v = [], [], [], [], [], []
    base = 0
    for b in batches:
        names += b.names
        sense += b.sense
        rhs += b.rhs
        r += [i + base for i in b.r]
        c += b.c
        v += b.v
        base += len(b)
    A = sp.csr_matrix((np.asarray(v, dtype=float), (np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64))),
                      shape=(base, ncols))
    A.sum_duplicates()
    A.sort_indices()
    return A, np.asarray(sense, dtype="<U1"), np.asarray(rhs, dtype=float), tuple(names)


def build_model(instance: Instance, epsilon: float | None = None, vars: VariableIndex | None = None) -> MilpModel:
    """Assemble the full MILP (minimise cost), optionally with ``ghg <= epsilon``."""
    if vars is None:
        vars = build_variables(instance)
    non_slot = replace(instance, nodes=tuple(n for n in instance.nodes if n.kind is not NodeKind.REFINERY_SLOT))
    batches = [
        build_inventory_balance(non_slot, vars),
        build_demand_constraints(instance, vars),
        build_capacity_constraints(instance, vars),
        build_throughput_constraints(instance, vars),
        build_yield_constraints(instance, vars),
        build_location_constraints(instance, vars),
    ]
    A, sense, rhs, row_names = _stack(vars.ncols, batches)
    n = vars.ncols
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    integrality = np.zeros(n, dtype=bool)
    for (z, k), col in vars.open.items():
        integrality[col] = True
        ub[col] = 1.0
        if z in instance.refinery_by_id[k].pre_located:
            lb[col] = 1.0
    model = MilpModel(
        A=A, sense=sense, rhs=rhs, lb=lb, ub=ub, integrality=integrality,
        cost=build_cost_objective(instance, vars), ghg=build_ghg_objective(instance, vars),
        col_names=vars.names, row_names=row_names,
    )
    if epsilon is not None:
        model = apply_epsilon(model, epsilon)
    return model


def apply_epsilon(model: MilpModel, epsilon: float) -> MilpModel:
    """Return a copy of ``model`` with the single row ``ghg . x <= epsilon``.

    Applying it again replaces the previous bound instead of adding a row.
    """
    if not epsilon >= 0:
        raise EpsilonError(f"epsilon must be >= 0, got {epsilon!r}")
    rhs_value = float(epsilon) - model.ghg_offset
    if model.epsilon_row is not None:
        rhs = model.rhs.copy()
        rhs[model.epsilon_row] = rhs_value
        return replace(model, rhs=rhs)
    row = sp.csr_matrix(model.ghg.reshape(1, -1))
    row.eliminate_zeros()
    A = sp.vstack([model.A, row], format="csr")
    A.sort_indices()
    return replace(
        model, A=A, sense=np.append(model.sense, LE), rhs=np.append(model.rhs, rhs_value),
        row_names=model.row_names + ("eps",), epsilon_row=model.nrows,
    )


def apply_cost_cap(model: MilpModel, bound: float) -> MilpModel:
    """Return a copy of ``model`` with the extra row ``cost . x <= bound`` (named ``cost_cap``)."""
    if "cost_cap" in model.row_names:
        raise ValueError("model already carries a cost cap")
    row = sp.csr_matrix(model.cost.reshape(1, -1))
    row.eliminate_zeros()
    A = sp.vstack([model.A, row], format="csr")
    A.sort_indices()
    return replace(
        model, A=A, sense=np.append(model.sense, LE), rhs=np.append(model.rhs, float(bound) - model.cost_offset),
        row_names=model.row_names + ("cost_cap",),
    )


# --------------------------------------------------------------------------
# LP text format

def _lp_terms(coefs) -> str:
    parts = []
    for name, val in coefs:
        sign = "-" if val < 0 else "+"
        parts.append(f"{sign} {_lp_num(abs(val))} {name}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _lp_num(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def write_lp(model: MilpModel, path) -> None:
    """Write ``model`` in CPLEX LP text format for cross-checking with other solvers."""
    names = model.col_names
    obj = model.objective
    lines = ["\\ biomass supply chain MILP", "Minimize"]
    terms = [(names[j], obj[j]) for j in np.flatnonzero(obj)] or [(names[0], 0.0)]
    lines.append(" obj: " + _lp_terms(terms))
    lines.append("Subject To")
    A = model.A.tocsr()
    symbol = {LE: "<=", EQ: "=", GE: ">="}
    for i in range(model.nrows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        terms = [(names[j], v) for j, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        rhs = model.rhs[i]
        if math.isinf(rhs):
            continue
        if not terms:
            terms = [(names[0], 0.0)] if names else []
        lines.append(f" {model.row_names[i]}: {_lp_terms(terms)} {symbol[model.sense[i]]} {_lp_num(rhs)}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if model.integrality[j]:
            if lo == hi:
                lines.append(f" {name} = {_lp_num(lo)}")
            continue
        if lo == hi:
            lines.append(f" {name} = {_lp_num(lo)}")
        elif not math.isinf(hi):
            lines.append(f" {_lp_num(lo)} <= {name} <= {_lp_num(hi)}")
        elif lo != 0:
            lines.append(f" {name} >= {_lp_num(lo)}")
    binaries = [names[j] for j in np.flatnonzero(model.integrality)]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[i:i + 8]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
