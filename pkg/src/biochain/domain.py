"""Instance types for the multi-period biomass supply network and their structural checks.

All quantities are dry tonnes, money is in euros and emissions in kg CO2-eq.
Periods are numbered ``1..horizon``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable


class NodeKind(str, enum.Enum):
    PRODUCTION_ZONE = "ProductionZone"
    FARM_STORAGE = "FarmStorage"
    CENTRAL_STORAGE = "CentralStorage"
    REFINERY_SLOT = "RefinerySlot"


#: arc layering, origin kind -> allowed destination kinds
ALLOWED_ARCS = {
    NodeKind.PRODUCTION_ZONE: {NodeKind.FARM_STORAGE, NodeKind.CENTRAL_STORAGE},
    NodeKind.FARM_STORAGE: {NodeKind.CENTRAL_STORAGE},
    NodeKind.CENTRAL_STORAGE: {NodeKind.REFINERY_SLOT},
    NodeKind.REFINERY_SLOT: set(),
}


@dataclass(frozen=True)
class Product:
    id: str
    name: str
    harvest_window: frozenset[int]
    annual_yield: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Node:
    """A stocking point of the network.

    Per-product data (``capacity``, ``initial_inventory``, ``final_inventory_min``,
    ``loss_default``) is keyed by product id; a product missing from
    ``capacity`` is uncapacitated individually (it may belong to a shared group).
    Loss rates may be overridden per ``(product, period)``.
    """

    id: str
    kind: NodeKind
    capacity: dict[str, float] = field(default_factory=dict)
    initial_inventory: dict[str, float] = field(default_factory=dict)
    final_inventory_min: dict[str, float] = field(default_factory=dict)
    loss_default: dict[str, float] = field(default_factory=dict)
    loss_overrides: dict[tuple[str, int], float] = field(default_factory=dict)
    max_throughput: float | None = None
    storage_cost: float = 0.0
    handling_cost: float = 0.0
    storage_emission: float = 0.0
    handling_emission: float = 0.0
    production_cost: float = 0.0
    production_emission: float = 0.0
    zone: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        # sparse maps: an explicit zero is the same as an absent entry
        for name in ("initial_inventory", "final_inventory_min", "loss_default"):
            d = getattr(self, name)
            object.__setattr__(self, name, {k: float(v) for k, v in d.items() if v != 0})

    def loss(self, product: str, period: int) -> float:
        key = (product, period)
        if key in self.loss_overrides:
            return self.loss_overrides[key]
        return self.loss_default.get(product, 0.0)

    def initial(self, product: str) -> float:
        return self.initial_inventory.get(product, 0.0)

    def final_min(self, product: str) -> float:
        return self.final_inventory_min.get(product, 0.0)


@dataclass(frozen=True)
class Arc:
    origin: str
    destination: str
    distance: float
    vehicle: str
    products: frozenset[str]


@dataclass(frozen=True)
class VehicleType:
    id: str
    transport_cost: float
    transport_emission: float


@dataclass(frozen=True)
class RefineryType:
    id: str
    count_required: int
    setup_cost: float
    demand: dict[tuple[str, int], float] = field(default_factory=dict)
    allowed_zones: frozenset[str] = frozenset()
    pre_located: frozenset[str] = frozenset()
    setup_emission: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "demand", {k: float(v) for k, v in self.demand.items() if v != 0})


@dataclass(frozen=True)
class SharedCapacityGroup:
    id: str
    members: frozenset[tuple[str, str]]
    capacity: float


@dataclass(frozen=True)
class Instance:
    horizon: int
    products: tuple[Product, ...]
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...] = ()
    vehicles: tuple[VehicleType, ...] = ()
    refinery_types: tuple[RefineryType, ...] = ()
    shared_groups: tuple[SharedCapacityGroup, ...] = ()

    def __post_init__(self):
        for name in ("products", "nodes", "arcs", "vehicles", "refinery_types", "shared_groups"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def periods(self) -> range:
        return range(1, self.horizon + 1)

    @cached_property
    def node_by_id(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def product_by_id(self) -> dict[str, Product]:
        return {p.id: p for p in self.products}

    @cached_property
    def vehicle_by_id(self) -> dict[str, VehicleType]:
        return {v.id: v for v in self.vehicles}

    @cached_property
    def refinery_by_id(self) -> dict[str, RefineryType]:
        return {k.id: k for k in self.refinery_types}

    @cached_property
    def slot_by_zone(self) -> dict[str, Node]:
        return {n.zone: n for n in self.nodes if n.kind is NodeKind.REFINERY_SLOT and n.zone is not None}

    @property
    def zones(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.PRODUCTION_ZONE]

    def arcs_into(self, node_id: str) -> list[int]:
        return self._arcs_in.get(node_id, [])

    def arcs_out_of(self, node_id: str) -> list[int]:
        return self._arcs_out.get(node_id, [])

    @cached_property
    def _arcs_in(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for i, a in enumerate(self.arcs):
            out.setdefault(a.destination, []).append(i)
        return out

    @cached_property
    def _arcs_out(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for i, a in enumerate(self.arcs):
            out.setdefault(a.origin, []).append(i)
        return out

    def open_candidates(self) -> list[tuple[str, str]]:
        """(zone, refinery type) pairs that may host a refinery, in canonical order."""
        return [(z, k.id) for k in self.refinery_types for z in sorted(k.allowed_zones)]


# --------------------------------------------------------------------------
# structural validation

@dataclass(frozen=True)
class Finding:
    code: str
    entity: str
    message: str
    period: int | None = None
    magnitude: float | None = None
    severity: str = "error"

    def to_dict(self) -> dict:
        return {
            "code": self.code, "entity": self.entity, "message": self.message,
            "period": self.period, "magnitude": self.magnitude, "severity": self.severity,
        }


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)
    cost: float | None = None
    ghg: float | None = None
    max_residual: float = 0.0
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return not self.errors and self.max_residual <= self.tol

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "cost_eur": self.cost,
            "ghg_kg": self.ghg,
            "max_residual": self.max_residual,
            "tol": self.tol,
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_text(self) -> str:
        lines = []
        for f in self.findings:
            where = f" t={f.period}" if f.period is not None else ""
            mag = f" ({f.magnitude:.6g})" if f.magnitude is not None else ""
            lines.append(f"{f.severity.upper()} {f.code} {f.entity}{where}: {f.message}{mag}")
        if self.cost is not None:
            lines.append(f"cost_eur = {self.cost:.6f}")
        if self.ghg is not None:
            lines.append(f"ghg_kg = {self.ghg:.6f}")
        lines.append(f"max balance residual = {self.max_residual:.3g}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


class _Checker:
    def __init__(self):
        self.findings: list[Finding] = []

    def add(self, code, entity, message, period=None, magnitude=None):
        self.findings.append(Finding(code, str(entity), message, period, magnitude))

    def nonneg(self, value, entity, what):
        if value is not None and not (value >= 0):
            self.add("NEGATIVE_VALUE", entity, f"{what} must be >= 0", magnitude=value)

    def period(self, t, horizon, entity, what):
        if horizon is None:  # horizon itself is invalid and already reported
            return
        if not (1 <= t <= horizon):
            self.add("PERIOD_OUT_OF_RANGE", entity, f"{what} period {t} outside 1..{horizon}", period=t)


def _duplicates(ids: Iterable[str]) -> list[str]:
    seen, dup = set(), []
    for i in ids:
        if i in seen and i not in dup:
            dup.append(i)
        seen.add(i)
    return dup


def validate_instance(instance: Instance) -> ValidationReport:
    """Check every structural invariant of ``instance``; never raises, never mutates."""
    c = _Checker()
    T = instance.horizon
    if not (isinstance(T, int) and T >= 1):
        c.add("HORIZON_INVALID", "instance", f"horizon must be an integer >= 1, got {T!r}")
        T = None

    for kind, ids in (
        ("product", [p.id for p in instance.products]),
        ("node", [n.id for n in instance.nodes]),
        ("vehicle", [v.id for v in instance.vehicles]),
        ("refinery type", [k.id for k in instance.refinery_types]),
        ("shared group", [g.id for g in instance.shared_groups]),
    ):
        for d in _duplicates(ids):
            c.add("DUPLICATE_ID", d, f"{kind} id is not unique")

    nodes = instance.node_by_id
    products = instance.product_by_id
    zone_ids = {n.id for n in instance.nodes if n.kind is NodeKind.PRODUCTION_ZONE}

    for p in instance.products:
        if not p.harvest_window:
            c.add("WINDOW_EMPTY", p.id, "harvest window is empty")
        for t in sorted(p.harvest_window):
            c.period(t, T, p.id, "harvest window")
        for z, y in p.annual_yield.items():
            if z not in zone_ids:
                c.add("UNKNOWN_REFERENCE", p.id, f"yield references unknown zone {z!r}")
            c.nonneg(y, f"{p.id}@{z}", "annual yield")

    for n in instance.nodes:
        for p in (*n.capacity, *n.initial_inventory, *n.final_inventory_min, *n.loss_default):
            if p not in products:
                c.add("UNKNOWN_REFERENCE", n.id, f"unknown product {p!r}")
        for what, d in (("capacity", n.capacity), ("initial inventory", n.initial_inventory),
                        ("final inventory floor", n.final_inventory_min)):
            for p, v in d.items():
                c.nonneg(v, f"{n.id}/{p}", what)
        for name in ("max_throughput", "storage_cost", "handling_cost", "storage_emission",
                     "handling_emission", "production_cost", "production_emission"):
            c.nonneg(getattr(n, name), n.id, name)
        for p, lam in n.loss_default.items():
            if not (0 <= lam < 1):
                c.add("LOSS_OUT_OF_RANGE", n.id, f"loss for {p} must lie in [0,1)", magnitude=lam)
        for (p, t), lam in n.loss_overrides.items():
            if p not in products:
                c.add("UNKNOWN_REFERENCE", n.id, f"loss override for unknown product {p!r}")
            c.period(t, T, n.id, "loss override")
            if not (0 <= lam < 1):
                c.add("LOSS_OUT_OF_RANGE", n.id, f"loss for {p} must lie in [0,1)", period=t, magnitude=lam)
        for p, fmin in n.final_inventory_min.items():
            cap = n.capacity.get(p)
            if cap is not None and cap >= 0 and fmin >= 0 and fmin > cap:
                c.add("FINAL_EXCEEDS_CAPACITY", n.id, f"final floor for {p} exceeds capacity", magnitude=fmin - cap)
        if n.kind is NodeKind.REFINERY_SLOT:
            if n.zone not in zone_ids:
                c.add("UNKNOWN_REFERENCE", n.id, f"refinery slot refers to unknown zone {n.zone!r}")

    for d in _duplicates([n.zone for n in instance.nodes if n.kind is NodeKind.REFINERY_SLOT]):
        c.add("DUPLICATE_SLOT", d, "zone has more than one refinery slot")

    seen_arcs = set()
    for i, a in enumerate(instance.arcs):
        ent = f"{a.origin}->{a.destination}"
        if a.origin == a.destination:
            c.add("ARC_SELF_LOOP", ent, "arc origin equals destination")
        o, d = nodes.get(a.origin), nodes.get(a.destination)
        if o is None or d is None:
            missing = a.origin if o is None else a.destination
            c.add("UNKNOWN_REFERENCE", ent, f"arc endpoint {missing!r} does not exist")
        elif a.origin != a.destination and d.kind not in ALLOWED_ARCS[o.kind]:
            c.add("ARC_DIRECTION", ent, f"{o.kind.value} -> {d.kind.value} violates the layer order")
        if not (a.distance > 0):
            c.add("ARC_DISTANCE", ent, "distance must be > 0", magnitude=a.distance)
        if a.vehicle not in instance.vehicle_by_id:
            c.add("UNKNOWN_REFERENCE", ent, f"unknown vehicle {a.vehicle!r}")
        for p in sorted(a.products):
            if p not in products:
                c.add("UNKNOWN_REFERENCE", ent, f"unknown product {p!r}")
        if (a.origin, a.destination) in seen_arcs:
            c.add("ARC_DUPLICATE", ent, "more than one arc between the same nodes")
        seen_arcs.add((a.origin, a.destination))

    for v in instance.vehicles:
        c.nonneg(v.transport_cost, v.id, "transport cost")
        c.nonneg(v.transport_emission, v.id, "transport emission")

    for k in instance.refinery_types:
        c.nonneg(k.count_required, k.id, "count_required")
        c.nonneg(k.setup_cost, k.id, "setup cost")
        c.nonneg(k.setup_emission, k.id, "setup emission")
        for (p, t), dem in sorted(k.demand.items()):
            if p not in products:
                c.add("UNKNOWN_REFERENCE", k.id, f"demand for unknown product {p!r}")
            c.period(t, T, k.id, "demand")
            c.nonneg(dem, f"{k.id}/{p}", "demand")
        for z in sorted(k.pre_located - k.allowed_zones):
            c.add("PRELOCATED_NOT_ALLOWED", k.id, f"pre-located zone {z!r} is not an allowed zone")
        if len(k.pre_located) > k.count_required:
            c.add("PRELOCATED_EXCEEDS_COUNT", k.id, "more pre-located refineries than count_required")
        for z in sorted(k.allowed_zones):
            if z not in zone_ids:
                c.add("UNKNOWN_REFERENCE", k.id, f"allowed zone {z!r} is not a production zone")
            elif z not in instance.slot_by_zone:
                c.add("MISSING_SLOT", k.id, f"allowed zone {z!r} has no RefinerySlot node")

    member_of: dict[tuple[str, str], str] = {}
    for g in instance.shared_groups:
        if not g.members:
            c.add("GROUP_EMPTY", g.id, "shared capacity group has no members")
        c.nonneg(g.capacity, g.id, "group capacity")
        for n_id, p in sorted(g.members):
            if n_id not in nodes or p not in products:
                c.add("UNKNOWN_REFERENCE", g.id, f"member ({n_id}, {p}) does not exist")
                continue
            if (n_id, p) in member_of:
                c.add("GROUP_OVERLAP", g.id, f"({n_id}, {p}) already belongs to group {member_of[(n_id, p)]}")
            member_of[(n_id, p)] = g.id
            if p in nodes[n_id].capacity:
                c.add("CAPACITY_CONFLICT", g.id, f"({n_id}, {p}) also has an individual capacity")

    return ValidationReport(findings=c.findings)


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
