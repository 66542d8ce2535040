"""Seeded synthetic instances shaped like a regional rapeseed supply basin.

Zones are scattered uniformly over a disc; each gets its own farm storages, a
few central storages serve the whole basin and refinery slots sit in candidate
zones. Road distances are straight-line distances times ``ROAD_WINDING``.

Randomness comes from :class:`Lcg64`, a fully specified 64-bit linear
congruential generator, so a given seed yields the same instance on every
platform. Every rate is rounded to 6 decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import (
    Arc, Instance, Node, NodeKind, Product, RefineryType, SharedCapacityGroup, VehicleType, validate_instance,
)
from .errors import ParamError

ROAD_WINDING = 1.3  # road km per straight-line km; an assumed constant
FEASIBILITY_MARGIN = 0.8  # demand of each product never exceeds this share of its total yield
MIN_RETENTION = 0.85  # stock kept for the whole horizon retains at least this share
PRODUCT_NAMES = ("bulk seeds", "straw bales", "chaff bales")


class Lcg64:
    """``state <- a * state + c (mod 2**64)``; floats use the top 53 bits."""

    A = 6364136223846793005
    C = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self.MASK
        self.next_u64()

    def next_u64(self) -> int:
        self.state = (self.A * self.state + self.C) & self.MASK
        return self.state

    def random(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)

    def shuffled(self, items) -> list:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def q(x: float) -> float:
    return round(float(x), 6)


@dataclass(frozen=True)
class RefinerySpec:
    id: str = "k1"
    count: int = 1
    num_pre_located: int = 0
    # annualised setup and operating cost per tonne of the refinery's own demand
    setup_cost_per_t: tuple[float, float] = (15.0, 45.0)
    setup_emission_per_t: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class GeneratorParams:
    seed: int = 0
    num_zones: int = 4
    num_products: int = 1
    horizon: int = 8
    farm_storages_per_zone: int = 1
    num_central_storages: int = 2
    num_candidate_zones: int = 2
    refineries: tuple[RefinerySpec, ...] = (RefinerySpec(),)
    radius_km: float = 50.0
    central_links: int = 2  # nearest central storages reached from each zone / farm storage
    window_length: int | None = None  # periods per harvest window; default about a quarter of the horizon
    total_demand: float = 1000.0
    yield_range: tuple[float, float] = (200.0, 800.0)
    production_cost: tuple[float, float] = (20.0, 60.0)
    production_emission: tuple[float, float] = (40.0, 160.0)
    transport_cost: tuple[float, float] = (0.08, 0.25)
    transport_emission: tuple[float, float] = (0.03, 0.15)
    handling_cost: tuple[float, float] = (0.5, 4.0)
    handling_emission: tuple[float, float] = (0.2, 2.0)
    storage_cost: tuple[float, float] = (0.05, 0.5)
    storage_emission: tuple[float, float] = (0.01, 0.2)
    loss_range: tuple[float, float] = (0.0, 0.004)
    initial_share: tuple[float, float] = (0.0, 0.05)  # farm-storage opening stock, share of zone yield
    rate_structure: str = "independent"  # or "conflicting" / "aligned"
    aligned_factor: float = 2.5  # emission = factor * cost when aligned
    central_throughput: bool = True

    @property
    def num_free_binaries(self) -> int:
        return len(self.refineries) * self.num_candidate_zones - sum(r.num_pre_located for r in self.refineries)

    def check(self) -> None:
        problems = []
        if self.num_zones < 1:
            problems.append("num_zones must be >= 1")
        if self.num_products < 1:
            problems.append("num_products must be >= 1")
        if self.horizon < 1:
            problems.append("horizon must be >= 1")
        if self.farm_storages_per_zone < 0:
            problems.append("farm_storages_per_zone must be >= 0")
        if self.num_central_storages < 1:
            problems.append("num_central_storages must be >= 1")
        if not 1 <= self.num_candidate_zones <= self.num_zones:
            problems.append("num_candidate_zones must lie in 1..num_zones")
        if self.central_links < 1:
            problems.append("central_links must be >= 1")
        if self.window_length is not None and self.window_length < 1:
            problems.append("window_length must be >= 1")
        if not self.radius_km > 0:
            problems.append("radius_km must be > 0")
        if not self.total_demand >= 0:
            problems.append("total_demand must be >= 0")
        if self.rate_structure not in ("independent", "conflicting", "aligned"):
            problems.append(f"unknown rate_structure {self.rate_structure!r}")
        ids = [r.id for r in self.refineries]
        if len(set(ids)) != len(ids):
            problems.append("refinery type ids must be unique")
        if sum(r.count for r in self.refineries) > self.num_candidate_zones:
            problems.append("more refineries required than candidate zones")
        if sum(r.num_pre_located for r in self.refineries) > self.num_candidate_zones:
            problems.append("more pre-located refineries than candidate zones")
        for r in self.refineries:
            if r.count < 0 or not 0 <= r.num_pre_located <= r.count:
                problems.append(f"refinery {r.id}: need 0 <= num_pre_located <= count")
        for name in ("yield_range", "production_cost", "production_emission", "transport_cost",
                     "transport_emission", "handling_cost", "handling_emission", "storage_cost",
                     "storage_emission", "loss_range", "initial_share"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                problems.append(f"{name} must satisfy 0 <= lo <= hi")
        if self.loss_range[1] >= 1:
            problems.append("loss_range must stay below 1")
        if self.demand_weight() == 0 and self.total_demand > 0:
            problems.append("positive total_demand needs at least one refinery with count >= 1")
        if problems:
            raise ParamError("; ".join(problems))

    def demand_weight(self) -> int:
        return sum(r.count for r in self.refineries)


# --------------------------------------------------------------------------

class _Rates:
    """Draws (cost, emission) pairs according to the requested structure."""

    def __init__(self, rng: Lcg64, params: GeneratorParams):
        self.rng = rng
        self.params = params

    def pair(self, cost_name: str, em_name: str) -> tuple[float, float]:
        p = self.params
        c_lo, c_hi = getattr(p, cost_name)
        e_lo, e_hi = getattr(p, em_name)
        u = self.rng.random()
        cost = q(c_lo + (c_hi - c_lo) * u)
        if p.rate_structure == "aligned":
            return cost, q(p.aligned_factor * cost)
        if p.rate_structure == "conflicting":
            return cost, q(e_hi - (e_hi - e_lo) * u)
        return cost, q(self.rng.uniform(e_lo, e_hi))


def _split_units(total_units: int, weights: list[float]) -> list[int]:
    """Integer split proportional to ``weights`` whose parts sum to ``total_units``."""
    s = sum(weights)
    if s <= 0:
        weights, s = [1.0] * len(weights), float(len(weights))
    parts = [int(total_units * w // s) for w in weights]
    parts[-1] += total_units - sum(parts)
    return parts


def _dist(a, b) -> float:
    return q(ROAD_WINDING * max(math.hypot(a[0] - b[0], a[1] - b[1]), 1.0))


def generate_instance(params: GeneratorParams) -> Instance:
    """Build a validated random instance; identical params give identical instances."""
    params.check()
    rng = Lcg64(params.seed)
    rates = _Rates(rng, params)
    P, T, Z = params.num_products, params.horizon, params.num_zones
    R = params.radius_km

    def point(radius):
        r = radius * math.sqrt(rng.random())
        th = 2 * math.pi * rng.random()
        return r * math.cos(th), r * math.sin(th)

    width = len(str(Z))
    zone_ids = [f"z{i + 1:0{width}d}" for i in range(Z)]
    product_ids = [f"p{i + 1}" for i in range(P)]
    where = {z: point(R) for z in zone_ids}

    # harvest windows: contiguous, staggered over the horizon
    wlen = params.window_length or max(1, round(T / 4))
    windows, starts = {}, {}
    for i, p in enumerate(product_ids):
        start = 1 + (i * T) // P
        end = min(T, start + wlen - 1)
        windows[p] = frozenset(range(start, end + 1))
        starts[p] = start

    raw_yield = {(z, p): rng.uniform(*params.yield_range) for z in zone_ids for p in product_ids}

    # demand: split the total over refinery instances, products (by yield share) and periods
    total_units = round(params.total_demand * 1_000_000)
    weight = params.demand_weight()
    per_refinery = {r.id: 0 for r in params.refineries}
    if weight:
        base = total_units // weight
        leftover = total_units - base * weight
        for r in params.refineries:
            if r.count:
                per_refinery[r.id] = base
        for r in sorted(params.refineries, key=lambda r: r.count):
            while r.count and leftover >= r.count:
                per_refinery[r.id] += 1
                leftover -= r.count
    share = [sum(raw_yield[z, p] for z in zone_ids) for p in product_ids]
    demand: dict[str, dict[tuple[str, int], float]] = {}
    product_demand = {p: 0.0 for p in product_ids}
    for r in params.refineries:
        d = {}
        for p, units in zip(product_ids, _split_units(per_refinery[r.id], share)):
            periods = list(range(starts[p], T + 1))
            for t, u in zip(periods, _split_units(units, [1.0] * len(periods))):
                if u:
                    d[p, t] = u / 1_000_000
            product_demand[p] += r.count * units / 1_000_000
        demand[r.id] = d

    # yields scaled so every product keeps the feasibility margin
    yields = {}
    for p in product_ids:
        total = sum(raw_yield[z, p] for z in zone_ids)
        scale = max(1.0, product_demand[p] / (FEASIBILITY_MARGIN * total)) * (1 + 1e-6)
        yields[p] = {z: math.ceil(raw_yield[z, p] * scale * 1e6) / 1e6 for z in zone_ids}

    max_loss = 1 - MIN_RETENTION ** (1 / T)
    loss_hi = min(params.loss_range[1], max_loss)
    loss_lo = min(params.loss_range[0], loss_hi)

    def loss():
        return {p: q(rng.uniform(loss_lo, loss_hi)) for p in product_ids}

    nodes: list[Node] = []
    arcs: list[Arc] = []

    for z in zone_ids:
        pc, pe = rates.pair("production_cost", "production_emission")
        hc, he = rates.pair("handling_cost", "handling_emission")
        sc, se = rates.pair("storage_cost", "storage_emission")
        nodes.append(Node(
            id=z, kind=NodeKind.PRODUCTION_ZONE, capacity={p: yields[p][z] for p in product_ids},
            loss_default=loss(), storage_cost=sc, handling_cost=hc, storage_emission=se,
            handling_emission=he, production_cost=pc, production_emission=pe,
        ))

    central_ids = [f"c{i + 1}" for i in range(params.num_central_storages)]
    central_at = {c: point(R * 0.6) for c in central_ids}
    candidate_zones = sorted(rng.shuffled(zone_ids)[:params.num_candidate_zones])

    vehicles = []
    for vid in ("tractor", "truck"):
        tc, te = rates.pair("transport_cost", "transport_emission")
        vehicles.append(VehicleType(vid, tc, te))

    def nearest_centrals(xy):
        ranked = sorted(central_ids, key=lambda c: (_dist(xy, central_at[c]), c))
        return ranked[:params.central_links]

    all_products = frozenset(product_ids)
    for z in zone_ids:
        for j in range(params.farm_storages_per_zone):
            fid = f"f{z[1:]}{chr(ord('a') + j)}" if params.farm_storages_per_zone <= 26 else f"f{z[1:]}_{j + 1}"
            fxy = (where[z][0] + rng.uniform(-3, 3), where[z][1] + rng.uniform(-3, 3))
            init = {p: q(yields[p][z] * rng.uniform(*params.initial_share)) for p in product_ids}
            cap = {p: q(max(2 * init[p], 0.5 * yields[p][z])) for p in product_ids}
            hc, he = rates.pair("handling_cost", "handling_emission")
            sc, se = rates.pair("storage_cost", "storage_emission")
            nodes.append(Node(
                id=fid, kind=NodeKind.FARM_STORAGE, capacity=cap, initial_inventory=init,
                final_inventory_min={p: q(0.5 * v) for p, v in init.items()}, loss_default=loss(),
                storage_cost=sc, handling_cost=hc, storage_emission=se, handling_emission=he,
            ))
            arcs.append(Arc(z, fid, _dist(where[z], fxy), "tractor", all_products))
            for c in nearest_centrals(fxy):
                arcs.append(Arc(fid, c, _dist(fxy, central_at[c]), "truck", all_products))
        for c in nearest_centrals(where[z]):
            arcs.append(Arc(z, c, _dist(where[z], central_at[c]), "tractor", all_products))

    per_period = [0.0] * (T + 1)
    for r in params.refineries:
        for (p, t), v in demand[r.id].items():
            per_period[t] += r.count * v
    throughput = q(1.5 * max(per_period)) if params.central_throughput and max(per_period) > 0 else None
    shared = []
    total_yield = sum(sum(y.values()) for y in yields.values())
    for c in central_ids:
        hc, he = rates.pair("handling_cost", "handling_emission")
        sc, se = rates.pair("storage_cost", "storage_emission")
        if P >= 2:
            cap = {}
            shared.append(SharedCapacityGroup(f"g_{c}", frozenset((c, p) for p in product_ids), q(0.5 * total_yield)))
        else:
            cap = {product_ids[0]: q(0.5 * total_yield)}
        nodes.append(Node(
            id=c, kind=NodeKind.CENTRAL_STORAGE, capacity=cap, loss_default=loss(), max_throughput=throughput,
            storage_cost=sc, handling_cost=hc, storage_emission=se, handling_emission=he,
        ))

    for z in candidate_zones:
        sid = f"r{z[1:]}"
        hc, he = rates.pair("handling_cost", "handling_emission")
        sc, se = rates.pair("storage_cost", "storage_emission")
        nodes.append(Node(
            id=sid, kind=NodeKind.REFINERY_SLOT, loss_default=loss(), storage_cost=sc, handling_cost=hc,
            storage_emission=se, handling_emission=he, zone=z,
        ))
        for c in central_ids:
            arcs.append(Arc(c, sid, _dist(central_at[c], where[z]), "truck", all_products))

    ref_types = []
    next_pre = 0
    for r in params.refineries:
        tonnes = per_refinery[r.id] / 1_000_000
        cost = q(tonnes * rng.uniform(*r.setup_cost_per_t))
        if params.rate_structure == "aligned":
            em = q(params.aligned_factor * cost)
        else:
            em = q(tonnes * rng.uniform(*r.setup_emission_per_t))
        pre = frozenset(candidate_zones[next_pre:next_pre + r.num_pre_located])
        next_pre += r.num_pre_located
        ref_types.append(RefineryType(
            id=r.id, count_required=r.count, setup_cost=cost, demand=demand[r.id],
            allowed_zones=frozenset(candidate_zones), pre_located=pre, setup_emission=em,
        ))

    products = tuple(
        Product(p, PRODUCT_NAMES[i] if i < len(PRODUCT_NAMES) else f"product {i + 1}", windows[p], yields[p])
        for i, p in enumerate(product_ids)
    )
    instance = Instance(
        horizon=T, products=products, nodes=tuple(nodes), arcs=tuple(arcs), vehicles=tuple(vehicles),
        refinery_types=tuple(ref_types), shared_groups=tuple(shared),
    )
    report = validate_instance(instance)
    if not report.passed:
        raise ParamError("generated instance is invalid: " + "; ".join(sorted(report.codes())))
    return instance


# --------------------------------------------------------------------------
# presets

def tiny_params(seed: int = 7) -> GeneratorParams:
    """Two zones, one product, four periods, two candidate sites for one refinery."""
    return GeneratorParams(
        seed=seed, num_zones=2, num_products=1, horizon=4, farm_storages_per_zone=0, num_central_storages=1,
        num_candidate_zones=2, refineries=(RefinerySpec("k1", count=1),), window_length=2, total_demand=100.0,
        central_links=1, central_throughput=False,
    )


def desk_params(seed: int = 11) -> GeneratorParams:
    """8 zones, 3 products, 12 periods, 3 candidate refinery zones."""
    return GeneratorParams(
        seed=seed, num_zones=8, num_products=3, horizon=12, farm_storages_per_zone=1, num_central_storages=2,
        num_candidate_zones=3, refineries=(RefinerySpec("k1", count=1), RefinerySpec("k2", count=1)),
        window_length=3, total_demand=4000.0,
    )


def regional_params(seed: int = 2013) -> GeneratorParams:
    """29 zones, 3 products, 52 weeks, 160160 t of demand for two refineries, one already sited."""
    return GeneratorParams(
        seed=seed, num_zones=29, num_products=3, horizon=52, farm_storages_per_zone=2, num_central_storages=5,
        num_candidate_zones=10, refineries=(RefinerySpec("k1", count=2, num_pre_located=1),),
        window_length=8, total_demand=160160.0, yield_range=(1500.0, 6000.0),
    )


def mini_params(seed: int, rate_structure: str = "independent") -> GeneratorParams:
    """Small random instance for enumeration checks: at most 6 zones, 8 periods, 12 free binaries."""
    rng = Lcg64(seed ^ 0x5DEECE66D)
    zones = 2 + rng.randbelow(5)
    candidates = 1 + rng.randbelow(min(zones, 4))
    n_types = 1 + rng.randbelow(3)
    while n_types * candidates > 12:
        n_types -= 1
    counts = [1] * n_types
    while sum(counts) > candidates:
        counts[-1] -= 1
        if counts[-1] == 0:
            counts.pop()
    refs = tuple(RefinerySpec(f"k{i + 1}", count=c, num_pre_located=int(i == 0 and rng.random() < 0.25))
                 for i, c in enumerate(counts))
    horizon = 2 + rng.randbelow(7)
    return GeneratorParams(
        seed=seed, num_zones=zones, num_products=1 + rng.randbelow(2), horizon=horizon,
        farm_storages_per_zone=rng.randbelow(2), num_central_storages=1 + rng.randbelow(2),
        num_candidate_zones=candidates, refineries=refs, total_demand=float(100 + rng.randbelow(900)),
        central_links=1 + rng.randbelow(2), rate_structure=rate_structure,
    )


PRESETS = {"tiny": tiny_params, "desk": desk_params, "regional": regional_params}
