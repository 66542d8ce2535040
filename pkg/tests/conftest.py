from __future__ import annotations

import pytest

from biochain import TINY_MANIFEST
from biochain.domain import Arc, Instance, Node, NodeKind, Product, RefineryType, SharedCapacityGroup, VehicleType
from biochain.ingest import load_instance

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    entry = _criteria.setdefault(number, {"text": text, "passed": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["passed"] = entry["passed"] and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        verdict = "PASS" if e["seen"] and e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {e['text']}")


@pytest.fixture(scope="session")
def tiny():
    return load_instance(TINY_MANIFEST)


def chain_instance(
    demand=(5.0, 5.0), loss=0.0, throughput=None, annual_yield=100.0, window=None, initial=0.0,
    final_min=0.0, capacity=None, zone_cost=1.0, zone_em=1.0,
) -> Instance:
    """zone -> farm storage -> central storage -> refinery slot, one product, one pre-sited refinery.

    The horizon is ``len(demand)``; the farm storage carries the loss, opening
    stock, closing floor and throughput settings.
    """
    T = len(demand)
    window = frozenset(window or range(1, T + 1))
    p = Product("p", "straw", window, {"z": annual_yield})
    farm_cap = {} if capacity is None else {"p": capacity}
    nodes = (
        Node("z", NodeKind.PRODUCTION_ZONE, production_cost=zone_cost, production_emission=zone_em),
        Node("f", NodeKind.FARM_STORAGE, capacity=farm_cap, initial_inventory={"p": initial},
             final_inventory_min={"p": final_min}, loss_default={"p": loss}, max_throughput=throughput,
             storage_cost=0.1, storage_emission=0.01),
        Node("c", NodeKind.CENTRAL_STORAGE, handling_cost=1.0, handling_emission=0.5),
        Node("r", NodeKind.REFINERY_SLOT, zone="z"),
    )
    arcs = (
        Arc("z", "f", 5.0, "tractor", frozenset({"p"})),
        Arc("f", "c", 20.0, "truck", frozenset({"p"})),
        Arc("c", "r", 30.0, "truck", frozenset({"p"})),
    )
    vehicles = (VehicleType("tractor", 0.2, 0.1), VehicleType("truck", 0.1, 0.05))
    ref = RefineryType("k", 1, 1000.0, {("p", t): d for t, d in enumerate(demand, start=1)},
                       frozenset({"z"}), frozenset({"z"}))
    return Instance(T, (p,), nodes, arcs, vehicles, (ref,))


def sites_instance(num_sites=3, count=1, T=2, demand=10.0, pre_located=()) -> Instance:
    """One central storage feeding ``num_sites`` candidate refinery zones with different haul lengths."""
    zones = [f"z{i}" for i in range(num_sites)]
    p = Product("p", "seeds", frozenset(range(1, T + 1)), {z: 1000.0 for z in zones})
    nodes = [Node(z, NodeKind.PRODUCTION_ZONE, production_cost=10.0 + i, production_emission=5.0 * (num_sites - i))
             for i, z in enumerate(zones)]
    nodes.append(Node("c", NodeKind.CENTRAL_STORAGE))
    nodes += [Node(f"r{i}", NodeKind.REFINERY_SLOT, zone=z, storage_cost=0.5) for i, z in enumerate(zones)]
    arcs = [Arc(z, "c", 10.0 + 3 * i, "truck", frozenset({"p"})) for i, z in enumerate(zones)]
    arcs += [Arc("c", f"r{i}", 5.0 + 7 * ((i * 5) % num_sites), "truck", frozenset({"p"}))
             for i in range(num_sites)]
    ref = RefineryType("k", count, 500.0, {("p", t): demand for t in range(1, T + 1)},
                       frozenset(zones), frozenset(pre_located))
    return Instance(T, (p,), tuple(nodes), tuple(arcs), (VehicleType("truck", 0.15, 0.08),), (ref,))


def shared_group_instance() -> Instance:
    """Two products sharing one storage at a farm node."""
    inst = chain_instance()
    p2 = Product("q", "bales", frozenset({1, 2}), {"z": 50.0})
    group = SharedCapacityGroup("g", frozenset({("f", "p"), ("f", "q")}), 100.0)
    arcs = tuple(Arc(a.origin, a.destination, a.distance, a.vehicle, frozenset({"p", "q"})) for a in inst.arcs)
    return Instance(inst.horizon, inst.products + (p2,), inst.nodes, arcs, inst.vehicles, inst.refinery_types,
                    (group,))
