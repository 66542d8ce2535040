"""Read and write instances as a directory of CSV tables plus ``manifest.json``."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .domain import (
    Arc, Instance, Node, NodeKind, Product, RefineryType, SharedCapacityGroup,
    VehicleType, validate_instance,
)
from .errors import InstanceIOError, InstanceValidationError, ParseError, SchemaError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LIST_SEP = ";"

FILE_KEYS = ("products", "nodes", "arcs", "vehicles", "refinery_types", "demands", "yields", "shared_groups")
OPTIONAL_FILE_KEYS = ("losses",)

COLUMNS = {
    "products": ["id", "name", "window_start", "window_end"],
    "nodes": ["id", "kind", "capacity_product", "capacity", "initial_inv", "final_inv_min", "loss_default",
              "max_throughput", "storage_cost", "handling_cost", "storage_em", "handling_em",
              "production_cost", "production_em"],
    "arcs": ["from", "to", "distance_km", "vehicle", "products"],
    "vehicles": ["id", "transport_cost", "transport_em"],
    "refinery_types": ["id", "count_required", "setup_cost", "allowed_zones", "pre_located"],
    "demands": ["refinery_type", "product", "period", "tonnes"],
    "yields": ["zone", "product", "tonnes"],
    "shared_groups": ["group", "node", "product", "capacity"],
    "losses": ["node", "product", "period", "loss"],
}
# accepted when present, never required
EXTRA_COLUMNS = {"nodes": ["zone"], "refinery_types": ["setup_em"]}


@dataclass(frozen=True)
class Manifest:
    path: Path
    format_version: int
    horizon: int
    files: dict[str, Path]


def fmt(x: float) -> str:
    """Shortest round-trip decimal, no exponent for integers that fit."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


# --------------------------------------------------------------------------
# reading

class _Table:
    def __init__(self, path: Path, key: str):
        self.path = path
        self.key = key
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InstanceIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
        if not rows:
            raise SchemaError("missing header row", file=str(path), line=1)
        self.header = [h.strip() for h in rows[0]]
        missing = [c for c in COLUMNS[key] if c not in self.header]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}", file=str(path), line=1)
        known = set(COLUMNS[key]) | set(EXTRA_COLUMNS.get(key, []))
        unknown = [h for h in self.header if h not in known]
        if unknown:
            log.warning("%s: ignoring unknown column(s) %s", path, ", ".join(unknown))
        self.rows = []
        for lineno, raw in enumerate(rows[1:], start=2):
            if not any(cell.strip() for cell in raw):
                continue
            if len(raw) != len(self.header):
                raise ParseError(f"expected {len(self.header)} fields, got {len(raw)}", file=str(path), line=lineno)
            self.rows.append((lineno, dict(zip(self.header, (cell.strip() for cell in raw)))))

    def error(self, line, msg, cls=ParseError):
        return cls(msg, file=str(self.path), line=line)

    def num(self, line, row, col, default=None, integer=False):
        text = row.get(col, "")
        if text == "":
            if default is None and col in COLUMNS[self.key]:
                raise self.error(line, f"column {col!r} is empty")
            return default
        try:
            return int(text) if integer else float(text)
        except ValueError:
            raise self.error(line, f"column {col!r}: cannot parse {text!r} as a number") from None

    def opt_num(self, line, row, col):
        text = row.get(col, "")
        return None if text == "" else self.num(line, row, col)

    def text(self, line, row, col):
        value = row.get(col, "")
        if value == "":
            raise self.error(line, f"column {col!r} is empty")
        return value


def _split(text: str) -> list[str]:
    return [s.strip() for s in text.split(LIST_SEP) if s.strip()]


def read_manifest(manifest_path) -> Manifest:
    path = Path(manifest_path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceIOError(f"cannot read manifest {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", file=str(path), line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise SchemaError("manifest must be a JSON object", file=str(path))
    for key in ("version", "horizon", "files"):
        if key not in doc:
            raise SchemaError(f"manifest lacks key {key!r}", file=str(path))
    if doc["version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported format version {doc['version']!r}", file=str(path))
    horizon = doc["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise SchemaError("horizon must be an integer", file=str(path))
    files = doc["files"]
    if not isinstance(files, dict):
        raise SchemaError("'files' must be an object", file=str(path))
    resolved = {}
    for key in FILE_KEYS:
        if key not in files:
            raise SchemaError(f"manifest lacks files.{key}", file=str(path))
    for key in (*FILE_KEYS, *OPTIONAL_FILE_KEYS):
        if key in files:
            resolved[key] = path.parent / files[key]
    for key in files:
        if key not in resolved:
            log.warning("%s: ignoring unknown file key %r", path, key)
    return Manifest(path=path, format_version=doc["version"], horizon=horizon, files=resolved)


def load_instance(manifest_path, validate: bool = True) -> Instance:
    """Load an instance from ``manifest_path``.

    Raises ``InstanceIOError``, ``ParseError``, ``SchemaError`` or
    ``InstanceValidationError`` (the latter wraps the validation report).
    """
    m = read_manifest(manifest_path)
    tables = {key: _Table(p, key) for key, p in m.files.items()}

    # products, with windows spread over several rows
    windows: dict[str, set[int]] = {}
    names: dict[str, str] = {}
    t = tables["products"]
    for line, row in t.rows:
        pid = t.text(line, row, "id")
        names.setdefault(pid, row.get("name", ""))
        start = t.num(line, row, "window_start", integer=True)
        end = t.num(line, row, "window_end", integer=True)
        if end < start:
            raise t.error(line, f"window_end {end} < window_start {start}")
        windows.setdefault(pid, set()).update(range(start, end + 1))
    product_ids = list(names)

    def need_product(table, line, pid):
        if pid not in names:
            raise table.error(line, f"unknown product id {pid!r}", SchemaError)

    yields: dict[str, dict[str, float]] = {p: {} for p in product_ids}
    t = tables["yields"]
    for line, row in t.rows:
        pid = t.text(line, row, "product")
        need_product(t, line, pid)
        zone = t.text(line, row, "zone")
        if zone in yields[pid]:
            raise t.error(line, f"duplicate yield row for ({zone}, {pid})")
        yields[pid][zone] = t.num(line, row, "tonnes")

    products = tuple(Product(p, names[p], frozenset(windows[p]), yields[p]) for p in product_ids)

    # nodes, one row per (node, product); node-level columns must agree
    node_rows: dict[str, dict] = {}
    t = tables["nodes"]
    node_level = ("max_throughput", "storage_cost", "handling_cost", "storage_em", "handling_em",
                  "production_cost", "production_em")
    for line, row in t.rows:
        nid = t.text(line, row, "id")
        kind_text = t.text(line, row, "kind")
        try:
            kind = NodeKind(kind_text)
        except ValueError:
            raise t.error(line, f"unknown node kind {kind_text!r}") from None
        attrs = {
            "kind": kind,
            "max_throughput": t.opt_num(line, row, "max_throughput"),
            "storage_cost": t.num(line, row, "storage_cost", 0.0),
            "handling_cost": t.num(line, row, "handling_cost", 0.0),
            "storage_em": t.num(line, row, "storage_em", 0.0),
            "handling_em": t.num(line, row, "handling_em", 0.0),
            "production_cost": t.num(line, row, "production_cost", 0.0),
            "production_em": t.num(line, row, "production_em", 0.0),
            "zone": row.get("zone") or None,
        }
        entry = node_rows.get(nid)
        if entry is None:
            entry = node_rows[nid] = {"attrs": attrs, "cap": {}, "init": {}, "fin": {}, "loss": {},
                                      "overrides": {}, "line": line}
        elif entry["attrs"] != attrs:
            diff = [k for k in ("kind", *node_level, "zone") if entry["attrs"][k] != attrs[k]]
            raise t.error(line, f"node {nid!r} rows disagree on {', '.join(diff)}")
        pid = row.get("capacity_product", "")
        if pid == "":
            for col in ("capacity", "initial_inv", "final_inv_min", "loss_default"):
                if row.get(col, "") != "":
                    raise t.error(line, f"column {col!r} needs a capacity_product")
            continue
        need_product(t, line, pid)
        if pid in entry["init"] or pid in entry["cap"] or pid in entry.setdefault("seen", set()):
            raise t.error(line, f"duplicate row for node {nid!r}, product {pid!r}")
        entry["seen"].add(pid)
        cap = t.opt_num(line, row, "capacity")
        if cap is not None:
            entry["cap"][pid] = cap
        entry["init"][pid] = t.num(line, row, "initial_inv", 0.0)
        entry["fin"][pid] = t.num(line, row, "final_inv_min", 0.0)
        entry["loss"][pid] = t.num(line, row, "loss_default", 0.0)

    if "losses" in tables:
        t = tables["losses"]
        for line, row in t.rows:
            nid = t.text(line, row, "node")
            if nid not in node_rows:
                raise t.error(line, f"unknown node id {nid!r}", SchemaError)
            pid = t.text(line, row, "product")
            need_product(t, line, pid)
            period = t.num(line, row, "period", integer=True)
            node_rows[nid]["overrides"][(pid, period)] = t.num(line, row, "loss")

    nodes = []
    for nid, e in node_rows.items():
        a = e["attrs"]
        nodes.append(Node(
            id=nid, kind=a["kind"], capacity=e["cap"], initial_inventory=e["init"],
            final_inventory_min=e["fin"], loss_default=e["loss"], loss_overrides=e["overrides"],
            max_throughput=a["max_throughput"], storage_cost=a["storage_cost"],
            handling_cost=a["handling_cost"], storage_emission=a["storage_em"],
            handling_emission=a["handling_em"], production_cost=a["production_cost"],
            production_emission=a["production_em"], zone=a["zone"],
        ))

    arcs = []
    t = tables["arcs"]
    for line, row in t.rows:
        prods = _split(row.get("products", ""))
        for p in prods:
            need_product(t, line, p)
        arcs.append(Arc(
            origin=t.text(line, row, "from"), destination=t.text(line, row, "to"),
            distance=t.num(line, row, "distance_km"), vehicle=t.text(line, row, "vehicle"),
            products=frozenset(prods),
        ))

    t = tables["vehicles"]
    vehicles = tuple(
        VehicleType(t.text(line, row, "id"), t.num(line, row, "transport_cost"), t.num(line, row, "transport_em"))
        for line, row in t.rows
    )

    ref_rows = {}
    t = tables["refinery_types"]
    for line, row in t.rows:
        kid = t.text(line, row, "id")
        if kid in ref_rows:
            raise t.error(line, f"duplicate refinery type {kid!r}")
        ref_rows[kid] = dict(
            count_required=t.num(line, row, "count_required", integer=True),
            setup_cost=t.num(line, row, "setup_cost"),
            setup_emission=t.num(line, row, "setup_em", 0.0),
            allowed_zones=frozenset(_split(row.get("allowed_zones", ""))),
            pre_located=frozenset(_split(row.get("pre_located", ""))),
            demand={},
        )
    t = tables["demands"]
    for line, row in t.rows:
        kid = t.text(line, row, "refinery_type")
        if kid not in ref_rows:
            raise t.error(line, f"unknown refinery type {kid!r}", SchemaError)
        pid = t.text(line, row, "product")
        need_product(t, line, pid)
        period = t.num(line, row, "period", integer=True)
        key = (pid, period)
        if key in ref_rows[kid]["demand"]:
            raise t.error(line, f"duplicate demand row for {kid}/{pid}/{period}")
        ref_rows[kid]["demand"][key] = t.num(line, row, "tonnes")
    refinery_types = tuple(RefineryType(id=k, **v) for k, v in ref_rows.items())

    groups: dict[str, dict] = {}
    t = tables["shared_groups"]
    for line, row in t.rows:
        gid = t.text(line, row, "group")
        pid = t.text(line, row, "product")
        need_product(t, line, pid)
        cap = t.num(line, row, "capacity")
        g = groups.setdefault(gid, {"members": [], "capacity": cap})
        if g["capacity"] != cap:
            raise t.error(line, f"group {gid!r} rows disagree on capacity")
        g["members"].append((t.text(line, row, "node"), pid))
    shared = tuple(SharedCapacityGroup(gid, frozenset(g["members"]), g["capacity"]) for gid, g in groups.items())

    instance = Instance(
        horizon=m.horizon, products=products, nodes=tuple(nodes), arcs=tuple(arcs), vehicles=vehicles,
        refinery_types=refinery_types, shared_groups=shared,
    )
    if validate:
        report = validate_instance(instance)
        if report.errors:
            raise InstanceValidationError(report)
    return instance


# --------------------------------------------------------------------------
# writing

def _runs(periods) -> list[tuple[int, int]]:
    runs = []
    for t in sorted(periods):
        if runs and t == runs[-1][1] + 1:
            runs[-1][1] = t
        else:
            runs.append([t, t])
    return [tuple(r) for r in runs]


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_instance(instance: Instance, directory) -> Manifest:
    """Write ``instance`` under ``directory`` and return the manifest describing it."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        return _write_all(instance, d)
    except OSError as exc:
        raise InstanceIOError(f"cannot write instance to {d}: {exc.strerror or exc}") from exc


def _write_all(inst: Instance, d: Path) -> Manifest:
    files = {key: f"{key}.csv" for key in FILE_KEYS}
    order = {p.id: i for i, p in enumerate(inst.products)}

    rows = []
    for p in inst.products:
        for a, b in _runs(p.harvest_window):
            rows.append([p.id, p.name, a, b])
    _write_csv(d / files["products"], COLUMNS["products"], rows)

    rows = []
    for p in inst.products:
        for z, y in p.annual_yield.items():
            rows.append([z, p.id, fmt(y)])
    _write_csv(d / files["yields"], COLUMNS["yields"], rows)

    rows = []
    header = COLUMNS["nodes"] + ["zone"]
    for n in inst.nodes:
        common = [
            "" if n.max_throughput is None else fmt(n.max_throughput), fmt(n.storage_cost), fmt(n.handling_cost),
            fmt(n.storage_emission), fmt(n.handling_emission), fmt(n.production_cost), fmt(n.production_emission),
        ]
        prods = set(n.capacity) | set(n.initial_inventory) | set(n.final_inventory_min) | set(n.loss_default)
        prods = sorted(prods, key=lambda p: (order.get(p, len(order)), p))
        if not prods:
            rows.append([n.id, n.kind.value, "", "", "", "", ""] + common + [n.zone or ""])
        for p in prods:
            cap = n.capacity.get(p)
            rows.append([n.id, n.kind.value, p, "" if cap is None else fmt(cap), fmt(n.initial(p)),
                         fmt(n.final_min(p)), fmt(n.loss_default.get(p, 0.0))] + common + [n.zone or ""])
    _write_csv(d / files["nodes"], header, rows)

    losses = []
    for n in inst.nodes:
        for (p, t), lam in sorted(n.loss_overrides.items(), key=lambda kv: (order.get(kv[0][0], 0), kv[0])):
            losses.append([n.id, p, t, fmt(lam)])
    if losses:
        files["losses"] = "losses.csv"
        _write_csv(d / files["losses"], COLUMNS["losses"], losses)

    rows = [[a.origin, a.destination, fmt(a.distance), a.vehicle,
             LIST_SEP.join(sorted(a.products, key=lambda p: (order.get(p, len(order)), p)))]
            for a in inst.arcs]
    _write_csv(d / files["arcs"], COLUMNS["arcs"], rows)

    rows = [[v.id, fmt(v.transport_cost), fmt(v.transport_emission)] for v in inst.vehicles]
    _write_csv(d / files["vehicles"], COLUMNS["vehicles"], rows)

    rows, dem = [], []
    for k in inst.refinery_types:
        rows.append([k.id, k.count_required, fmt(k.setup_cost), LIST_SEP.join(sorted(k.allowed_zones)),
                     LIST_SEP.join(sorted(k.pre_located)), fmt(k.setup_emission)])
        for (p, t), v in sorted(k.demand.items(), key=lambda kv: (order.get(kv[0][0], 0), kv[0][1])):
            dem.append([k.id, p, t, fmt(v)])
    _write_csv(d / files["refinery_types"], COLUMNS["refinery_types"] + ["setup_em"], rows)
    _write_csv(d / files["demands"], COLUMNS["demands"], dem)

    rows = []
    for g in inst.shared_groups:
        for n_id, p in sorted(g.members):
            rows.append([g.id, n_id, p, fmt(g.capacity)])
    _write_csv(d / files["shared_groups"], COLUMNS["shared_groups"], rows)

    doc = {"version": FORMAT_VERSION, "horizon": inst.horizon, "files": files}
    path = d / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return Manifest(path=path, format_version=FORMAT_VERSION, horizon=inst.horizon,
                    files={k: d / v for k, v in files.items()})

