"""Named decision values of a supply plan, and their on-disk form."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Instance
from .errors import InstanceIOError, ParseError, SchemaError
from .ingest import fmt
from .model import MilpModel, VariableIndex

CLAMP = 1e-9

SOLUTION_FILES = {
    "harvests": ("harvests.csv", ("zone", "product", "period", "tonnes")),
    "flows": ("flows.csv", ("from", "to", "product", "period", "tonnes")),
    "inventories": ("inventories.csv", ("node", "product", "period", "tonnes")),
    "locations": ("locations.csv", ("zone", "refinery_type", "open")),
}


@dataclass
class Solution:
    """Decision values keyed by domain ids; zero entries may be omitted.

    ``cost`` (EUR) and ``ghg`` (kg CO2-eq) are the values claimed by whoever
    produced the plan; the oracle recomputes them independently.
    """

    harvest: dict[tuple[str, str, int], float] = field(default_factory=dict)
    flow: dict[tuple[str, str, str, int], float] = field(default_factory=dict)
    inventory: dict[tuple[str, str, int], float] = field(default_factory=dict)
    open: dict[tuple[str, str], int] = field(default_factory=dict)
    cost: float = 0.0
    ghg: float = 0.0

    def opened(self) -> list[tuple[str, str]]:
        return sorted(k for k, v in self.open.items() if v)

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        return (_nonzero(self.harvest) == _nonzero(other.harvest) and _nonzero(self.flow) == _nonzero(other.flow)
                and _nonzero(self.inventory) == _nonzero(other.inventory)
                and _nonzero(self.open) == _nonzero(other.open)
                and (self.cost, self.ghg) == (other.cost, other.ghg))


def _nonzero(d):
    return {k: v for k, v in d.items() if v != 0}


def _clamp(v: float) -> float:
    v = float(v)
    return 0.0 if abs(v) < CLAMP else v


def extract_solution(instance: Instance, vars: VariableIndex, x, model: MilpModel | None = None) -> Solution:
    """Map a full-space primal vector back onto named decisions.

    Values with magnitude below 1e-9 become exactly 0 and binaries are rounded.
    Cost and GHG are recomputed from the objective rows of ``model`` (built on
    the fly when not given) evaluated at the clamped values.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (vars.ncols,):
        raise ValueError(f"expected {vars.ncols} values, got shape {x.shape}")
    clean = np.where(np.abs(x) < CLAMP, 0.0, x)
    for col in vars.open.values():
        clean[col] = float(round(clean[col]))
    arcs = instance.arcs
    sol = Solution(
        harvest={k: float(clean[c]) for k, c in vars.harvest.items()},
        flow={(arcs[a].origin, arcs[a].destination, p, t): float(clean[c]) for (a, p, t), c in vars.flow.items()},
        inventory={k: float(clean[c]) for k, c in vars.inv.items()},
        open={k: int(clean[c]) for k, c in vars.open.items()},
    )
    if model is None:
        from .model import build_cost_objective, build_ghg_objective
        cost_row, ghg_row = build_cost_objective(instance, vars), build_ghg_objective(instance, vars)
    else:
        cost_row, ghg_row = model.cost, model.ghg
    sol.cost = float(cost_row @ clean)
    sol.ghg = float(ghg_row @ clean)
    return sol


# --------------------------------------------------------------------------
# files

def write_solution(solution: Solution, directory, summary: dict | None = None) -> Path:
    """Write the plan as CSV files plus ``summary.json`` into ``directory``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        tables = {
            "harvests": [(z, p, t, v) for (z, p, t), v in sorted(solution.harvest.items()) if v],
            "flows": [(a, b, p, t, v) for (a, b, p, t), v in sorted(solution.flow.items()) if v],
            "inventories": [(n, p, t, v) for (n, p, t), v in sorted(solution.inventory.items()) if v],
            "locations": [(z, k, v) for (z, k), v in sorted(solution.open.items())],
        }
        for key, rows in tables.items():
            name, header = SOLUTION_FILES[key]
            with open(d / name, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
        payload = dict(summary or {})
        payload.setdefault("cost_eur", solution.cost)
        payload.setdefault("ghg_kg", solution.ghg)
        payload.setdefault("ghg_t", solution.ghg / 1000.0)
        with open(d / "summary.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise InstanceIOError(f"cannot write solution to {d}: {exc}") from exc
    return d


def read_solution(directory) -> tuple[Solution, dict]:
    """Load a solution directory; returns the plan and the raw summary mapping."""
    d = Path(directory)
    sol = Solution()
    try:
        summary = json.loads((d / "summary.json").read_text())
    except OSError as exc:
        raise InstanceIOError(f"cannot read {d / 'summary.json'}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc.msg), str(d / "summary.json"), exc.lineno) from exc
    sol.cost = float(summary.get("cost_eur", 0.0))
    sol.ghg = float(summary.get("ghg_kg", 0.0))
    for key, target in (("harvests", sol.harvest), ("flows", sol.flow),
                        ("inventories", sol.inventory), ("locations", sol.open)):
        name, header = SOLUTION_FILES[key]
        path = d / name
        try:
            fh = open(path, newline="")
        except OSError as exc:
            raise InstanceIOError(f"cannot read {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            head = next(reader, None)
            if head is None or tuple(h.strip() for h in head) != header:
                raise SchemaError(f"expected header {','.join(header)}", str(path), 1)
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(row)}", str(path), line)
                try:
                    if key == "locations":
                        target[row[0], row[1]] = int(row[2])
                    elif key == "flows":
                        target[row[0], row[1], row[2], int(row[3])] = float(row[4])
                    else:
                        target[row[0], row[1], int(row[2])] = float(row[3])
                except ValueError as exc:
                    raise ParseError(str(exc), str(path), line) from exc
    return sol, summary
