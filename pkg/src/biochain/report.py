"""Cost and emission breakdowns, always recomputed from the instance rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import Instance
from .oracle import COST_CATEGORIES, cost_components, validate_solution
from .solution import Solution

LABELS = {
    "production": "biomass production",
    "refinery": "refinery setup/operating",
    "transport": "transport",
    "handling": "handling",
    "storage": "storage",
}


@dataclass(frozen=True)
class CostBreakdown:
    euros: dict[str, float]

    @property
    def total(self) -> float:
        return math.fsum(self.euros.values())

    @property
    def shares(self) -> dict[str, float]:
        """Percent of total cost per category (all zero when the total is zero)."""
        total = self.total
        if total == 0:
            return {k: 0.0 for k in self.euros}
        return {k: 100.0 * v / total for k, v in self.euros.items()}

    @classmethod
    def of(cls, instance: Instance, solution: Solution) -> "CostBreakdown":
        eur, _kg = cost_components(instance, solution)
        return cls(eur)

    def to_dict(self) -> dict:
        return {"total_eur": self.total, "eur": dict(self.euros), "percent": self.shares}

    def to_text(self) -> str:
        width = max(len(v) for v in LABELS.values())
        lines = [f"{'category':<{width}}  {'EUR':>16}  {'share %':>8}"]
        shares = self.shares
        for k in COST_CATEGORIES:
            lines.append(f"{LABELS[k]:<{width}}  {self.euros[k]:16.2f}  {shares[k]:8.2f}")
        lines.append(f"{'total':<{width}}  {self.total:16.2f}  {sum(shares.values()):8.2f}")
        return "\n".join(lines)


@dataclass
class PlanReport:
    breakdown: CostBreakdown
    ghg_kg: dict[str, float]
    warnings: list[str]
    passed: bool

    @property
    def ghg_total_kg(self) -> float:
        return math.fsum(self.ghg_kg.values())

    def to_dict(self) -> dict:
        return {
            "cost": self.breakdown.to_dict(),
            "ghg_kg": self.ghg_total_kg,
            "ghg_t": self.ghg_total_kg / 1000.0,
            "ghg_by_category_kg": dict(self.ghg_kg),
            "oracle_pass": self.passed,
            "warnings": list(self.warnings),
        }

    def to_text(self) -> str:
        lines = [self.breakdown.to_text(), "",
                 f"GHG total: {self.ghg_total_kg:.3f} kg CO2-eq ({self.ghg_total_kg / 1000.0:.6f} t CO2-eq)"]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def build_report(instance: Instance, solution: Solution, summary: dict | None = None, tol: float = 1e-6) -> PlanReport:
    """Recompute everything from ``instance`` and ``solution``; stored totals only feed warnings."""
    eur, kg = cost_components(instance, solution)
    check = validate_solution(instance, solution, tol)
    warnings = [f"{f.code} {f.entity}: {f.message}" for f in check.errors
                if f.code not in ("COST_MISMATCH", "GHG_MISMATCH")]
    summary = summary or {}
    cost, ghg = math.fsum(eur.values()), math.fsum(kg.values())
    for key, value in (("cost_eur", cost), ("ghg_kg", ghg)):
        stored = summary.get(key)
        if stored is not None and abs(float(stored) - value) > tol * max(1.0, abs(value)):
            warnings.append(f"summary {key} = {stored!r} disagrees with recomputed {value!r}")
    return PlanReport(CostBreakdown(eur), kg, warnings, not warnings)
