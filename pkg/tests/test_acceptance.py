"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion."""

import json
import time
from dataclasses import dataclass
from itertools import cycle

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from biochain import FIXTURES
from biochain.cli import main
from biochain.generator import PRESETS, desk_params, generate_instance, mini_params, regional_params
from biochain.ingest import load_instance, write_instance
from biochain.model import build_model, build_variables
from biochain.oracle import cost_components, enumerate_mini_milp, mass_conservation, validate_solution
from biochain.pareto import epsilon_front
from biochain.solution import extract_solution
from biochain.solve import solve_instance
from biochain.solver import SolveOptions, Status, branch_and_bound, presolve

OPTS = SolveOptions()
STRUCTURES = ("independent", "conflicting", "aligned")


def close(a, b, tol):
    """Absolute-or-relative agreement."""
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass
class Solved:
    name: str
    instance: object
    solution: object
    cost: float  # as reported by the solver
    ghg: float


@pytest.fixture(scope="module")
def minis():
    start = time.perf_counter()
    rows = []
    for seed, structure in zip(range(200), cycle(STRUCTURES)):
        params = mini_params(seed, structure)
        inst = generate_instance(params)
        vars = build_variables(inst)
        model = build_model(inst, vars=vars)
        ours = branch_and_bound(model, OPTS)
        ref = enumerate_mini_milp(model)
        rows.append((seed, structure, params, inst, vars, model, ours, ref))
    return rows, time.perf_counter() - start


def _solved_from_minis(minis):
    out = []
    for seed, structure, _p, inst, vars, model, ours, _ref in minis[0]:
        if ours.has_solution:
            out.append(Solved(f"mini {seed} {structure}", inst, extract_solution(inst, vars, ours.x, model),
                              ours.objective, model.ghg_value(ours.x)))
    return out


@pytest.fixture(scope="module")
def desk():
    inst = generate_instance(desk_params())
    start = time.perf_counter()
    res = solve_instance(inst, opts=OPTS)
    return inst, res, time.perf_counter() - start


@pytest.fixture(scope="module")
def fronts():
    out = []
    for seed in range(1000, 1020):
        inst = generate_instance(mini_params(seed, "conflicting"))
        out.append((seed, inst, epsilon_front(inst, 8, OPTS, threads=1)))
    return out


@pytest.fixture(scope="module")
def suite(minis, desk, fronts):
    """Every plan the acceptance suite solves, with the solver's own objective values."""
    solved = _solved_from_minis(minis)
    inst, res, _ = desk
    solved.append(Solved("desk", inst, res.solution, res.outcome.objective, res.model.ghg_value(res.outcome.x)))
    for seed, inst, front in fronts:
        for p in list(front) + [front.min_cost, front.min_ghg]:
            solved.append(Solved(f"front {seed} eps={p.epsilon}", inst, p.solution, p.cost, p.ghg))
    return solved


# ---------------------------------------------------------------------------

@pytest.mark.criterion(1, "branch-and-bound equals brute-force enumeration on 200 small instances (1e-6, < 5 min)")
def test_criterion_1_oracle_equivalence(minis):
    rows, elapsed = minis
    assert len(rows) == 200
    mismatches = []
    for seed, structure, params, _inst, _vars, model, ours, ref in rows:
        assert params.num_free_binaries <= 12 and params.num_zones <= 6 and params.horizon <= 8
        assert int((model.integrality & (model.lb < model.ub)).sum()) <= 12
        if ours.status is not ref.status or (ref.status is Status.OPTIMAL
                                             and not close(ours.objective, ref.objective, 1e-6)):
            mismatches.append((seed, structure, ours.status, ours.objective, ref.status, ref.objective))
    assert not mismatches
    assert sum(r[7].status is Status.OPTIMAL for r in rows) == 200
    assert elapsed < 300.0


@pytest.mark.criterion(2, "oracle-recomputed cost and GHG match the solver within 1e-6 relative")
def test_criterion_2_independent_accounting(suite):
    bad = []
    for s in suite:
        eur, kg = cost_components(s.instance, s.solution)
        f, g = sum(eur.values()), sum(kg.values())
        if not (close(f, s.cost, 1e-6) and close(g, s.ghg, 1e-6)):
            bad.append((s.name, f, s.cost, g, s.ghg))
    assert len(suite) > 200
    assert not bad


@pytest.mark.criterion(3, "mass conservation within 1e-6 t on every oracle-pass plan")
def test_criterion_3_mass_conservation(suite):
    passing = [s for s in suite if validate_solution(s.instance, s.solution).passed]
    assert len(passing) == len(suite)  # every plan the solver returns passes the oracle
    worst = max(abs(mass_conservation(s.instance, s.solution).residual) for s in passing)
    assert worst <= 1e-6


def _highs_lexicographic(model, first, second):
    """min ``first`` then min ``second`` with ``first`` held at its optimum, solved by HiGHS."""
    lo = np.where(model.sense == "L", -np.inf, model.rhs)
    hi = np.where(model.sense == "G", np.inf, model.rhs)
    kw = dict(integrality=model.integrality.astype(int), bounds=Bounds(model.lb, model.ub),
              options={"mip_rel_gap": 1e-10})
    a = milp(first, constraints=LinearConstraint(model.A, lo, hi), **kw)
    cap = a.fun + 1e-9 * max(1.0, abs(a.fun))
    b = milp(second, constraints=[LinearConstraint(model.A, lo, hi), LinearConstraint(first, -np.inf, cap)], **kw)
    x = b.x
    return float(model.cost @ x), float(model.ghg @ x)


@pytest.mark.criterion(4, "epsilon fronts (K=8) on 20 conflicting instances are monotone, cap-feasible and anchored")
def test_criterion_4_pareto_monotonicity(fronts):
    gap, feas = OPTS.mip_gap, OPTS.feas_tol
    multi = 0
    for seed, inst, front in fronts:
        pts = sorted(front.points, key=lambda p: p.epsilon)
        assert pts, seed
        multi += len(pts) > 1
        for a, b in zip(pts, pts[1:]):
            assert b.cost <= a.cost + gap * max(1.0, abs(a.cost)), seed
            assert b.ghg >= a.ghg - feas * max(1.0, abs(a.ghg)), seed
        for p in pts:
            assert p.ghg <= p.epsilon + feas * max(1.0, abs(p.epsilon)), seed
            assert p.complete
        model = build_model(inst)
        f_cost_first, g_cost_first = _highs_lexicographic(model, model.cost, model.ghg)
        f_ghg_first, g_ghg_first = _highs_lexicographic(model, model.ghg, model.cost)
        assert close(pts[0].ghg, g_ghg_first, gap) and close(pts[0].cost, f_ghg_first, gap), seed
        assert close(pts[-1].cost, f_cost_first, gap) and close(pts[-1].ghg, g_cost_first, gap), seed
    assert multi >= 15  # the conflicting rates really do produce trade-offs


@pytest.mark.criterion(5, "regional-scale build < 10 s with 1e4..1e5 rows and columns; presolve shrinks both")
def test_criterion_5_regional_scale_build():
    inst = generate_instance(regional_params())
    start = time.perf_counter()
    model = build_model(inst)
    elapsed = time.perf_counter() - start
    print(f"regional-scale build: {model.ncols} columns, {model.nrows} rows in {elapsed:.2f} s")
    assert elapsed < 10.0
    assert 1e4 <= model.ncols <= 1e5
    assert 1e4 <= model.nrows <= 1e5
    reduced = presolve(model).model
    print(f"after presolve: {reduced.ncols} columns, {reduced.nrows} rows")
    assert reduced.ncols < model.ncols
    assert reduced.nrows < model.nrows


@pytest.mark.criterion(6, "desk instance solves to Optimal (gap <= 1e-6) in < 60 s; report shares sum to 100 +- 0.01")
def test_criterion_6_desk_end_to_end(desk, tmp_path, capsys):
    inst, res, elapsed = desk
    assert len(inst.zones) == 8 and len(inst.products) == 3 and inst.horizon == 12
    assert len(next(iter(inst.refinery_types)).allowed_zones) == 3
    assert res.status is Status.OPTIMAL
    assert res.outcome.gap <= 1e-6
    assert elapsed < 60.0
    write_instance(inst, tmp_path / "desk")
    start = time.perf_counter()
    assert main(["solve", str(tmp_path / "desk" / "manifest.json"), "--out", str(tmp_path / "plan")]) == 0
    assert time.perf_counter() - start < 60.0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "plan"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(sum(doc["cost"]["percent"].values()) - 100.0) <= 0.01
    assert doc["oracle_pass"]


@pytest.mark.criterion(7, "round-trip identity on every fixture and preset; bit-identical logs and plans across runs")
def test_criterion_7_round_trip_and_determinism(tmp_path):
    manifests = sorted(FIXTURES.glob("*/manifest.json"))
    assert manifests
    for m in manifests:
        inst = load_instance(m)
        write_instance(inst, tmp_path / m.parent.name)
        assert load_instance(tmp_path / m.parent.name / "manifest.json") == inst
    for name, make in PRESETS.items():
        inst = generate_instance(make())
        write_instance(inst, tmp_path / f"preset_{name}")
        assert load_instance(tmp_path / f"preset_{name}" / "manifest.json") == inst

    for inst in [generate_instance(desk_params())] + [generate_instance(mini_params(s, "conflicting"))
                                                      for s in (51, 52, 53)]:
        a, b = solve_instance(inst, opts=OPTS), solve_instance(inst, opts=OPTS)
        assert a.outcome.log == b.outcome.log
        assert np.array_equal(a.outcome.x, b.outcome.x)
        assert a.solution == b.solution

    desk_manifest = tmp_path / "preset_desk" / "manifest.json"
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / f"run_{run}"
        assert main(["solve", str(desk_manifest), "--out", str(d), "--node-log", str(d) + ".log"]) == 0
        files = {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "summary.json"}
        outputs.append((files, (tmp_path / f"run_{run}.log").read_bytes()))
    assert outputs[0] == outputs[1]
