from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biochain.generator import generate_instance, mini_params
from biochain.model import build_model, build_variables
from biochain.oracle import enumerate_mini_milp
from biochain.solution import extract_solution
from biochain.solver import SolveOptions, Status, branch_and_bound, relative_gap, solve_lp

from conftest import chain_instance, sites_instance


def _branching_model():
    """First mini instance (by seed) whose root relaxation is fractional enough to need several nodes."""
    for seed in range(200):
        model = build_model(generate_instance(mini_params(seed, "conflicting")))
        if branch_and_bound(model).nodes >= 5:
            return model
    raise AssertionError("no mini instance needs branching")


@pytest.fixture(scope="module")
def branching():
    return _branching_model()


def test_model_with_every_binary_fixed_solves_at_the_root():
    model = build_model(chain_instance())
    out = branch_and_bound(model)
    assert out.status is Status.OPTIMAL
    assert out.nodes == 1
    assert out.gap == 0.0


def test_without_free_binaries_the_result_is_the_lp_optimum(tiny):
    model = build_model(chain_instance(loss=0.05, demand=(3.0, 4.0, 5.0)))
    assert branch_and_bound(model).objective == pytest.approx(solve_lp(model).objective, rel=1e-12)


def test_three_sites_give_the_best_of_the_three_fixings():
    model = build_model(sites_instance(num_sites=3))
    binaries = np.flatnonzero(model.integrality)
    values = []
    for j in binaries:
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[binaries] = ub[binaries] = 0.0
        lb[j] = ub[j] = 1.0
        values.append(solve_lp(replace(model, lb=lb, ub=ub)).objective)
    out = branch_and_bound(model)
    assert out.objective == pytest.approx(min(values), rel=1e-9)
    assert out.x[binaries[int(np.argmin(values))]] == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), structure=st.sampled_from(["independent", "conflicting", "aligned"]))
def test_matches_brute_force_enumeration(seed, structure):
    model = build_model(generate_instance(mini_params(seed, structure)))
    ours = branch_and_bound(model)
    ref = enumerate_mini_milp(model)
    assert ours.status is ref.status
    if ref.status is Status.OPTIMAL:
        assert ours.objective == pytest.approx(ref.objective, rel=1e-6)
        assert model.max_violation(ours.x) <= 1e-6
        assert np.all(ours.x[model.integrality] == np.round(ours.x[model.integrality]))


def test_bound_history_is_monotone_and_below_the_incumbent(branching):
    out = branch_and_bound(branching)
    h = out.bound_history
    assert len(h) == out.nodes or len(h) >= 2
    assert all(b2 >= b1 for b1, b2 in zip(h, h[1:]))
    assert all(b <= out.objective + 1e-9 * max(1.0, abs(out.objective)) for b in h)
    assert out.gap <= 1e-6


@pytest.mark.parametrize("inc, bound, gap", [(100.0, 99.0, 0.01), (0.5, 0.25, 0.25), (-200.0, -202.0, 0.01),
                                             (10.0, 11.0, 0.0), (float("inf"), 0.0, float("inf"))])
def test_relative_gap_formula(inc, bound, gap):
    assert relative_gap(inc, bound) == pytest.approx(gap)


def test_runs_are_bit_identical(branching):
    lines_a, lines_b = [], []
    a = branch_and_bound(branching, node_log=lines_a.append)
    b = branch_and_bound(branching, node_log=lines_b.append)
    assert lines_a == lines_b == a.log
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective


def test_node_log_line_shape(branching):
    out = branch_and_bound(branching)
    outcomes = {line.split()[-2] if line.split()[-2] == "branch" else line.split()[-1] for line in out.log}
    assert outcomes <= {"branch", "pruned", "integral", "infeasible"}
    assert "branch" in outcomes and "integral" in outcomes
    first = out.log[0].split()
    assert first[:2] == ["0", "0"]


def test_node_limit_stops_with_a_bound(branching):
    out = branch_and_bound(branching, SolveOptions(node_limit=2))
    assert out.status is Status.NODE_LIMIT
    assert out.nodes == 2
    assert np.isfinite(out.bound)
    if out.has_solution:
        assert out.bound <= out.objective
        assert out.gap == pytest.approx(relative_gap(out.objective, out.bound))


def test_zero_time_limit_stops_immediately(branching):
    out = branch_and_bound(branching, SolveOptions(time_limit=0.0))
    assert out.status is Status.TIME_LIMIT
    assert not out.has_solution
    assert out.gap == float("inf")


def test_infeasible_milp():
    inst = chain_instance(demand=(20.0, 20.0), window=[1], throughput=5.0)
    out = branch_and_bound(build_model(inst))
    assert out.status is Status.INFEASIBLE
    assert not out.has_solution


def test_extract_solution_maps_columns_to_named_decisions(tiny):
    vars = build_variables(tiny)
    model = build_model(tiny, vars=vars)
    x = branch_and_bound(model).x
    sol = extract_solution(tiny, vars, x, model)
    for (z, p, t), col in vars.harvest.items():
        assert sol.harvest[z, p, t] == (x[col] if abs(x[col]) >= 1e-9 else 0.0)
    for (a, p, t), col in vars.flow.items():
        arc = tiny.arcs[a]
        assert sol.flow[arc.origin, arc.destination, p, t] == (x[col] if abs(x[col]) >= 1e-9 else 0.0)
    assert sol.opened() == [("z2", "k1")]
    assert sol.cost == pytest.approx(9061.481642, rel=1e-9)
    assert sol.ghg == pytest.approx(6481.385368, rel=1e-9)


def test_extract_solution_clamps_round_off(tiny):
    vars = build_variables(tiny)
    x = np.zeros(vars.ncols)
    h = next(iter(vars.harvest.values()))
    s = next(iter(vars.inv.values()))
    y = next(iter(vars.open.values()))
    x[h], x[s], x[y] = -1e-12, 3e-10, 1.0 - 1e-9
    sol = extract_solution(tiny, vars, x)
    assert sol.harvest[next(iter(vars.harvest))] == 0.0
    assert sol.inventory[next(iter(vars.inv))] == 0.0
    assert sol.open[next(iter(vars.open))] == 1
    with pytest.raises(ValueError):
        extract_solution(tiny, vars, x[:-1])
