import re
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import milp, LinearConstraint, Bounds

from biochain.domain import NodeKind
from biochain.errors import EpsilonError
from biochain.generator import GeneratorParams, RefinerySpec, generate_instance
from biochain.model import (
    apply_cost_cap, apply_epsilon, build_capacity_constraints, build_model, build_variables, swap_objectives, write_lp,
)
from biochain.oracle import validate_solution
from biochain.solve import solve_instance
from biochain.solver import Status, presolve

from conftest import chain_instance, shared_group_instance, sites_instance


def _row(model, name):
    i = model.row_names.index(name)
    row = model.A.getrow(i)
    coefs = {model.col_names[j]: v for j, v in zip(row.indices, row.data)}
    return coefs, model.sense[i], model.rhs[i]


def _highs(model):
    """Reference MILP optimum from HiGHS, used as the second route for model checks."""
    lo = np.where(model.sense == "L", -np.inf, model.rhs)
    hi = np.where(model.sense == "G", np.inf, model.rhs)
    res = milp(model.objective, constraints=LinearConstraint(model.A, lo, hi),
               integrality=model.integrality.astype(int), bounds=Bounds(model.lb, model.ub),
               options={"mip_rel_gap": 1e-10})
    return res


def test_tiny_column_count(tiny):
    # 2 zones x 1 product x 2 window periods, 4 arcs x 4 periods, 5 nodes x 4 periods, 2 candidate sites
    assert build_variables(tiny).ncols == 2 * 1 * 2 + 4 * 1 * 4 + 5 * 1 * 4 + 2
    assert build_model(tiny).ncols == 42


def test_column_names_follow_the_families(tiny):
    names = build_model(tiny).col_names
    families = [n.split("_")[0] for n in names]
    assert families == sorted(families, key="hfsy".index)
    assert all(re.fullmatch(r"(h_\w+_\w+_\d+|f_\d+_\w+_\d+|s_\w+_\w+_\d+|y_\w+_\w+)", n) for n in names)


def test_flow_coefficients_add_transport_and_both_handling_rates():
    model = build_model(chain_instance())
    # arc 1 is f -> c: 20 km * 0.1 EUR/t/km + handling 0 at f + 1.0 at c
    j = model.col_names.index("f_1_p_1")
    assert model.cost[j] == pytest.approx(3.0, abs=1e-12)
    # 20 km * 0.05 kg/t/km + 0.5 kg/t handling at c
    assert model.ghg[j] == pytest.approx(1.5, abs=1e-12)
    k = model.col_names.index("f_2_p_2")
    assert (model.cost[k], model.ghg[k]) == pytest.approx((4.0, 2.0), abs=1e-12)


def test_harvest_storage_and_setup_coefficients():
    model = build_model(chain_instance(zone_cost=7.0, zone_em=3.0))
    h = model.col_names.index("h_z_p_1")
    assert (model.cost[h], model.ghg[h]) == (7.0, 3.0)
    s = model.col_names.index("s_f_p_2")
    assert (model.cost[s], model.ghg[s]) == (0.1, 0.01)
    y = model.col_names.index("y_z_k")
    assert (model.cost[y], model.ghg[y]) == (1000.0, 0.0)


def test_balance_row_applies_loss_to_previous_stock():
    model = build_model(chain_instance(loss=0.1, initial=100.0, demand=(5.0, 5.0, 5.0)))
    coefs, sense, rhs = _row(model, "bal_f_p_1")
    assert sense == "E"
    assert rhs == pytest.approx(90.0)
    assert coefs == {"s_f_p_1": 1.0, "f_0_p_1": -1.0, "f_1_p_1": 1.0}
    coefs, _, rhs = _row(model, "bal_f_p_2")
    assert rhs == 0.0
    assert coefs["s_f_p_1"] == pytest.approx(-0.9)


def test_balance_arithmetic_inflow_20_outflow_30():
    model = build_model(chain_instance(loss=0.1, initial=100.0))
    coefs, _, rhs = _row(model, "bal_f_p_1")
    # s1 - inflow + outflow = 0.9 * 100  ->  s1 = 90 + 20 - 30
    s1 = rhs + 20.0 * -coefs["f_0_p_1"] - 30.0 * coefs["f_1_p_1"]
    assert s1 == pytest.approx(80.0)


def test_stock_without_loss_or_flows_stays_constant():
    inst = chain_instance(demand=(0.0, 0.0, 0.0), initial=40.0, final_min=40.0)
    plan = solve_instance(inst).solution
    assert [plan.inventory["f", "p", t] for t in (1, 2, 3)] == [40.0, 40.0, 40.0]


def test_demand_row_scales_the_open_binary():
    coefs, sense, rhs = _row(build_model(chain_instance(demand=(5.0, 7.5))), "dem_r_p_2")
    assert (sense, rhs) == ("E", 0.0)
    assert coefs["y_z_k"] == 7.5
    assert coefs["f_2_p_2"] == -1.0


def test_shared_group_row_sums_member_stocks():
    inst = shared_group_instance()
    rows = build_capacity_constraints(inst, build_variables(inst))
    i = rows.names.index("shr_g_2")
    cols = [c for r, c in zip(rows.r, rows.c) if r == i]
    names = build_variables(inst).names
    assert sorted(names[c] for c in cols) == ["s_f_p_2", "s_f_q_2"]
    assert (rows.sense[i], rows.rhs[i]) == ("L", 100.0)


def test_final_inventory_is_a_floor():
    coefs, sense, rhs = _row(build_model(chain_instance(final_min=4.0)), "fin_f_p")
    assert coefs == {"s_f_p_2": 1.0}
    assert (sense, rhs) == ("G", 4.0)


@pytest.mark.parametrize("throughput, status", [(15.0, Status.INFEASIBLE), (19.0, Status.INFEASIBLE),
                                                (20.0, Status.OPTIMAL), (25.0, Status.OPTIMAL)])
def test_throughput_limit_decides_feasibility(throughput, status):
    # 40 t must leave the farm storage over two periods, the harvest happens in period 1 only
    inst = chain_instance(demand=(20.0, 20.0), window=[1], throughput=throughput)
    assert solve_instance(inst).status is status


def test_throughput_ten_cannot_pass_twenty_five_tonnes():
    assert solve_instance(chain_instance(demand=(12.5, 12.5), throughput=10.0)).status is Status.INFEASIBLE


def test_throughput_ten_passes_eighteen_tonnes():
    inst = chain_instance(demand=(9.0, 9.0), throughput=10.0)
    plan = solve_instance(inst).solution
    out = [sum(v for (a, _b, _p, t), v in plan.flow.items() if a == "f" and t == period) for period in (1, 2)]
    assert max(out) <= 10.0 + 1e-9
    assert validate_solution(inst, plan).passed


def test_no_throughput_means_no_rows():
    assert not any(n.startswith("thr_") for n in build_model(chain_instance()).row_names)
    assert "thr_f_1" in build_model(chain_instance(throughput=10.0)).row_names


def test_capacity_caps_every_stock_in_the_plan():
    inst = chain_instance(demand=(0.0, 30.0), window=[1], capacity=50.0, initial=45.0)
    plan = solve_instance(inst).solution
    assert max(v for (n, _p, _t), v in plan.inventory.items() if n == "f") <= 50.0 + 1e-9


@pytest.mark.parametrize("loss, moves", [(0.0, False), (0.05, True)])
def test_holding_the_opening_stock_needs_harvest_only_with_losses(loss, moves):
    inst = chain_instance(demand=(0.0, 0.0), initial=10.0, final_min=10.0, loss=loss)
    plan = solve_instance(inst).solution
    harvested = sum(plan.harvest.values()) + sum(plan.flow.values())
    assert (harvested > 1e-9) is moves


def test_pre_located_refinery_receives_exactly_its_demand():
    inst = chain_instance(demand=(5.0, 5.0, 5.0), loss=0.02)
    plan = solve_instance(inst).solution
    delivered = sum(v for (_a, b, _p, _t), v in plan.flow.items() if b == "r")
    assert delivered == pytest.approx(15.0, abs=1e-9)
    assert sum(plan.harvest.values()) >= 15.0 - 1e-9


def test_demand_above_yield_and_stock_is_infeasible():
    assert solve_instance(chain_instance(demand=(5.0, 5.0), annual_yield=9.0)).status is Status.INFEASIBLE
    assert solve_instance(chain_instance(demand=(5.0, 5.0), annual_yield=9.0, initial=1.0)).status is Status.OPTIMAL


def test_zero_demand_slot_row_has_no_binary():
    coefs, _, _ = _row(build_model(chain_instance(demand=(0.0, 0.0))), "dem_r_p_1")
    assert "y_z_k" not in coefs


def test_product_without_yield_gets_no_harvest_columns():
    inst = shared_group_instance()
    q = replace(inst.products[1], annual_yield={})
    vars = build_variables(replace(inst, products=(inst.products[0], q)))
    assert not any(p == "q" for (_z, p, _t) in vars.harvest)
    assert any(p == "q" for (_n, p, _t) in vars.inv)


def test_all_pre_located_leaves_no_free_binary_after_presolve():
    model = build_model(sites_instance(num_sites=2, count=2, pre_located=("z0", "z1")))
    assert not presolve(model).model.integrality.any()


def test_cardinality_opens_exactly_the_required_count():
    result = solve_instance(sites_instance(num_sites=3, count=2))
    assert result.status is Status.OPTIMAL
    assert len(result.solution.opened()) == 2


def test_pre_located_binary_is_fixed_open():
    model = build_model(sites_instance(num_sites=3, count=2, pre_located=("z1",)))
    j = model.col_names.index("y_z1_k")
    assert (model.lb[j], model.ub[j]) == (1.0, 1.0)
    assert np.count_nonzero(model.lb[model.integrality] == 1.0) == 1


def test_generated_instance_with_one_pre_located_site_fixes_one_binary():
    inst = generate_instance(GeneratorParams(
        seed=5, num_zones=6, num_candidate_zones=4, refineries=(RefinerySpec("k1", count=2, num_pre_located=1),)))
    model = build_model(inst)
    fixed = model.integrality & (model.lb == model.ub)
    assert fixed.sum() == 1


def test_negative_epsilon_is_rejected(tiny):
    with pytest.raises(EpsilonError):
        build_model(tiny, epsilon=-1.0)
    with pytest.raises(EpsilonError):
        apply_epsilon(build_model(tiny), float("nan"))


def test_epsilon_row_is_replaced_not_stacked(tiny):
    base = build_model(tiny)
    once = apply_epsilon(base, 5000.0)
    twice = apply_epsilon(once, 7000.0)
    assert once.nrows == twice.nrows == base.nrows + 1
    assert twice.row_names[-1] == "eps"
    assert twice.rhs[-1] == 7000.0
    assert apply_epsilon(once, 7000.0).identical_to(apply_epsilon(base, 7000.0))


def test_zero_rates_give_zero_objectives():
    inst = sites_instance()
    free = replace(inst, vehicles=tuple(replace(v, transport_cost=0.0, transport_emission=0.0) for v in inst.vehicles),
                   nodes=tuple(replace(n, production_cost=0.0, production_emission=0.0, storage_cost=0.0,
                                       storage_emission=0.0, handling_cost=0.0, handling_emission=0.0)
                               for n in inst.nodes),
                   refinery_types=tuple(replace(k, setup_cost=0.0) for k in inst.refinery_types))
    model = build_model(free)
    assert not model.cost.any() and not model.ghg.any()
    assert solve_instance(free).outcome.objective == 0.0


def test_cap_below_the_minimum_ghg_is_infeasible(tiny):
    g_min = solve_instance(tiny, minimize="ghg").outcome.objective
    assert solve_instance(tiny, epsilon=0.99 * g_min).status is Status.INFEASIBLE


def test_tightening_the_cap_below_the_cheapest_plan_costs_more(tiny):
    best = solve_instance(tiny).solution
    tighter = solve_instance(tiny, epsilon=best.ghg * (1 - 1e-3))
    assert tighter.status is Status.INFEASIBLE or tighter.solution.cost > best.cost


def test_infinite_epsilon_leaves_the_optimum_unchanged(tiny):
    a = solve_instance(tiny)
    b = solve_instance(tiny, epsilon=float("inf"))
    assert b.outcome.objective == pytest.approx(a.outcome.objective, rel=1e-9)


def test_model_build_is_deterministic(tiny):
    assert build_model(tiny).identical_to(build_model(tiny))


def test_relabelling_a_node_kind_alone_does_not_change_the_model():
    inst = chain_instance()
    relabelled = replace(inst, nodes=tuple(replace(n, kind=NodeKind.CENTRAL_STORAGE) if n.id == "f" else n
                                           for n in inst.nodes))
    assert build_model(relabelled).identical_to(build_model(inst))


def test_every_column_appears_in_some_row(tiny):
    model = build_model(tiny)
    used = np.diff(model.A.tocsc().indptr) > 0
    assert used.all()


def test_objective_rows_cover_harvest_and_flows(tiny):
    model = build_model(tiny)
    for j, name in enumerate(model.col_names):
        if name.startswith(("h_", "f_")):
            assert model.cost[j] > 0 and model.ghg[j] > 0


def test_swap_objectives_toggles_the_objective(tiny):
    model = build_model(tiny)
    swapped = swap_objectives(model)
    assert swapped.objective is swapped.ghg
    assert swap_objectives(swapped).identical_to(model)
    with pytest.raises(ValueError):
        model.with_objective("profit")


def test_model_optimum_matches_an_independent_milp_solver(tiny):
    model = build_model(tiny)
    ref = _highs(model)
    ours = solve_instance(tiny)
    assert ours.outcome.objective == pytest.approx(ref.fun, rel=1e-7)
    assert model.max_violation(ours.outcome.x) <= 1e-6


def test_lp_export_lists_every_row_and_binary(tiny, tmp_path):
    model = apply_epsilon(build_model(tiny), 6500.0)
    path = tmp_path / "tiny.lp"
    write_lp(model, path)
    text = path.read_text()
    assert text.splitlines()[1] == "Minimize"
    constraints = re.findall(r"^ (\w+): ", text.split("Subject To")[1].split("Bounds")[0], flags=re.M)
    assert constraints == list(model.row_names)
    assert text.split("Binaries")[1].split() == ["y_z1_k1", "y_z2_k1", "End"]
    assert " eps: " in text and text.rstrip().endswith("End")


def test_cost_cap_row_bounds_the_cost(tiny):
    model = build_model(tiny)
    capped = apply_cost_cap(model, 12345.0)
    assert capped.row_names[-1] == "cost_cap"
    coefs, sense, rhs = _row(capped, "cost_cap")
    assert (sense, rhs) == ("L", 12345.0)
    assert len(coefs) == np.count_nonzero(model.cost)
    with pytest.raises(ValueError):
        apply_cost_cap(capped, 1.0)
