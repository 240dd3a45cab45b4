"""Reference cut families against brute-force oracles written independently here."""

import itertools

import pytest

from accelcut import builtin_cuts, milp, problems, solver
from accelcut.problems import cwlp, jssp, mcnd, tsp

from oracles import TOL, cwlp_min_open, jssp_opt, mcnd_design_violations, tsp_tour_violations, violated


# -- TSP -----------------------------------------------------------------

def test_tsp_identity_tour_satisfies_rows(gen):
    inst = gen("tsp", 0, n=5)
    rows = builtin_cuts.native_rows(inst)
    assert len(rows) == 20
    assert violated(rows, tsp.tour_solution(5, [1, 2, 3, 4, 5])) == []


@pytest.mark.parametrize("seed", range(5))
def test_tsp_ec_holds_on_every_tour_n6(seed):
    rows = builtin_cuts.native_rows(problems.generate("tsp", {"n": 6}, 900 + seed))
    assert tsp_tour_violations(rows, 6) == []


def test_tsp_ec_n7_exhaustive():
    rows = builtin_cuts.native_rows(problems.generate("tsp", {"n": 7}, 3))
    for rest in itertools.permutations(range(2, 8)):
        assert not violated(rows, tsp.tour_solution(7, (1,) + rest))


# -- CWLP ----------------------------------------------------------------

def test_cwlp_two_big_customers():
    p = cwlp.CwlpInstance((6, 6), (10, 10), (1, 1), ((0, 0), (0, 0)))
    b = cwlp.warehouse_bounds(p)
    assert (b.k_crit, b.k_dem, b.k_T, b.k_min) == (2, 2, 2, 2)
    assert cwlp_min_open(p.d, p.u) == 2 == cwlp.min_open(p)


def test_cwlp_single_unit():
    p = cwlp.CwlpInstance((1,), (1,), (1,), ((0,),))
    assert cwlp.warehouse_bounds(p).k_min == 1
    row, = builtin_cuts.cwlp_ec(p)
    assert row.relation == ">=" and row.rhs == 1.0


def test_cwlp_bounds_recomputed(gen):
    # hand evaluation of each definition on a generated instance
    for s in range(10):
        p = gen("cwlp", s, customers=5, warehouses=4).payload
        b = cwlp.warehouse_bounds(p)
        assert b.k_crit == sum(v > max(p.u) / 2 for v in p.d)
        caps = sorted(p.u, reverse=True)
        assert b.k_dem == next(r for r in range(1, len(caps) + 1) if sum(caps[:r]) >= sum(p.d) - 1e-9)


@pytest.mark.parametrize("size", [(3, 3), (4, 3), (5, 4), (6, 2), (4, 4)])
def test_cwlp_k_min_is_lower_bound(size):
    nc, nw = size
    for s in range(10):
        p = problems.generate("cwlp", {"customers": nc, "warehouses": nw}, 40 * nc + s).payload
        truth = cwlp_min_open(p.d, p.u)
        assert truth is not None
        assert cwlp.warehouse_bounds(p).k_min <= truth, (size, s)


# -- JSSP ----------------------------------------------------------------

def test_jssp_single_machine():
    p = jssp.JsspInstance(1, (((1, 3),), ((1, 4),)))
    b = jssp.makespan_bounds(p)
    assert b.avg_load == 7 and b.CP[1] == 7 and b.bound == 7 == jssp_opt(p)


def test_jssp_two_by_two_unit_bounds():
    # same machine order: a two-machine flow shop, optimum 3
    same = jssp.JsspInstance(2, (((1, 1), (2, 1)), ((1, 1), (2, 1))))
    assert jssp.makespan_bounds(same).bound == 3 == jssp_opt(same)
    # crossed orders: both jobs run in parallel, optimum 2
    crossed = jssp.JsspInstance(2, (((1, 1), (2, 1)), ((2, 1), (1, 1))))
    assert jssp.makespan_bounds(crossed).bound == 2 == jssp_opt(crossed)


def test_jssp_oracle_agrees_with_kernel(gen):
    for s in range(5):
        inst = gen("jssp", s, jobs=3, machines=2)
        assert jssp_opt(inst.payload) == pytest.approx(jssp.brute_force(inst.payload)[0])


@pytest.mark.parametrize("size", [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)])
def test_jssp_bound_le_optimum(size):
    nj, nm = size
    for s in range(10):
        p = problems.generate("jssp", {"jobs": nj, "machines": nm}, 70 * nj + 7 * nm + s).payload
        assert jssp.makespan_bounds(p).bound <= jssp_opt(p) + TOL, (size, s)


def test_jssp_interference_defaults_to_job_length():
    # no other job shares a machine, so the bound falls back to L_j
    p = jssp.JsspInstance(2, (((1, 2), (1, 3)), ((2, 4),)))
    b = jssp.makespan_bounds(p)
    assert b.Interf == {1: 5.0, 2: 4.0}


# -- MCND ----------------------------------------------------------------

def test_mcnd_row_example():
    # two arcs into node 3 with capacities 5 and 3, demand 4
    p = mcnd.McndInstance(3, ((1, 3, 1, 1, 5), (2, 3, 1, 1, 3), (1, 2, 1, 1, 9)), ((1, 3, 4),))
    row, = builtin_cuts.mcnd_ec(p)
    assert row.relation == ">=" and row.rhs == 9
    assert dict((k, c) for c, k in row.terms) == {("y", (1, 3)): 10, ("y", (2, 3)): 8}


def test_mcnd_no_incoming_arc():
    p = mcnd.McndInstance(3, ((1, 2, 1, 1, 5), (2, 1, 1, 1, 5)), ((1, 3, 1),))
    with pytest.raises(builtin_cuts.NoIncomingArc):
        builtin_cuts.mcnd_ec(p)


@pytest.mark.parametrize("seed", range(20))
def test_mcnd_ec_holds_on_every_feasible_design(seed):
    p = problems.generate("mcnd", {"nodes": 5, "arcs": 10, "commodities": 2}, 300 + seed).payload
    assert mcnd_design_violations(p, builtin_cuts.mcnd_ec(p)) == []


def test_mcnd_oracle_catches_overreach():
    # demanding twice the demand is violated by some feasible design
    p = problems.generate("mcnd", {"nodes": 5, "arcs": 10, "commodities": 2}, 300).payload
    rows = [milp.LinConstraint.build(dict((k, c) for c, k in r.terms), r.relation, 10 * r.rhs)
            for r in builtin_cuts.mcnd_ec(p)]
    assert mcnd_design_violations(p, rows)


def test_mcnd_lp_separated_somewhere():
    hits = 0
    for s in range(10):
        inst = problems.generate("mcnd", {"nodes": 6, "arcs": 12, "commodities": 3}, 400 + s)
        lp = solver.solve_lp(milp.relax(problems.build_model(inst)))
        hits += bool(violated(builtin_cuts.native_rows(inst), lp.incumbent, 1e-6))
    assert hits >= 1


# -- RT ------------------------------------------------------------------

def test_rect_n2_row_count(gen):
    assert len(builtin_cuts.native_rows(gen("rect", 0, N=2))) == 8


@pytest.mark.parametrize("N,expected", [(2, 8), (3, 3 * 2 * 2 + 3 + 3 + 3 + 3), (4, 4 * 3 * 2 + 4 + 4 + 8 + 8)])
def test_rect_row_counts(N, expected, gen):
    assert len(builtin_cuts.native_rows(gen("rect", 0, N=N))) == expected


def test_rect_n3_optimum_survives(gen):
    inst = gen("rect", 1, N=3)
    base = problems.build_model(inst)
    res = solver.solve_mip(base, solver.SolveBudget(60.0))
    assert res.status == solver.OPTIMAL
    m = milp.append_cut_constraints(base, builtin_cuts.native_rows(inst), (), "rect_ec")
    assert solver.feasibility_probe(milp.fix_assignment(m, res.incumbent)) == solver.FEASIBLE


def test_rect_n4_lp_separated(gen):
    inst = gen("rect", 0, N=4)
    lp = solver.solve_lp(milp.relax(problems.build_model(inst)))
    assert violated(builtin_cuts.native_rows(inst), lp.incumbent, 1e-6)


# -- constants -----------------------------------------------------------

def test_derived_constants(gen):
    c = builtin_cuts.derived_constants(gen("cwlp", 2, customers=4, warehouses=3))
    assert c.values["k_min"] == max(c.values["k_crit"], c.values["k_dem"], c.values["k_T"])
    j = builtin_cuts.derived_constants(gen("jssp", 2, jobs=3, machines=3))
    assert j.values["bound"] == max(j.values["avg_load"], max(j.values["CP"].values()),
                                    max(j.values["Interf"].values()))
    m = gen("mcnd", 1, nodes=5, arcs=10, commodities=2)
    um = builtin_cuts.derived_constants(m).values["umax"]
    cap = m.payload.arc_data("u")
    for k, (_, dest, _) in enumerate(m.payload.commodities, start=1):
        assert um[k] == max(cap[a] for a in m.payload.inarcs(dest))
