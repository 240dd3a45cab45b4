import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelcut import milp, problems, solver
from accelcut.problems import cwlp, io, jssp, mcnd, rect, tsp
from accelcut.problems.base import ProblemInstance

SIZES = {"tsp": {"n": 6}, "mcnd": {"nodes": 5, "arcs": 10, "commodities": 2},
         "cwlp": {"customers": 4, "warehouses": 3}, "jssp": {"jobs": 3, "machines": 2}, "rect": {"N": 3}}


def by_role(model, name):
    return [c for c in model.constraints if c.label == name]


# -- model shape ---------------------------------------------------------

def test_tsp_n5_counts(gen):
    m = problems.build_model(gen("tsp", 0, n=5))
    assert len(m.var_map["x"].indices) == 20
    u = m.var_map["u"]
    assert len(u.indices) == 5 and u.bounds == {(1,): (1.0, 1.0)}  # 4 free positions
    assert len(by_role(m, "out")) == 5 and len(by_role(m, "in")) == 5
    assert len(by_role(m, "mtz")) == 12
    assert len(m.constraints) == 22


def test_cwlp_2x2_counts():
    inst = problems.make_instance("cwlp", cwlp.CwlpInstance((1, 1), (2, 2), (1, 1), ((1, 1), (1, 1))))
    m = problems.build_model(inst)
    assert len(m.var_map["x"].indices) == 4 and len(m.var_map["y"].indices) == 2
    assert len(by_role(m, "assign")) == 2 and len(by_role(m, "capacity")) == 2


def test_rect_n2_counts():
    m = problems.build_model(problems.generate("rect", {"N": 2}, 0))
    assert rect.intervals(2) == [(1, 1), (1, 2), (2, 2)]
    assert len(m.var_map["h"].indices) == 4
    for v in "xst":
        assert len(m.var_map[v].indices) == 3 * 2
    flow = by_role(m, "top") + by_role(m, "mid") + by_role(m, "bottom")
    assert len(flow) == 3 * (2 + 1)


@pytest.mark.parametrize("n", [3, 4, 7])
def test_tsp_closed_form_counts(n):
    m = problems.build_model(problems.generate("tsp", {"n": n}, 1))
    assert len(m.constraints) == 2 * n + (n - 1) * (n - 2)
    assert m.num_vars() == n * (n - 1) + n


@pytest.mark.parametrize("nj,nm", [(2, 2), (3, 3), (4, 2)])
def test_jssp_closed_form_counts(nj, nm):
    inst = problems.generate("jssp", {"jobs": nj, "machines": nm}, 2)
    m = problems.build_model(inst)
    n_pairs = nm * nj * (nj - 1) // 2
    assert len(inst.payload.pairs()) == n_pairs
    assert len(m.constraints) == nj * (nm - 1) + 2 * n_pairs + nj
    assert inst.payload.big_m == sum(p for r in inst.payload.routes for _, p in r)


def test_mcnd_counts(gen):
    inst = gen("mcnd", 3, nodes=5, arcs=9, commodities=2)
    m = problems.build_model(inst)
    assert len(m.constraints) == 5 * 2 + 9
    assert len(m.var_map["x"].indices) == 9 * 2


def test_symbol_tables_name_model_vars():
    for kind, size in SIZES.items():
        inst = problems.generate(kind, size, 0)
        m = problems.build_model(inst)
        st_ = problems.symbol_table(inst)
        for v in m.vars:
            assert v.name in st_.names()
        m.validate()


# -- generators ----------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(SIZES))
def test_generate_is_deterministic(kind):
    a = io.dumps_instance(problems.generate(kind, SIZES[kind], 7))
    b = io.dumps_instance(problems.generate(kind, SIZES[kind], 7))
    assert a == b


def test_tsp_costs_symmetric_zero_diagonal(gen):
    c = gen("tsp", 4, n=9).payload.cost_array()
    assert np.array_equal(c, c.T) and not np.any(np.diag(c))
    x = np.asarray(gen("tsp", 4, n=9).payload.coords)
    assert x.min() >= 0 and x.max() <= 1000


def test_mcnd_lp_relaxation_feasible(gen):
    for s in range(3):
        m = milp.relax(problems.build_model(gen("mcnd", s, nodes=6, arcs=12, commodities=3)))
        assert solver.solve_lp(m).status == solver.OPTIMAL


def test_cwlp_capacity_slack(gen):
    for s in range(5):
        p = gen("cwlp", s, customers=6, warehouses=4).payload
        assert sum(p.u) >= 1.3 * sum(p.d) - 1e-9


def test_jssp_routes_are_permutations(gen):
    p = gen("jssp", 5, jobs=4, machines=3).payload
    for r in p.routes:
        assert sorted(m for m, _ in r) == [1, 2, 3]
        assert all(1 <= pt <= 99 for _, pt in r)


def test_generate_rejects_bad_sizes():
    with pytest.raises(problems.ProblemError):
        problems.generate("tsp", {"n": 0}, 0)
    with pytest.raises(problems.ProblemError):
        problems.generate("tsp", {"cities": 5}, 0)
    with pytest.raises(problems.ProblemError):
        problems.generate("knapsack", {}, 0)
    with pytest.raises(problems.InvariantViolation):
        problems.make_instance("tsp", tsp.TspInstance(2, ((0, 1), (1, 0))))


# -- I/O -------------------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(SIZES))
def test_native_json_round_trip(kind, tmp_path):
    inst = problems.generate(kind, SIZES[kind], 3)
    path = tmp_path / "i.json"
    problems.write_instance(inst, path)
    assert problems.read_instance(path) == inst


def test_tsplib_euc2d_rounds_distances():
    text = "NAME : t\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n" \
           "1 0 0\n2 3 4\n3 0 1.4\nEOF\n"
    inst = io.parse_tsplib(text)
    assert inst.payload.cost[0][1] == 5
    assert inst.payload.cost[0][2] == 1  # nint(1.4)


def test_tsplib_explicit_full_matrix():
    text = "NAME: e\nTYPE: TSP\nDIMENSION: 3\nEDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_FORMAT: FULL_MATRIX\n" \
           "EDGE_WEIGHT_SECTION\n0 2 3\n2 0 4\n3 4 0\nEOF\n"
    assert io.parse_tsplib(text).payload.cost == ((0, 2, 3), (2, 0, 4), (3, 4, 0))


def test_tsplib_write_read_round_trip(gen, tmp_path):
    inst = gen("tsp", 9, n=7)
    path = tmp_path / "a.tsp"
    path.write_text(io.write_tsplib_euc2d(inst))
    back = problems.read_instance(path, io.TSPLIB_EUC2D)
    assert back.payload.cost == inst.payload.cost


def test_tsplib_truncated_is_parse_error():
    text = "NAME : t\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3 4\n"
    with pytest.raises(problems.ParseError) as err:
        io.parse_tsplib(text)
    assert err.value.line is not None


def test_unsupported_formats(tmp_path):
    with pytest.raises(problems.UnsupportedFormat):
        io.parse_tsplib("TYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\nEOF\n")
    with pytest.raises(problems.UnsupportedFormat):
        problems.read_instance(tmp_path / "x", "csv")


def test_malformed_native_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "tsp", "payload": {"n": 3, "cost": [[0, 1]]}}')
    with pytest.raises(problems.ProblemError):
        problems.read_instance(p)
    p.write_text("{not json")
    with pytest.raises(problems.ParseError):
        problems.read_instance(p)


# -- oracles -----------------------------------------------------------------

def test_tsp_unit_square_tour():
    coords = ((0, 0), (1, 0), (1, 1), (0, 1))
    inst = problems.make_instance("tsp", tsp.TspInstance(4, tsp.euclidean_costs(coords), coords))
    obj, sol = problems.brute_force_optimum(inst)
    assert obj == 4
    assert [sol[("u", (c,))] for c in range(1, 5)] in ([1, 2, 3, 4], [1, 4, 3, 2])


def test_jssp_single_machine_sum():
    inst = problems.make_instance("jssp", jssp.JsspInstance(1, (((1, 3),), ((1, 4),))))
    assert problems.brute_force_optimum(inst)[0] == 7


def test_cwlp_two_customers_need_two_warehouses():
    inst = problems.make_instance("cwlp", cwlp.CwlpInstance((6, 6), (10, 10), (1, 1), ((0, 0), (0, 0))))
    obj, _ = problems.brute_force_optimum(inst)
    assert obj == 2
    assert cwlp.min_open(inst.payload) == 2


def test_oracle_size_guards(gen):
    with pytest.raises(problems.TooLargeForOracle):
        problems.brute_force_optimum(gen("tsp", 0, n=10))
    with pytest.raises(problems.TooLargeForOracle):
        problems.brute_force_optimum(gen("cwlp", 0, customers=5, warehouses=3))


def test_tsp_oracle_matches_itertools(gen):
    inst = gen("tsp", 11, n=7)
    c = inst.payload.cost
    best = min(sum(c[t[k] - 1][t[(k + 1) % 7] - 1] for k in range(7))
               for t in ([1] + list(p) for p in itertools.permutations(range(2, 8))))
    assert problems.brute_force_optimum(inst)[0] == best


def test_tsp_every_tour_satisfies_mtz():
    for n in (4, 5, 6, 7):
        inst = problems.generate("tsp", {"n": n}, n)
        rows = problems.build_model(inst).constraints
        for perm in itertools.permutations(range(2, n + 1)):
            vals = tsp.tour_solution(n, [1, *perm])
            assert max(r.violation(vals) for r in rows) <= 1e-9


ORACLE_CASES = [("tsp", {"n": 6}), ("tsp", {"n": 8}), ("cwlp", {"customers": 4, "warehouses": 3}),
                ("jssp", {"jobs": 3, "machines": 2}), ("jssp", {"jobs": 2, "machines": 3}),
                ("mcnd", {"nodes": 5, "arcs": 8, "commodities": 2})]


@pytest.mark.parametrize("kind,size", ORACLE_CASES)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_solver_agrees_with_oracle(kind, size, seed):
    inst = problems.generate(kind, size, seed)
    want, sol = problems.brute_force_optimum(inst)
    res = solver.solve_mip(problems.build_model(inst), solver.SolveBudget(60.0, gap_target=1e-6))
    assert res.status == solver.OPTIMAL
    assert res.objective == pytest.approx(want, rel=1e-6, abs=1e-6)
    # the oracle solution is feasible for the model
    fixed = milp.fix_assignment(problems.build_model(inst), sol)
    assert solver.feasibility_probe(fixed) == solver.FEASIBLE


def test_rect_solver_oracle_small():
    obj, _ = problems.brute_force_optimum(problems.generate("rect", {"N": 2}, 0))
    assert obj == 2
    obj3, _ = problems.brute_force_optimum(problems.generate("rect", {"N": 3}, 0))
    assert obj3 == 4


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=6), st.integers(1, 60))
def test_mincover_property(values, target):
    total = sum(values)
    if target > total:
        with pytest.raises(Exception):
            cwlp.mincover(values, target)
        return
    r = cwlp.mincover(values, target)
    top = sorted(values, reverse=True)
    assert sum(top[:r]) >= target
    assert r == 0 or sum(top[:r - 1]) < target


def test_canonicalize_tsp_positions(gen):
    inst = gen("tsp", 1, n=5)
    vals = tsp.tour_solution(5, [1, 3, 5, 2, 4])
    noisy = {k: (v + 0.3 if k[0] == "u" and k[1] != (1,) else v) for k, v in vals.items()}
    assert problems.canonicalize_solution(inst, noisy) == vals
