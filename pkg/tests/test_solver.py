import math

import pytest

from accelcut import milp, problems, solver
from accelcut.milp import BINARY, EQ, GE, LE, Domain, LinConstraint, MilpModel, Objective, VarDef
from accelcut.solver import SolveBudget


def one_var(rows, domain=None):
    x = VarDef("x", 0, domain or milp.continuous(), ((),))
    return MilpModel((x,), tuple(rows), Objective("min", ((1.0, ("x", ())),)))


def test_budget_validation():
    with pytest.raises(ValueError):
        SolveBudget(0)
    with pytest.raises(ValueError):
        SolveBudget(1, gap_target=1.5)
    with pytest.raises(ValueError):
        SolveBudget(1, node_limit=-1)
    b = SolveBudget(2.0, 5, 0.01)
    assert SolveBudget.from_json(b.to_json()) == b


def test_gap_formula():
    assert solver.gap_of(10.0, 9.0) == pytest.approx(0.1)
    assert solver.gap_of(0.0, -1e-12) == pytest.approx(1e-12 / 1e-10)
    assert math.isinf(solver.gap_of(None, 3.0))
    assert math.isinf(solver.gap_of(5.0, -math.inf))


def test_tsp_n5_optimal_matches_oracle(gen):
    inst = gen("tsp", 3, n=5)
    res = solver.solve_mip(problems.build_model(inst), SolveBudget(10.0))
    assert res.status == solver.OPTIMAL
    assert res.gap <= 1e-4
    assert res.objective == pytest.approx(problems.brute_force_optimum(inst)[0])


def test_contradictory_rows_infeasible():
    m = one_var([LinConstraint.build({("x", ()): 1.0}, LE, 0), LinConstraint.build({("x", ()): 1.0}, GE, 1)],
                Domain(BINARY))
    assert solver.solve_mip(m, SolveBudget(5.0)).status == solver.INFEASIBLE


def test_tiny_budget_exhausted_with_finite_bound(gen):
    m = problems.build_model(gen("tsp", 5, n=45))
    res = solver.solve_mip(m, SolveBudget(0.01))
    assert res.status == solver.BUDGET_EXHAUSTED
    assert math.isfinite(res.best_bound)


def test_trace_monotone_and_bound_below_incumbent(gen):
    m = problems.build_model(gen("tsp", 8, n=25))
    res = solver.solve_mip(m, SolveBudget(3.0))
    ts = [p.t for p in res.trace]
    gaps = [p.gap for p in res.trace]
    assert ts == sorted(ts)
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))
    for p in res.trace:
        if p.incumbent_obj is not None:
            assert p.best_bound <= p.incumbent_obj + 1e-9


def test_deterministic_repeat(gen):
    m = problems.build_model(gen("mcnd", 1, nodes=8, arcs=20, commodities=5))
    b = SolveBudget(30.0, node_limit=50)
    r1, r2 = solver.solve_mip(m, b, seed=42), solver.solve_mip(m, b, seed=42)
    assert r1.status == r2.status
    assert r1.objective == pytest.approx(r2.objective, abs=1e-9)


def test_node_limit_respected(gen):
    m = problems.build_model(gen("mcnd", 100, nodes=12, arcs=40, commodities=10))
    res = solver.solve_mip(m, SolveBudget(60.0, node_limit=1))
    assert res.nodes <= 1


def test_lp_bounds_mip(gen):
    inst = gen("tsp", 2, n=5)
    m = problems.build_model(inst)
    lp = solver.solve_lp(milp.relax(m))
    assert lp.status == solver.OPTIMAL
    assert lp.objective <= solver.solve_mip(m, SolveBudget(10.0)).objective + 1e-9


def test_lp_requires_continuous_model(gen):
    with pytest.raises(ValueError):
        solver.solve_lp(problems.build_model(gen("tsp", 2, n=5)))


def test_lp_fractional_cwlp():
    inst = problems.make_instance("cwlp", problems.cwlp.CwlpInstance((6, 6), (10, 10), (5, 5), ((0, 9), (9, 0))))
    lp = solver.solve_lp(milp.relax(problems.build_model(inst)))
    ys = [lp.incumbent[("y", (j,))] for j in (1, 2)]
    assert any(1e-6 < y < 1 - 1e-6 for y in ys)


def test_lp_unbounded_raises():
    x = VarDef("x", 0, milp.continuous(-math.inf, math.inf), ((),))
    m = MilpModel((x,), (LinConstraint.build({("x", ()): 1.0}, LE, 0),), Objective("min", ((1.0, ("x", ())),)))
    with pytest.raises(solver.Unbounded):
        solver.solve_lp(m)


def test_integral_lp_has_zero_gap_to_mip():
    m = one_var([LinConstraint.build({("x", ()): 1.0}, GE, 2)], Domain(milp.INTEGER_NONNEG))
    lp = solver.solve_lp(milp.relax(m))
    mip = solver.solve_mip(m, SolveBudget(5.0))
    assert lp.objective == mip.objective == 2


def test_probe_stored_optimum_feasible(gen):
    inst = gen("cwlp", 4, customers=3, warehouses=3)
    _, sol = problems.brute_force_optimum(inst)
    assert solver.feasibility_probe(milp.fix_assignment(problems.build_model(inst), sol)) == solver.FEASIBLE


def test_probe_aux_row_infeasible():
    z = VarDef("z", 0, milp.continuous(), ((),))
    base = one_var([])
    m = milp.append_cut_constraints(base, [LinConstraint((), LE, -1.0)], [z], "bad")
    assert solver.feasibility_probe(m) == solver.INFEASIBLE
    ok = milp.append_cut_constraints(base, [LinConstraint.build({("z", ()): 1.0, ("x", ()): -1.0}, LE, 0)],
                                     [z], "ok")
    assert solver.feasibility_probe(milp.fix_assignment(ok, {("x", ()): 3.0})) == solver.FEASIBLE


def test_probe_free_aux_existential():
    # x fixed to 2; need some z in [0, 1] with z >= x - 1.5: z = 0.5 works
    z = VarDef("z", 0, milp.continuous(0.0, 1.0), ((),))
    m = milp.append_cut_constraints(one_var([]), [LinConstraint.build({("z", ()): 1.0, ("x", ()): -1.0}, GE, -1.5)],
                                    [z], "c")
    assert solver.feasibility_probe(milp.fix_assignment(m, {("x", ()): 2.0})) == solver.FEASIBLE
    assert solver.feasibility_probe(milp.fix_assignment(m, {("x", ()): 3.0})) == solver.INFEASIBLE


def test_result_json_round_trip(gen):
    res = solver.solve_mip(problems.build_model(gen("tsp", 1, n=6)), SolveBudget(10.0))
    back = solver.SolveResult.from_json(res.to_json(with_solution=True))
    assert back.status == res.status and back.trace == res.trace and back.incumbent == res.incumbent


def test_log_file_written(gen, tmp_path):
    log = tmp_path / "solve.log"
    solver.solve_mip(problems.build_model(gen("tsp", 1, n=6)), SolveBudget(10.0), log_path=log)
    assert log.exists() and log.stat().st_size > 0


def test_unknown_backend(monkeypatch):
    monkeypatch.setenv("ACCELCUT_SOLVER", "nope")
    monkeypatch.setattr(solver, "_default", None)
    with pytest.raises(solver.BackendError):
        solver.get_backend()
