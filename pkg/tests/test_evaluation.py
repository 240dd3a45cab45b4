import math

import pytest
from hypothesis import given, settings, strategies as st

from accelcut import builtin_cuts, dsl, evaluation as ev, problems
from accelcut.solver import SolveBudget, TracePoint


def tr(*pts):
    """Trace from (t, gap) pairs."""
    return [TracePoint(t, g, 0.0, 1.0) for t, g in pts]


# -- fitness -------------------------------------------------------------

def test_fit_values():
    assert ev.fit_value(0.0) == 10.0
    assert abs(ev.fit_value(-math.log(2)) - 20.0) <= 1e-12
    assert abs(ev.fit_value(0.1) - 10 * math.exp(-0.1)) <= 1e-12


def test_single_instance_halved_gap():
    d = ev.relative_change(0.2, 0.1)
    assert d == pytest.approx(-0.5)
    assert ev.fit_value(d) == pytest.approx(16.487, abs=5e-4)


def test_two_instance_mean():
    C = (-0.2 + 0.1) / 2
    assert C == pytest.approx(-0.05)
    assert ev.fit_value(C) == pytest.approx(10.513, abs=5e-4)


def test_relative_change_degenerate_and_clamped():
    assert ev.relative_change(0.0, 0.0) == 0.0
    assert ev.relative_change(0.0, 0.3) == ev.D_MAX
    assert ev.relative_change(0.01, 1.0) == ev.D_MAX  # raw 99
    assert ev.relative_change(0.5, 0.0) == -1.0


@given(st.floats(-1, 5), st.floats(-1, 5))
def test_fit_strictly_decreasing(a, b):
    if b - a > 1e-9:
        assert ev.fit_value(a) > ev.fit_value(b)


@given(st.floats(1e-6, 1.0), st.floats(0.0, 1.0))
def test_relative_change_bounded(g_ref, g_cut):
    assert -1.0 <= ev.relative_change(g_ref, g_cut) <= ev.D_MAX


# -- gap improvement -----------------------------------------------------

def test_checkpoints_scale_with_budget():
    assert ev.checkpoints(300) == (5, 10, 50, 150, 300)
    assert ev.checkpoints(30) == pytest.approx((0.5, 1, 5, 15, 30))


def test_gap_delta_example():
    assert ev.gap_delta(0.5, 0.2) == pytest.approx(0.6)
    assert ev.gap_delta(0.0, 0.0) == 0.0
    assert ev.gap_delta(0.0, 0.1) == -ev.D_MAX


def test_identical_traces_zero_improvement():
    t = tr((0.0, 1.0), (1.0, 0.4), (7.0, 0.1))
    assert ev.gap_improvement(t, t, ev.checkpoints(10)) == [0.0] * 5


def test_gap_at_step_interpolation():
    t = tr((0.5, 0.8), (2.0, 0.3))
    assert ev.gap_at(t, 0.1) == 1.0  # nothing recorded yet: gap cap
    assert ev.gap_at(t, 0.5) == 0.8
    assert ev.gap_at(t, 1.99) == 0.8
    assert ev.gap_at(t, 5.0) == 0.3
    assert ev.gap_at(tr((0.0, math.inf)), 1.0) == 1.0


def test_aggregate_excludes_zero_reference():
    per = [[(0.5, 0.2), (0.0, 0.0)], [(0.4, 0.4), (0.0, 0.1)], [(1.0, 0.0), (0.2, 0.1)]]
    agg = ev.aggregate_gap_improvements(per)
    assert agg[0].n == 3 and agg[0].excluded == 0
    assert agg[0].mean == pytest.approx((0.6 + 0.0 + 1.0) / 3)
    assert agg[1].n == 1 and agg[1].excluded == 2 and agg[1].mean == pytest.approx(0.5)


@given(st.floats(0.0, 1.0), st.floats(1e-9, 1.0))
def test_gap_delta_at_most_one(g_cut, g_ref):
    assert ev.gap_delta(g_ref, g_cut) <= 1.0


# -- time to gap ---------------------------------------------------------

def test_time_to_gap_reaching_zero():
    ttg = ev.time_to_gap(tr((0.0, 1.0), (1.0, 0.05), (3.0, 0.0)))
    assert all(v is not None and v <= 3 for v in ttg.values())
    assert ttg[1e-1] == 1.0 and ttg[1e-4] == 3.0


def test_time_saving_example():
    assert ev.time_saving(10.0, 2.6) == pytest.approx(0.74)


def test_time_saving_excludes_unreached():
    agg = ev.aggregate_time_savings([(None, None), (10.0, 2.6), (5.0, None)])
    assert agg.n == 1 and agg.excluded == 2
    assert agg.mean == pytest.approx(0.74)


# -- PDI -----------------------------------------------------------------

def test_pdi_constant():
    assert ev.pdi(tr((0.0, 1.0)), 10.0) == 10.0


def test_pdi_drop_to_zero():
    assert ev.pdi(tr((0.0, 1.0), (5.0, 0.0)), 10.0) == 5.0


def test_pdi_piecewise_exact():
    t = tr((0.0, 0.8), (1.5, 0.4), (4.0, 0.1))
    assert abs(ev.pdi(t, 6.0) - (0.8 * 1.5 + 0.4 * 2.5 + 0.1 * 2.0)) <= 1e-12
    # before the first event the gap counts as the cap
    assert abs(ev.pdi(tr((2.0, 0.5)), 4.0) - (2.0 + 1.0)) <= 1e-12


_traces = st.lists(st.tuples(st.floats(0, 20), st.floats(0, 2)), max_size=8).map(
    lambda pts: tr(*sorted(pts)))


@settings(max_examples=60)
@given(_traces, st.floats(0, 25), st.floats(0, 25))
def test_pdi_monotone_and_additive(trace, a, b):
    lo, hi = sorted((a, b))
    assert ev.pdi(trace, lo) <= ev.pdi(trace, hi) + 1e-12
    # additivity: the increment equals the integral of the step function on [lo, hi]
    pts = [lo] + sorted(p.t for p in trace if lo < p.t < hi) + [hi]
    inc = sum(ev.gap_at(trace, s) * (e - s) for s, e in zip(pts, pts[1:]))
    assert ev.pdi(trace, hi) - ev.pdi(trace, lo) == pytest.approx(inc, abs=1e-9)


def test_knn_smooth():
    out = ev.knn_smooth([0, 1, 2, 10], [0.0, 3.0, 6.0, 9.0], k=3)
    assert out[1] == pytest.approx(3.0) and out[3] == pytest.approx(6.0)


# -- solver-backed -------------------------------------------------------

NODE1 = SolveBudget(30.0, node_limit=1)


@pytest.fixture(scope="module")
def jssp_sets():
    de = [problems.generate("jssp", {"jobs": 4, "machines": 3}, s) for s in (10, 11)]
    dv = [problems.generate("jssp", {"jobs": 3, "machines": 3}, 20)]
    return ev.preprocess(de, dv, NODE1, SolveBudget(60.0))


def test_empty_cut_fitness_is_neutral(jssp_sets):
    es, _ = jssp_sets
    rep = ev.fitness(None, es)
    assert rep.C == 0.0 and rep.fit == 10.0


def test_fitness_reruns_identical(jssp_sets):
    es, _ = jssp_sets
    fam = dsl.parse(builtin_cuts.builtin_cut_source("jssp"))
    a, b = ev.fitness(fam, es), ev.fitness(fam, es)
    assert a.to_json() == b.to_json()
    assert a.fit == pytest.approx(ev.fit_value(sum(a.d) / len(a.d)))


def test_preprocess_is_deterministic(jssp_sets):
    de = [problems.generate("jssp", {"jobs": 4, "machines": 3}, s) for s in (10, 11)]
    es, _ = ev.preprocess(de, [], NODE1, SolveBudget(60.0))
    assert [e.gap_ref for e in es.entries] == [e.gap_ref for e in jssp_sets[0].entries]


def test_dv_optimum_matches_oracle():
    from accelcut.problems import tsp
    insts = [problems.generate("tsp", {"n": 8}, s) for s in (30, 31)]
    _, vs = ev.preprocess([], insts, SolveBudget(5.0), SolveBudget(60.0))
    for e in vs:
        best = problems.brute_force_optimum(e.instance)[0]
        assert e.objective == pytest.approx(best, rel=1e-6)
        assert e.lp_objective <= e.objective + 1e-6
    assert isinstance(insts[0].payload, tsp.TspInstance)


def test_eval_set_round_trip(jssp_sets, tmp_path):
    es, _ = jssp_sets
    es.save(tmp_path / "e.json")
    again = ev.EvalSet.load(tmp_path / "e.json")
    assert [e.gap_ref for e in again.entries] == [e.gap_ref for e in es.entries]
    assert again.entries[0].ref_trace == es.entries[0].ref_trace


def test_evaluate_empty_cut(tmp_path):
    insts = [problems.generate("cwlp", {"customers": 8, "warehouses": 6}, s) for s in (1, 2)]
    rep = ev.evaluate_cut(None, insts, NODE1)
    for a in rep.gap_improvement:
        assert a.n == 0 or a.mean == 0.0
    assert rep.fitness() == (0.0, 10.0)
    rep.write(tmp_path, plot_data=True)
    assert (tmp_path / "summary.json").exists()
    assert len(list((tmp_path / "plot_data").glob("*.csv"))) == 4
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "instance,checkpoint,gap_ref,gap_cut,delta_g" and len(lines) == 1 + 2 * 5


def test_osp_rate_builtin_cwlp():
    insts = [problems.generate("cwlp", {"customers": 5, "warehouses": 4}, s) for s in (3, 4)]
    fam = dsl.parse(builtin_cuts.builtin_cut_source("cwlp"))
    rate, outs = ev.osp_rate(fam, insts, SolveBudget(60.0))
    assert rate == 100.0 and all(o.solved and o.preserved for o in outs)


def test_osp_rate_flags_contradiction():
    insts = [problems.generate("cwlp", {"customers": 5, "warehouses": 4}, 3)]
    fam = dsl.parse("sum(j in J: y[j]) >= card(J) + 1;")
    rate, _ = ev.osp_rate(fam, insts, SolveBudget(60.0))
    assert rate == 0.0
