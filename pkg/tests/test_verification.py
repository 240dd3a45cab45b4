import json

import pytest
from hypothesis import given, settings, strategies as st

from accelcut import builtin_cuts, evaluation, problems, solver, verification as V
from accelcut.solver import SolveBudget

SIZES = {"cwlp": {"customers": 6, "warehouses": 5}, "tsp": {"n": 7}, "jssp": {"jobs": 3, "machines": 3},
         "mcnd": {"nodes": 6, "arcs": 12, "commodities": 3}, "rect": {"N": 3}}


def make_dv(kind, seeds=(200, 201)):
    insts = [problems.generate(kind, SIZES[kind], s) for s in seeds]
    return evaluation.preprocess([], insts, SolveBudget(5.0), SolveBudget(60.0))[1]


@pytest.fixture(scope="module")
def cw_dv():
    return make_dv("cwlp")


@pytest.fixture(scope="module")
def tsp_dv():
    return make_dv("tsp")


def test_slack_cut_preserves_but_never_separates(cw_dv):
    rec, _ = V.verify_once("0 * y[1] <= 1;", cw_dv)
    assert rec.code.passed and rec.osp.passed
    assert not rec.useful.passed and rec.failed_stage == V.USEFUL


def test_contradicting_row_fails_osp(cw_dv):
    rec, _ = V.verify_once("sum(j in J: y[j]) >= card(J) + 1;", cw_dv)
    assert rec.failed_stage == V.OSP and rec.useful is None
    assert rec.osp.instance == cw_dv.entries[0].name


def test_base_row_copy_not_useful(cw_dv):
    rec, _ = V.verify_once("forall i in I: sum(j in J: x[i, j]) == 1;", cw_dv)
    assert rec.osp.passed and not rec.useful.passed


def test_broken_source_fails_code_only(cw_dv):
    rec, comp = V.verify_once("forall i in I: x[i", cw_dv)
    assert comp is None and rec.family_id is None
    assert rec.failed_stage == V.CODE and rec.stages == [rec.code]
    assert rec.code.span == (1, 17)
    assert "line 1, column 17" in rec.code.diagnostic()


def test_semantic_error_is_code_failure(cw_dv):
    rec, _ = V.verify_once("w[1] >= 1;", cw_dv)
    assert rec.failed_stage == V.CODE and rec.code.detail["error"] == "semantic"


def test_eval_error_is_code_failure(cw_dv):
    rec, _ = V.verify_once("y[1] >= mincover(j in J: u[j], 1e9);", cw_dv)
    assert rec.failed_stage == V.CODE and rec.code.detail["error"] == "eval"


def test_builtin_cwlp_passes_every_stage(cw_dv):
    rec, comp = V.verify_once(builtin_cuts.builtin_cut_source("cwlp"), cw_dv)
    assert rec.passed and [s.stage for s in rec.stages] == list(V.STAGES)
    assert rec.family_id == comp.family_id


@pytest.mark.parametrize("kind", ["tsp", "jssp", "mcnd", "rect"])
def test_builtin_families_pass(kind):
    rec, _ = V.verify_once(builtin_cuts.builtin_cut_source(kind), make_dv(kind))
    assert rec.passed, rec.to_json()


def test_unchanged_osp_failure_exhausts_retries(cw_dv):
    bad = "sum(j in J: y[j]) >= card(J) + 1;"
    seen, fed = [], []
    ctx = V.RetryContext(max_attempts=3, revise=lambda diag: fed.append(diag) or bad, on_attempt=seen.append)
    with pytest.raises(V.RetriesExhausted) as ei:
        V.verify(bad, cw_dv, ctx)
    assert ei.value.record.attempts_used == 3
    assert [r.failed_stage for r in ei.value.history] == [V.OSP] * 3
    assert len(seen) == 3 and len(fed) == 2
    assert fed[0].startswith("[osp check failed]")


def test_retry_restarts_at_code_stage(cw_dv):
    fixes = iter([builtin_cuts.builtin_cut_source("cwlp")])
    ctx = V.RetryContext(max_attempts=3, revise=lambda diag: next(fixes))
    rec, _ = V.verify("not a cut", cw_dv, ctx)
    assert rec.passed and rec.attempts_used == 2


def test_precheck_veto(cw_dv):
    ctx = V.RetryContext(max_attempts=1, precheck=lambda fam: "duplicate of an existing family")
    with pytest.raises(V.RetriesExhausted) as ei:
        V.verify(builtin_cuts.builtin_cut_source("cwlp"), cw_dv, ctx)
    assert ei.value.record.failed_stage == V.DUPLICATE


def test_backend_error_propagates(cw_dv, monkeypatch):
    def boom(*a, **k):
        raise solver.BackendError("solver crashed")
    monkeypatch.setattr(solver, "feasibility_probe", boom)
    calls = []
    ctx = V.RetryContext(max_attempts=3, revise=lambda d: calls.append(d) or "y[1] >= 0;")
    with pytest.raises(solver.BackendError):
        V.verify(builtin_cuts.builtin_cut_source("cwlp"), cw_dv, ctx)
    assert calls == []


def test_tsp_ec_useful_on_dv(tsp_dv):
    assert V.check_useful(builtin_cuts.builtin_cut_source("tsp"), tsp_dv).passed


def test_verification_set_round_trip(cw_dv, tmp_path):
    path = tmp_path / "dv.json"
    cw_dv.save(path)
    again = V.VerificationSet.load(path)
    assert [e.name for e in again] == [e.name for e in cw_dv]
    assert again.entries[0].optimum == cw_dv.entries[0].optimum


def test_corrupt_optimum_detected(cw_dv, tmp_path):
    path = tmp_path / "dv.json"
    cw_dv.save(path)
    obj = json.loads(path.read_text())
    # close every warehouse in the stored optimum
    for item in obj["entries"][0]["optimum"]:
        if item[0] == "y":
            item[-1] = 0.0
    path.write_text(json.dumps(obj))
    with pytest.raises(V.CorruptArtifact):
        V.VerificationSet.load(path)


@settings(max_examples=8, deadline=None)
@given(c=st.integers(0, 50), j=st.integers(1, 5))
def test_zero_coefficient_rows_never_separate(cw_dv, c, j):
    rec, _ = V.verify_once(f"0 * y[{j}] <= {c};", cw_dv)
    assert rec.osp.passed and not rec.useful.passed


def test_record_json_shape(cw_dv):
    rec, _ = V.verify_once("0 * y[1] <= 1;", cw_dv)
    obj = rec.to_json()
    assert obj["passed"] is False
    assert [s["stage"] for s in obj["stages"]] == ["code", "osp", "useful"]
