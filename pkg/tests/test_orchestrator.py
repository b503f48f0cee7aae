from __future__ import annotations

import pytest

from sqlmockgen.errors import BackendError, BackendUnavailable
from sqlmockgen.generation.deterministic import DeterministicBackend
from sqlmockgen.generation.planner import stable_seed
from sqlmockgen.orchestrator import (
    FAILURE, SUCCESS, PipelineConfig, build_manifest, instance_seeds, run_instances, run_pipeline,
)
from sqlmockgen.schema import parse_schema
from sqlmockgen.validation.judge import BackendJudge

UDF_SCHEMA = parse_schema("message t {\n  int64 id = 1;\n  int64 n = 2;\n}")
UDF_SQL = "SELECT * FROM t WHERE MY_UDF(n) = 1"


class ScriptedJudgeBackend(DeterministicBackend):
    """Deterministic generation; judge replies come from a script, then VALID forever."""

    def __init__(self, replies=(), always=None):
        super().__init__()
        self.replies = list(replies)
        self.always = always
        self.judged = 0

    def complete(self, system, user):
        self.judged += 1
        if self.always:
            return self.always
        return self.replies.pop(0) if self.replies else "VALID"


def test_sales_succeeds_first_time(sales):
    schemas, sql = sales
    run = run_pipeline(sql, schemas)
    assert run.status == SUCCESS and len(run.attempts) == 1
    assert run.backend_calls == len(run.plan.requests)


def test_retry_carries_the_previous_violation_only():
    b = ScriptedJudgeBackend(["NOT VALID: first problem", "NOT VALID: second problem"])
    run = run_pipeline(UDF_SQL, UDF_SCHEMA, backend=b, judge=BackendJudge(b))
    assert run.status == SUCCESS and len(run.attempts) == 3 and b.judged == 3
    first, second, third = (list(a.prompts.values()) for a in run.attempts)
    assert not any("first problem" in p for p in first)
    assert all("first problem" in p and "second problem" not in p for p in second)
    assert all("second problem" in p and "first problem" not in p for p in third)


def test_always_failing_judge_stops_after_max_retries():
    b = ScriptedJudgeBackend(always="NOT VALID: never")
    run = run_pipeline(UDF_SQL, UDF_SCHEMA, backend=b, judge=BackendJudge(b))
    assert run.status == FAILURE and len(run.attempts) == 3
    run = run_pipeline(UDF_SQL, UDF_SCHEMA, backend=b, judge=BackendJudge(b), config=PipelineConfig(max_retries=1))
    assert len(run.attempts) == 1


def test_backend_calls_bounded_by_attempts_times_requests(wide72):
    schemas, sql = wide72
    b = ScriptedJudgeBackend(always="NOT VALID: never")
    run = run_pipeline(sql, schemas, backend=b, judge=BackendJudge(b))
    assert run.backend_calls <= len(run.attempts) * len(run.plan.requests)


class _FailingGenerator(DeterministicBackend):
    def __init__(self, exc):
        super().__init__()
        self.exc = exc

    def generate(self, request, prompt=None):
        raise self.exc


def test_generation_errors_fail_the_run_without_raising(sales):
    schemas, sql = sales
    run = run_pipeline(sql, schemas, backend=_FailingGenerator(BackendError("boom")))
    assert run.status == FAILURE and len(run.attempts) == 3
    assert all("boom" in e for e in run.final.generation_errors.values())


def test_unavailable_backend_aborts(sales):
    schemas, sql = sales
    with pytest.raises(BackendUnavailable):
        run_pipeline(sql, schemas, backend=_FailingGenerator(BackendUnavailable("down")))


def test_instance_seeds_are_derived_and_distinct():
    seeds = instance_seeds(7, 4)
    assert seeds == [stable_seed(7, i) for i in range(4)] and len(set(seeds)) == 4


def test_instances_are_independent_and_deterministic(sales):
    schemas, sql = sales
    runs = run_instances(sql, schemas, n=3, config=PipelineConfig(seed=7))
    assert [r.seed for r in runs] == instance_seeds(7, 3)
    again = run_instances(sql, schemas, n=3, config=PipelineConfig(seed=7))
    assert [r.serialize_tables() for r in runs] == [r.serialize_tables() for r in again]
    assert build_manifest(runs, {}, 7) == build_manifest(again, {}, 7)


def test_manifest_status_is_success_if_any_instance_succeeds(sales):
    schemas, sql = sales
    runs = run_instances(sql, schemas, n=2)
    runs[0].status = FAILURE
    manifest = build_manifest(runs, {}, 0)
    assert manifest["successes"] == 1 and manifest["status"] == SUCCESS


def test_disabled_join_enforcement_breaks_r4(sales):
    schemas, sql = sales
    run = run_pipeline(sql, schemas, config=PipelineConfig(enforce_joins=False, max_retries=1))
    assert run.report.results["r4"].status == "fail"


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        PipelineConfig(max_retries=0)
    with pytest.raises(ValueError):
        PipelineConfig(max_concurrency=0)
