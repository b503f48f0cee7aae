"""Acceptance criteria, one test each; every test prints a single pass/fail line."""

from __future__ import annotations

import functools
import hashlib
import re
import threading
import time
from datetime import date

from conftest import ACCEPTANCE_RESULTS, FIXTURES, fixture_schemas
from sqlmockgen.analysis import analyze
from sqlmockgen.cli import main
from sqlmockgen.context import group_columns
from sqlmockgen.generation.deterministic import DeterministicBackend
from sqlmockgen.orchestrator import FAILURE, SUCCESS, PipelineConfig, build_manifest, run_instances, run_pipeline
from sqlmockgen.postprocess import solve_derived
from sqlmockgen.schema import parse_schema
from sqlmockgen.scoring import score_integrity
from sqlmockgen.sql import parse_expression
from sqlmockgen.validation.evaluator import evaluate_predicate
from sqlmockgen.validation.judge import BackendJudge, parse_verdict
from sqlmockgen.validation.rules import check_correlation, join_matches
from sqlmockgen.validation.stats import chi_square_statistic, pearson
from test_validation import contract_rows_consistent, contract_rows_inconsistent


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                line = f"criterion {number:2d} FAIL  {title}"
                print(line)
                ACCEPTANCE_RESULTS.append(line)
                raise
            line = f"criterion {number:2d} PASS  {title}"
            print(line)
            ACCEPTANCE_RESULTS.append(line)
        return run
    return wrap


@criterion(1, "structural integrity on the 72-column fixture")
def test_c01_structural_integrity(wide72):
    schemas, sql = wide72
    started = time.perf_counter()
    run = run_pipeline(sql, schemas)
    score = score_integrity(run.tables["wide_table"].rows, run.schemas, "wide_table")
    elapsed = time.perf_counter() - started
    got = {k: str(score[k]) for k in (
        "correct_field_names", "columns_generated", "nested_incorrect_level",
        "nested_enum_correct", "nested_scalar_correct", "nested_all_values")}
    assert got == {
        "correct_field_names": "72/72", "columns_generated": "72/72", "nested_incorrect_level": "0/64",
        "nested_enum_correct": "50/50", "nested_scalar_correct": "64/64", "nested_all_values": "64/64",
    }
    assert elapsed < 10.0


@criterion(2, "pre-processor golden targets and joins")
def test_c02_preprocessor_golden(sales):
    schemas, sql = sales
    dump = analyze(sql, schemas).to_dict()
    targets = {k: {"tables": v["tables"], "constraints": v["constraints"]} for k, v in dump["targets"].items()}
    assert targets == {
        "T1": {"tables": ["fake_table_1"],
               "constraints": "fake_column='Regional_Team_Americas' AND date>='2023-01-01' AND date<='2023-03-31'"},
        "T2": {"tables": ["fake_table_2"], "constraints": []},
    }
    assert dump["joins"] == [
        {"fake_table_1": "date", "fake_table_2": "week_start_date"},
        {"fake_table_1": "username", "fake_table_2": "username"},
    ]


@criterion(3, "CASE branch coverage including ELSE")
def test_c03_branch_coverage(balance):
    schemas, sql = balance
    run = run_pipeline(sql, schemas)
    values = {r["private_info"]["running_balance"]["currency"].name for r in run.tables["fake_table"].rows}
    assert {"USD", "GBP", "EUR"} <= values
    assert values - {"USD", "GBP", "EUR"}


@criterion(4, "quarter coverage under the BETWEEN bounds")
def test_c04_quarter_coverage(quarterly):
    schemas, sql = quarterly
    run = run_pipeline(sql, schemas)
    rows = run.tables["fake_table_1"].rows
    where = run.analysis.target("fake_table_1").constraints
    for row in rows:
        assert row["result_type"].name == "TEXT_AD"
        assert date(2022, 1, 1) <= row["logdate"] <= date(2022, 12, 31)
    groups: dict[int, int] = {}
    for row in rows:
        if all(evaluate_predicate(row, p) is True for p in where):
            q = (row["logdate"].month - 1) // 3 + 1
            groups[q] = groups.get(q, 0) + 1
    assert sorted(groups) == [1, 2, 3, 4]


@criterion(5, "join integrity with and without enforcement")
def test_c05_join_integrity(sales):
    schemas, sql = sales
    run = run_pipeline(sql, schemas)
    t1, t2 = run.tables["fake_table_1"].rows, run.tables["fake_table_2"].rows
    matched = [(a, b) for b in t2 for a in t1
               if a["date"].isoformat() == b["week_start_date"] and a["username"] == b["username"]]
    assert len(matched) >= len(t2)
    assert all(len(join_matches(t1, t2, j)) >= len(t2) for j in run.analysis.joins)
    assert run.report.results["r4"].status == "pass"
    failures = 0
    for seed in range(100):
        cfg = PipelineConfig(seed=seed, enforce_joins=False, max_retries=1)
        failures += run_pipeline(sql, schemas, config=cfg).report.results["r4"].status == "fail"
    assert failures / 100 > 0.99


LA_CASE = ("DATE(TIMESTAMP_SECONDS(CAST(status.time_processed_sec AS INT64)), 'America/Los_Angeles') "
           ">= '2023-07-01'")
STATUS = parse_schema("message st {\n  string time_processed_sec = 1;\n}\nmessage t {\n  st status = 1;\n}")


@criterion(6, "derived LA timestamp predicate")
def test_c06_predicate_evaluator():
    pred = parse_expression(LA_CASE)
    row = {"status": {"time_processed_sec": "1678886400"}}
    assert evaluate_predicate(row, pred) is False
    path, value = solve_derived(pred, row, STATUS, "t")
    assert str(path) == "status.time_processed_sec"
    assert evaluate_predicate({"status": {"time_processed_sec": value}}, pred) is True


UDF_SCHEMA = parse_schema("message t {\n  int64 id = 1;\n  string note = 2;\n}")
UDF_SQL = "SELECT * FROM t WHERE MY_CHECK(note) = TRUE"


class _ScriptedJudge(DeterministicBackend):
    def __init__(self, replies=(), always=None):
        super().__init__()
        self.replies = list(replies)
        self.always = always

    def complete(self, system, user):
        if self.always:
            return self.always
        return self.replies.pop(0) if self.replies else "VALID"


@criterion(7, "retry contract")
def test_c07_retry_contract():
    b = _ScriptedJudge(["NOT VALID: note one is wrong", "NOT VALID: note two is wrong"])
    run = run_pipeline(UDF_SQL, UDF_SCHEMA, backend=b, judge=BackendJudge(b))
    assert run.status == SUCCESS and len(run.attempts) == 3
    assert all("note one is wrong" in p for p in run.attempts[1].prompts.values())
    assert all("note two is wrong" in p for p in run.attempts[2].prompts.values())
    b = _ScriptedJudge(always="NOT VALID: never")
    run = run_pipeline(UDF_SQL, UDF_SCHEMA, backend=b, judge=BackendJudge(b))
    assert run.status == FAILURE and len(run.attempts) == 3


FAILURE_RATE = 0.06
MARKER = "HALLUCINATED_NOTE"


def _unit(seed: int) -> float:
    digest = hashlib.sha256(f"semantic-failure:{seed}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2 ** 64


class _Flaky(DeterministicBackend):
    """Fails semantics for a whole instance with probability FAILURE_RATE, keyed on its seed."""

    def __init__(self, seed: int):
        super().__init__(seed)
        self.broken = _unit(seed) < FAILURE_RATE

    def generate(self, request, prompt=None):
        text = super().generate(request, prompt)
        return re.sub(r"(?m)^note: .*$", f'note: "{MARKER}"', text) if self.broken else text


class _MarkerJudge:
    def verdict(self, data, constraints):
        return parse_verdict(f"NOT VALID: {MARKER} in note" if MARKER in data else "VALID")


@criterion(8, "multiple instances lower the all-fail rate")
def test_c08_hallucination_mitigation():
    started = time.perf_counter()
    rates = {}
    for n in (1, 2):
        all_failed = 0
        for trial in range(500):
            runs = run_instances(UDF_SQL, UDF_SCHEMA, judge=_MarkerJudge(), n=n,
                                 config=PipelineConfig(seed=trial, fill_annotations=False), backend_factory=_Flaky)
            all_failed += not any(r.success for r in runs)
        rates[n] = all_failed / 500
    print(f"all-fail rate n=1 {rates[1]:.3f} n=2 {rates[2]:.3f}")
    assert rates[2] < rates[1]
    assert abs(rates[1] - FAILURE_RATE) <= 0.03
    assert time.perf_counter() - started < 30.0


class _Adversarial(DeterministicBackend):
    EXTRA = ("bonus_score: 1", "internal_flag: true", 'shadow_owner: "x"')

    def generate(self, request, prompt=None):
        records = super().generate(request, prompt).split("\n---\n")
        return "\n---\n".join(r.rstrip("\n") + "\n" + "\n".join(self.EXTRA) for r in records) + "\n"


@criterion(9, "hallucinated columns are removed and listed")
def test_c09_hallucinated_columns(sales):
    schemas, sql = sales
    run = run_pipeline(sql, schemas, backend=_Adversarial())
    removed = run.attempts[0].removed_columns
    assert removed and all(sorted(cols) == ["bonus_score", "internal_flag", "shadow_owner"]
                           for cols in removed.values())
    listed = build_manifest([run], {}, 0)["instances"][0]["attempts"][0]["removed_columns"]
    assert all(sorted(v) == ["bonus_score", "internal_flag", "shadow_owner"] for v in listed.values())
    assert run.report.results["r1"].status == "pass" and run.report.results["r2"].status == "pass"
    for table in run.tables.values():
        assert not any(k in row for row in table.rows for k in ("bonus_score", "internal_flag", "shadow_owner"))


@criterion(10, "statistical rules")
def test_c10_statistical_rules():
    a, b, c, d = 12, 5, 7, 16
    n = a + b + c + d
    hand = n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))
    assert abs(chi_square_statistic([[a, b], [c, d]]) - hand) <= 1e-9
    xs = list(range(1, 11))
    assert abs(pearson(xs, [2 * x for x in xs]) - 1.0) <= 1e-12
    groups = group_columns(fixture_schemas("contracts"), "contracts")[0]
    assert check_correlation(contract_rows_inconsistent(), groups, "contracts").status == "fail"
    assert check_correlation(contract_rows_consistent(), groups, "contracts").status == "pass"


@criterion(11, "byte-identical outputs under a fixed seed")
def test_c11_determinism(tmp_path):
    argv = ["generate", "--schema", str(FIXTURES / "sales.schema"), "--sql", str(FIXTURES / "sales_join.sql"),
            "--seed", "11", "--instances", "2"]
    for name in ("a", "b"):
        assert main(argv + ["--out", str(tmp_path / name)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert {p.name for p in files} >= {"manifest.json", "report.json", "fake_table_1.textproto"}
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


class _Instrumented(DeterministicBackend):
    def __init__(self):
        super().__init__()
        self.lock = threading.Lock()
        self.current = self.peak = 0

    def generate(self, request, prompt=None):
        with self.lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
        try:
            time.sleep(0.005)
            return super().generate(request, prompt)
        finally:
            with self.lock:
                self.current -= 1


@criterion(12, "at most 10 in-flight requests")
def test_c12_concurrency_bound(wide72):
    schemas, sql = wide72
    backend = _Instrumented()
    run = run_pipeline(sql, schemas, backend=backend)
    assert sum(r.is_nested for r in run.plan.requests) == 65
    assert 1 <= backend.peak <= 10
