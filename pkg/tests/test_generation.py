from __future__ import annotations

import dataclasses
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from conftest import fixture_schemas
from sqlmockgen.analysis import analyze
from sqlmockgen.context import ContextMap, context_from_dict
from sqlmockgen.coverage import ValueSet
from sqlmockgen.errors import BackendError, BackendUnavailable, FormatError, PlanError
from sqlmockgen.generation.backends import HttpBackend, Limiter
from sqlmockgen.generation.deterministic import DeterministicBackend, deterministic_generate
from sqlmockgen.generation.planner import DEFAULT_ROWS, plan_requests, stable_seed
from sqlmockgen.generation.prompt import NO_CONSTRAINTS, RETRY_PREFIX, build_generation_prompt, load_template
from sqlmockgen.generation.runner import filter_hallucinations, parse_generation, run_requests
from sqlmockgen.schema import ColumnPath, parse_schema
from sqlmockgen.sql import parse_expression
from sqlmockgen.validation.evaluator import evaluate_predicate
from sqlmockgen.values import EnumVal


def _plan(schemas, sql, context=None, seed=0):
    context = context or ContextMap()
    return plan_requests(analyze(sql, schemas, context), context, schemas, seed)


def _flat_schema(n):
    return parse_schema("message flat {\n" + "\n".join(f"  int64 c{i} = {i + 1};" for i in range(n)) + "\n}")


# -- planning ---------------------------------------------------------------

def test_wide_schema_plans_65_nested_plus_one_group(wide72):
    schemas, sql = wide72
    plan = _plan(schemas, sql)
    nested = [r for r in plan.requests if r.is_nested]
    groups = [r for r in plan.requests if not r.is_nested]
    assert len(nested) == 65 and len(groups) == 1
    assert len(groups[0].columns) == 7


def test_flat_schema_is_one_request():
    assert len(_plan(_flat_schema(10), "SELECT * FROM flat").requests) == 1


def test_row_count_below_coverage_demand_is_a_plan_error(balance):
    schemas, sql = balance
    with pytest.raises(PlanError):
        _plan(schemas, sql, context_from_dict({"row_count": 2}))
    plan = _plan(schemas, sql, context_from_dict({"row_count": 4}))
    assert plan.tables[0].row_count == 4
    assert _plan(schemas, sql).tables[0].row_count == max(DEFAULT_ROWS, 4)


def test_plan_is_deterministic_and_seeds_are_stable(sales):
    schemas, sql = sales
    a = [(r.key, r.seed, r.prompt().text) for r in _plan(schemas, sql, seed=3).requests]
    b = [(r.key, r.seed, r.prompt().text) for r in _plan(schemas, sql, seed=3).requests]
    assert a == b
    assert stable_seed(3, "x") == stable_seed(3, "x") != stable_seed(4, "x")


# -- prompts ----------------------------------------------------------------

def test_balance_prompt_lists_currency_values(balance):
    schemas, sql = balance
    (req,) = [r for r in _plan(schemas, sql).requests if r.scope == "nested:private_info"]
    text = req.prompt().text
    assert "Instructions for specific columns" in text
    assert 'private_info.running_balance.currency ∈ {"USD", "GBP", "EUR"}' in text


def test_zero_constraints_render_none():
    p = build_generation_prompt("", "", 3, "a", "", "message t {}")
    assert f"schema:**\n{NO_CONSTRAINTS}\n" in p.text


def test_retry_prompt_ends_with_the_error():
    p = build_generation_prompt("x=1", "", 3, "x", "", "message t {}", retry_context="r5 [t.x]: wrong")
    assert p.text.endswith(RETRY_PREFIX + "r5 [t.x]: wrong")
    assert RETRY_PREFIX + "r5 [t.x]: wrong" in p.user


def test_prompt_slots_are_not_re_expanded():
    p = build_generation_prompt("name='{col_names}'", "", 1, "name", "", "message t {}")
    assert "name='{col_names}'" in p.text


# -- deterministic backend --------------------------------------------------

def _request(schemas, sql, scope, **changes):
    (req,) = [r for r in _plan(schemas, sql).requests if r.scope == scope]
    return dataclasses.replace(req, **changes)


def test_value_set_cycles_in_order(balance):
    schemas, sql = balance
    cov = ValueSet("fake_table", ColumnPath.parse("private_info.running_balance.currency"),
                   ("USD", "GBP", "EUR"), field=schemas.resolve_path("fake_table", "private_info.running_balance.currency"))
    req = _request(schemas, sql, "nested:private_info", coverage=(cov,), row_count=4)
    got = [r["private_info"]["running_balance"]["currency"] for r in deterministic_generate(req, 1)]
    assert got == [EnumVal("USD"), EnumVal("GBP"), EnumVal("EUR"), EnumVal("USD")]


def test_range_zero_gives_zeros():
    s = _flat_schema(1)
    ctx = context_from_dict({"signals": {"c0": {"range": [0, 0]}}})
    (req,) = _plan(s, "SELECT * FROM flat", ctx).requests
    assert [r["c0"] for r in deterministic_generate(req, 0)] == [0] * req.row_count


def test_date_between_hits_endpoints_and_interior(sales):
    schemas, sql = sales
    (req,) = [r for r in _plan(schemas, sql).requests if r.table == "fake_table_1"]
    rows = deterministic_generate(req, 0)
    pred = parse_expression("date BETWEEN '2023-01-01' AND '2023-03-31'")
    assert all(evaluate_predicate(r, pred) is True for r in rows)
    dates = sorted(r["date"] for r in rows)
    assert str(dates[0]) == "2023-01-01" and str(dates[-1]) == "2023-03-31"
    assert any(str(d) not in ("2023-01-01", "2023-03-31") for d in dates)


def test_deterministic_output_depends_only_on_request_and_seed(sales):
    schemas, sql = sales
    req = _plan(schemas, sql).requests[0]
    assert deterministic_generate(req, 5) == deterministic_generate(req, 5)
    assert DeterministicBackend(5).generate(req) == DeterministicBackend(5).generate(req)


# -- dispatch ---------------------------------------------------------------

class _Counting:
    name = "counting"

    def __init__(self, fail_index=None, delay=0.002):
        self.inner = DeterministicBackend()
        self.fail_index = fail_index
        self.delay = delay
        self.lock = threading.Lock()
        self.current = self.peak = self.calls = 0

    def generate(self, request, prompt):
        with self.lock:
            self.current += 1
            self.calls += 1
            self.peak = max(self.peak, self.current)
        try:
            time.sleep(self.delay)
            if request.index == self.fail_index:
                raise BackendError("injected failure")
            return self.inner.generate(request, prompt)
        finally:
            with self.lock:
                self.current -= 1


def test_bounded_dispatch_and_isolated_failure(wide72):
    schemas, sql = wide72
    requests = [r for r in _plan(schemas, sql).requests if r.is_nested]
    backend = _Counting(fail_index=requests[2].index)
    results = run_requests(requests, backend, max_concurrency=10)
    assert backend.calls == 65
    assert 1 < backend.peak <= 10
    assert [r.request.index for r in results] == [r.index for r in requests]
    assert sum(r.ok for r in results) == 64
    assert not results[2].ok and "injected failure" in results[2].error


def test_single_request_runs():
    (req,) = _plan(_flat_schema(2), "SELECT * FROM flat").requests
    (res,) = run_requests([req], DeterministicBackend(), limiter=Limiter(1))
    assert res.ok and len(res.rows) == req.row_count


# -- parsing and filtering --------------------------------------------------

def test_fenced_output_parses_like_unfenced():
    s = fixture_schemas("balance")
    body = 'private_info {\n  running_balance {\n    currency: USD\n    amount: 100\n  }\n}'
    plain = parse_generation(body, s, "fake_table").rows
    assert parse_generation(f"```textproto\n{body}\n```", s, "fake_table").rows == plain
    assert parse_generation(f"Here you go:\n```\n{body}\n```\nThanks", s, "fake_table").rows == plain
    assert plain[0]["private_info"]["running_balance"] == {"currency": EnumVal("USD"), "amount": 100}


def test_garbage_output_quotes_first_80_chars():
    s = fixture_schemas("balance")
    garbage = "@@ " * 60
    with pytest.raises(FormatError) as info:
        parse_generation(garbage, s, "fake_table")
    assert repr(garbage[:80]) in str(info.value)


def test_hallucinated_columns_are_removed_and_reported():
    requested = {ColumnPath.parse(p) for p in ("a", "n", "n.x")}
    rows, removed = filter_hallucinations([{"a": 1, "extra_score": 2, "n": {"x": 1, "y": 2}}], requested)
    assert rows == [{"a": 1, "n": {"x": 1}}]
    assert [str(p) for p in removed] == ["extra_score", "n.y"]
    clean = [{"a": 1}]
    assert filter_hallucinations(clean, requested) == (clean, [])
    rows, removed = filter_hallucinations([{"b": 1, "c": 2}], requested)
    assert rows == [] and [str(p) for p in removed] == ["b", "c"]


# -- HTTP backend -----------------------------------------------------------

class _Server:
    def __init__(self, statuses):
        self.statuses = list(statuses)
        self.seen = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                outer.seen.append((dict(self.headers), body))
                status = outer.statuses.pop(0) if outer.statuses else 200
                payload = json.dumps({"text": "id: 1"} if status == 200 else {"error": "x"}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}/generate"
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


def test_http_backend_retries_5xx_then_succeeds(monkeypatch):
    monkeypatch.setenv("SQLMOCKGEN_API_TOKEN", "secret")
    server = _Server([503, 502])
    try:
        backend = HttpBackend(server.url, model="m", backoff=0.0)
        assert backend.complete("sys", "usr") == "id: 1"
        assert len(server.seen) == 3
        headers, body = server.seen[-1]
        assert headers["Authorization"] == "Bearer secret"
        assert body == {"system": "sys", "user": "usr", "temperature": 0.1, "max_tokens": 8192, "model": "m"}
    finally:
        server.close()


def test_http_backend_gives_up_after_two_transport_retries():
    server = _Server([500, 500, 500, 500])
    try:
        with pytest.raises(BackendError):
            HttpBackend(server.url, backoff=0.0).complete("s", "u")
        assert len(server.seen) == 3
    finally:
        server.close()


def test_http_backend_does_not_retry_4xx():
    server = _Server([400])
    try:
        with pytest.raises(BackendError):
            HttpBackend(server.url, backoff=0.0).complete("s", "u")
        assert len(server.seen) == 1
    finally:
        server.close()


def test_unreachable_endpoint_is_unavailable():
    backend = HttpBackend("http://127.0.0.1:9/none", backoff=0.0, timeout=1.0)
    with pytest.raises(BackendUnavailable):
        backend.complete("s", "u")
    with pytest.raises(BackendUnavailable):
        backend.probe()


@pytest.mark.parametrize("name,slot", [
    ("generate_prompt", "{system_instruction}"), ("system_instruction", "{system_prompt_prefix}"),
    ("system_prefix", "{constraints}"), ("user_instruction", "{proto_description}"),
    ("judge_user", "{constraints}"), ("judge_system", ""),
])
def test_prompt_templates_are_packaged(name, slot):
    text = load_template(name)
    assert text.strip() and slot in text
