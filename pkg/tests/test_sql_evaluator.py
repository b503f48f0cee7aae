from __future__ import annotations

from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_text
from sqlmockgen.errors import SqlSyntaxError
from sqlmockgen.sql import ast as A
from sqlmockgen.sql import parse_expression, parse_sql
from sqlmockgen.sql.render import render
from sqlmockgen.validation.evaluator import UNEVALUABLE, cast_value, evaluate_predicate, is_evaluable, trunc_date
from sqlmockgen.values import Timestamp
from sqlmockgen.zones import local_to_epoch, utc_offset

LA_CASE = ("DATE(TIMESTAMP_SECONDS(CAST(status.time_processed_sec AS INT64)), 'America/Los_Angeles') "
           ">= '2023-07-01'")


def test_sales_query_shape():
    q = parse_sql(fixture_text("sales_join.sql"))
    nodes = list(A.walk(q))
    assert sum(isinstance(n, A.Join) for n in nodes) == 1
    assert any(isinstance(n, A.Join) and n.kind == "LEFT" for n in nodes)
    assert any(isinstance(n, A.Cast) and n.safe for n in nodes)
    assert any(isinstance(n, A.SubqueryRef) for n in nodes)


def test_tasks_keeps_function_calls():
    q = parse_sql(fixture_text("tasks_golden.sql"))
    names = {n.name for n in A.walk(q) if isinstance(n, A.FuncCall)}
    assert {"ARRAY_AGG", "PARSE_TIMESTAMP"} <= names


def test_syntax_error_has_position():
    with pytest.raises(SqlSyntaxError):
        parse_sql("SELECT FROM WHERE")


@pytest.mark.parametrize("name", ["sales_join.sql", "tasks_golden.sql", "quarterly.sql", "balance_function.sql"])
def test_rendered_predicates_reparse_to_the_same_text(name):
    q = parse_sql(fixture_text(name))
    preds = [n for n in A.walk(q) if isinstance(n, (A.Compare, A.Between, A.Like, A.InList, A.Case))]
    assert preds
    for expr in preds:
        text = render(expr)
        assert render(parse_expression(text)) == text


def test_la_case_false_for_the_march_value_and_true_after_july():
    p = parse_expression(LA_CASE)
    assert evaluate_predicate({"status": {"time_processed_sec": "1678886400"}}, p) is False
    july = int(datetime(2023, 7, 1, 12, tzinfo=ZoneInfo("America/Los_Angeles")).timestamp())
    assert evaluate_predicate({"status": {"time_processed_sec": str(july)}}, p) is True
    # local midnight of 2023-07-01 under PDT is 07:00 UTC
    boundary = int(datetime(2023, 7, 1, 7, 0, tzinfo=timezone.utc).timestamp())
    assert evaluate_predicate({"status": {"time_processed_sec": str(boundary)}}, p) is True
    assert evaluate_predicate({"status": {"time_processed_sec": str(boundary - 1)}}, p) is False


def test_march_value_is_march_15_in_la():
    local = datetime.fromtimestamp(1678886400, ZoneInfo("America/Los_Angeles"))
    assert local.date() == date(2023, 3, 15)


def test_self_comparison_and_like():
    assert evaluate_predicate({"x": 3}, parse_expression("x = x")) is True
    p = parse_expression("name LIKE '%fake_task_name%'")
    assert evaluate_predicate({"name": "my_fake_task_name_v2"}, p) is True
    assert evaluate_predicate({"name": "other"}, p) is False
    assert evaluate_predicate({"name": "a_c"}, parse_expression("name LIKE 'a\\\\_c'")) is True
    assert evaluate_predicate({"name": "abc"}, parse_expression("name LIKE 'a\\\\_c'")) is False


def test_unknown_functions_are_unevaluable():
    p = parse_expression("MY_UDF(x) = 1")
    assert not is_evaluable(p)
    assert evaluate_predicate({"x": 1}, p) is UNEVALUABLE
    assert evaluate_predicate({"x": 1}, parse_expression("MY_UDF(x) = 1 OR TRUE")) is True
    assert evaluate_predicate({"x": 1}, parse_expression("MY_UDF(x) = 1 AND FALSE")) is False


def test_missing_column_is_unevaluable():
    assert evaluate_predicate({}, parse_expression(LA_CASE)) is UNEVALUABLE


def test_bad_cast_vs_safe_cast():
    assert evaluate_predicate({"s": "abc"}, parse_expression("CAST(s AS INT64) = 1")) is UNEVALUABLE
    assert evaluate_predicate({"s": "abc"}, parse_expression("SAFE_CAST(s AS INT64) IS NULL")) is True


def test_date_trunc_quarter():
    for month in range(1, 13):
        start = trunc_date(date(2022, month, 17), "QUARTER")
        assert start == date(2022, (month - 1) // 3 * 3 + 1, 1)


def test_cast_to_string_of_date():
    assert cast_value(date(2023, 1, 5), "STRING") == "2023-01-05"
    assert cast_value("42", "INT64") == 42


# -- Kleene logic against an independent truth table ------------------------

def _k_and(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _k_or(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


def _k_not(a):
    return None if a is None else not a


@st.composite
def bool_exprs(draw, depth=3):
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        name = draw(st.sampled_from(["a", "b", "c"]))
        return name, lambda env, n=name: env[n]
    op = draw(st.sampled_from(["AND", "OR", "NOT"]))
    if op == "NOT":
        text, fn = draw(bool_exprs(depth - 1))
        return f"NOT ({text})", lambda env, f=fn: _k_not(f(env))
    lt, lf = draw(bool_exprs(depth - 1))
    rt, rf = draw(bool_exprs(depth - 1))
    combine = _k_and if op == "AND" else _k_or
    return f"({lt}) {op} ({rt})", lambda env, l=lf, r=rf, c=combine: c(l(env), r(env))


@settings(max_examples=300, deadline=None)
@given(bool_exprs(), st.fixed_dictionaries({k: st.sampled_from([True, False, None]) for k in "abc"}))
def test_three_valued_logic_matches_truth_table(expr, env):
    text, oracle = expr
    got = evaluate_predicate(env, parse_expression(text))
    want = oracle(env)
    assert got is (UNEVALUABLE if want is None else want)


@settings(max_examples=200, deadline=None)
@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5))
def test_between_matches_interval_membership(x, lo, hi):
    got = evaluate_predicate({"x": x, "lo": lo, "hi": hi}, parse_expression("x BETWEEN lo AND hi"))
    assert got is (lo <= x <= hi)


# -- minimal zone table against zoneinfo ------------------------------------

@settings(max_examples=400, deadline=None)
@given(st.integers(int(datetime(1990, 1, 1, tzinfo=timezone.utc).timestamp()),
                   int(datetime(2060, 1, 1, tzinfo=timezone.utc).timestamp())))
def test_la_offset_matches_zoneinfo(epoch):
    ref = datetime.fromtimestamp(epoch, ZoneInfo("America/Los_Angeles")).utcoffset().total_seconds()
    assert utc_offset("America/Los_Angeles", epoch) == ref


@settings(max_examples=200, deadline=None)
@given(st.datetimes(datetime(1990, 1, 1), datetime(2060, 1, 1)))
def test_local_to_epoch_round_trips_outside_gaps(local):
    epoch = local_to_epoch(local, "America/Los_Angeles")
    back = datetime.fromtimestamp(epoch, ZoneInfo("America/Los_Angeles")).replace(tzinfo=None)
    # spring-forward gaps have no faithful local time; elsewhere the mapping is exact
    ref = local.replace(tzinfo=ZoneInfo("America/Los_Angeles"))
    if ref.astimezone(timezone.utc).astimezone(ZoneInfo("America/Los_Angeles")).replace(tzinfo=None) == local:
        assert back == local.replace(microsecond=0)


def test_timestamp_comparison_with_literal():
    row = {"t": Timestamp(0)}
    assert evaluate_predicate(row, parse_expression("t < TIMESTAMP '1970-01-01 00:00:01'")) is True
