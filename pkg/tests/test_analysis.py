from __future__ import annotations

from datetime import date

import pytest

from conftest import fixture_schemas, fixture_text
from sqlmockgen.analysis import analyze, extract_coverage_targets, extract_joins, extract_targets
from sqlmockgen.context import context_from_dict
from sqlmockgen.coverage import Partition, ValueSet
from sqlmockgen.errors import MockgenError
from sqlmockgen.schema import parse_schema
from sqlmockgen.sql import parse_sql

SALES_TARGETS = {
    "T1": ["fake_column='Regional_Team_Americas'", "date>='2023-01-01'", "date<='2023-03-31'"],
    "T2": [],
}
SALES_JOINS = [
    {"fake_table_1": "date", "fake_table_2": "week_start_date"},
    {"fake_table_1": "username", "fake_table_2": "username"},
]

SELF = parse_schema("message t {\n  int64 id = 1;\n  int64 parent_id = 2;\n  string name = 3;\n}")


def test_sales_targets_and_joins(sales):
    schemas, sql = sales
    dump = analyze(sql, schemas).to_dict()
    assert {k: v["tables"] for k, v in dump["targets"].items()} == {"T1": ["fake_table_1"], "T2": ["fake_table_2"]}
    assert {k: v["constraint_list"] for k, v in dump["targets"].items()} == SALES_TARGETS
    assert dump["targets"]["T1"]["constraints"] == " AND ".join(SALES_TARGETS["T1"])
    assert dump["targets"]["T2"]["constraints"] == []
    assert dump["joins"] == SALES_JOINS
    assert dump["join_details"][0]["primary"]["casts"] == ["STRING"]


def test_sales_low_level_extractors(sales):
    schemas, sql = sales
    ast = parse_sql(sql)
    assert [t.table for t in extract_targets(ast, schemas)] == ["fake_table_1", "fake_table_2"]
    joins = extract_joins(ast, schemas)
    assert [(str(j.primary.column), str(j.secondary.column)) for j in joins] == [
        ("date", "week_start_date"), ("username", "username")]


def test_balance_case_arms_become_a_value_set_with_else_sentinel(balance):
    schemas, sql = balance
    a = analyze(sql, schemas)
    assert a.is_function
    (cov,) = a.coverage
    assert isinstance(cov, ValueSet)
    assert str(cov.column) == "private_info.running_balance.currency"
    assert [str(v) for v in cov.values] == ["USD", "GBP", "EUR"]
    # the sentinel is an enum value outside the arms, so the ELSE branch is exercised
    assert str(cov.sentinel) in {"JPY", "CHF"}
    assert cov.demand == 4


def test_quarterly_quarter_partition(quarterly):
    schemas, sql = quarterly
    a = analyze(sql, schemas)
    (cov,) = a.coverage
    assert isinstance(cov, Partition)
    assert cov.part == "QUARTER"
    assert cov.buckets() == [date(2022, 1, 1), date(2022, 4, 1), date(2022, 7, 1), date(2022, 10, 1)]
    assert a.target("fake_table_1").constraint_texts() == [
        "result_type='TEXT_AD'", "logdate BETWEEN '2022-01-01' AND '2022-12-31'"]


def test_tasks_join_inside_subquery(tasks):
    schemas, sql = tasks
    a = analyze(sql, schemas)
    assert [j.to_dict() for j in a.joins] == [{"fake_project_tasks": "project_id", "fake_devices": "id"}]
    assert a.target("fake_project_tasks").constraint_texts() == [
        "name LIKE '%fake_task_name%'", "start_date>'2020-06-01'"]


def test_self_join_is_one_target_with_two_aliases():
    a = analyze("SELECT * FROM t AS a JOIN t AS b ON a.id = b.parent_id", SELF)
    assert len(a.targets) == 1
    assert sorted(a.targets[0].aliases) == ["a", "b"]
    assert [j.to_dict(by_alias=True) for j in a.joins] == [{"a": "id", "b": "parent_id"}]


def test_self_join_filter_on_one_alias_only_is_relaxed_and_reported():
    a = analyze("SELECT * FROM t AS a JOIN t AS b ON a.id = b.parent_id WHERE a.name = 'x'", SELF)
    assert a.conflicts and a.conflicts[0]["column"] == "name"


def test_trivial_queries():
    a = analyze("SELECT * FROM t", SELF)
    assert len(a.targets) == 1 and a.targets[0].constraints == []
    assert a.joins == [] and a.coverage == []
    assert extract_coverage_targets(parse_sql("SELECT * FROM t"), SELF) == []


def test_user_signal_overrides_extracted_range(sales):
    schemas, sql = sales
    ctx = context_from_dict({"signals": {"fake_table_1.date": "2023-02-15"}})
    texts = analyze(sql, schemas, ctx).target("fake_table_1").constraint_texts()
    assert "date='2023-02-15'" in texts
    assert not any(t.startswith("date>") or t.startswith("date<") for t in texts)


def test_derived_predicate_is_listed():
    s = parse_schema("message st {\n  string time_processed_sec = 1;\n}\nmessage t {\n  st status = 1;\n}")
    sql = ("SELECT * FROM t WHERE DATE(TIMESTAMP_SECONDS(CAST(status.time_processed_sec AS INT64)), "
           "'America/Los_Angeles') >= '2023-07-01'")
    dump = analyze(sql, s).to_dict()
    assert len(dump["targets"]["T1"]["derived"]) == 1


def test_analysis_is_deterministic(sales):
    schemas, sql = sales
    assert analyze(sql, schemas).to_dict() == analyze(sql, schemas).to_dict()


def test_unknown_table_is_an_error():
    with pytest.raises(MockgenError):
        analyze("SELECT * FROM nowhere", SELF)
