from __future__ import annotations

import math
from datetime import date, timedelta

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from conftest import fixture_schemas, fixture_text
from sqlmockgen.analysis import analyze
from sqlmockgen.context import ColumnGroup, group_columns
from sqlmockgen.schema import ColumnPath, parse_schema
from sqlmockgen.sql import parse_expression
from sqlmockgen.validation.judge import BackendJudge, VerdictError, judge_constraint, judge_table, parse_verdict
from sqlmockgen.validation.report import validate_all
from sqlmockgen.validation.results import FAIL, PASS, SKIPPED, JudgeVerdict
from sqlmockgen.validation.rules import check_correlation, check_joins, check_structure
from sqlmockgen.validation.stats import (
    Degenerate, chi_square_critical, chi_square_dependent, chi_square_statistic, contingency, pearson,
)
from sqlmockgen.values import EnumVal

CONTRACTS = fixture_schemas("contracts")


def contract_rows_inconsistent():
    """Rows shaped like the grouping counter-example: effective and closed precede created."""
    rows = []
    for i in range(6):
        shift = timedelta(days=30 * i)
        rows.append({
            "id": i + 1,
            "contract_created_date": date(2023, 8, 15) + shift,
            "contract_effective_date": date(2023, 4, 1) + shift,
            "contract_closed_date": date(2023, 3, 30) + shift,
            "contract_termination_date": date(2023, 12, 31) + shift,
        })
    return rows


def contract_rows_consistent():
    """Rows shaped like the grouped example: created <= effective <= closed."""
    rows = []
    for i in range(6):
        shift = timedelta(days=30 * i)
        rows.append({
            "id": i + 1,
            "contract_created_date": date(2023, 10, 27) + shift,
            "contract_effective_date": date(2023, 11, 1) + shift,
            "contract_closed_date": date(2024, 10, 31) + shift,
            "contract_months_from_effective_date": 12,
            "contract_termination_date": date(2024, 5, 15) + shift,
        })
    return rows


def _flat72():
    return parse_schema("message flat {\n" + "\n".join(f"  int64 c{i:02d} = {i + 1};" for i in range(72)) + "\n}")


# -- r1 / r2 ----------------------------------------------------------------

def test_r1_lists_every_missing_column():
    s = _flat72()
    r1, r2 = check_structure([{f"c{i:02d}": i for i in range(11)}], s, "flat")
    assert r1.status == FAIL and len(r1.violations) == 61
    assert {v.column for v in r1.violations} == {f"c{i:02d}" for i in range(11, 72)}
    assert r2.status == PASS


def test_conformant_rows_pass_structure():
    s = fixture_schemas("balance")
    row = {"id": "a", "account_name": "b",
           "private_info": {"owner": "o", "running_balance": {"currency": EnumVal("USD"), "amount": 3}}}
    r1, r2 = check_structure([row], s, "fake_table")
    assert (r1.status, r2.status) == (PASS, PASS)


def test_r2_flags_unknown_enum_value_at_its_path():
    s = fixture_schemas("balance")
    row = {"id": "a", "account_name": "b",
           "private_info": {"owner": "o", "running_balance": {"currency": EnumVal("AUD"), "amount": 3}}}
    _, r2 = check_structure([row], s, "fake_table")
    (v,) = r2.violations
    assert v.column == "private_info.running_balance.currency"
    assert "AUD" in v.message


def test_r2_flags_wrong_nesting_and_unknown_columns():
    s = fixture_schemas("balance")
    rows = [{"id": "a", "private_info": "flat", "extra_score": 1}]
    _, r2 = check_structure(rows, s, "fake_table")
    messages = " | ".join(v.message for v in r2.violations)
    assert "wrong nesting" in messages and "extra_score" in messages


# -- r3 ---------------------------------------------------------------------

def _contract_groups():
    return group_columns(CONTRACTS, "contracts")[0]


def test_r3_fails_the_inconsistent_contract_dates():
    r3 = check_correlation(contract_rows_inconsistent(), _contract_groups(), "contracts")
    assert r3.status == FAIL
    assert any("ordering violated" in v.message and v.column == "contract_effective_date" for v in r3.violations)


def test_r3_passes_the_consistent_contract_dates():
    r3 = check_correlation(contract_rows_consistent(), _contract_groups(), "contracts")
    assert r3.status == PASS, [v.text() for v in r3.violations]


def test_r3_single_column_group_is_vacuous():
    g = ColumnGroup((ColumnPath.of("x"),), hinted=True)
    assert check_correlation([{"x": i} for i in range(6)], [g]).status == PASS


def test_r3_skips_with_too_few_rows():
    assert check_correlation(contract_rows_consistent()[:3], _contract_groups()).status == SKIPPED


def test_r3_y_equals_2x_passes_with_unit_correlation():
    xs = list(range(1, 11))
    assert abs(pearson(xs, [2 * x for x in xs]) - 1.0) <= 1e-12
    g = ColumnGroup((ColumnPath.of("x"), ColumnPath.of("y")), hinted=True)
    assert check_correlation([{"x": x, "y": 2 * x} for x in xs], [g]).status == PASS


def test_r3_uncorrelated_hinted_pair_fails():
    g = ColumnGroup((ColumnPath.of("x"), ColumnPath.of("y")), hinted=True)
    # y is symmetric in x around the centre, so r is exactly zero
    rows = [{"x": x, "y": (x - 3) ** 2} for x in range(7)]
    assert check_correlation(rows, [g]).status == FAIL


# -- statistics against independent oracles ---------------------------------

def test_chi_square_2x2_matches_hand_formula():
    a, b, c, d = 12, 5, 7, 16
    n = a + b + c + d
    hand = n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))
    assert abs(chi_square_statistic([[a, b], [c, d]]) - hand) <= 1e-9


def test_chi_square_critical_values_match_scipy():
    for df in range(1, 31):
        assert abs(chi_square_critical(df) - sps.chi2.ppf(0.95, df)) < 1e-5
    for df in (31, 40, 80, 200):
        for alpha in (0.05, 0.01):
            ref = sps.chi2.ppf(1 - alpha, df)
            assert abs(chi_square_critical(df, alpha) - ref) / ref < 2e-3


def test_degenerate_inputs():
    with pytest.raises(Degenerate):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(Degenerate):
        chi_square_statistic([[3, 0], [4, 0]])


def test_dependent_category_pair_is_detected():
    xs = ["a"] * 10 + ["b"] * 10
    ys = ["p"] * 10 + ["q"] * 10
    rejected, stat, crit = chi_square_dependent(xs, ys)
    assert rejected and stat == pytest.approx(20.0) and crit == pytest.approx(3.841459)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=3, max_size=30))
def test_pearson_matches_scipy(pairs):
    xs, ys = [p[0] for p in pairs], [p[1] for p in pairs]
    assume(len(set(xs)) > 1 and len(set(ys)) > 1)
    assert pearson(xs, ys) == pytest.approx(sps.pearsonr(xs, ys)[0], abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("xyz")), min_size=4, max_size=40))
def test_chi_square_matches_scipy(pairs):
    table = contingency([p[0] for p in pairs], [p[1] for p in pairs])
    assume(len(table) > 1 and len(table[0]) > 1)
    stat, _, dof, _ = sps.chi2_contingency(table, correction=False)
    assert chi_square_statistic(table) == pytest.approx(stat, rel=1e-9, abs=1e-12)
    assert (len(table) - 1) * (len(table[0]) - 1) == dof


# -- r4 ---------------------------------------------------------------------

SALES = fixture_schemas("sales")
SALES_JOINS = analyze(fixture_text("sales_join.sql"), SALES).joins


def _sales_tables(second_user="amy"):
    t1 = [{"fake_column": "Regional_Team_Americas", "date": date(2023, 1, 2), "username": "amy"}]
    t2 = [{"week_start_date": "2023-01-02", "username": second_user}]
    return {"fake_table_1": t1, "fake_table_2": t2}


def test_r4_passes_on_synced_tables():
    assert check_joins(_sales_tables(), SALES_JOINS).status == PASS


def test_r4_names_the_unmatched_key():
    r4 = check_joins(_sales_tables("zoe"), SALES_JOINS)
    assert r4.status == FAIL
    assert any("zoe" in v.message for v in r4.violations)


def test_r4_empty_secondary_fails():
    tables = _sales_tables()
    tables["fake_table_2"] = []
    r4 = check_joins(tables, SALES_JOINS)
    assert r4.status == FAIL and "empty table" in r4.violations[0].message


# -- r5 ---------------------------------------------------------------------

def test_verdict_parse_order():
    assert parse_verdict("NOT PRESENT").verdict == JudgeVerdict.NOT_PRESENT
    assert parse_verdict("not valid: dates are in 2023").verdict == JudgeVerdict.NOT_VALID
    assert parse_verdict("not valid: dates are in 2023").reason == "dates are in 2023"
    assert parse_verdict("VALID").verdict == JudgeVerdict.VALID
    assert parse_verdict("The data is VALID.").ok
    with pytest.raises(VerdictError):
        parse_verdict("maybe")


def test_currency_coverage_is_valid():
    s = fixture_schemas("balance")
    a = analyze(fixture_text("balance_function.sql"), s)
    rows = [{"private_info": {"running_balance": {"currency": EnumVal(c)}}} for c in ("USD", "GBP", "EUR", "CHF")]
    violations, _, _ = judge_table("fake_table", rows, [], a.coverage, s, "fake_table")
    assert violations == []
    short = rows[:2]
    violations, _, _ = judge_table("fake_table", short, [], a.coverage, s, "fake_table")
    assert violations and violations[0].message.startswith("NOT VALID")


def test_absent_constrained_column_is_not_present():
    verdict, _ = judge_constraint([{"other": 1}], parse_expression("fiscal_year = 2025"))
    assert verdict.verdict == JudgeVerdict.NOT_PRESENT


def test_rows_from_the_wrong_year_are_not_valid():
    rows = [{"d": date(2023, 1, 1) + timedelta(days=40 * i)} for i in range(5)]
    verdict, failing = judge_constraint(rows, parse_expression("d BETWEEN '2025-01-01' AND '2025-12-31'"))
    assert verdict.verdict == JudgeVerdict.NOT_VALID and failing == list(range(5))


class _Scripted:
    def __init__(self, reply):
        self.reply = reply
        self.prompts = []

    def complete(self, system, user):
        self.prompts.append(user)
        return self.reply


def test_unevaluable_residue_goes_to_the_backend_judge():
    pred = parse_expression("MY_UDF(n) = 1")
    backend = _Scripted("NOT VALID: n is never a favourite number")
    s = parse_schema("message t {\n  int64 n = 1;\n}")
    violations, _, _ = judge_table("t", [{"n": 1}], [pred], [], s, "t", BackendJudge(backend))
    assert "n is never a favourite number" in violations[0].message
    assert "MY_UDF(n)=1" in backend.prompts[0] and "n: 1" in backend.prompts[0]
    violations, notes, _ = judge_table("t", [{"n": 1}], [pred], [], s, "t", None)
    assert violations == [] and notes


# -- full pass --------------------------------------------------------------

def test_validate_all_evaluates_both_sales_join_pairs():
    a = analyze(fixture_text("sales_join.sql"), SALES)
    tables = _sales_tables()
    tables["fake_table_1"][0]["deals_closed"] = 1
    tables["fake_table_2"][0]["capacity_hours"] = 1.5
    report = validate_all(tables, SALES, a)
    assert report.results["r4"].status == PASS
    tables["fake_table_2"][0]["week_start_date"] = "2023-01-09"
    report = validate_all(tables, SALES, a)
    assert report.results["r4"].status == FAIL
    assert any("week_start_date" in v.message for v in report.results["r4"].violations)


def test_validate_all_catches_a_column_that_escaped_the_filter():
    a = analyze(fixture_text("sales_join.sql"), SALES)
    tables = _sales_tables()
    tables["fake_table_1"][0].update(deals_closed=1, bonus_points=3)
    tables["fake_table_2"][0]["capacity_hours"] = 1.5
    report = validate_all(tables, SALES, a)
    assert report.results["r2"].status == FAIL
    assert "bonus_points" in report.to_text()
    assert not report.passed and report.failing_tables() == {"fake_table_1"}


def test_report_json_is_stable():
    a = analyze(fixture_text("sales_join.sql"), SALES)
    assert validate_all(_sales_tables(), SALES, a).to_json() == validate_all(_sales_tables(), SALES, a).to_json()


def test_nan_is_not_an_int():
    s = parse_schema("message t {\n  int64 n = 1;\n}")
    _, r2 = check_structure([{"n": math.nan}], s, "t")
    assert r2.status == FAIL
