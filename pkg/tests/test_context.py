from __future__ import annotations

import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_schemas
from sqlmockgen.context import (
    MAX_GROUP_SIZE, Correlation, OneOf, Range, context_from_dict, fill_annotations, group_columns,
    merge_annotations, parse_value_spec,
)
from sqlmockgen.errors import ContextError
from sqlmockgen.generation.backends import Limiter
from sqlmockgen.generation.deterministic import DeterministicBackend
from sqlmockgen.schema import parse_schema


def _flat(n: int, annotated: int = 0, kind: str = "int64") -> str:
    lines = []
    for i in range(n):
        if i < annotated:
            lines.append(f"  // column {i}")
        lines.append(f"  {kind} c{i:02d} = {i + 1};")
    return "message flat {\n" + "\n".join(lines) + "\n}\n"


def test_doc_text_is_attached():
    s = parse_schema("message c {\n  bool terminated_by_clm_system = 1;\n}")
    text = "If the contract was terminated, this field names the lifecycle system."
    merged = merge_annotations(s, "c", {"terminated_by_clm_system": text})
    assert merged.resolve_path("c", "terminated_by_clm_system").annotation == text


def test_empty_docs_leave_schema_unchanged():
    s = fixture_schemas("balance")
    assert merge_annotations(s, "fake_table", {}) is s


def test_nested_doc_overrides_inline_comment():
    s = fixture_schemas("balance")
    path = "private_info.running_balance.currency"
    assert s.resolve_path("fake_table", path).annotation == "ISO currency code of the balance."
    merged = merge_annotations(s, "fake_table", {path: "override"})
    assert merged.resolve_path("fake_table", path).annotation == "override"


def test_unknown_doc_key_is_ignored():
    s = fixture_schemas("sales")
    assert merge_annotations(s, "fake_table_1", {"nope": "x"}) is s


def test_stub_annotation_under_deterministic_backend():
    s = fixture_schemas("sales")
    filled, count = fill_annotations(s, "fake_table_2", DeterministicBackend())
    f = filled.resolve_path("fake_table_2", "username")
    assert f.annotation == "String field username" and f.machine_annotation
    # week_start_date already carries an inline comment, so a bare copy shows the stub form
    bare = parse_schema("message w {\n  date week_start_date = 1;\n}")
    out, n = fill_annotations(bare, "w", DeterministicBackend())
    assert n == 1
    assert out.resolve_path("w", "week_start_date").annotation == "Date field week_start_date"
    assert count == 2


def test_fully_annotated_schema_unchanged():
    s = parse_schema(_flat(3, annotated=3))
    out, n = fill_annotations(s, "flat", DeterministicBackend())
    assert n == 0 and out is s


def test_gap_count_oracle_on_72_fields():
    s = parse_schema(_flat(72, annotated=42))
    gaps = sum(1 for f in s.get("flat").fields if not f.annotation)
    out, n = fill_annotations(s, "flat", DeterministicBackend())
    assert gaps == 30 and n == 30
    assert sum(1 for f in out.get("flat").fields if f.machine_annotation) == 30


class _SlowAnnotator:
    def __init__(self):
        self.lock = threading.Lock()
        self.current = self.peak = 0

    def annotate(self, message, f):
        with self.lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
        time.sleep(0.002)
        with self.lock:
            self.current -= 1
        return "x"


def test_fill_annotations_respects_a_shared_limiter():
    backend = _SlowAnnotator()
    fill_annotations(parse_schema(_flat(40)), "flat", backend, max_workers=20, limiter=Limiter(4))
    assert 1 <= backend.peak <= 4


def test_contract_dates_grouped_with_ordering_note():
    s = fixture_schemas("contracts")
    groups, warnings = group_columns(s, "contracts")
    assert warnings == []
    (dated,) = [g for g in groups if g.hinted]
    assert dated.correlation_note == "dates must be mutually consistent: created ≤ effective ≤ closed"
    assert [str(p) for p in dated.ordering] == [
        "contract_created_date", "contract_effective_date", "contract_closed_date"]


def test_explicit_hint_wins_over_prefix():
    s = fixture_schemas("contracts")
    hint = Correlation(("contract_created_date", "contract_termination_date"), "created before termination")
    groups, _ = group_columns(s, "contracts", [hint])
    hinted = [g for g in groups if g.hinted]
    assert hinted[0].correlation_note == "created before termination"


def test_31_independent_scalars_pack_30_plus_1():
    groups, _ = group_columns(parse_schema(_flat(31)), "flat")
    assert [len(g.members) for g in groups] == [30, 1]


def test_all_nested_schema_has_no_groups():
    s = parse_schema("message a {\n  int64 x = 1;\n}\nmessage b {\n  a one = 1;\n  repeated a many = 2;\n}")
    assert group_columns(s, "b")[0] == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), min_size=0, max_size=70))
def test_groups_partition_the_scalars(prefixes):
    lines = [f"  int64 {p}_{i} = {i + 1};" for i, p in enumerate(prefixes)]
    s = parse_schema("message t {\n" + "\n".join(lines) + ("\n" if lines else "") + "}")
    groups, _ = group_columns(s, "t")
    members = [str(m) for g in groups for m in g.members]
    assert sorted(members) == sorted(f.name for f in s.get("t").fields)
    assert all(1 <= len(g.members) <= MAX_GROUP_SIZE for g in groups)


def test_value_specs_and_context_validation():
    assert isinstance(parse_value_spec(["a", "b"]), OneOf)
    assert isinstance(parse_value_spec({"range": [1, 5]}), Range)
    with pytest.raises(ContextError):
        context_from_dict({"row_count": 0})
    with pytest.raises(ContextError):
        context_from_dict([])
    ctx = context_from_dict({"row_count": 7, "correlations": [{"columns": ["a", "b"], "ordering": ["a", "b"]}]})
    assert ctx.row_count == 7 and ctx.correlations[0].ordering == ("a", "b")
