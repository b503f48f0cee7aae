from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_schemas, fixture_text
from sqlmockgen.errors import PathResolutionError, SchemaError, SchemaSyntaxError
from sqlmockgen.records import serialize_rows
from sqlmockgen.schema import (
    ColumnPath, EnumKind, MessageKind, Primitive, PrimitiveKind, describe_subset, parse_schema, serialize_schema,
)


def test_balance_currency_resolves_to_enum_three_levels_down():
    s = fixture_schemas("balance")
    f = s.resolve_path("fake_table", "private_info.running_balance.currency")
    assert isinstance(f.kind, EnumKind)
    assert {"USD", "GBP", "EUR"} <= set(f.kind.values)
    depth = max(len(p) for p, _ in s.walk("fake_table"))
    assert depth == 3


def test_inline_and_leading_comments_become_annotations():
    s = parse_schema("message t {\n  // leading text\n  int64 a = 1;\n  string b = 2; // trailing text\n}\n")
    a, b = s.get("t").fields
    assert a.annotation == "leading text"
    assert b.annotation == "trailing text"


def test_empty_message_is_valid():
    assert parse_schema("message e {}").get("e").fields == ()


def test_single_segment_path_on_flat_schema():
    s = fixture_schemas("sales")
    assert s.resolve_path("fake_table_1", "username").name == "username"


def test_duplicate_field_and_message_names_rejected():
    with pytest.raises(SchemaError):
        parse_schema("message a {\n  int64 x = 1;\n  int64 x = 2;\n}")
    with pytest.raises(SchemaError):
        parse_schema("message a {}\nmessage a {}")


def test_syntax_error_reports_line_and_column():
    with pytest.raises(SchemaSyntaxError) as info:
        parse_schema("message a {\n  int64 = 1;\n}")
    assert (info.value.line, info.value.column) == (2, 9)


def test_unresolved_reference_kept_at_parse_time_and_named_on_resolution():
    s = parse_schema("message a {\n  Missing m = 1;\n}")
    assert s.get("a").fields[0].kind == MessageKind("Missing")
    with pytest.raises(PathResolutionError) as info:
        s.resolve_path("a", "m.x")
    assert "Missing" in str(info.value)


def test_path_entering_a_primitive_fails():
    s = fixture_schemas("sales")
    with pytest.raises(PathResolutionError):
        s.resolve_path("fake_table_1", "username.first")


def test_recursion_requires_optional_and_walk_honours_cap():
    with pytest.raises(SchemaError):
        parse_schema("message n {\n  n child = 1;\n}")
    s = parse_schema("message n {\n  string label = 1;\n  optional n child = 2;\n}")
    labels = [p for p, f in s.walk("n", recursion_cap=3) if p.leaf == "label"]
    # the root counts as the first occurrence
    assert [len(p) for p in labels] == [1, 2, 3]


def test_wide_fixture_shape_and_round_trip():
    s = fixture_schemas("wide72")
    fields = s.get("wide_table").fields
    assert len(fields) == 72
    nested = [f for f in fields if isinstance(f.kind, MessageKind)]
    assert len(nested) == 64
    assert len([f for f in fields if f.repeated and not isinstance(f.kind, MessageKind)]) == 1
    assert max(len(p) for p, _ in s.walk("wide_table")) == 5
    once = serialize_schema(s)
    assert serialize_schema(parse_schema(once)) == once


def test_deprecated_fields_never_serialized():
    s = parse_schema("message a {\n  int64 x = 1 [deprecated = true];\n  int64 y = 2;\n}")
    text = serialize_rows(s, "a", [{"y": 3}])
    assert "x" not in text.replace("y", "")


def test_describe_subset_inlines_annotations_and_referenced_types():
    s = fixture_schemas("balance")
    text = describe_subset(s, "fake_table", ["private_info"])
    assert "message PrivateInfo" in text and "message Balance" in text and "enum Currency" in text
    assert "ISO currency code" in text
    assert "account_name" not in text


# -- generated schemas ------------------------------------------------------

SCALARS = ["int64", "double", "bool", "string", "bytes", "date", "timestamp"]


@st.composite
def schema_sources(draw):
    n = draw(st.integers(1, 4))
    blocks = ["enum Color {\n  RED = 0;\n  BLUE = 1;\n}"]
    for i in range(n):
        count = draw(st.integers(0, 5))
        lines = []
        for j in range(count):
            choices = SCALARS + ["Color"] + [f"m{k}" for k in range(i + 1, n)]
            t = draw(st.sampled_from(choices))
            rep = "repeated " if draw(st.booleans()) else ""
            comment = draw(st.sampled_from(["", "  // note\n"]))
            lines.append(f"{comment}  {rep}{t} f{j} = {j + 1};")
        blocks.append(f"message m{i} {{\n" + "\n".join(lines) + ("\n" if lines else "") + "}")
    return "\n\n".join(blocks) + "\n"


@settings(max_examples=60, deadline=None)
@given(schema_sources())
def test_parse_serialize_is_a_fixpoint(src):
    once = serialize_schema(parse_schema(src))
    assert serialize_schema(parse_schema(once)) == once


def _brute_paths(s, message, prefix=()):
    out = []
    for f in s.get(message).fields:
        path = prefix + (f.name,)
        out.append(path)
        if isinstance(f.kind, MessageKind):
            out.extend(_brute_paths(s, f.kind.ref, path))
    return out


@settings(max_examples=60, deadline=None)
@given(schema_sources(), st.data())
def test_resolve_path_matches_exhaustive_enumeration(src, data):
    s = parse_schema(src)
    expected = set(_brute_paths(s, "m0"))
    walked = {p.segments for p, _ in s.walk("m0", recursion_cap=10)}
    assert walked == expected
    for segments in expected:
        s.resolve_path("m0", ColumnPath(segments))
    if expected:
        base = data.draw(st.sampled_from(sorted(expected)))
        with pytest.raises(PathResolutionError):
            s.resolve_path("m0", ColumnPath(base + ("no_such_field",)))


def test_scalar_keywords_map_to_primitives():
    s = parse_schema("message a {\n  int32 i = 1;\n  float f = 2;\n  google.protobuf.Timestamp t = 3;\n}")
    kinds = [f.kind for f in s.get("a").fields]
    assert kinds == [PrimitiveKind(Primitive.INT64), PrimitiveKind(Primitive.FLOAT64),
                     PrimitiveKind(Primitive.TIMESTAMP)]


def test_fixture_files_parse():
    for name in ("balance", "sales", "tasks", "quarterly", "wide72", "contracts"):
        assert fixture_schemas(name).messages
    assert fixture_text("sales_join.sql").startswith("SELECT")
