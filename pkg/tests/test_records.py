from __future__ import annotations

import math
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_schemas
from sqlmockgen.errors import FormatError, SerializationError
from sqlmockgen.records import parse_json, parse_rows, parse_textproto, serialize_rows
from sqlmockgen.schema import parse_schema
from sqlmockgen.values import EnumVal, Timestamp

SCHEMA = parse_schema("""
enum Color {
  RED = 0;
  BLUE = 1;
}

message Leaf {
  string note = 1;
  Color color = 2;
  repeated int64 counts = 3;
}

message Mid {
  double ratio = 1;
  Leaf leaf = 2;
  repeated Leaf leaves = 3;
}

message t {
  int64 id = 1;
  string name = 2;
  bool flag = 3;
  bytes blob = 4;
  date day = 5;
  timestamp at = 6;
  Mid mid = 7;
  repeated string tags = 8;
}
""")

texts = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FFF, blacklist_categories=("Cs",)), max_size=12)
floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


def _optional(d, key, strategy, draw):
    if draw(st.booleans()):
        d[key] = draw(strategy)


@st.composite
def leaves(draw):
    d = {}
    _optional(d, "note", texts, draw)
    _optional(d, "color", st.sampled_from([EnumVal("RED"), EnumVal("BLUE")]), draw)
    _optional(d, "counts", st.lists(st.integers(-2**62, 2**62), min_size=1, max_size=3), draw)
    return d


@st.composite
def rows(draw):
    # an empty top-level record has no textproto rendering, so every row carries an id
    d = {"id": draw(st.integers(-2**62, 2**62))}
    _optional(d, "name", texts, draw)
    _optional(d, "flag", st.booleans(), draw)
    _optional(d, "blob", st.binary(max_size=6), draw)
    _optional(d, "day", st.dates(date(1900, 1, 1), date(2200, 12, 31)), draw)
    _optional(d, "at", st.integers(-2**40, 2**40).map(Timestamp), draw)
    if draw(st.booleans()):
        mid = {}
        _optional(mid, "ratio", floats, draw)
        _optional(mid, "leaf", leaves(), draw)
        _optional(mid, "leaves", st.lists(leaves(), min_size=1, max_size=2), draw)
        d["mid"] = mid
    _optional(d, "tags", st.lists(texts, min_size=1, max_size=3), draw)
    return d


@settings(max_examples=150, deadline=None)
@given(st.lists(rows(), max_size=4), st.sampled_from(["textproto", "json"]))
def test_serialize_parse_round_trip(data, fmt):
    text = serialize_rows(SCHEMA, "t", data, fmt)
    parsed = parse_rows(SCHEMA, "t", text, fmt)
    assert parsed.fragments == []
    assert parsed.rows == data
    assert serialize_rows(SCHEMA, "t", parsed.rows, fmt) == text


def test_textproto_shape_is_field_per_line_with_nested_blocks():
    text = serialize_rows(SCHEMA, "t", [{"id": 1, "mid": {"leaf": {"color": EnumVal("RED")}}}])
    assert text.splitlines() == ["id: 1", "mid {", "  leaf {", "    color: RED", "  }", "}"]


def test_sniffing_detects_json():
    assert parse_rows(SCHEMA, "t", '[{"id": 4}]').rows == [{"id": 4}]
    assert parse_rows(SCHEMA, "t", "id: 4\n").rows == [{"id": 4}]


def test_unknown_key_cannot_be_serialized():
    with pytest.raises(SerializationError):
        serialize_rows(SCHEMA, "t", [{"nope": 1}])


def test_invalid_json_is_a_format_error():
    with pytest.raises(FormatError):
        parse_json(SCHEMA, "t", "[{")


def test_textproto_keeps_unknown_keys_for_validation():
    rows_ = parse_textproto(SCHEMA, "t", "id: 1\nbogus: 2\n").rows
    assert rows_ == [{"id": 1, "bogus": 2}]


def test_special_floats_survive_textproto():
    text = serialize_rows(SCHEMA, "t", [{"mid": {"ratio": math.inf}}])
    assert parse_textproto(SCHEMA, "t", text).rows[0]["mid"]["ratio"] == math.inf


def test_balance_textproto_parses_enum_three_levels_down():
    s = fixture_schemas("balance")
    text = "private_info {\n  running_balance {\n    currency: GBP\n    amount: 2.5\n  }\n}\n"
    row = parse_textproto(s, "fake_table", text).rows[0]
    assert row["private_info"]["running_balance"]["currency"] == EnumVal("GBP")
