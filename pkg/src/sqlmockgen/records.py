"""Row serialization against a schema: textproto-like text and JSON.

Textproto documents hold one row per block, rows separated by a line
containing only ``---``.  Parsing is lenient: values are coerced by the
schema when a field is known, unknown fields are kept with a best-effort
type so later stages can report them, and unparseable fragments are
collected instead of aborting the whole document.
"""

from __future__ import annotations

import base64
import codecs
import json
import math
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Any

from .errors import FormatError, SerializationError
from .schema import EnumKind, FieldDef, MessageKind, Primitive, PrimitiveKind, SchemaDef, SchemaSet
from .values import EnumVal, Timestamp, format_timestamp, parse_date, parse_timestamp

ROW_SEPARATOR = "---"


# ---------------------------------------------------------------------------
# serialization


def _schema(schemas: SchemaSet, root: str | SchemaDef) -> SchemaDef:
    return schemas.get(root) if isinstance(root, str) else root


def _check_keys(schema: SchemaDef, record: dict, where: str):
    for key in record:
        if schema.field(key) is None:
            raise SerializationError(f"column {where}{key!r} is not declared in message {schema.name!r}")


def _quote(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _quote_bytes(data: bytes) -> str:
    out = []
    for b in data:
        ch = chr(b)
        if ch == '"' or ch == "\\":
            out.append("\\" + ch)
        elif 32 <= b < 127:
            out.append(ch)
        else:
            out.append(f"\\x{b:02x}")
    return '"' + "".join(out) + '"'


def _timestamp_value(ts: Timestamp) -> str | int | float:
    """ISO text, or bare epoch seconds when the instant has no calendar rendering."""
    try:
        return format_timestamp(ts)
    except OverflowError:
        return ts.seconds


def _scalar_text(f: FieldDef, value: Any) -> str:
    if isinstance(value, EnumVal):
        return value.name
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, bytes):
        return _quote_bytes(value)
    if isinstance(value, Timestamp):
        text = _timestamp_value(value)
        return _quote(text) if isinstance(text, str) else repr(text)
    if isinstance(value, date):
        return _quote(value.isoformat())
    if isinstance(value, str):
        if isinstance(f.kind, EnumKind) and re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", value):
            return value
        return _quote(value)
    raise SerializationError(f"cannot serialize {type(value).__name__} value for field {f.name!r}")


def _emit_record(schemas: SchemaSet, schema: SchemaDef, record: dict, indent: str, out: list[str], where: str):
    _check_keys(schema, record, where)
    for f in schema.fields:
        if f.deprecated or f.name not in record:
            continue
        value = record[f.name]
        if value is None:
            continue
        items = value if isinstance(value, list) else [value]
        for item in items:
            if item is None:
                continue
            if isinstance(item, dict):
                nested = schemas.messages.get(f.kind.ref) if isinstance(f.kind, MessageKind) else None
                out.append(f"{indent}{f.name} {{")
                if nested is None:
                    raise SerializationError(f"field {where}{f.name} holds a record but is not a resolved message")
                _emit_record(schemas, nested, item, indent + "  ", out, f"{where}{f.name}.")
                out.append(f"{indent}}}")
            else:
                out.append(f"{indent}{f.name}: {_scalar_text(f, item)}")


def _json_value(schemas: SchemaSet, f: FieldDef, value: Any, where: str):
    if isinstance(value, list):
        return [_json_value(schemas, f, v, where) for v in value]
    if isinstance(value, dict):
        nested = schemas.messages.get(f.kind.ref) if isinstance(f.kind, MessageKind) else None
        if nested is None:
            raise SerializationError(f"field {where}{f.name} holds a record but is not a resolved message")
        return _json_record(schemas, nested, value, f"{where}{f.name}.")
    if isinstance(value, EnumVal):
        return value.name
    if isinstance(value, bytes):
        return base64.b64encode(value).decode("ascii")
    if isinstance(value, Timestamp):
        return _timestamp_value(value)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return str(value)
    return value


def _json_record(schemas: SchemaSet, schema: SchemaDef, record: dict, where: str = "") -> dict:
    _check_keys(schema, record, where)
    out = {}
    for f in schema.fields:
        if f.deprecated or f.name not in record or record[f.name] is None:
            continue
        out[f.name] = _json_value(schemas, f, record[f.name], where)
    return out


def serialize_rows(schemas: SchemaSet, root: str | SchemaDef, rows: list[dict], fmt: str = "textproto") -> str:
    """Render rows deterministically in schema declaration order."""
    schema = _schema(schemas, root)
    if fmt == "json":
        if not rows:
            return "[]\n"
        return json.dumps([_json_record(schemas, schema, r) for r in rows], indent=2, ensure_ascii=False) + "\n"
    if fmt != "textproto":
        raise ValueError(f"unknown format {fmt!r}")
    blocks = []
    for row in rows:
        lines: list[str] = []
        _emit_record(schemas, schema, row, "", lines, "")
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return f"\n{ROW_SEPARATOR}\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# coercion


@dataclass(frozen=True)
class Raw:
    """A scalar token before schema coercion: ``kind`` is num, str or ident."""

    kind: str
    text: str


def _untyped(raw: Raw) -> Any:
    if raw.kind == "num":
        return _number(raw.text)
    if raw.kind == "ident":
        if raw.text in ("true", "false"):
            return raw.text == "true"
        return raw.text
    return raw.text


def _number(text: str) -> int | float:
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    lowered = text.lower()
    if lowered in ("nan", "inf", "-inf", "+inf", "infinity", "-infinity"):
        return float(lowered.replace("infinity", "inf"))
    return float(text)


def coerce_scalar(f: FieldDef, raw: Raw | Any) -> Any:
    """Convert a token (or a native JSON value) to the field's value type.

    Values that do not fit are returned unchanged so validation can report
    them instead of losing information here.
    """
    if not isinstance(raw, Raw):
        raw = _raw_from_native(raw)
        if not isinstance(raw, Raw):
            return raw
    kind = f.kind
    if isinstance(kind, EnumKind):
        if raw.kind in ("ident", "str"):
            return EnumVal(raw.text)
        return _untyped(raw)
    if isinstance(kind, MessageKind):
        return _untyped(raw)
    p = kind.type
    try:
        if p is Primitive.INT64:
            if raw.kind in ("num", "str") and re.fullmatch(r"\s*[+-]?\d+\s*", raw.text):
                return int(raw.text)
            return _untyped(raw)
        if p is Primitive.FLOAT64:
            if raw.kind == "num" or (raw.kind == "str" and re.fullmatch(r"\s*[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*", raw.text)):
                return float(_number(raw.text.strip()))
            if raw.kind == "ident" and raw.text.lower() in ("nan", "inf", "-inf"):
                return float(raw.text.lower())
            return _untyped(raw)
        if p is Primitive.BOOL:
            if raw.kind in ("ident", "str") and raw.text.lower() in ("true", "false"):
                return raw.text.lower() == "true"
            return _untyped(raw)
        if p is Primitive.STRING:
            return raw.text if raw.kind != "num" else _number(raw.text)
        if p is Primitive.BYTES:
            if raw.kind == "str":
                return raw.text.encode("latin-1", errors="replace") if isinstance(raw.text, str) else raw.text
            return _untyped(raw)
        if p is Primitive.DATE:
            if raw.kind == "str":
                return parse_date(raw.text)
            return _untyped(raw)
        if p is Primitive.TIMESTAMP:
            if raw.kind == "str":
                return parse_timestamp(raw.text)
            if raw.kind == "num":
                return Timestamp(_number(raw.text))
            return _untyped(raw)
    except (ValueError, OverflowError):
        return raw.text
    return _untyped(raw)


def _raw_from_native(value: Any) -> Raw | Any:
    if isinstance(value, bool) or value is None or isinstance(value, (list, dict)):
        return value
    if isinstance(value, (int, float)):
        return Raw("num", repr(value))
    if isinstance(value, str):
        return Raw("str", value)
    return value


def _coerce_json_bytes(f: FieldDef, value: Any) -> Any:
    if isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.BYTES and isinstance(value, str):
        try:
            return base64.b64decode(value, validate=True)
        except ValueError:
            return value.encode("utf-8")
    return None


def coerce_record(schemas: SchemaSet, schema: SchemaDef | None, record: dict) -> dict:
    """Coerce a native (JSON-decoded) record against ``schema``."""
    out = {}
    for key, value in record.items():
        f = schema.field(key) if schema is not None else None
        out[key] = _coerce_native(schemas, f, value)
    return out


def _coerce_native(schemas: SchemaSet, f: FieldDef | None, value: Any) -> Any:
    if isinstance(value, list):
        return [_coerce_native(schemas, f, v) for v in value]
    if isinstance(value, dict):
        nested = None
        if f is not None and isinstance(f.kind, MessageKind):
            nested = schemas.messages.get(f.kind.ref)
        return coerce_record(schemas, nested, value)
    if f is None:
        return value
    as_bytes = _coerce_json_bytes(f, value)
    if as_bytes is not None:
        return as_bytes
    return coerce_scalar(f, value)


# ---------------------------------------------------------------------------
# textproto parsing

_TP_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r,;]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*|//[^\n]*)
  | (?P<sep>^---[ \t]*$)
  | (?P<str>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<num>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?(?![A-Za-z_]))
  | (?P<ident>[+-]?[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<sym>[{}:\[\]<>])
    """,
    re.VERBOSE | re.MULTILINE,
)


@dataclass
class _TpTok:
    kind: str
    text: str
    line: int


def _unquote(token: str) -> str:
    body = token[1:-1]
    if "\\" not in body:
        return body
    if token[0] == '"':
        try:
            return json.loads(token)
        except ValueError:
            pass
    return codecs.decode(body.encode("latin-1", errors="backslashreplace"), "unicode_escape")


def _unquote_bytes(token: str) -> bytes:
    body = token[1:-1]
    return codecs.escape_decode(body.encode("utf-8"))[0]


def _tp_tokens(text: str) -> tuple[list[_TpTok], list[str]]:
    tokens: list[_TpTok] = []
    bad: list[str] = []
    pos, line = 0, 1
    while pos < len(text):
        m = _TP_TOKEN.match(text, pos)
        if not m:
            end = text.find("\n", pos)
            end = len(text) if end < 0 else end
            bad.append(f"line {line}: unrecognized text {text[pos:end][:80]!r}")
            pos = end
            continue
        kind = m.lastgroup
        if kind == "nl":
            line += 1
        elif kind not in ("ws", "comment"):
            tokens.append(_TpTok(kind, m.group(), line))
        pos = m.end()
    return tokens, bad


@dataclass
class ParseResult:
    rows: list[dict] = field(default_factory=list)
    fragments: list[str] = field(default_factory=list)


class _TextprotoReader:
    def __init__(self, schemas: SchemaSet, schema: SchemaDef, text: str):
        self.schemas = schemas
        self.schema = schema
        self.tokens, self.fragments = _tp_tokens(text)
        self.pos = 0

    def peek(self) -> _TpTok | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _TpTok:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def skip_to_line_end(self, line: int):
        while self.peek() is not None and self.peek().line == line and self.peek().text not in ("}",):
            self.pos += 1

    def read_rows(self) -> list[dict]:
        rows: list[dict] = []
        current: dict = {}
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "sep":
                self.next()
                if current:
                    rows.append(current)
                current = {}
                continue
            if tok.kind == "sym" and tok.text == "}":
                self.fragments.append(f"line {tok.line}: unmatched '}}'")
                self.next()
                continue
            if tok.kind != "ident":
                self.fragments.append(f"line {tok.line}: expected a field name, found {tok.text[:80]!r}")
                self.next()
                self.skip_to_line_end(tok.line)
                continue
            # a wrapper block whose name is not a field holds one row
            name = tok.text
            after = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            after2 = self.tokens[self.pos + 2] if self.pos + 2 < len(self.tokens) else None
            opens_block = after is not None and (
                after.text in ("{", "<") or (after.text == ":" and after2 is not None and after2.text in ("{", "<"))
            )
            if self.schema.field(name) is None and opens_block and not current:
                self.next()
                if self.peek().text == ":":
                    self.next()
                row = self.read_block(self.schema, self.next().text)
                rows.append(row)
                continue
            f = self.schema.field(name)
            if f is not None and not f.repeated and name in current:
                rows.append(current)
                current = {}
            self.read_field(self.schema, current)
        if current:
            rows.append(current)
        return rows

    def read_block(self, schema: SchemaDef | None, opener: str) -> dict:
        closer = "}" if opener == "{" else ">"
        record: dict = {}
        while True:
            tok = self.peek()
            if tok is None:
                self.fragments.append(f"unterminated block (missing {closer!r})")
                return record
            if tok.text == closer:
                self.next()
                return record
            if tok.kind != "ident":
                self.fragments.append(f"line {tok.line}: expected a field name, found {tok.text[:80]!r}")
                self.next()
                continue
            self.read_field(schema, record)

    def read_field(self, schema: SchemaDef | None, record: dict):
        name_tok = self.next()
        name = name_tok.text
        f = schema.field(name) if schema is not None else None
        tok = self.peek()
        if tok is None:
            self.fragments.append(f"line {name_tok.line}: field {name!r} has no value")
            return
        if tok.text == ":":
            self.next()
            tok = self.peek()
            if tok is None:
                self.fragments.append(f"line {name_tok.line}: field {name!r} has no value")
                return
        if tok.text in ("{", "<"):
            self.next()
            nested = None
            if f is not None and isinstance(f.kind, MessageKind):
                nested = self.schemas.messages.get(f.kind.ref)
            value: Any = self.read_block(nested, tok.text)
            self._store(record, name, f, value)
            return
        if tok.text == "[":
            self.next()
            items = []
            while self.peek() is not None and self.peek().text != "]":
                inner = self.peek()
                if inner.text in ("{", "<"):
                    self.next()
                    nested = None
                    if f is not None and isinstance(f.kind, MessageKind):
                        nested = self.schemas.messages.get(f.kind.ref)
                    items.append(self.read_block(nested, inner.text))
                else:
                    items.append(self._scalar(f, self.next()))
            if self.peek() is None:
                self.fragments.append(f"line {name_tok.line}: unterminated list for {name!r}")
            else:
                self.next()
            for item in items:
                self._store(record, name, f, item)
            if not items and f is not None and f.repeated:
                record.setdefault(name, [])
            return
        if tok.kind in ("num", "str", "ident") and tok.line == name_tok.line or tok.kind in ("num", "str"):
            self.next()
            self._store(record, name, f, self._scalar(f, tok))
            return
        self.fragments.append(f"line {name_tok.line}: field {name!r} has no value")

    def _scalar(self, f: FieldDef | None, tok: _TpTok) -> Any:
        if tok.kind == "str":
            if f is not None and isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.BYTES:
                try:
                    return _unquote_bytes(tok.text)
                except ValueError:
                    return tok.text[1:-1].encode("utf-8")
            raw = Raw("str", _unquote(tok.text))
        elif tok.kind == "num":
            raw = Raw("num", tok.text)
        elif tok.kind == "ident":
            raw = Raw("ident", tok.text)
        else:
            self.fragments.append(f"line {tok.line}: unexpected {tok.text!r}")
            return None
        if f is None:
            return _untyped(raw)
        return coerce_scalar(f, raw)

    def _store(self, record: dict, name: str, f: FieldDef | None, value: Any):
        if f is not None and f.repeated:
            record.setdefault(name, [])
            if not isinstance(record[name], list):
                record[name] = [record[name]]
            record[name].append(value)
        elif name in record:
            if f is None:
                existing = record[name]
                record[name] = (existing if isinstance(existing, list) else [existing]) + [value]
            else:
                self.fragments.append(f"field {name!r} repeated more than once; keeping the last value")
                record[name] = value
        else:
            record[name] = value


def parse_textproto(schemas: SchemaSet, root: str | SchemaDef, text: str) -> ParseResult:
    schema = _schema(schemas, root)
    reader = _TextprotoReader(schemas, schema, text)
    rows = reader.read_rows()
    return ParseResult(rows, reader.fragments)


def parse_json(schemas: SchemaSet, root: str | SchemaDef, text: str) -> ParseResult:
    schema = _schema(schemas, root)
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    if isinstance(doc, dict) and isinstance(doc.get("rows"), list):
        doc = doc["rows"]
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise FormatError(f"JSON document must be an object or a list of objects, got {type(doc).__name__}")
    result = ParseResult()
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            result.fragments.append(f"element {i} is not an object: {json.dumps(item)[:80]}")
            continue
        result.rows.append(coerce_record(schemas, schema, item))
    return result


def parse_rows(schemas: SchemaSet, root: str | SchemaDef, text: str, fmt: str | None = None) -> ParseResult:
    """Parse a serialized document; ``fmt`` None sniffs JSON by its first character."""
    if fmt is None:
        fmt = "json" if text.lstrip()[:1] in ("[", "{") else "textproto"
    if fmt == "json":
        return parse_json(schemas, root, text)
    if fmt == "textproto":
        return parse_textproto(schemas, root, text)
    raise ValueError(f"unknown format {fmt!r}")
