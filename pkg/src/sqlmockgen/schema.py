"""Nested schema IR and the proto-like schema DSL.

The DSL is a small subset of proto2/proto3::

    // Account ledger row.
    message fake_table {
      int64 id = 1;                 // primary key
      PrivateInfo private_info = 2;
      repeated string tags = 3;
      string legacy_code = 4 [deprecated = true];
    }

    enum Currency { USD = 0; GBP = 1; EUR = 2; }

Line comments directly above a field, or trailing on the field's line,
become that field's annotation.  Type names that resolve to nothing are
kept as unresolved message references instead of being rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Union

from .errors import PathResolutionError, SchemaError, SchemaSyntaxError

MACHINE_TAG = "[machine-generated]"
DEFAULT_RECURSION_CAP = 3


class Primitive(str, Enum):
    INT64 = "int64"
    FLOAT64 = "double"
    BOOL = "bool"
    STRING = "string"
    BYTES = "bytes"
    DATE = "date"
    TIMESTAMP = "timestamp"

    @property
    def label(self) -> str:
        return _PRIMITIVE_LABELS[self]


_PRIMITIVE_LABELS = {
    Primitive.INT64: "Int64",
    Primitive.FLOAT64: "Float64",
    Primitive.BOOL: "Bool",
    Primitive.STRING: "String",
    Primitive.BYTES: "Bytes",
    Primitive.DATE: "Date",
    Primitive.TIMESTAMP: "Timestamp",
}

SCALAR_KEYWORDS = {
    "double": Primitive.FLOAT64,
    "float": Primitive.FLOAT64,
    "int32": Primitive.INT64,
    "int64": Primitive.INT64,
    "uint32": Primitive.INT64,
    "uint64": Primitive.INT64,
    "sint32": Primitive.INT64,
    "sint64": Primitive.INT64,
    "fixed32": Primitive.INT64,
    "fixed64": Primitive.INT64,
    "sfixed32": Primitive.INT64,
    "sfixed64": Primitive.INT64,
    "bool": Primitive.BOOL,
    "string": Primitive.STRING,
    "bytes": Primitive.BYTES,
    "date": Primitive.DATE,
    "google.type.Date": Primitive.DATE,
    "timestamp": Primitive.TIMESTAMP,
    "google.protobuf.Timestamp": Primitive.TIMESTAMP,
}


@dataclass(frozen=True)
class PrimitiveKind:
    type: Primitive


@dataclass(frozen=True)
class EnumKind:
    name: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class MessageKind:
    ref: str


FieldKind = Union[PrimitiveKind, EnumKind, MessageKind]


@dataclass(frozen=True)
class FieldDef:
    name: str
    kind: FieldKind
    repeated: bool = False
    deprecated: bool = False
    annotation: str | None = None
    machine_annotation: bool = False
    optional: bool = False

    @property
    def is_message(self) -> bool:
        return isinstance(self.kind, MessageKind)

    @property
    def is_scalar(self) -> bool:
        """Primitive or enum, regardless of ``repeated``."""
        return not isinstance(self.kind, MessageKind)

    @property
    def type_label(self) -> str:
        if isinstance(self.kind, PrimitiveKind):
            return self.kind.type.label
        if isinstance(self.kind, EnumKind):
            return "Enum"
        return "Message"


@dataclass(frozen=True)
class SchemaDef:
    name: str
    fields: tuple[FieldDef, ...] = ()
    annotation: str | None = None

    def field(self, name: str) -> FieldDef | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    def replace_field(self, new: FieldDef) -> SchemaDef:
        return replace(self, fields=tuple(new if f.name == new.name else f for f in self.fields))


@dataclass(frozen=True)
class EnumDef:
    name: str
    values: tuple[str, ...]
    annotation: str | None = None


@dataclass(frozen=True, order=True)
class ColumnPath:
    """Dotted path from a table root to one field, e.g. ``private_info.running_balance.currency``."""

    segments: tuple[str, ...]
    indices: tuple[int | None, ...] = ()

    def __post_init__(self):
        if not self.segments:
            raise ValueError("ColumnPath needs at least one segment")
        if self.indices and len(self.indices) != len(self.segments):
            raise ValueError("indices must align with segments")

    @classmethod
    def parse(cls, text: str | ColumnPath) -> ColumnPath:
        if isinstance(text, ColumnPath):
            return text
        segments: list[str] = []
        indices: list[int | None] = []
        for part in text.strip().split("."):
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?", part)
            if not m:
                raise ValueError(f"bad column path segment {part!r} in {text!r}")
            segments.append(m.group(1))
            indices.append(int(m.group(2)) if m.group(2) is not None else None)
        if all(i is None for i in indices):
            return cls(tuple(segments))
        return cls(tuple(segments), tuple(indices))

    @classmethod
    def of(cls, *segments: str) -> ColumnPath:
        return cls(tuple(segments))

    def __str__(self) -> str:
        if not self.indices:
            return ".".join(self.segments)
        return ".".join(s if i is None else f"{s}[{i}]" for s, i in zip(self.segments, self.indices))

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def head(self) -> str:
        return self.segments[0]

    @property
    def leaf(self) -> str:
        return self.segments[-1]

    def child(self, name: str) -> ColumnPath:
        return ColumnPath(self.segments + (name,))

    def strip_indices(self) -> ColumnPath:
        return ColumnPath(self.segments) if self.indices else self

    def startswith(self, other: ColumnPath) -> bool:
        return self.segments[: len(other.segments)] == other.segments


@dataclass(frozen=True)
class SchemaSet:
    """All messages and enums loaded from one or more schema files."""

    messages: dict[str, SchemaDef] = field(default_factory=dict)
    enums: dict[str, EnumDef] = field(default_factory=dict)
    order: tuple[tuple[str, str], ...] = ()

    def __contains__(self, name: str) -> bool:
        return name in self.messages

    def get(self, name: str) -> SchemaDef:
        try:
            return self.messages[name]
        except KeyError:
            raise KeyError(f"no message named {name!r}") from None

    def is_resolved(self, kind: FieldKind) -> bool:
        return not isinstance(kind, MessageKind) or kind.ref in self.messages

    def unresolved_refs(self) -> list[tuple[str, str, str]]:
        out = []
        for msg in self.messages.values():
            for f in msg.fields:
                if isinstance(f.kind, MessageKind) and f.kind.ref not in self.messages:
                    out.append((msg.name, f.name, f.kind.ref))
        return out

    def with_message(self, message: SchemaDef) -> SchemaSet:
        messages = dict(self.messages)
        messages[message.name] = message
        return replace(self, messages=messages)

    def merged(self, other: SchemaSet) -> SchemaSet:
        for name in other.messages:
            if name in self.messages:
                raise SchemaError(f"duplicate message name {name!r}")
        for name in other.enums:
            if name in self.enums:
                raise SchemaError(f"duplicate enum name {name!r}")
        return _relink(
            SchemaSet({**self.messages, **other.messages}, {**self.enums, **other.enums}, self.order + other.order)
        )

    def resolve_path(self, root: str | SchemaDef, path: ColumnPath | str) -> FieldDef:
        return resolve_path(self, root, path)

    def walk(
        self, root: str | SchemaDef, recursion_cap: int = DEFAULT_RECURSION_CAP, include_deprecated: bool = False
    ) -> Iterator[tuple[ColumnPath, FieldDef]]:
        """Yield every reachable column path in declaration order (depth first)."""
        schema = self.get(root) if isinstance(root, str) else root
        yield from self._walk(schema, (), [schema.name], recursion_cap, include_deprecated)

    def _walk(self, schema, prefix, stack, cap, include_deprecated):
        for f in schema.fields:
            if f.deprecated and not include_deprecated:
                continue
            path = ColumnPath(prefix + (f.name,))
            if isinstance(f.kind, MessageKind):
                target = self.messages.get(f.kind.ref)
                if target is not None and stack.count(target.name) >= cap:
                    continue
                yield path, f
                if target is not None:
                    yield from self._walk(target, path.segments, stack + [target.name], cap, include_deprecated)
            else:
                yield path, f


def resolve_path(schemas: SchemaSet, root: str | SchemaDef, path: ColumnPath | str) -> FieldDef:
    """Walk ``path`` from ``root`` through nested message kinds."""
    path = ColumnPath.parse(path)
    schema = schemas.get(root) if isinstance(root, str) else root
    current: FieldDef | None = None
    for i, segment in enumerate(path.segments):
        if current is not None:
            if not isinstance(current.kind, MessageKind):
                raise PathResolutionError(
                    f"{'.'.join(path.segments[:i])} is a {current.type_label} field; cannot descend into {segment!r}",
                    segment,
                )
            ref = current.kind.ref
            if ref not in schemas.messages:
                raise PathResolutionError(
                    f"{'.'.join(path.segments[:i])} refers to unresolved message {ref!r} (stale or removed schema)",
                    segment,
                )
            schema = schemas.messages[ref]
        current = schema.field(segment)
        if current is None:
            raise PathResolutionError(f"message {schema.name!r} has no field {segment!r} (in path {path})", segment)
    assert current is not None
    return current


# ---------------------------------------------------------------------------
# DSL tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<block>/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<number>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<sym>[{}=;\[\],<>()])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> tuple[list[_Tok], dict[int, str], dict[int, str]]:
    """Return significant tokens plus comments keyed by line.

    ``own_line`` maps line -> comment for comments alone on their line;
    ``trailing`` maps line -> comment for comments after code.
    """
    tokens: list[_Tok] = []
    own_line: dict[int, str] = {}
    trailing: dict[int, str] = {}
    pos, line, line_start = 0, 1, 0
    code_on_line = False
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SchemaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
            code_on_line = False
        elif kind == "comment":
            body = value[2:].strip()
            (trailing if code_on_line else own_line)[line] = body
        elif kind == "block":
            line += value.count("\n")
            if "\n" in value:
                line_start = pos + value.rindex("\n") + 1
        elif kind != "ws":
            tokens.append(_Tok(kind, value, line, col))
            code_on_line = True
        pos = m.end()
    tokens.append(_Tok("eof", "", line, pos - line_start + 1))
    return tokens, own_line, trailing


class _SchemaParser:
    def __init__(self, text: str):
        self.tokens, self.own_line, self.trailing = _tokenize(text)
        self.pos = 0
        self.messages: dict[str, SchemaDef] = {}
        self.enums: dict[str, EnumDef] = {}
        self.order: list[tuple[str, str]] = []
        self._raw_fields: dict[str, list[dict]] = {}

    # token helpers
    def peek(self, offset: int = 0) -> _Tok:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> _Tok:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise SchemaSyntaxError(message, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text or tok.kind in ("string",):
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def expect_kind(self, kind: str, what: str) -> _Tok:
        tok = self.next()
        if tok.kind != kind:
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def comment_before(self, line: int) -> str | None:
        lines = []
        probe = line - 1
        while probe in self.own_line:
            lines.append(self.own_line[probe])
            probe -= 1
        return "\n".join(reversed(lines)) if lines else None

    def skip_statement(self):
        depth = 0
        while True:
            tok = self.next()
            if tok.kind == "eof":
                self.error("unterminated statement", tok)
            if tok.text in "{[":
                depth += 1
            elif tok.text in "}]":
                depth -= 1
            elif tok.text == ";" and depth <= 0:
                return

    # grammar
    def parse(self) -> SchemaSet:
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.text == "message":
                self.parse_message()
            elif tok.text == "enum":
                self.parse_enum()
            elif tok.text in ("syntax", "package", "import", "option", "edition"):
                self.skip_statement()
            elif tok.text == ";":
                self.next()
            else:
                self.error(f"unexpected {tok.text!r} at top level", tok)
        return self.link()

    def _register(self, kind: str, name: str, tok: _Tok):
        if name in self.messages or name in self.enums or name in self._raw_fields:
            what = "message" if kind == "message" else "enum"
            raise SchemaError(f"duplicate {what} name {name!r} (line {tok.line})")
        self.order.append((kind, name))

    def parse_message(self):
        kw = self.expect("message")
        name_tok = self.expect_kind("ident", "message name")
        name = name_tok.text
        self._register("message", name, name_tok)
        annotation = self.comment_before(kw.line)
        self._raw_fields[name] = []
        self.expect("{")
        seen: set[str] = set()
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                self.error(f"unterminated message {name!r}", tok)
            if tok.text == "}":
                self.next()
                break
            if tok.text == "message":
                self.parse_message()
            elif tok.text == "enum":
                self.parse_enum()
            elif tok.text in ("option", "reserved", "extensions"):
                self.skip_statement()
            elif tok.text == ";":
                self.next()
            elif tok.text in ("oneof", "map", "extend", "group"):
                self.error(f"{tok.text!r} is not supported by this schema dialect", tok)
            else:
                raw = self.parse_field()
                if raw["name"] in seen:
                    raise SchemaError(f"duplicate field name {raw['name']!r} in message {name!r} (line {raw['line']})")
                seen.add(raw["name"])
                self._raw_fields[name].append(raw)
        self.messages[name] = SchemaDef(name, (), annotation)

    def parse_field(self) -> dict:
        first = self.peek()
        label = None
        if first.text in ("repeated", "optional", "required"):
            label = self.next().text
        type_tok = self.expect_kind("ident", "field type")
        name_tok = self.expect_kind("ident", "field name")
        if self.peek().text == "=":
            self.next()
            self.expect_kind("number", "field number")
        deprecated = False
        if self.peek().text == "[":
            self.next()
            while True:
                key = self.expect_kind("ident", "option name")
                self.expect("=")
                val = self.next()
                if val.kind not in ("ident", "number", "string"):
                    self.error("bad option value", val)
                if key.text == "deprecated":
                    deprecated = val.text == "true"
                if self.peek().text == ",":
                    self.next()
                    continue
                self.expect("]")
                break
        end = self.expect(";")
        annotation = self.comment_before(first.line)
        trail = self.trailing.get(end.line)
        if trail:
            annotation = f"{annotation}\n{trail}" if annotation else trail
        machine = False
        if annotation and annotation.startswith(MACHINE_TAG):
            machine = True
            annotation = annotation[len(MACHINE_TAG):].strip()
        return {
            "name": name_tok.text,
            "type": type_tok.text,
            "repeated": label == "repeated",
            "optional": label == "optional",
            "deprecated": deprecated,
            "annotation": annotation,
            "machine": machine,
            "line": name_tok.line,
        }

    def parse_enum(self):
        kw = self.expect("enum")
        name_tok = self.expect_kind("ident", "enum name")
        name = name_tok.text
        self._register("enum", name, name_tok)
        annotation = self.comment_before(kw.line)
        self.expect("{")
        values: list[str] = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                self.error(f"unterminated enum {name!r}", tok)
            if tok.text == "}":
                self.next()
                break
            if tok.text in ("option", "reserved"):
                self.skip_statement()
                continue
            if tok.text == ";":
                self.next()
                continue
            value_tok = self.expect_kind("ident", "enum value name")
            if value_tok.text in values:
                raise SchemaError(f"duplicate value {value_tok.text!r} in enum {name!r} (line {value_tok.line})")
            values.append(value_tok.text)
            if self.peek().text == "=":
                self.next()
                self.expect_kind("number", "enum value number")
            if self.peek().text == "[":
                while self.next().text != "]":
                    pass
            self.expect(";")
        if not values:
            self.error(f"enum {name!r} has no values", name_tok)
        self.enums[name] = EnumDef(name, tuple(values), annotation)

    def link(self) -> SchemaSet:
        raw_set = SchemaSet(dict(self.messages), dict(self.enums), tuple(self.order))
        messages = {}
        for name, msg in self.messages.items():
            fields = tuple(
                FieldDef(
                    r["name"],
                    _resolve_type(raw_set, r["type"]),
                    repeated=r["repeated"],
                    deprecated=r["deprecated"],
                    annotation=r["annotation"],
                    machine_annotation=r["machine"],
                    optional=r["optional"],
                )
                for r in self._raw_fields[name]
            )
            messages[name] = replace(msg, fields=fields)
        # keep messages in declaration order
        ordered = {n: messages[n] for kind, n in self.order if kind == "message"}
        result = SchemaSet(ordered, dict(self.enums), tuple(self.order))
        check_cycles(result)
        return result


def _resolve_type(schemas: SchemaSet, type_name: str) -> FieldKind:
    if type_name in SCALAR_KEYWORDS:
        return PrimitiveKind(SCALAR_KEYWORDS[type_name])
    candidates = [type_name, type_name.rsplit(".", 1)[-1]]
    for candidate in candidates:
        if candidate in schemas.enums:
            enum = schemas.enums[candidate]
            return EnumKind(enum.name, enum.values)
        if candidate in schemas.messages:
            return MessageKind(candidate)
    return MessageKind(type_name)


def _relink(schemas: SchemaSet) -> SchemaSet:
    """Re-resolve unresolved references after merging schema sets."""
    messages = {}
    for name, msg in schemas.messages.items():
        fields = []
        for f in msg.fields:
            if isinstance(f.kind, MessageKind) and f.kind.ref not in schemas.messages:
                f = replace(f, kind=_resolve_type(schemas, f.kind.ref))
            fields.append(f)
        messages[name] = replace(msg, fields=tuple(fields))
    result = replace(schemas, messages=messages)
    check_cycles(result)
    return result


def check_cycles(schemas: SchemaSet) -> None:
    """Reject reference cycles that do not pass through an ``optional`` field."""
    state: dict[str, int] = {}

    def visit(name: str, trail: list[str]):
        state[name] = 1
        for f in schemas.messages[name].fields:
            if not isinstance(f.kind, MessageKind) or f.optional or f.kind.ref not in schemas.messages:
                continue
            ref = f.kind.ref
            if state.get(ref) == 1:
                cycle = trail[trail.index(ref):] + [ref] if ref in trail else [name, ref]
                raise SchemaError(
                    "recursive message reference without an optional field: " + " -> ".join(cycle)
                )
            if ref not in state:
                visit(ref, trail + [ref])
        state[name] = 2

    for name in schemas.messages:
        if name not in state:
            visit(name, [name])


def parse_schema(text: str) -> SchemaSet:
    """Parse schema DSL source into a :class:`SchemaSet`."""
    return _SchemaParser(text).parse()


def load_schemas(paths) -> SchemaSet:
    from pathlib import Path

    result = SchemaSet()
    for p in paths:
        result = result.merged(parse_schema(Path(p).read_text(encoding="utf-8")))
    return result


# ---------------------------------------------------------------------------
# canonical serialization


def _type_text(f: FieldDef) -> str:
    if isinstance(f.kind, PrimitiveKind):
        return f.kind.type.value
    if isinstance(f.kind, EnumKind):
        return f.kind.name
    return f.kind.ref


def _comment_lines(text: str | None, indent: str, machine: bool = False) -> list[str]:
    if not text:
        return []
    lines = text.split("\n")
    if machine:
        lines[0] = f"{MACHINE_TAG} {lines[0]}"
    return [f"{indent}// {line}".rstrip() for line in lines]


def render_message(message: SchemaDef, fields=None) -> str:
    out = _comment_lines(message.annotation, "")
    out.append(f"message {message.name} {{")
    for number, f in enumerate(fields if fields is not None else message.fields, start=1):
        out.extend(_comment_lines(f.annotation, "  ", f.machine_annotation))
        label = "repeated " if f.repeated else "optional " if f.optional else ""
        opts = " [deprecated = true]" if f.deprecated else ""
        out.append(f"  {label}{_type_text(f)} {f.name} = {number}{opts};")
    out.append("}")
    return "\n".join(out)


def render_enum(enum: EnumDef) -> str:
    out = _comment_lines(enum.annotation, "")
    out.append(f"enum {enum.name} {{")
    for number, value in enumerate(enum.values):
        out.append(f"  {value} = {number};")
    out.append("}")
    return "\n".join(out)


def serialize_schema(schemas: SchemaSet) -> str:
    """Canonical DSL text: every definition flattened to top level in declaration order."""
    blocks = []
    seen = set()
    for kind, name in schemas.order:
        if (kind, name) in seen:
            continue
        seen.add((kind, name))
        if kind == "message" and name in schemas.messages:
            blocks.append(render_message(schemas.messages[name]))
        elif kind == "enum" and name in schemas.enums:
            blocks.append(render_enum(schemas.enums[name]))
    for name, msg in schemas.messages.items():
        if ("message", name) not in seen:
            blocks.append(render_message(msg))
    for name, enum in schemas.enums.items():
        if ("enum", name) not in seen:
            blocks.append(render_enum(enum))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def describe_subset(schemas: SchemaSet, root: str, top_level: list[str]) -> str:
    """DSL text for ``root`` restricted to ``top_level`` fields plus every type they reach."""
    message = schemas.get(root)
    picked = [f for f in message.fields if f.name in top_level and not f.deprecated]
    blocks = [render_message(message, picked)]
    pending = [f.kind for f in picked]
    emitted: set[str] = {root}
    enums: list[str] = []
    while pending:
        kind = pending.pop(0)
        if isinstance(kind, EnumKind) and kind.name not in enums:
            enums.append(kind.name)
        elif isinstance(kind, MessageKind) and kind.ref not in emitted and kind.ref in schemas.messages:
            emitted.add(kind.ref)
            nested = schemas.messages[kind.ref]
            live = [f for f in nested.fields if not f.deprecated]
            blocks.append(render_message(nested, live))
            pending.extend(f.kind for f in live)
    for name in enums:
        if name in schemas.enums:
            blocks.append(render_enum(schemas.enums[name]))
    return "\n\n".join(blocks)
