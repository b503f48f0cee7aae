"""Seeded rule-based generator that honors the same request contract as an LLM backend."""

from __future__ import annotations

import random
import re
from datetime import date, timedelta
from typing import Any

from ..context import Incremental, LiteralSpec, OneOf, Range, SeededChoice, UniformFloat, stub_annotation
from ..coverage import _native
from ..errors import GenerationError
from ..records import serialize_rows
from ..schema import ColumnPath, EnumKind, FieldDef, MessageKind, Primitive, PrimitiveKind, SchemaSet
from ..sql import ast as A
from ..values import EnumVal, Timestamp, looks_like_date, parse_date
from .planner import GenerationRequest, stable_seed

BASE_DATE = date(2023, 1, 1)
BASE_EPOCH = 1672531200  # 2023-01-01T00:00:00Z
_STOPWORDS = {
    "a", "an", "the", "of", "for", "and", "or", "in", "on", "to", "is", "this", "that", "field", "with", "as",
    "by", "at", "be", "it", "its", "from", "if", "string", "int64", "float64", "bool", "bytes", "date",
    "timestamp", "enum", "message", "machine", "generated",
}


def spread_fraction(i: int) -> float:
    """0, 1, 1/2, 1/4, 3/4, 1/8, 3/8, ...: endpoints first, then successive midpoints."""
    if i == 0:
        return 0.0
    if i == 1:
        return 1.0
    k = i - 1
    level = k.bit_length()
    base = 1 << (level - 1)
    return (2 * (k - base) + 1) / (2 * base)


class _Bounds:
    def __init__(self):
        self.eq: list[Any] = []
        self.one_of: list[Any] | None = None
        self.lo = self.hi = None
        self.lo_open = self.hi_open = False
        self.like: list[str] = []
        self.neq: list[Any] = []

    @property
    def empty(self) -> bool:
        return not (self.eq or self.one_of or self.lo is not None or self.hi is not None or self.like or self.neq)


def _lit(expr):
    if isinstance(expr, A.Literal) and expr.value is not None:
        return True, expr.value
    return False, None


def _collect_bounds(constraints) -> dict[ColumnPath, _Bounds]:
    out: dict[ColumnPath, _Bounds] = {}

    def get(ref) -> _Bounds:
        return out.setdefault(ref.path.strip_indices(), _Bounds())

    for c in constraints:
        if isinstance(c, A.Compare):
            col, lit, op = c.left, c.right, c.op
            if not isinstance(col, A.ColumnRef):
                col, lit = c.right, c.left
                op = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(op, op)
            ok, value = _lit(lit)
            if not (isinstance(col, A.ColumnRef) and col.bound and ok):
                continue
            b = get(col)
            if op == "=":
                b.eq.append(value)
            elif op == "!=":
                b.neq.append(value)
            elif op in (">", ">="):
                b.lo, b.lo_open = value, op == ">"
            else:
                b.hi, b.hi_open = value, op == "<"
        elif isinstance(c, A.Between) and not c.negated and isinstance(c.expr, A.ColumnRef) and c.expr.bound:
            ok_lo, lo = _lit(c.lo)
            ok_hi, hi = _lit(c.hi)
            if ok_lo and ok_hi:
                b = get(c.expr)
                b.lo, b.hi, b.lo_open, b.hi_open = lo, hi, False, False
        elif isinstance(c, A.InList) and not c.negated and isinstance(c.expr, A.ColumnRef) and c.expr.bound:
            values = [_lit(i) for i in c.items]
            if all(ok for ok, _ in values):
                get(c.expr).one_of = [v for _, v in values]
        elif isinstance(c, A.Like) and not c.negated and isinstance(c.expr, A.ColumnRef) and c.expr.bound:
            ok, pattern = _lit(c.pattern)
            if ok and isinstance(pattern, str):
                get(c.expr).like.append(pattern)
    return out


def _keyword(f: FieldDef) -> str:
    if f.annotation:
        for word in re.findall(r"[A-Za-z][A-Za-z0-9]*", f.annotation):
            if word.lower() not in _STOPWORDS and word.lower() != f.name.lower():
                return word.lower()
    return f.name


def _type_error(f: FieldDef, value: Any):
    raise GenerationError(f"value {value!r} does not fit {f.type_label} column {f.name}")


def _fits(f: FieldDef, value: Any) -> bool:
    if isinstance(f.kind, EnumKind):
        return isinstance(value, EnumVal) and value.name in f.kind.values
    if not isinstance(f.kind, PrimitiveKind):
        return False
    p = f.kind.type
    checks = {
        Primitive.INT64: lambda v: isinstance(v, int) and not isinstance(v, bool),
        Primitive.FLOAT64: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        Primitive.BOOL: lambda v: isinstance(v, bool),
        Primitive.STRING: lambda v: isinstance(v, str),
        Primitive.BYTES: lambda v: isinstance(v, bytes),
        Primitive.DATE: lambda v: isinstance(v, date),
        Primitive.TIMESTAMP: lambda v: isinstance(v, Timestamp),
    }
    return checks[p](value)


def coerce_literal(f: FieldDef, value: Any) -> Any:
    """Convert a constraint literal to the field's value type or raise GenerationError."""
    out = _native(f, value)
    if isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.FLOAT64 and isinstance(out, int):
        out = float(out)
    if isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.STRING and not isinstance(out, str):
        out = str(out)
    if not _fits(f, out):
        _type_error(f, value)
    return out


def _interpolate(f: FieldDef, lo: Any, hi: Any, frac: float) -> Any:
    if isinstance(lo, bool):
        return lo
    if isinstance(lo, int) and isinstance(hi, int):
        return lo + int((hi - lo) * frac)
    if isinstance(lo, (int, float)) and isinstance(hi, (int, float)):
        return lo + (hi - lo) * frac
    if isinstance(lo, date) and isinstance(hi, date):
        return lo + timedelta(days=int((hi - lo).days * frac))
    if isinstance(lo, Timestamp) and isinstance(hi, Timestamp):
        return Timestamp(lo.seconds + int((hi.seconds - lo.seconds) * frac), lo.zone)
    if isinstance(lo, str) and isinstance(hi, str) and looks_like_date(lo) and looks_like_date(hi):
        a, b = parse_date(lo), parse_date(hi)
        return (a + timedelta(days=int((b - a).days * frac))).isoformat()
    return lo if frac < 0.5 else hi


def _step(value: Any, direction: int) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return value + direction
    if isinstance(value, float):
        return value + direction * max(1e-6, abs(value) * 1e-9)
    if isinstance(value, date):
        return value + timedelta(days=direction)
    if isinstance(value, Timestamp):
        return Timestamp(value.seconds + direction, value.zone)
    if isinstance(value, str):
        if looks_like_date(value):
            return (parse_date(value) + timedelta(days=direction)).isoformat()
        return value + "a" if direction > 0 else value
    return value


def _widen(value: Any, direction: int) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return value + 100 * direction
    if isinstance(value, float):
        return value + 100.0 * direction
    if isinstance(value, date):
        return value + timedelta(days=365 * direction)
    if isinstance(value, Timestamp):
        return Timestamp(value.seconds + 86400 * 365 * direction, value.zone)
    if isinstance(value, str) and looks_like_date(value):
        return (parse_date(value) + timedelta(days=365 * direction)).isoformat()
    return value


def _like_value(pattern: str, i: int) -> str:
    pieces = pattern.split("%")
    if len(pieces) == 1:
        return pattern
    fills = [f"r{i + 1}_"] + ["_x"] * (len(pieces) - 2)
    out = pieces[0]
    for fill, piece in zip(fills, pieces[1:]):
        out += fill + piece
    return out


class _RowGen:
    def __init__(self, request: GenerationRequest, seed: int):
        self.req = request
        self.schemas: SchemaSet = request.schemas
        self.rng = random.Random(stable_seed(seed, request.seed))
        self.bounds = _collect_bounds(request.constraints)
        self.coverage: dict[ColumnPath, list[Any]] = {}
        for c in request.coverage:
            self.coverage.setdefault(c.column, []).extend(c.required_values())
        self.signals = {p.strip_indices(): s for p, s in request.signals}
        self.unique = {u.strip_indices() for u in request.unique}
        self.group = request.group if request.group is not None and request.group.hinted else None
        self.ordering = list(self.group.ordering) if self.group is not None else []
        self.offsets: dict[ColumnPath, int] = {}

    def column_rng(self, path: ColumnPath) -> random.Random:
        return random.Random(stable_seed(self.req.seed, "col", str(path)))

    # -- scalar values ------------------------------------------------------

    def scalar(self, path: ColumnPath, f: FieldDef, i: int, rng: random.Random) -> Any:
        spec = self.signals.get(path)
        if spec is not None:
            return self.from_signal(f, spec, i, rng)
        if path in self.coverage and self.coverage[path]:
            req = self.coverage[path]
            return req[i % len(req)]
        b = self.bounds.get(path)
        if b is not None and not b.empty:
            value = self.from_bounds(path, f, b, i, rng)
            if value is not None:
                return value
        if path in self.unique:
            return self.unique_value(f, i)
        if self.group is not None and path in self.group.members:
            return self.correlated(path, f, i)
        return self.default(path, f, i, rng)

    def from_signal(self, f: FieldDef, spec, i: int, rng: random.Random) -> Any:
        if isinstance(spec, LiteralSpec):
            return coerce_literal(f, spec.value)
        if isinstance(spec, OneOf):
            return coerce_literal(f, spec.values[i % len(spec.values)])
        if isinstance(spec, Range):
            lo, hi = coerce_literal(f, spec.lo), coerce_literal(f, spec.hi)
            if not spec.inclusive:
                lo, hi = _step(lo, 1), _step(hi, -1)
            return _interpolate(f, lo, hi, spread_fraction(i))
        if isinstance(spec, Incremental):
            return coerce_literal(f, spec.value_at(i))
        if isinstance(spec, UniformFloat):
            return coerce_literal(f, rng.uniform(spec.lo, spec.hi))
        if isinstance(spec, SeededChoice):
            pick = rng.choices(spec.values, weights=spec.weights)[0]
            return coerce_literal(f, pick)
        raise GenerationError(f"unsupported value spec {spec!r}")

    def from_bounds(self, path: ColumnPath, f: FieldDef, b: _Bounds, i: int, rng) -> Any:
        if b.eq:
            return coerce_literal(f, b.eq[0])
        if b.one_of:
            return coerce_literal(f, b.one_of[i % len(b.one_of)])
        if b.like and isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.STRING:
            return _like_value(b.like[0], i)
        if b.lo is not None or b.hi is not None:
            lo = coerce_literal(f, b.lo) if b.lo is not None else None
            hi = coerce_literal(f, b.hi) if b.hi is not None else None
            if lo is not None and b.lo_open:
                lo = _step(lo, 1)
            if hi is not None and b.hi_open:
                hi = _step(hi, -1)
            if lo is None:
                lo = _widen(hi, -1)
            if hi is None:
                hi = _widen(lo, 1)
            return _interpolate(f, lo, hi, spread_fraction(i))
        if b.neq:
            value = self.default(path, f, i, rng)
            banned = [coerce_literal(f, v) for v in b.neq]
            while value in banned:
                value = _step(value, 1) if not isinstance(value, EnumVal) else self._next_enum(f, value)
            return value
        return None

    def _next_enum(self, f: FieldDef, value: EnumVal) -> EnumVal:
        values = f.kind.values
        return EnumVal(values[(values.index(value.name) + 1) % len(values)])

    def unique_value(self, f: FieldDef, i: int) -> Any:
        if isinstance(f.kind, PrimitiveKind):
            p = f.kind.type
            if p is Primitive.INT64:
                return i + 1
            if p is Primitive.FLOAT64:
                return float(i + 1)
            if p is Primitive.STRING:
                return f"{f.name}_{i + 1:04d}"
            if p is Primitive.BYTES:
                return f"{f.name}_{i + 1:04d}".encode()
            if p is Primitive.DATE:
                return BASE_DATE + timedelta(days=i)
            if p is Primitive.TIMESTAMP:
                return Timestamp(BASE_EPOCH + 3600 * i)
        if isinstance(f.kind, EnumKind):
            return EnumVal(f.kind.values[i % len(f.kind.values)])
        return self.default(ColumnPath.of(f.name), f, i, self.rng)

    def correlated(self, path: ColumnPath, f: FieldDef, i: int) -> Any:
        """Values driven by a shared per-row latent so hinted columns move together."""
        rank = self.ordering.index(path) if path in self.ordering else 0
        if isinstance(f.kind, EnumKind):
            values = f.kind.values
            return EnumVal(values[i % min(2, len(values))])
        p = f.kind.type
        if p is Primitive.INT64:
            return 10 + 7 * i + 100 * rank
        if p is Primitive.FLOAT64:
            return 10.5 + 7.25 * i + 100.0 * rank
        if p is Primitive.BOOL:
            return i % 2 == 0
        if p is Primitive.STRING:
            return f"{_keyword(f)}_{i % 2 + 1}"
        if p is Primitive.BYTES:
            return f"{f.name}_{i % 2 + 1}".encode()
        if p is Primitive.DATE:
            return BASE_DATE + timedelta(days=7 * i + 30 * rank)
        return Timestamp(BASE_EPOCH + 86400 * (7 * i + 30 * rank))

    def default(self, path: ColumnPath, f: FieldDef, i: int, rng: random.Random) -> Any:
        if isinstance(f.kind, EnumKind):
            values = f.kind.values
            offset = self.offsets.setdefault(path, self.column_rng(path).randrange(len(values)))
            return EnumVal(values[(i + offset) % len(values)])
        p = f.kind.type
        if p is Primitive.INT64:
            return rng.randint(1, 1000)
        if p is Primitive.FLOAT64:
            return round(rng.uniform(1.0, 1000.0), 2)
        if p is Primitive.BOOL:
            return rng.random() < 0.5
        if p is Primitive.STRING:
            return f"{_keyword(f)}_{rng.randint(1, 9999)}"
        if p is Primitive.BYTES:
            return f"{f.name}-{rng.randint(1, 9999)}".encode()
        if p is Primitive.DATE:
            return BASE_DATE + timedelta(days=rng.randint(0, 364))
        return Timestamp(BASE_EPOCH + rng.randint(0, 365 * 86400 - 1))

    # -- structure ----------------------------------------------------------

    def field_value(self, path: ColumnPath, f: FieldDef, i: int, stack: list[str], rng) -> Any:
        if f.repeated:
            lo, hi = self.req.list_length
            n = rng.randint(lo, hi)
            return [self.element(path, f, i, j, stack, rng) for j in range(n)]
        return self.element(path, f, i, 0, stack, rng)

    def element(self, path: ColumnPath, f: FieldDef, i: int, j: int, stack: list[str], rng) -> Any:
        if isinstance(f.kind, MessageKind):
            target = self.schemas.messages.get(f.kind.ref)
            if target is None:
                return None
            return self.record(path, target, i, stack + [target.name], rng)
        return self.scalar(path, f, i if j == 0 else i + j * self.req.row_count, rng)

    def record(self, prefix: ColumnPath | None, schema, i: int, stack: list[str], rng) -> dict:
        out = {}
        for f in schema.fields:
            if f.deprecated:
                continue
            path = prefix.child(f.name) if prefix is not None else ColumnPath.of(f.name)
            if isinstance(f.kind, MessageKind):
                target = self.schemas.messages.get(f.kind.ref)
                if target is None or stack.count(target.name) >= self.req.recursion_cap:
                    continue
            value = self.field_value(path, f, i, stack, rng)
            if value is not None:
                out[f.name] = value
        return out

    def rows(self) -> list[dict]:
        root = self.schemas.get(self.req.schema_name)
        scope = {c.head for c in self.req.columns}
        out = []
        for i in range(self.req.row_count):
            row = {}
            for f in root.fields:
                if f.name not in scope or f.deprecated:
                    continue
                path = ColumnPath.of(f.name)
                if isinstance(f.kind, MessageKind) and f.kind.ref not in self.schemas.messages:
                    continue
                value = self.field_value(path, f, i, [root.name], self.rng)
                if value is not None:
                    row[f.name] = value
            out.append(row)
        return out


def deterministic_generate(request: GenerationRequest, seed: int = 0) -> list[dict]:
    """Rows for ``request``; identical (request, seed) always yields identical rows."""
    if request.schemas is None:
        raise GenerationError("deterministic generation needs the schema set on the request")
    return _RowGen(request, seed).rows()


class DeterministicBackend:
    name = "deterministic"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, request: GenerationRequest, prompt=None) -> str:
        rows = deterministic_generate(request, self.seed)
        return serialize_rows(request.schemas, request.schema_name, rows, "textproto")

    def annotate(self, message: str, f: FieldDef) -> str:
        return stub_annotation(f)

    def complete(self, system: str, user: str) -> str:
        raise GenerationError("the deterministic backend does not answer free-form prompts")
