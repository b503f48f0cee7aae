"""Deterministic enforcement: constraint substitution, derived-value solving and join-key sync."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from typing import Any

from .context import Incremental
from .errors import EnforcementError, PathResolutionError
from .generation.deterministic import _interpolate, _like_value, _step, coerce_literal, spread_fraction
from .schema import ColumnPath, EnumKind, FieldDef, MessageKind, Primitive, PrimitiveKind, SchemaSet
from .sql import ast as A
from .sql.render import render
from .validation.evaluator import (
    UNEVALUABLE, EvalError, Uneval, _py_format, cast_value, compare_values, evaluate_predicate, get_path,
    is_evaluable,
)
from .values import EnumVal, Timestamp, display, parse_date, parse_timestamp
from . import zones

log = logging.getLogger(__name__)

BACKEND, SUBSTITUTED, JOIN_SYNCED = "backend", "substituted", "join-synced"

_SQL_TYPE = {
    Primitive.INT64: "INT64", Primitive.FLOAT64: "FLOAT64", Primitive.BOOL: "BOOL", Primitive.STRING: "STRING",
    Primitive.BYTES: "BYTES", Primitive.DATE: "DATE", Primitive.TIMESTAMP: "TIMESTAMP",
}


@dataclass
class TableData:
    table: str
    schema_name: str
    rows: list[dict]
    provenance: dict[tuple[int, str], str] = field(default_factory=dict)

    def tag(self, row: int, path: ColumnPath) -> str:
        return self.provenance.get((row, str(path)), BACKEND)

    def copy(self) -> "TableData":
        return TableData(self.table, self.schema_name, copy.deepcopy(self.rows), dict(self.provenance))


@dataclass
class EnforcementLog:
    substitutions: list[dict] = field(default_factory=list)
    conflicts: list[str] = field(default_factory=list)
    unsolved: list[str] = field(default_factory=list)

    def extend(self, other: "EnforcementLog"):
        self.substitutions.extend(other.substitutions)
        self.conflicts.extend(c for c in other.conflicts if c not in self.conflicts)
        self.unsolved.extend(u for u in other.unsolved if u not in self.unsolved)

    def to_dict(self) -> dict:
        return {"substitutions": self.substitutions, "conflicts": self.conflicts, "unsolved": self.unsolved}


# ---------------------------------------------------------------------------
# cell access


def set_path(row: dict, segments: tuple[str, ...], value: Any) -> None:
    """Assign a value, creating missing records; repeated records receive it element-wise."""
    if len(segments) == 1:
        if value is None:
            row.pop(segments[0], None)
        else:
            row[segments[0]] = value
        return
    head, rest = segments[0], segments[1:]
    child = row.get(head)
    if isinstance(child, list):
        for element in child:
            if isinstance(element, dict):
                set_path(element, rest, value)
        return
    if not isinstance(child, dict):
        child = {}
        row[head] = child
    set_path(child, rest, value)


def read_path(row: dict, path: ColumnPath) -> Any:
    try:
        return get_path(row, path.segments)
    except Uneval:
        return None


def field_for(schemas: SchemaSet, root: str, path: ColumnPath) -> FieldDef | None:
    try:
        return schemas.resolve_path(root, path)
    except PathResolutionError:
        return None


def sql_type(f: FieldDef) -> str | None:
    if isinstance(f.kind, PrimitiveKind):
        return _SQL_TYPE[f.kind.type]
    if isinstance(f.kind, EnumKind):
        return "STRING"
    return None


def to_field(f: FieldDef, value: Any) -> Any:
    """Convert ``value`` into the field's value type via SQL cast rules."""
    if isinstance(f.kind, EnumKind):
        name = value.name if isinstance(value, EnumVal) else str(value)
        if name not in f.kind.values:
            raise EvalError(f"{name!r} is not a value of enum {f.kind.name}")
        return EnumVal(name)
    t = sql_type(f)
    if t is None:
        raise EvalError(f"{f.name} is a message field")
    out = cast_value(value, t)
    return out


# ---------------------------------------------------------------------------
# derived solving


def _output_kind(expr) -> str | None:
    if isinstance(expr, A.FuncCall):
        if expr.name in ("DATE", "DATE_TRUNC"):
            return "DATE"
        if expr.name in ("TIMESTAMP_SECONDS", "PARSE_TIMESTAMP"):
            return "TIMESTAMP"
        if expr.name in ("FORMAT_TIMESTAMP", "LOWER", "UPPER"):
            return "STRING"
    if isinstance(expr, A.Cast):
        return expr.type_name.upper()
    return None


def _typed(value: Any, kind: str | None) -> Any:
    if kind is None or value is None:
        return value
    try:
        return cast_value(value, kind)
    except Uneval:
        return value


def _zone(args, index) -> str:
    if len(args) > index and isinstance(args[index], A.Literal) and isinstance(args[index].value, str):
        return args[index].value
    return "UTC"


def _invert(expr, target: Any, schemas: SchemaSet, root: str) -> tuple[ColumnPath, Any] | None:
    """Push ``target`` (the desired output of ``expr``) down to a raw column value."""
    if isinstance(expr, A.ColumnRef) and expr.bound:
        f = field_for(schemas, root, expr.path)
        if f is None:
            return None
        try:
            return expr.path, to_field(f, target)
        except Uneval:
            return None
    if isinstance(expr, A.Cast):
        return _invert(expr.expr, target, schemas, root)
    if not isinstance(expr, A.FuncCall):
        return None
    name, args = expr.name, expr.args
    try:
        if name == "DATE" and len(args) in (1, 2):
            d = target if isinstance(target, date) else parse_date(str(target))
            zone = _zone(args, 1)
            inner_kind = _output_kind(args[0])
            if inner_kind == "STRING" or (isinstance(args[0], A.ColumnRef) and _is_date_field(args[0], schemas, root)):
                return _invert(args[0], d, schemas, root)
            noon = zones.local_to_epoch(datetime(d.year, d.month, d.day, 12), zone)
            return _invert(args[0], Timestamp(noon), schemas, root)
        if name == "TIMESTAMP_SECONDS" and len(args) == 1:
            ts = target if isinstance(target, Timestamp) else parse_timestamp(str(target))
            return _invert(args[0], int(ts.seconds), schemas, root)
        if name == "PARSE_TIMESTAMP" and len(args) in (2, 3) and isinstance(args[0], A.Literal):
            ts = target if isinstance(target, Timestamp) else parse_timestamp(str(target))
            text = zones.to_local(ts.seconds, _zone(args, 2)).strftime(_py_format(args[0].value))
            return _invert(args[1], text, schemas, root)
        if name == "FORMAT_TIMESTAMP" and len(args) in (2, 3) and isinstance(args[0], A.Literal):
            local = datetime.strptime(str(target), _py_format(args[0].value))
            return _invert(args[1], Timestamp(zones.local_to_epoch(local, _zone(args, 2))), schemas, root)
        if name == "DATE_TRUNC" and len(args) == 2:
            d = target if isinstance(target, date) else parse_date(str(target))
            return _invert(args[0], d, schemas, root)
        if name in ("LOWER", "UPPER") and len(args) == 1 and isinstance(target, str):
            return _invert(args[0], target, schemas, root)
    except (ValueError, Uneval):
        return None
    return None


def _is_date_field(ref: A.ColumnRef, schemas, root) -> bool:
    f = field_for(schemas, root, ref.path)
    return f is not None and isinstance(f.kind, PrimitiveKind) and f.kind.type is Primitive.DATE


def _target_for(op: str, value: Any) -> Any:
    if op in ("=", ">=", "<="):
        return value
    if op == ">":
        return _step(value, 1)
    if op == "<":
        return _step(value, -1)
    if op == "!=":
        return _step(value, 1)
    return None


def bind_paths(pred, table: str):
    """Bind hand-written column references to ``table`` by their dotted path."""
    def bind(node):
        if isinstance(node, A.ColumnRef) and not node.bound:
            return replace(node, table=node.table or table, path=node.path or ColumnPath(node.parts))
        return None

    return A.transform(pred, bind)


def solve_derived(pred, row: dict, schemas: SchemaSet, root: str) -> tuple[ColumnPath, Any] | None:
    """Find a raw column value whose computed expression satisfies ``pred``; verified forward."""
    pred = bind_paths(pred, root)
    candidates = []
    if isinstance(pred, A.Compare):
        expr, lit, op = pred.left, pred.right, pred.op
        if not isinstance(lit, A.Literal):
            expr, lit = pred.right, pred.left
            op = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(op, op)
        if not isinstance(lit, A.Literal) or lit.value is None:
            return None
        typed = _typed(lit.value, _output_kind(expr))
        candidates = [_target_for(op, typed), typed]
    elif isinstance(pred, A.Between) and not pred.negated:
        expr = pred.expr
        if not (isinstance(pred.lo, A.Literal) and isinstance(pred.hi, A.Literal)):
            return None
        candidates = [_typed(pred.lo.value, _output_kind(expr)), _typed(pred.hi.value, _output_kind(expr))]
    elif isinstance(pred, A.InList) and not pred.negated:
        expr = pred.expr
        candidates = [_typed(i.value, _output_kind(expr)) for i in pred.items if isinstance(i, A.Literal)]
    else:
        return None
    for target in candidates:
        if target is None:
            continue
        solved = _invert(expr, target, schemas, root)
        if solved is None:
            continue
        path, value = solved
        trial = copy.deepcopy(row)
        set_path(trial, path.segments, value)
        if evaluate_predicate(trial, pred) is True:
            return path, value
    return None


# ---------------------------------------------------------------------------
# constraint enforcement


def _intervals(constraints) -> dict[ColumnPath, list[tuple[str, Any, bool]]]:
    """Every lower and upper literal bound per bare column, intersected later."""
    out: dict[ColumnPath, list] = {}
    flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}
    for c in constraints:
        if isinstance(c, A.Compare) and c.op in flip:
            col, lit, op = c.left, c.right, c.op
            if not isinstance(col, A.ColumnRef):
                col, lit, op = c.right, c.left, flip[op]
            if isinstance(col, A.ColumnRef) and col.bound and isinstance(lit, A.Literal) and lit.value is not None:
                kind = "lo" if op in (">", ">=") else "hi"
                out.setdefault(col.path.strip_indices(), []).append((kind, lit.value, op in (">", "<")))
        elif isinstance(c, A.Between) and not c.negated and isinstance(c.expr, A.ColumnRef) and c.expr.bound:
            if isinstance(c.lo, A.Literal) and isinstance(c.hi, A.Literal):
                entry = out.setdefault(c.expr.path.strip_indices(), [])
                entry += [("lo", c.lo.value, False), ("hi", c.hi.value, False)]
    return out


def _bare_columns(pred) -> list[A.ColumnRef]:
    return [r for r in A.column_refs(pred) if r.bound]


def _simple_column(pred) -> A.ColumnRef | None:
    """The single bare column in a `col op literal` style atom, else None."""
    if isinstance(pred, A.Compare):
        for col, other in ((pred.left, pred.right), (pred.right, pred.left)):
            if isinstance(col, A.ColumnRef) and col.bound and isinstance(other, A.Literal):
                return col
        return None
    if isinstance(pred, (A.Between, A.InList, A.Like, A.IsNull, A.IsBool)):
        expr = pred.expr
        if isinstance(expr, A.ColumnRef) and expr.bound:
            return expr
    if isinstance(pred, A.Not):
        return _simple_column(pred.operand)
    return None


class _Enforcer:
    def __init__(self, data: TableData, schemas: SchemaSet, constraints):
        self.data = data
        self.schemas = schemas
        self.root = data.schema_name
        self.log = EnforcementLog()
        self.constraints = [bind_paths(c, data.table) for c in constraints]
        self.intervals = _intervals([c for c in self.constraints if not isinstance(c, A.Or)])

    def field(self, path: ColumnPath) -> FieldDef | None:
        return field_for(self.schemas, self.root, path)

    def assign(self, i: int, path: ColumnPath, value: Any, reason: str, tag: str = SUBSTITUTED):
        row = self.data.rows[i]
        old = read_path(row, path)
        if old is not None and value is not None and type(old) is type(value):
            try:
                if compare_values(old, value) == 0 and old == value:
                    return
            except Uneval:
                pass
        set_path(row, path.segments, value)
        self.data.provenance[(i, str(path))] = tag
        self.log.substitutions.append(
            {"table": self.data.table, "row": i, "column": str(path), "old": display(old), "new": display(value),
             "reason": reason}
        )

    def interval_value(self, path: ColumnPath, f: FieldDef, i: int) -> Any:
        bounds = self.intervals.get(path)
        if not bounds:
            return None
        lo = hi = None
        for kind, raw, is_open in bounds:
            value = to_field(f, raw)
            if kind == "lo":
                value = _step(value, 1) if is_open else value
                if lo is None or compare_values(value, lo) > 0:
                    lo = value
            else:
                value = _step(value, -1) if is_open else value
                if hi is None or compare_values(value, hi) < 0:
                    hi = value
        if lo is not None and hi is not None:
            if compare_values(lo, hi) > 0:
                raise EnforcementError(f"empty range for {path}: {display(lo)} > {display(hi)}", str(path))
            return _interpolate(f, lo, hi, spread_fraction(i))
        return lo if lo is not None else hi

    def repair(self, i: int, pred) -> bool:
        """Try to make row ``i`` satisfy ``pred`` by substitution; True when it now holds."""
        row = self.data.rows[i]
        if evaluate_predicate(row, pred) is True:
            return True
        if isinstance(pred, A.And):
            return all(self.repair(i, p) for p in pred.items)
        if isinstance(pred, A.Literal):
            return pred.value is True
        reason = render(pred)
        col = _simple_column(pred)
        value: Any = UNEVALUABLE
        if col is not None:
            f = self.field(col.path)
            if f is None:
                return False
            try:
                value = self.simple_value(pred, col, f, i, row)
            except (Uneval, ValueError):
                value = UNEVALUABLE
            if value is not UNEVALUABLE:
                trial = copy.deepcopy(row)
                set_path(trial, col.path.segments, value)
                if evaluate_predicate(trial, pred) is True:
                    self.assign(i, col.path, value, reason)
                    return True
        if not is_evaluable(pred):
            return False
        refs = _bare_columns(pred)
        if len({r.path for r in refs}) == 1:
            solved = solve_derived(pred, row, self.schemas, self.root)
            if solved is not None:
                self.assign(i, solved[0], solved[1], reason)
                return True
        return False

    def simple_value(self, pred, col: A.ColumnRef, f: FieldDef, i: int, row: dict) -> Any:
        if isinstance(pred, A.Not):
            inner = pred.operand
            if isinstance(inner, A.Compare) and inner.op == "=":
                return self.simple_value(A.Compare("!=", inner.left, inner.right), col, f, i, row)
            return UNEVALUABLE
        if isinstance(pred, A.Compare):
            lit = pred.right if pred.left is col else pred.left
            op = pred.op if pred.left is col else {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(pred.op, pred.op)
            target = to_field(f, lit.value)
            if op == "=":
                return target
            if op == "!=":
                current = read_path(row, col.path)
                if current is None:
                    return _step(target, 1) if not isinstance(target, EnumVal) else self._other_enum(f, target)
                return _step(current, 1) if not isinstance(current, EnumVal) else self._other_enum(f, target)
            ranged = self.interval_value(col.path, f, i)
            if ranged is not None:
                return ranged
            return _target_for(op, target)
        if isinstance(pred, A.Between):
            if pred.negated:
                return _step(to_field(f, pred.hi.value), 1) if isinstance(pred.hi, A.Literal) else UNEVALUABLE
            ranged = self.interval_value(col.path, f, i)
            if ranged is not None:
                return ranged
            if isinstance(pred.lo, A.Literal) and isinstance(pred.hi, A.Literal):
                return _interpolate(f, to_field(f, pred.lo.value), to_field(f, pred.hi.value), spread_fraction(i))
            return UNEVALUABLE
        if isinstance(pred, A.InList):
            items = [it.value for it in pred.items if isinstance(it, A.Literal)]
            if pred.negated or not items:
                return UNEVALUABLE
            return to_field(f, items[i % len(items)])
        if isinstance(pred, A.Like):
            if pred.negated or not isinstance(pred.pattern, A.Literal):
                return UNEVALUABLE
            return _like_value(pred.pattern.value, i)
        if isinstance(pred, A.IsNull):
            return None if not pred.negated else UNEVALUABLE
        if isinstance(pred, A.IsBool):
            return pred.value if not pred.negated else (not pred.value)
        return UNEVALUABLE

    def _other_enum(self, f: FieldDef, avoid: EnumVal) -> EnumVal:
        values = [v for v in f.kind.values if v != avoid.name]
        if not values:
            raise Uneval("enum has no alternative value")
        return EnumVal(values[0])

    # -- stages -------------------------------------------------------------

    def coverage(self, targets):
        offset = 0
        n = len(self.data.rows)
        singles = [c for c in self.constraints if not isinstance(c, A.Or)]
        for target in targets:
            required = target.required_values()
            ok, missing = target.check(self.data.rows)
            if ok or n == 0:
                offset += len(required)
                continue
            col_constraints = [c for c in singles if {r.path for r in _bare_columns(c)} == {target.column}]
            for k, value in enumerate(required):
                i = (offset + k) % n
                trial = copy.deepcopy(self.data.rows[i])
                set_path(trial, target.column.segments, value)
                clash = [c for c in col_constraints if evaluate_predicate(trial, c) is False]
                if clash:
                    self.log.conflicts.append(
                        f"coverage value {display(value)} for {self.data.table}.{target.column} violates "
                        f"{render(clash[0])}; the constraint wins"
                    )
                    continue
                if any(_same(value, m) for m in missing):
                    self.assign(i, target.column, value, f"coverage: {target.kind}")
            offset += len(required)

    def conjunctive(self):
        for c in self.constraints:
            if isinstance(c, A.Or):
                continue
            for i in range(len(self.data.rows)):
                if not self.repair(i, c):
                    self._unsolved(c, i)

    def disjunctive(self):
        for c in self.constraints:
            if not isinstance(c, A.Or):
                continue
            branches = list(c.items)
            for i in range(len(self.data.rows)):
                branch = branches[i % len(branches)]
                if not self.repair(i, branch) and not self.repair(i, c):
                    self._unsolved(c, i)

    def generators(self, gens: dict[ColumnPath, Incremental]):
        for path, spec in gens.items():
            f = self.field(path)
            if f is None:
                continue
            for i in range(len(self.data.rows)):
                self.assign(i, path, coerce_literal(f, spec.value_at(i)), f"generator: {spec.describe()}")

    def unique(self, columns):
        for path in columns:
            f = self.field(path)
            if f is None:
                continue
            seen: list[Any] = []
            for i, row in enumerate(self.data.rows):
                value = read_path(row, path)
                if value is None:
                    continue
                if any(_same(value, s) for s in seen):
                    new = value
                    while any(_same(new, s) for s in seen) or any(
                        _same(new, read_path(r, path)) for r in self.data.rows
                    ):
                        new = _step(new, 1) if not isinstance(new, str) else f"{new}_dup"
                    self.assign(i, path, new, "uniqueness")
                    value = new
                seen.append(value)

    def _unsolved(self, c, i: int):
        msg = f"{self.data.table}: row {i} could not be made to satisfy {render(c)}"
        if msg not in self.log.unsolved:
            self.log.unsolved.append(msg)


def _same(a, b) -> bool:
    try:
        return compare_values(a, b) == 0
    except Uneval:
        return False


def enforce_constraints(
    data: TableData,
    constraints,
    coverage=(),
    schemas: SchemaSet | None = None,
    unique=(),
    generators: dict | None = None,
) -> tuple[TableData, EnforcementLog]:
    """Substitute values so every row meets the conjunctive constraints and coverage is reached.

    Order: generators, coverage, disjunctive constraints, conjunctive constraints,
    uniqueness.  Conjunctive constraints run after coverage, so they win conflicts.
    """
    if schemas is None:
        raise ValueError("schemas are required for enforcement")
    out = data.copy()
    enforcer = _Enforcer(out, schemas, constraints)
    if generators:
        enforcer.generators(generators)
    enforcer.coverage(coverage)
    enforcer.disjunctive()
    enforcer.conjunctive()
    enforcer.unique(unique)
    return out, enforcer.log


# ---------------------------------------------------------------------------
# joins


def _apply_casts(value: Any, casts) -> Any:
    for type_name, safe in casts:
        try:
            value = cast_value(value, type_name)
        except EvalError:
            if safe:
                return None
            raise
    return value


def enforce_joins(
    tables: dict[str, TableData], joins, schemas: SchemaSet, fanout: int = 1
) -> tuple[dict[str, TableData], EnforcementLog]:
    """Copy primary join-key values into secondary rows index-cyclically (row i takes primary row i mod n)."""
    if fanout < 1:
        raise ValueError("fanout must be positive")
    out = {name: t.copy() for name, t in tables.items()}
    log_ = EnforcementLog()
    for pair in joins:
        p, s = pair.primary, pair.secondary
        if p.table not in out or s.table not in out:
            raise EnforcementError(f"join table missing from generated data: {p.table} / {s.table}", pair.condition)
        prim, sec = out[p.table], out[s.table]
        if not prim.rows:
            raise EnforcementError(f"primary table {p.table} has no rows to join", pair.condition)
        f = field_for(schemas, sec.schema_name, s.column)
        if f is None:
            raise EnforcementError(f"join column {s.table}.{s.column} does not resolve", pair.condition)
        source_rows = [copy.deepcopy(r) for r in prim.rows]
        for i, row in enumerate(sec.rows):
            src = source_rows[(i // fanout) % len(source_rows)]
            value = read_path(src, p.column)
            if value is None:
                raise EnforcementError(f"join column {p.table}.{p.column} missing in primary row "
                                       f"{(i // fanout) % len(source_rows)}", pair.condition)
            try:
                keyed = _apply_casts(value, p.casts)
                target = to_field(f, keyed)
            except Uneval as exc:
                raise EnforcementError(f"cannot carry {display(value)} into {s.table}.{s.column}: {exc}",
                                       pair.condition) from None
            old = read_path(row, s.column)
            if old is not None and _same(old, target) and type(old) is type(target):
                continue
            set_path(row, s.column.segments, target)
            sec.provenance[(i, str(s.column))] = JOIN_SYNCED
            log_.substitutions.append(
                {"table": s.table, "row": i, "column": str(s.column), "old": display(old), "new": display(target),
                 "reason": f"join: {pair.condition}"}
            )
    return out, log_
