"""Deterministic validation rules: structure (r1, r2), correlation (r3) and joins (r4)."""

from __future__ import annotations

from datetime import date
from typing import Any, Iterator

from ..schema import DEFAULT_RECURSION_CAP, ColumnPath, EnumKind, FieldDef, MessageKind, Primitive, PrimitiveKind, SchemaSet
from ..values import EnumVal, Timestamp, display, kind_name
from .evaluator import Uneval, cast_value, compare_values
from .results import RuleResult, Violation
from .stats import DEFAULT_ALPHA, DEFAULT_PEARSON_THRESHOLD, Degenerate, as_number, chi_square_dependent, pearson

MIN_CORRELATION_ROWS = 5


def values_at(record: Any, segments: tuple[str, ...]) -> Iterator[Any]:
    """Every value stored at ``segments``, fanning out through repeated records."""
    if isinstance(record, list):
        for element in record:
            yield from values_at(element, segments)
        return
    if not isinstance(record, dict):
        return
    if segments[0] not in record:
        return
    value = record[segments[0]]
    if len(segments) == 1:
        if value is not None:
            yield value
        return
    yield from values_at(value, segments[1:])


def leaf_columns(schemas: SchemaSet, root: str, recursion_cap: int = DEFAULT_RECURSION_CAP) -> list[tuple[ColumnPath, FieldDef]]:
    """Non-deprecated scalar columns reachable within the recursion cap."""
    return [(p, f) for p, f in schemas.walk(root, recursion_cap=recursion_cap) if not isinstance(f.kind, MessageKind)]


# ---------------------------------------------------------------------------
# r1 / r2


def scalar_problem(f: FieldDef, value: Any) -> str | None:
    """None when ``value`` fits the scalar field, else the reason."""
    if isinstance(f.kind, EnumKind):
        if isinstance(value, EnumVal):
            if value.name in f.kind.values:
                return None
            return f"{value.name!r} is not a value of enum {f.kind.name} {{{', '.join(f.kind.values)}}}"
        return f"expected an enum {f.kind.name} value, got {kind_name(value)} {display(value)}"
    p = f.kind.type
    if p is Primitive.INT64:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif p is Primitive.FLOAT64:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif p is Primitive.BOOL:
        ok = isinstance(value, bool)
    elif p is Primitive.STRING:
        ok = isinstance(value, str)
    elif p is Primitive.BYTES:
        ok = isinstance(value, (bytes, str))
    elif p is Primitive.DATE:
        ok = isinstance(value, date) and not hasattr(value, "hour")
    else:
        ok = isinstance(value, Timestamp)
    if ok:
        return None
    return f"expected {f.type_label}, got {kind_name(value)} {display(value)}"


def _check_record(schemas, message, record, prefix, row, table, out: list[Violation]):
    fields = {f.name: f for f in message.fields}
    for key, value in record.items():
        path = ".".join(prefix + (key,))
        f = fields.get(key)
        if f is None:
            out.append(Violation("r2", f"column {path} is not in schema {message.name}", table, path, row))
            continue
        if value is None:
            continue
        if f.repeated:
            if not isinstance(value, list):
                out.append(Violation("r2", f"repeated field expects a list, got {kind_name(value)}", table, path, row))
                continue
            elements = value
        else:
            if isinstance(value, list):
                out.append(Violation("r2", "wrong nesting: a list where a single value is required", table, path, row))
                continue
            elements = [value]
        for element in elements:
            if isinstance(f.kind, MessageKind):
                target = schemas.messages.get(f.kind.ref)
                if not isinstance(element, dict):
                    out.append(Violation("r2", f"wrong nesting: a scalar {display(element)} where record "
                                               f"{f.kind.ref} is required", table, path, row))
                elif target is not None:
                    _check_record(schemas, target, element, prefix + (key,), row, table, out)
            else:
                if isinstance(element, (dict, list)):
                    out.append(Violation("r2", f"wrong nesting: a record where {f.type_label} is required",
                                         table, path, row))
                    continue
                problem = scalar_problem(f, element)
                if problem:
                    out.append(Violation("r2", problem, table, path, row))


def check_structure(
    rows: list[dict], schemas: SchemaSet, root: str, table: str | None = None,
    recursion_cap: int = DEFAULT_RECURSION_CAP,
) -> tuple[RuleResult, RuleResult]:
    """r1 (missing columns) and r2 (kind mismatches, unknown columns, wrong nesting)."""
    table = table or root
    missing = []
    for path, _ in leaf_columns(schemas, root, recursion_cap):
        if not any(True for row in rows for _ in values_at(row, path.segments)):
            missing.append(path)
    r1 = [Violation("r1", f"column {p} is absent from all {len(rows)} rows", table, str(p)) for p in missing]
    r2: list[Violation] = []
    message = schemas.get(root)
    for i, row in enumerate(rows):
        _check_record(schemas, message, row, (), i, table, r2)
    return RuleResult.from_violations("r1", r1), RuleResult.from_violations("r2", r2)


# ---------------------------------------------------------------------------
# r3


def _column(rows, path: ColumnPath) -> list[Any]:
    out = []
    for row in rows:
        found = list(values_at(row, path.segments))
        out.append(found[0] if found else None)
    return out


def _categorical(value: Any) -> Any:
    if isinstance(value, EnumVal):
        return value.name
    if isinstance(value, (str, bool)):
        return value
    return None


def _pair_test(xs, ys, threshold, alpha) -> tuple[bool | None, str]:
    """(passed, note); passed is None when the pair is untestable."""
    nx = [as_number(v) for v in xs]
    ny = [as_number(v) for v in ys]
    pairs = [(a, b) for a, b in zip(nx, ny) if a is not None and b is not None]
    if len(pairs) >= 2 and len(pairs) * 2 >= len(xs):
        try:
            r = pearson([a for a, _ in pairs], [b for _, b in pairs])
        except Degenerate as exc:
            return None, f"pearson skipped: {exc}"
        return abs(r) > threshold, f"pearson r = {r:.6g}"
    cx = [_categorical(v) for v in xs]
    cy = [_categorical(v) for v in ys]
    cats = [(a, b) for a, b in zip(cx, cy) if a is not None and b is not None]
    if len(cats) >= 2 and len(cats) * 2 >= len(xs):
        try:
            dependent, stat, crit = chi_square_dependent([a for a, _ in cats], [b for _, b in cats], alpha)
        except Degenerate as exc:
            return None, f"chi-square skipped: {exc}"
        return dependent, f"chi-square {stat:.6g} vs critical {crit:.6g}"
    return None, "mixed or sparse pair skipped"


def _ordering_violations(rows, group, table) -> list[Violation]:
    out = []
    cols = list(group.ordering)
    for i, row in enumerate(rows):
        values = []
        for c in cols:
            found = list(values_at(row, c.segments))
            values.append(found[0] if found else None)
        for (a, va), (b, vb) in zip(zip(cols, values), list(zip(cols, values))[1:]):
            if va is None or vb is None:
                continue
            try:
                bad = compare_values(va, vb) > 0
            except Uneval:
                continue
            if bad:
                out.append(Violation("r3", f"ordering violated: {a}={display(va)} is after {b}={display(vb)} "
                                           f"({group.correlation_note})", table, str(b), i))
    return out


def check_correlation(
    rows: list[dict], groups, table: str | None = None,
    threshold: float = DEFAULT_PEARSON_THRESHOLD, alpha: float = DEFAULT_ALPHA,
) -> RuleResult:
    """r3 over hinted groups: any correlated pair passes a group; declared orderings must hold row-wise."""
    hinted = [g for g in groups if g.hinted]
    if not hinted:
        return RuleResult("r3", notes=["no hinted column groups"])
    if len(rows) < MIN_CORRELATION_ROWS:
        return RuleResult.skipped("r3", f"insufficient rows ({len(rows)} < {MIN_CORRELATION_ROWS})")
    violations: list[Violation] = []
    notes: list[str] = []
    for g in hinted:
        members = list(g.members)
        label = ", ".join(str(m) for m in members)
        if g.ordering:
            violations.extend(_ordering_violations(rows, g, table))
        if len(members) < 2:
            continue
        passed, tested = False, 0
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                result, note = _pair_test(_column(rows, members[a]), _column(rows, members[b]), threshold, alpha)
                notes.append(f"{members[a]} ~ {members[b]}: {note}")
                if result is None:
                    continue
                tested += 1
                passed = passed or result
        if tested and not passed:
            violations.append(Violation("r3", f"no correlated column pair in group ({label}); "
                                              f"expected: {g.correlation_note}", table))
    return RuleResult.from_violations("r3", violations, notes)


# ---------------------------------------------------------------------------
# r4


def _key(value: Any, casts) -> Any:
    for type_name, safe in casts:
        try:
            value = cast_value(value, type_name)
        except Uneval:
            if safe:
                return None
            raise
    return value.name if isinstance(value, EnumVal) else value


def _equal(a: Any, b: Any) -> bool:
    if a is None or b is None:
        return False
    try:
        return compare_values(a, b) == 0
    except Uneval:
        return False


def join_matches(primary_rows, secondary_rows, pair) -> list[tuple[int, int]]:
    """Nested-loop equijoin on one join pair; returns (primary index, secondary index) matches."""
    pk = [_safe_key(r, pair.primary) for r in primary_rows]
    sk = [_safe_key(r, pair.secondary) for r in secondary_rows]
    return [(i, j) for j, b in enumerate(sk) for i, a in enumerate(pk) if _equal(a, b)]


def _safe_key(row, side) -> Any:
    found = list(values_at(row, side.column.segments))
    if not found:
        return None
    try:
        return _key(found[0], side.casts)
    except Uneval:
        return None


def check_joins(tables: dict[str, list[dict]], joins) -> RuleResult:
    """r4: each join pair matches at least once and every secondary key exists on the primary side."""
    violations: list[Violation] = []
    for pair in joins:
        p, s = pair.primary, pair.secondary
        cond = pair.condition or f"{p.table}.{p.column} = {s.table}.{s.column}"
        prim, sec = tables.get(p.table), tables.get(s.table)
        if prim is None or sec is None:
            violations.append(Violation("r4", f"join table missing from data ({cond})", s.table, str(s.column)))
            continue
        if not prim or not sec:
            empty = p.table if not prim else s.table
            violations.append(Violation("r4", f"empty table {empty} cannot satisfy join {cond}", empty))
            continue
        matches = join_matches(prim, sec, pair)
        if not matches:
            violations.append(Violation("r4", f"join {cond} matches no row pairs", s.table, str(s.column)))
        matched = {j for _, j in matches}
        for j, row in enumerate(sec):
            if j not in matched:
                key = _safe_key(row, s)
                violations.append(Violation(
                    "r4", f"{s.table}.{s.column}={display(key)} has no matching {p.table}.{p.column} ({cond})",
                    s.table, str(s.column), j))
    return RuleResult.from_violations("r4", violations)
