"""Coverage targets: value sets, date partitions and range spreads a table must exercise."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Any

from .records import coerce_scalar
from .schema import ColumnPath, EnumKind, FieldDef, Primitive, PrimitiveKind
from .values import EnumVal, Timestamp
from .validation.evaluator import Uneval, compare_values, get_path, trunc_date
from .zones import local_to_epoch

MAX_BUCKETS = 400


def _native(f: FieldDef | None, value: Any) -> Any:
    if f is None:
        return value
    out = coerce_scalar(f, value)
    if isinstance(f.kind, EnumKind) and isinstance(out, str):
        return EnumVal(out)
    return out


def _same(a: Any, b: Any) -> bool:
    try:
        return compare_values(a, b) == 0
    except Uneval:
        return False


def _column_values(rows: list[dict], column: ColumnPath) -> list[Any]:
    out = []
    for row in rows:
        try:
            v = get_path(row, column.segments)
        except Uneval:
            continue
        if v is not None:
            out.append(v)
    return out


def _as_date(v: Any) -> date | None:
    if isinstance(v, date):
        return v
    if isinstance(v, Timestamp):
        return v.local().date()
    if isinstance(v, str):
        try:
            return date.fromisoformat(v[:10])
        except ValueError:
            return None
    return None


@dataclass(frozen=True)
class ValueSet:
    table: str
    column: ColumnPath
    values: tuple
    sentinel: Any = None
    field: FieldDef | None = None
    origin: str = "case"

    kind = "value_set"

    @property
    def demand(self) -> int:
        return len(self.required_values())

    def required_values(self) -> list[Any]:
        items = list(self.values) + ([self.sentinel] if self.sentinel is not None else [])
        out = []
        for v in items:
            nv = _native(self.field, v)
            if not any(_same(nv, o) for o in out):
                out.append(nv)
        return out

    def check(self, rows: list[dict]) -> tuple[bool, list[Any]]:
        seen = _column_values(rows, self.column)
        missing = [v for v in self.required_values() if not any(_same(v, s) for s in seen)]
        return not missing, missing

    def describe(self) -> str:
        text = f"{self.column} must take each of " + ", ".join(str(v) for v in self.values)
        if self.sentinel is not None:
            text += f" plus one other value such as {self.sentinel}"
        return text

    def to_dict(self) -> dict:
        out = {"table": self.table, "column": str(self.column), "kind": self.kind,
               "values": [str(v) for v in self.values]}
        if self.sentinel is not None:
            out["sentinel"] = str(self.sentinel)
        return out


@dataclass(frozen=True)
class Partition:
    table: str
    column: ColumnPath
    part: str
    lo: date
    hi: date
    field: FieldDef | None = None

    kind = "partition"

    def buckets(self) -> list[date]:
        out = []
        current = trunc_date(self.lo, self.part)
        while current <= self.hi and len(out) < MAX_BUCKETS:
            out.append(current)
            current = _next_bucket(current, self.part)
        return out

    @property
    def demand(self) -> int:
        return len(self.buckets())

    def required_values(self) -> list[Any]:
        picks = [max(b, self.lo) for b in self.buckets()]
        if self.field is not None and isinstance(self.field.kind, PrimitiveKind) and \
                self.field.kind.type is Primitive.TIMESTAMP:
            return [Timestamp(local_to_epoch(datetime(p.year, p.month, p.day, 12), "UTC")) for p in picks]
        return picks

    def check(self, rows: list[dict]) -> tuple[bool, list[Any]]:
        filled = set()
        for v in _column_values(rows, self.column):
            d = _as_date(v)
            if d is not None and self.lo <= d <= self.hi:
                filled.add(trunc_date(d, self.part))
        missing = [b for b in self.buckets() if b not in filled]
        return not missing, missing

    def describe(self) -> str:
        return (f"{self.column} must have at least one row in every {self.part.lower()} "
                f"between {self.lo.isoformat()} and {self.hi.isoformat()}")

    def to_dict(self) -> dict:
        return {"table": self.table, "column": str(self.column), "kind": self.kind, "part": self.part,
                "lo": self.lo.isoformat(), "hi": self.hi.isoformat(),
                "buckets": [b.isoformat() for b in self.buckets()]}


def _next_bucket(d: date, part: str) -> date:
    if part in ("DAY",):
        return d + timedelta(days=1)
    if part in ("WEEK", "ISOWEEK"):
        return d + timedelta(days=7)
    months = {"MONTH": 1, "QUARTER": 3, "YEAR": 12}.get(part)
    if months is None:
        raise ValueError(f"unsupported partition part {part}")
    total = d.year * 12 + (d.month - 1) + months
    return date(total // 12, total % 12 + 1, 1)


@dataclass(frozen=True)
class RangeSpread:
    table: str
    column: ColumnPath
    lo: Any
    hi: Any
    field: FieldDef | None = None

    kind = "range_spread"

    def required_values(self) -> list[Any]:
        lo, hi = _native(self.field, self.lo), _native(self.field, self.hi)
        out = [lo]
        mid = _midpoint(lo, hi)
        if mid is not None and not _same(mid, lo) and not _same(mid, hi):
            out.append(mid)
        if not _same(hi, lo):
            out.append(hi)
        return out

    @property
    def demand(self) -> int:
        return len(self.required_values())

    def check(self, rows: list[dict]) -> tuple[bool, list[Any]]:
        values = _column_values(rows, self.column)
        req = self.required_values()
        missing = [v for v in (req[0], req[-1]) if not any(_same(v, s) for s in values)]
        if len(req) == 3:
            def interior(s):
                try:
                    return compare_values(s, req[0]) > 0 and compare_values(s, req[-1]) < 0
                except Uneval:
                    return False
            if not any(interior(s) for s in values):
                missing.append(req[1])
        return not missing, missing

    def describe(self) -> str:
        return f"{self.column} must include {self.lo}, {self.hi} and a value strictly between them"

    def to_dict(self) -> dict:
        return {"table": self.table, "column": str(self.column), "kind": self.kind,
                "lo": str(self.lo), "hi": str(self.hi)}


def _midpoint(lo: Any, hi: Any) -> Any:
    if isinstance(lo, bool) or isinstance(hi, bool):
        return None
    if isinstance(lo, int) and isinstance(hi, int):
        return (lo + hi) // 2
    if isinstance(lo, (int, float)) and isinstance(hi, (int, float)):
        return (lo + hi) / 2
    if isinstance(lo, date) and isinstance(hi, date):
        return lo + timedelta(days=(hi - lo).days // 2)
    if isinstance(lo, Timestamp) and isinstance(hi, Timestamp):
        return Timestamp((lo.seconds + hi.seconds) // 2, lo.zone)
    return None


CoverageTarget = ValueSet | Partition | RangeSpread

_KIND_ORDER = {"value_set": 0, "partition": 1, "range_spread": 2}


def coverage_key(target) -> tuple:
    return (target.table, str(target.column), _KIND_ORDER[target.kind], str(target.to_dict()))


def sentinel_for(f: FieldDef | None, values: list[Any]) -> Any:
    """Pick a deterministic value outside ``values`` to exercise an ELSE branch."""
    if f is not None and isinstance(f.kind, EnumKind):
        names = {str(v) for v in values}
        outside = sorted(v for v in f.kind.values if v not in names)
        return outside[0] if outside else None
    kind = f.kind.type if f is not None and isinstance(f.kind, PrimitiveKind) else None
    if kind is Primitive.BOOL or (kind is None and values and all(isinstance(v, bool) for v in values)):
        remaining = [b for b in (False, True) if b not in values]
        return remaining[0] if remaining else None
    if kind in (Primitive.INT64,) or (kind is None and values and all(isinstance(v, int) for v in values)):
        ints = [int(v) for v in values if isinstance(v, (int, float)) or str(v).lstrip("-").isdigit()]
        return (max(ints) + 1) if ints else 0
    if kind is Primitive.FLOAT64:
        nums = [float(v) for v in values if isinstance(v, (int, float))]
        return (max(nums) + 1.0) if nums else 0.0
    if kind is Primitive.DATE:
        dates = [d for d in (_as_date(v) for v in values) if d is not None]
        return (max(dates) + timedelta(days=1)).isoformat() if dates else None
    if kind is Primitive.TIMESTAMP:
        return None
    taken = {str(v) for v in values}
    candidate, i = "OTHER", 1
    while candidate in taken:
        candidate = f"OTHER_{i}"
        i += 1
    return candidate
