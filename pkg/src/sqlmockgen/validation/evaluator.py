"""Three-valued predicate evaluation over generated rows.

A predicate evaluates to ``True``, ``False`` or :data:`UNEVALUABLE`.  The
last covers unsupported functions, subqueries, and comparisons involving
NULL, so a predicate the evaluator cannot decide is never reported as a
violation.  Date and timestamp functions use the built-in zone table.
"""

from __future__ import annotations

import math
import re
from datetime import date, datetime, timedelta
from typing import Any, Callable

from .. import zones
from ..sql import ast as A
from ..sql.parser import EVALUABLE_FUNCTIONS
from ..values import EPOCH, EnumVal, Timestamp, parse_date, parse_timestamp


class _Unevaluable:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNEVALUABLE"

    def __bool__(self):
        raise TypeError("UNEVALUABLE has no truth value; compare with `is`")


UNEVALUABLE = _Unevaluable()


class Uneval(Exception):
    """Raised internally when an expression cannot be evaluated."""


class EvalError(Uneval):
    """An execution error (e.g. a failed CAST); SAFE_ variants turn it into NULL."""


# ---------------------------------------------------------------------------
# row access


def get_path(row: dict, segments, indices=()) -> Any:
    value: Any = row
    for i, seg in enumerate(segments):
        if isinstance(value, list):
            raise Uneval(f"path crosses a repeated field before {seg!r}")
        if not isinstance(value, dict):
            return None
        value = value.get(seg)
        if value is None:
            return None
        if indices and indices[i] is not None:
            if not isinstance(value, list) or indices[i] >= len(value):
                return None
            value = value[indices[i]]
    return value


class Env:
    """Column lookup for one row, or one row per table for cross-table predicates."""

    def __init__(self, row: dict | None = None, tables: dict[str, dict] | None = None):
        self.row = row
        self.tables = tables

    def lookup(self, ref: A.ColumnRef) -> Any:
        if self.tables is not None:
            if ref.table not in self.tables:
                raise Uneval(f"no row for table {ref.table!r}")
            row = self.tables[ref.table]
        else:
            row = self.row
        if row is None:
            raise Uneval("no row")
        if ref.path is not None:
            return get_path(row, ref.path.segments, ref.path.indices)
        return get_path(row, ref.parts)


# ---------------------------------------------------------------------------
# comparison


def _sortable(a: Any, b: Any) -> tuple[Any, Any]:
    if isinstance(a, EnumVal):
        a = a.name
    if isinstance(b, EnumVal):
        b = b.name
    if isinstance(a, bool) or isinstance(b, bool):
        if isinstance(a, bool) and isinstance(b, bool):
            return a, b
        raise Uneval("cannot compare BOOL with a non-BOOL value")
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if (isinstance(a, float) and math.isnan(a)) or (isinstance(b, float) and math.isnan(b)):
            raise Uneval("NaN comparison")
        return a, b
    if isinstance(a, Timestamp) or isinstance(b, Timestamp):
        return _as_epoch(a), _as_epoch(b)
    if isinstance(a, date) or isinstance(b, date):
        return _as_date(a), _as_date(b)
    if isinstance(a, str) and isinstance(b, str):
        return a, b
    if isinstance(a, bytes) and isinstance(b, bytes):
        return a, b
    raise Uneval(f"cannot compare {type(a).__name__} with {type(b).__name__}")


def _as_epoch(v: Any) -> float:
    if isinstance(v, Timestamp):
        return v.seconds
    if isinstance(v, datetime):
        return (v - EPOCH).total_seconds()
    if isinstance(v, date):
        return (datetime(v.year, v.month, v.day) - EPOCH).total_seconds()
    if isinstance(v, str):
        try:
            return parse_timestamp(v).seconds
        except ValueError:
            raise Uneval(f"{v!r} is not a timestamp") from None
    raise Uneval(f"cannot use {type(v).__name__} as a timestamp")


def _as_date(v: Any) -> date:
    if isinstance(v, datetime):
        return v.date()
    if isinstance(v, date):
        return v
    if isinstance(v, str):
        try:
            return parse_date(v)
        except ValueError:
            raise Uneval(f"{v!r} is not a date") from None
    raise Uneval(f"cannot use {type(v).__name__} as a date")


def compare_values(a: Any, b: Any) -> int:
    x, y = _sortable(a, b)
    return (x > y) - (x < y)


_OPS: dict[str, Callable[[int], bool]] = {
    "=": lambda c: c == 0,
    "!=": lambda c: c != 0,
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    ">": lambda c: c > 0,
    ">=": lambda c: c >= 0,
}


# ---------------------------------------------------------------------------
# scalar functions

_INT_TYPES = {"INT64", "INT", "INTEGER", "BIGINT", "SMALLINT", "TINYINT", "BYTEINT"}
_FLOAT_TYPES = {"FLOAT64", "FLOAT", "DOUBLE", "NUMERIC", "BIGNUMERIC", "DECIMAL", "BIGDECIMAL"}


def _float_text(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def timestamp_text(ts: Timestamp) -> str:
    """GoogleSQL's canonical STRING form of a TIMESTAMP (UTC)."""
    wall = EPOCH + timedelta(seconds=ts.seconds)
    text = wall.strftime("%Y-%m-%d %H:%M:%S")
    frac = ts.seconds - int(ts.seconds) if isinstance(ts.seconds, float) else 0
    if frac:
        text += f"{frac:.6f}"[1:].rstrip("0")
    return text + "+00"


def cast_value(value: Any, type_name: str) -> Any:
    t = type_name.upper().split("(")[0].strip()
    if value is None:
        return None
    if isinstance(value, EnumVal):
        value = value.name
    try:
        if t in _INT_TYPES:
            if isinstance(value, bool):
                return int(value)
            if isinstance(value, int):
                return value
            if isinstance(value, float):
                if math.isnan(value) or math.isinf(value):
                    raise EvalError("cannot cast non-finite float to INT64")
                return int(math.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)
            if isinstance(value, str):
                text = value.strip()
                if re.fullmatch(r"[+-]?\d+", text):
                    return int(text)
                if re.fullmatch(r"[+-]?0[xX][0-9a-fA-F]+", text):
                    return int(text, 16)
            raise EvalError(f"bad INT64 value {value!r}")
        if t in _FLOAT_TYPES:
            if isinstance(value, bool):
                raise EvalError("cannot cast BOOL to FLOAT64")
            if isinstance(value, (int, float)):
                return float(value)
            if isinstance(value, str):
                return float(value.strip())
            raise EvalError(f"bad FLOAT64 value {value!r}")
        if t == "STRING":
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, int):
                return str(value)
            if isinstance(value, float):
                return _float_text(value)
            if isinstance(value, Timestamp):
                return timestamp_text(value)
            if isinstance(value, date):
                return value.isoformat()
            if isinstance(value, bytes):
                return value.decode("utf-8")
            if isinstance(value, str):
                return value
            raise EvalError(f"cannot cast {type(value).__name__} to STRING")
        if t == "BOOL":
            if isinstance(value, bool):
                return value
            if isinstance(value, int):
                return value != 0
            if isinstance(value, str) and value.strip().lower() in ("true", "false"):
                return value.strip().lower() == "true"
            raise EvalError(f"bad BOOL value {value!r}")
        if t == "DATE":
            if isinstance(value, Timestamp):
                return zones.to_local(value.seconds, "UTC").date()
            if isinstance(value, date):
                return value
            if isinstance(value, str):
                return parse_date(value)
            raise EvalError(f"cannot cast {type(value).__name__} to DATE")
        if t == "TIMESTAMP":
            if isinstance(value, Timestamp):
                return value
            if isinstance(value, date):
                return Timestamp(zones.local_to_epoch(datetime(value.year, value.month, value.day), "UTC"))
            if isinstance(value, str):
                return parse_timestamp(value)
            raise EvalError(f"cannot cast {type(value).__name__} to TIMESTAMP")
        if t == "BYTES":
            if isinstance(value, bytes):
                return value
            if isinstance(value, str):
                return value.encode("utf-8")
            raise EvalError(f"cannot cast {type(value).__name__} to BYTES")
    except ValueError as exc:
        raise EvalError(str(exc)) from None
    raise Uneval(f"unsupported CAST target {type_name}")


_FORMAT_ALIASES = {
    "%F": "%Y-%m-%d",
    "%T": "%H:%M:%S",
    "%D": "%m/%d/%y",
    "%R": "%H:%M",
    "%E4Y": "%Y",
    "%Ez": "%z",
    "%E*S": "%S.%f",
    "%s": "%s",
}


def _py_format(fmt: str) -> str:
    for k, v in _FORMAT_ALIASES.items():
        fmt = fmt.replace(k, v)
    return fmt


def _zone_arg(args, index) -> str:
    if len(args) > index:
        z = args[index]
        if not isinstance(z, str):
            raise Uneval("time zone argument must be a string")
        return z
    return "UTC"


def _fn_date(args):
    if len(args) == 3:
        y, m, d = args
        if not all(isinstance(x, int) for x in args):
            raise Uneval("DATE(year, month, day) needs integers")
        try:
            return date(y, m, d)
        except ValueError as exc:
            raise EvalError(str(exc)) from None
    if not args or len(args) > 2:
        raise Uneval("DATE takes 1 to 3 arguments")
    value = args[0]
    if isinstance(value, Timestamp):
        return zones.to_local(value.seconds, _zone_arg(args, 1)).date()
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    if isinstance(value, str):
        try:
            return parse_date(value)
        except ValueError:
            try:
                ts = parse_timestamp(value)
            except ValueError:
                raise EvalError(f"cannot convert {value!r} to DATE") from None
            return zones.to_local(ts.seconds, _zone_arg(args, 1)).date()
    raise Uneval(f"DATE does not accept {type(value).__name__}")


def _fn_timestamp_seconds(args):
    if len(args) != 1 or isinstance(args[0], bool) or not isinstance(args[0], int):
        raise Uneval("TIMESTAMP_SECONDS needs one INT64 argument")
    return Timestamp(args[0])


def _fn_parse_timestamp(args):
    if len(args) not in (2, 3) or not isinstance(args[0], str) or not isinstance(args[1], str):
        raise Uneval("PARSE_TIMESTAMP(format, string[, zone])")
    fmt = _py_format(args[0])
    try:
        parsed = datetime.strptime(args[1], fmt)
    except ValueError as exc:
        raise EvalError(str(exc)) from None
    if parsed.tzinfo is not None:
        offset = parsed.utcoffset() or timedelta(0)
        naive = parsed.replace(tzinfo=None)
        return Timestamp(int((naive - EPOCH).total_seconds() - offset.total_seconds()))
    return Timestamp(zones.local_to_epoch(parsed, _zone_arg(args, 2)))


def _fn_format_timestamp(args):
    if len(args) not in (2, 3) or not isinstance(args[0], str):
        raise Uneval("FORMAT_TIMESTAMP(format, timestamp[, zone])")
    ts = args[1]
    if isinstance(ts, str):
        try:
            ts = parse_timestamp(ts)
        except ValueError:
            raise Uneval("FORMAT_TIMESTAMP needs a TIMESTAMP") from None
    if not isinstance(ts, Timestamp):
        raise Uneval("FORMAT_TIMESTAMP needs a TIMESTAMP")
    zone = _zone_arg(args, 2)
    local = zones.to_local(ts.seconds, zone)
    fmt = _py_format(args[0])
    if "%z" in fmt or "%Z" in fmt:
        off = zones.utc_offset(zone, ts.seconds)
        sign = "-" if off < 0 else "+"
        hh, mm = divmod(abs(off) // 60, 60)
        fmt = fmt.replace("%z", f"{sign}{hh:02d}{mm:02d}").replace("%Z", zones.canonical_zone(zone))
    return local.strftime(fmt)


def trunc_date(d: date, part: str) -> date:
    part = part.upper()
    if part == "DAY":
        return d
    if part == "WEEK":
        return d - timedelta(days=(d.weekday() + 1) % 7)
    if part == "ISOWEEK":
        return d - timedelta(days=d.weekday())
    if part == "MONTH":
        return d.replace(day=1)
    if part == "QUARTER":
        return date(d.year, 3 * ((d.month - 1) // 3) + 1, 1)
    if part == "YEAR":
        return date(d.year, 1, 1)
    raise Uneval(f"unsupported DATE_TRUNC part {part}")


def _fn_date_trunc(args, parts):
    if len(args) != 2 or not isinstance(parts[1], A.DatePart):
        raise Uneval("DATE_TRUNC(date, part)")
    value = args[0]
    if isinstance(value, Timestamp):
        value = zones.to_local(value.seconds, "UTC").date()
    elif isinstance(value, str):
        try:
            value = parse_date(value)
        except ValueError:
            raise EvalError(f"{value!r} is not a date") from None
    if not isinstance(value, date):
        raise Uneval("DATE_TRUNC needs a DATE")
    return trunc_date(value, parts[1].name)


def _fn_case(args, upper: bool):
    if len(args) != 1 or not isinstance(args[0], str):
        raise Uneval("LOWER/UPPER need one STRING")
    return args[0].upper() if upper else args[0].lower()


# ---------------------------------------------------------------------------
# evaluation


def eval_expr(expr, env: Env) -> Any:
    """Evaluate a scalar expression; raises :class:`Uneval` when undecidable."""
    if isinstance(expr, A.Literal):
        return expr.value
    if isinstance(expr, A.ColumnRef):
        return env.lookup(expr)
    if isinstance(expr, A.Cast):
        value = eval_expr(expr.expr, env)
        try:
            return cast_value(value, expr.type_name)
        except EvalError:
            if expr.safe:
                return None
            raise
    if isinstance(expr, A.FuncCall):
        return _eval_call(expr, env)
    if isinstance(expr, A.Unary):
        v = eval_expr(expr.operand, env)
        if v is None:
            return None
        if expr.op == "-" and isinstance(v, (int, float)) and not isinstance(v, bool):
            return -v
        raise Uneval(f"unsupported unary {expr.op}")
    if isinstance(expr, A.BinaryOp):
        a = eval_expr(expr.left, env)
        b = eval_expr(expr.right, env)
        if a is None or b is None:
            return None
        if expr.op == "||":
            if isinstance(a, str) and isinstance(b, str):
                return a + b
            raise Uneval("|| needs strings")
        if isinstance(a, bool) or isinstance(b, bool) or not isinstance(a, (int, float)) or not isinstance(b, (int, float)):
            raise Uneval(f"arithmetic {expr.op} needs numbers")
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            if b == 0:
                raise EvalError("division by zero")
            return a / b
        raise Uneval(f"unsupported operator {expr.op}")
    if isinstance(expr, A.Case):
        return _eval_case(expr, env)
    if isinstance(expr, (A.Compare, A.Between, A.Like, A.InList, A.IsNull, A.IsBool, A.And, A.Or, A.Not)):
        result = evaluate(expr, env)
        if result is UNEVALUABLE:
            raise Uneval("undecidable boolean sub-expression")
        return result
    raise Uneval(f"{type(expr).__name__} is not evaluable")


def _eval_call(expr: A.FuncCall, env: Env) -> Any:
    name = expr.name
    if expr.unevaluable or name not in EVALUABLE_FUNCTIONS:
        raise Uneval(f"function {name} is outside the evaluable set")
    args = []
    for a in expr.args:
        args.append(a if isinstance(a, A.DatePart) else eval_expr(a, env))
    if any(a is None for a in args):
        return None
    if name == "DATE":
        return _fn_date(args)
    if name == "TIMESTAMP_SECONDS":
        return _fn_timestamp_seconds(args)
    if name == "PARSE_TIMESTAMP":
        return _fn_parse_timestamp(args)
    if name == "FORMAT_TIMESTAMP":
        return _fn_format_timestamp(args)
    if name == "DATE_TRUNC":
        return _fn_date_trunc(args, expr.args)
    if name in ("LOWER", "UPPER"):
        return _fn_case(args, name == "UPPER")
    raise Uneval(f"function {name} is not implemented")


def _eval_case(expr: A.Case, env: Env) -> Any:
    if expr.operand is not None:
        subject = eval_expr(expr.operand, env)
        for cond, result in expr.whens:
            candidate = eval_expr(cond, env)
            if subject is not None and candidate is not None and compare_values(subject, candidate) == 0:
                return eval_expr(result, env)
    else:
        for cond, result in expr.whens:
            outcome = evaluate(cond, env)
            if outcome is UNEVALUABLE:
                raise Uneval("undecidable CASE condition")
            if outcome:
                return eval_expr(result, env)
    return eval_expr(expr.else_, env) if expr.else_ is not None else None


def like_regex(pattern: str) -> re.Pattern:
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\" and i + 1 < len(pattern):
            out.append(re.escape(pattern[i + 1]))
            i += 2
            continue
        out.append(".*" if ch == "%" else "." if ch == "_" else re.escape(ch))
        i += 1
    return re.compile("".join(out), re.DOTALL)


def _kleene_and(results):
    if any(r is False for r in results):
        return False
    if any(r is UNEVALUABLE for r in results):
        return UNEVALUABLE
    return True


def _kleene_or(results):
    if any(r is True for r in results):
        return True
    if any(r is UNEVALUABLE for r in results):
        return UNEVALUABLE
    return False


def _not(r):
    return UNEVALUABLE if r is UNEVALUABLE else not r


def evaluate(pred, env: Env):
    """Three-valued evaluation of a boolean expression."""
    try:
        if isinstance(pred, A.And):
            return _kleene_and([evaluate(p, env) for p in pred.items])
        if isinstance(pred, A.Or):
            return _kleene_or([evaluate(p, env) for p in pred.items])
        if isinstance(pred, A.Not):
            return _not(evaluate(pred.operand, env))
        if isinstance(pred, A.Compare):
            a = eval_expr(pred.left, env)
            b = eval_expr(pred.right, env)
            if a is None or b is None:
                return UNEVALUABLE
            return _OPS[pred.op](compare_values(a, b))
        if isinstance(pred, A.Between):
            x = eval_expr(pred.expr, env)
            lo = eval_expr(pred.lo, env)
            hi = eval_expr(pred.hi, env)
            if x is None or lo is None or hi is None:
                return UNEVALUABLE
            inside = compare_values(x, lo) >= 0 and compare_values(x, hi) <= 0
            return inside != pred.negated
        if isinstance(pred, A.Like):
            x = eval_expr(pred.expr, env)
            pattern = eval_expr(pred.pattern, env)
            if x is None or pattern is None:
                return UNEVALUABLE
            if isinstance(x, EnumVal):
                x = x.name
            if not isinstance(x, str) or not isinstance(pattern, str):
                return UNEVALUABLE
            return bool(like_regex(pattern).fullmatch(x)) != pred.negated
        if isinstance(pred, A.InList):
            x = eval_expr(pred.expr, env)
            if x is None:
                return UNEVALUABLE
            results = []
            for item in pred.items:
                try:
                    v = eval_expr(item, env)
                    results.append(UNEVALUABLE if v is None else compare_values(x, v) == 0)
                except Uneval:
                    results.append(UNEVALUABLE)
            outcome = _kleene_or(results)
            return _not(outcome) if pred.negated else outcome
        if isinstance(pred, A.IsNull):
            v = eval_expr(pred.expr, env)
            return (v is None) != pred.negated
        if isinstance(pred, A.IsBool):
            v = eval_expr(pred.expr, env)
            return (v is pred.value) != pred.negated
        if isinstance(pred, A.Literal):
            if isinstance(pred.value, bool):
                return pred.value
            return UNEVALUABLE
        v = eval_expr(pred, env)
        if isinstance(v, bool):
            return v
        return UNEVALUABLE
    except Uneval:
        return UNEVALUABLE


def evaluate_predicate(row: dict, predicate) -> Any:
    """Evaluate ``predicate`` against one row: True, False or UNEVALUABLE."""
    return evaluate(predicate, Env(row=row))


def evaluate_joined(tables: dict[str, dict], predicate) -> Any:
    """Evaluate a predicate spanning several tables, one row per table."""
    return evaluate(predicate, Env(tables=tables))


def is_evaluable(expr) -> bool:
    """Static check: every construct in ``expr`` is inside the evaluable subset."""
    for node in A.walk(expr, into_queries=False):
        if isinstance(node, (A.Opaque, A.SubqueryExpr, A.InSubquery, A.Param, A.Star)):
            return False
        if isinstance(node, A.FuncCall) and (node.unevaluable or node.aggregate or node.name not in EVALUABLE_FUNCTIONS):
            return False
        if isinstance(node, A.Unary) and node.op != "-":
            return False
        if isinstance(node, A.BinaryOp) and node.op not in ("+", "-", "*", "/", "||"):
            return False
    return True
