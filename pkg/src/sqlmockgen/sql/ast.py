"""AST node types for the SQL subset.

Every node carries a ``span`` (start, end offsets into the source) that is
excluded from equality so structurally identical trees compare equal.
Column references gain ``table``/``path`` bindings during analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any, Callable, Iterator, Optional, Union

from ..schema import ColumnPath

Span = Optional[tuple[int, int]]


def _span():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class ColumnRef:
    parts: tuple[str, ...]
    table: str | None = None
    path: ColumnPath | None = None
    source: int | None = field(default=None, compare=False, repr=False)
    derived_from: Any = field(default=None, compare=False, repr=False)
    span: Span = _span()

    @property
    def bound(self) -> bool:
        return self.table is not None and self.path is not None


@dataclass(frozen=True)
class Literal:
    value: Any
    span: Span = _span()


@dataclass(frozen=True)
class Star:
    qualifier: tuple[str, ...] = ()
    span: Span = _span()


@dataclass(frozen=True)
class Param:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: Any
    span: Span = _span()


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: Any
    right: Any
    span: Span = _span()


@dataclass(frozen=True)
class Compare:
    op: str  # = != < <= > >=
    left: Any
    right: Any
    span: Span = _span()


@dataclass(frozen=True)
class Between:
    expr: Any
    lo: Any
    hi: Any
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Like:
    expr: Any
    pattern: Any
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class InList:
    expr: Any
    items: tuple
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class InSubquery:
    expr: Any
    query: Any
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class IsNull:
    expr: Any
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class IsBool:
    expr: Any
    value: bool
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class And:
    items: tuple
    span: Span = _span()


@dataclass(frozen=True)
class Or:
    items: tuple
    span: Span = _span()


@dataclass(frozen=True)
class Not:
    operand: Any
    span: Span = _span()


@dataclass(frozen=True)
class DatePart:
    name: str  # upper case, e.g. QUARTER
    span: Span = _span()


@dataclass(frozen=True)
class FuncCall:
    name: str  # upper case, dotted names kept
    args: tuple = ()
    distinct: bool = False
    unevaluable: bool = False
    aggregate: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Cast:
    expr: Any
    type_name: str
    safe: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Case:
    operand: Any
    whens: tuple  # of (condition, result)
    else_: Any = None
    span: Span = _span()


@dataclass(frozen=True)
class SubqueryExpr:
    query: Any
    exists: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Opaque:
    """A construct outside the supported subset, kept as source text."""

    text: str
    inner: tuple = ()
    span: Span = _span()


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class SelectItem:
    expr: Any
    alias: str | None = None
    span: Span = _span()


@dataclass(frozen=True)
class OrderItem:
    expr: Any
    desc: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None
    span: Span = _span()


@dataclass(frozen=True)
class SubqueryRef:
    query: Any
    alias: str | None = None
    span: Span = _span()


@dataclass(frozen=True)
class UnnestRef:
    expr: Any
    alias: str | None = None
    span: Span = _span()


@dataclass(frozen=True)
class Join:
    kind: str  # INNER, LEFT, RIGHT, FULL, CROSS, COMMA
    left: Any
    right: Any
    on: Any = None
    using: tuple = ()
    span: Span = _span()


@dataclass(frozen=True)
class Select:
    items: tuple
    from_: Any = None
    where: Any = None
    group_by: tuple = ()
    having: Any = None
    order_by: tuple = ()
    limit: Any = None
    distinct: bool = False
    with_: tuple = ()  # of (name, query)
    span: Span = _span()


@dataclass(frozen=True)
class SetOp:
    op: str
    left: Any
    right: Any
    all: bool = False
    order_by: tuple = ()
    limit: Any = None
    with_: tuple = ()
    span: Span = _span()


@dataclass(frozen=True)
class CreateFunction:
    name: str
    params: tuple  # of (name, type name)
    returns: str | None
    body: Any
    span: Span = _span()


Expr = Union[
    ColumnRef, Literal, Star, Param, Unary, BinaryOp, Compare, Between, Like, InList, InSubquery,
    IsNull, IsBool, And, Or, Not, DatePart, FuncCall, Cast, Case, SubqueryExpr, Opaque,
]
Query = Union[Select, SetOp]

QUERY_TYPES = (Select, SetOp)


# ---------------------------------------------------------------------------
# traversal helpers


def children(node: Any) -> Iterator[Any]:
    """Direct child nodes (expressions and queries), in field order."""
    if not is_dataclass(node):
        return
    for f in fields(node):
        if f.name in ("span", "source", "derived_from", "path"):
            continue
        yield from _flatten(getattr(node, f.name))


def _flatten(value: Any) -> Iterator[Any]:
    if is_dataclass(value) and not isinstance(value, ColumnPath):
        yield value
    elif isinstance(value, tuple):
        for v in value:
            yield from _flatten(v)


def walk(node: Any, into_queries: bool = True) -> Iterator[Any]:
    """Pre-order traversal; ``into_queries`` False stops at nested queries."""
    yield node
    for child in children(node):
        if not into_queries and isinstance(child, QUERY_TYPES):
            continue
        yield from walk(child, into_queries)


def transform(node: Any, fn: Callable[[Any], Any | None]) -> Any:
    """Bottom-up rewrite of expression nodes; ``fn`` returns a replacement or None."""
    if not is_dataclass(node) or isinstance(node, ColumnPath):
        return node
    if isinstance(node, QUERY_TYPES):
        replaced = fn(node)
        return node if replaced is None else replaced
    changes = {}
    for f in fields(node):
        if f.name in ("span", "source", "derived_from", "path"):
            continue
        old = getattr(node, f.name)
        new = _transform_value(old, fn)
        if new is not old:
            changes[f.name] = new
    if changes:
        node = replace(node, **changes)
    replaced = fn(node)
    return node if replaced is None else replaced


def _transform_value(value: Any, fn):
    if isinstance(value, tuple):
        new = tuple(_transform_value(v, fn) for v in value)
        return value if all(a is b for a, b in zip(new, value)) else new
    if is_dataclass(value) and not isinstance(value, ColumnPath):
        if isinstance(value, QUERY_TYPES):
            return value
        return transform(value, fn)
    return value


def column_refs(expr: Any) -> list[ColumnRef]:
    """Column references in ``expr`` without descending into subqueries."""
    return [n for n in walk(expr, into_queries=False) if isinstance(n, ColumnRef)]


def tables_of(expr: Any) -> set[str]:
    return {ref.table for ref in column_refs(expr) if ref.table is not None}


def has_aggregate(expr: Any) -> bool:
    return any(isinstance(n, FuncCall) and n.aggregate for n in walk(expr, into_queries=False))


def conjuncts(expr: Any) -> list[Any]:
    if expr is None:
        return []
    if isinstance(expr, And):
        out = []
        for item in expr.items:
            out.extend(conjuncts(item))
        return out
    return [expr]


def make_and(items) -> Any:
    flat = []
    for item in items:
        if isinstance(item, And):
            flat.extend(item.items)
        elif item is not None:
            flat.append(item)
    if not flat:
        return None
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def make_or(items) -> Any:
    flat = []
    for item in items:
        if isinstance(item, Or):
            flat.extend(item.items)
        elif item is not None:
            flat.append(item)
    if not flat:
        return None
    return flat[0] if len(flat) == 1 else Or(tuple(flat))
