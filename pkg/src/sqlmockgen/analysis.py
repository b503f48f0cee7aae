"""Query analysis: per-table generation targets, join pairs and coverage targets.

Column references are resolved through nested scopes (subqueries, CTEs,
UNNEST, function parameters) down to base-table occurrences.  Conjuncts
touching a single occurrence become that table's constraints; equalities
between two occurrences become join pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Any

from .context import ContextMap, Incremental, ValueSpec
from .coverage import Partition, RangeSpread, ValueSet, coverage_key, sentinel_for
from .errors import AnalysisError, PathResolutionError
from .schema import ColumnPath, FieldDef, SchemaSet
from .sql import ast as A
from .sql.parser import flagged_constructs, parse_expression, parse_sql
from .sql.render import render
from .values import parse_date

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class JoinSide:
    table: str
    column: ColumnPath
    alias: str | None = None
    casts: tuple[tuple[str, bool], ...] = ()  # innermost first: (type name, safe)

    @property
    def key(self) -> str:
        return self.table


@dataclass(frozen=True)
class JoinPair:
    primary: JoinSide
    secondary: JoinSide
    condition: str = ""

    def to_dict(self, by_alias: bool = False) -> dict:
        a = self.primary.alias if by_alias and self.primary.alias else self.primary.table
        b = self.secondary.alias if by_alias and self.secondary.alias else self.secondary.table
        if a == b:
            b = f"{b}#2"
        return {a: str(self.primary.column), b: str(self.secondary.column)}


@dataclass
class TableTarget:
    name: str
    table: str
    schema_name: str | None
    aliases: list[str] = field(default_factory=list)
    constraints: list[Any] = field(default_factory=list)
    referenced_columns: set[ColumnPath] = field(default_factory=set)
    signals: dict[ColumnPath, ValueSpec] = field(default_factory=dict)
    occurrences: int = 1

    def constraint_texts(self) -> list[str]:
        return [render(c) for c in self.constraints]

    def derived_constraints(self) -> list[Any]:
        return [c for c in self.constraints if is_derived(c)]


@dataclass
class QueryAnalysis:
    sql: str
    targets: list[TableTarget]
    joins: list[JoinPair]
    coverage: list[Any]
    cross_table: list[str] = field(default_factory=list)
    conflicts: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    flagged: list[str] = field(default_factory=list)
    is_function: bool = False

    def target(self, table: str) -> TableTarget:
        for t in self.targets:
            if t.table == table or t.name == table:
                return t
        raise KeyError(table)

    def coverage_for(self, table: str) -> list[Any]:
        return [c for c in self.coverage if c.table == table]

    def joins_for(self, table: str) -> list[JoinPair]:
        return [j for j in self.joins if table in (j.primary.table, j.secondary.table)]

    def to_dict(self) -> dict:
        targets = {}
        for t in self.targets:
            texts = t.constraint_texts()
            targets[t.name] = {
                "tables": [t.table],
                "constraints": " AND ".join(texts) if texts else [],
                "constraint_list": texts,
                "aliases": list(t.aliases),
                "schema": t.schema_name,
                "referenced_columns": sorted(str(c) for c in t.referenced_columns),
                "derived": [render(c) for c in t.derived_constraints()],
                "signals": {str(k): v.describe() for k, v in t.signals.items()},
            }
        return {
            "targets": targets,
            "joins": [j.to_dict(by_alias=j.primary.table == j.secondary.table) for j in self.joins],
            "join_details": [
                {
                    "primary": {"table": j.primary.table, "alias": j.primary.alias, "column": str(j.primary.column),
                                "casts": [c[0] for c in j.primary.casts]},
                    "secondary": {"table": j.secondary.table, "alias": j.secondary.alias,
                                  "column": str(j.secondary.column), "casts": [c[0] for c in j.secondary.casts]},
                    "condition": j.condition,
                }
                for j in self.joins
            ],
            "coverage": [c.to_dict() for c in self.coverage],
            "cross_table": list(self.cross_table),
            "conflicts": list(self.conflicts),
            "warnings": list(self.warnings),
            "flagged": list(self.flagged),
        }


def is_derived(pred: Any) -> bool:
    """True when some column in ``pred`` sits under a function, cast or arithmetic."""

    def visit(node, wrapped: bool) -> bool:
        if isinstance(node, A.ColumnRef):
            return wrapped
        inner = wrapped or isinstance(node, (A.FuncCall, A.Cast, A.BinaryOp, A.Unary, A.Case))
        return any(visit(c, inner) for c in A.children(node) if not isinstance(c, A.QUERY_TYPES))

    return visit(pred, False)


# ---------------------------------------------------------------------------
# scopes


@dataclass
class _Occ:
    id: int
    table: str
    schema: str | None
    alias: str | None
    constraints: list[Any] = field(default_factory=list)
    referenced: set[ColumnPath] = field(default_factory=set)


@dataclass
class _Source:
    kind: str  # base | derived | unnest
    alias: str | None
    occ: _Occ | None = None
    outputs: list[tuple[str, Any]] = field(default_factory=list)
    stars: list["_Source"] = field(default_factory=list)
    prefix: A.ColumnRef | None = None

    def matches(self, name: str) -> bool:
        low = name.lower()
        if self.alias is not None and self.alias.lower() == low:
            return True
        if self.kind == "base" and self.occ is not None:
            t = self.occ.table.lower()
            return t == low or t.rsplit(".", 1)[-1] == low
        return False


@dataclass
class _Scope:
    sources: list[_Source] = field(default_factory=list)
    parent: "_Scope | None" = None
    aliases: dict[str, Any] = field(default_factory=dict)
    ctes: dict[str, _Source] = field(default_factory=dict)

    def cte(self, name: str) -> _Source | None:
        scope = self
        while scope is not None:
            if name.lower() in scope.ctes:
                return scope.ctes[name.lower()]
            scope = scope.parent
        return None


class _Analyzer:
    def __init__(self, schemas: SchemaSet, context: ContextMap, allow_unresolved: bool):
        self.schemas = schemas
        self.context = context
        self.allow_unresolved = allow_unresolved
        self.occs: list[_Occ] = []
        self.pairs: list[JoinPair] = []
        self.cross: list[str] = []
        self.warnings: list[str] = []
        self.framed: list[Any] = []  # resolved expressions scanned for coverage
        self.group_exprs: list[Any] = []
        self.missing: list[str] = []

    def warn(self, message: str):
        if message not in self.warnings:
            self.warnings.append(message)
            log.warning(message)

    # -- schema lookup ------------------------------------------------------

    def schema_for(self, table: str) -> str | None:
        mapped = self.context.tables.get(table) or self.context.tables.get(table.rsplit(".", 1)[-1])
        for name in (mapped, table, table.rsplit(".", 1)[-1]):
            if name and name in self.schemas:
                return name
        if not self.allow_unresolved:
            self.missing.append(table)
        else:
            self.warn(f"table {table!r} has no loadable schema; columns bound without checking")
        return None

    def new_occ(self, table: str, alias: str | None) -> _Occ:
        occ = _Occ(len(self.occs), table, self.schema_for(table), alias)
        self.occs.append(occ)
        return occ

    # -- column binding -----------------------------------------------------

    def bind_base(self, occ: _Occ, parts: tuple[str, ...], strict: bool, span=None) -> A.ColumnRef | None:
        path = ColumnPath(tuple(parts))
        if occ.schema is not None:
            try:
                self.schemas.resolve_path(occ.schema, path)
            except PathResolutionError:
                if strict:
                    return None
                self.warn(f"column {'.'.join(parts)!r} does not resolve in {occ.table}; bound loosely")
        occ.referenced.add(path)
        return A.ColumnRef(tuple(parts), occ.table, path, source=occ.id, span=span)

    def lookup_in(self, src: _Source, parts: tuple[str, ...], strict: bool = True):
        if not parts:
            return None
        if src.kind == "base":
            return self.bind_base(src.occ, parts, strict)
        if src.kind == "unnest":
            base = src.prefix
            occ = self.occs[base.source] if base is not None and base.source is not None else None
            if occ is None:
                return None
            return self.bind_base(occ, tuple(base.path.segments) + tuple(parts), strict)
        for name, expr in src.outputs:
            if name is not None and name.lower() == parts[0].lower():
                if len(parts) == 1:
                    return expr
                if isinstance(expr, A.ColumnRef) and expr.bound:
                    occ = self.occs[expr.source]
                    return self.bind_base(occ, tuple(expr.path.segments) + tuple(parts[1:]), strict)
                return None
        for star in src.stars:
            hit = self.lookup_in(star, parts, strict)
            if hit is not None:
                return hit
        return None

    def resolve_ref(self, ref: A.ColumnRef, scope: _Scope, use_aliases: bool = False):
        parts = ref.parts
        if use_aliases and len(parts) == 1:
            s = scope
            if parts[0].lower() in s.aliases:
                return s.aliases[parts[0].lower()]
        s = scope
        while s is not None:
            hit = self._resolve_here(parts, s)
            if hit is not None:
                return hit
            s = s.parent
        # loose binding to the only base source in the nearest scope
        bases = [src for src in scope.sources if src.kind == "base"]
        if len(scope.sources) == 1 and len(bases) == 1:
            return self.bind_base(bases[0].occ, parts, strict=False, span=ref.span)
        self.warn(f"column {'.'.join(parts)!r} could not be bound to a table")
        return ref

    def _resolve_here(self, parts, scope: _Scope):
        for src in scope.sources:
            if src.kind == "unnest" and len(parts) >= 1 and src.alias and src.alias.lower() == parts[0].lower():
                if len(parts) == 1:
                    base = src.prefix
                    return base if base is not None else None
                return self.lookup_in(src, parts[1:], strict=False)
        if len(parts) > 1:
            for src in scope.sources:
                if src.kind != "unnest" and src.matches(parts[0]):
                    hit = self.lookup_in(src, parts[1:], strict=True)
                    if hit is None:
                        hit = self.lookup_in(src, parts[1:], strict=False)
                    if hit is not None:
                        return hit
        hits = []
        for src in scope.sources:
            if src.kind == "unnest":
                continue
            hit = self.lookup_in(src, parts, strict=True)
            if hit is not None:
                hits.append(hit)
        if len(hits) > 1 and len({render(h, True) for h in hits}) > 1:
            self.warn(f"column {'.'.join(parts)!r} is ambiguous; bound to the first source")
        return hits[0] if hits else None

    def resolve_expr(self, expr, scope: _Scope, use_aliases: bool = False):
        if expr is None:
            return None

        def fn(node):
            if isinstance(node, A.ColumnRef) and not node.bound:
                return self.resolve_ref(node, scope, use_aliases)
            if isinstance(node, A.InSubquery):
                self.analyze_query(node.query, scope)
                return None
            if isinstance(node, A.SubqueryExpr):
                self.analyze_query(node.query, scope)
                return None
            if isinstance(node, A.QUERY_TYPES):
                self.analyze_query(node, scope)
                return None
            return None

        return A.transform(expr, fn)

    # -- queries ------------------------------------------------------------

    def analyze_query(self, query, parent: _Scope | None) -> _Source:
        """Analyze a query and return a derived source describing its outputs."""
        if isinstance(query, A.SetOp):
            scope = _Scope(parent=parent)
            self._add_ctes(query.with_, scope)
            left = self.analyze_query(query.left, scope)
            right = self.analyze_query(query.right, scope)
            return _Source("derived", None, outputs=left.outputs, stars=left.stars + right.stars)
        if not isinstance(query, A.Select):
            return _Source("derived", None)
        scope = _Scope(parent=parent)
        self._add_ctes(query.with_, scope)
        if query.from_ is not None:
            self.add_from(query.from_, scope)
        if query.where is not None:
            self.classify(self.resolve_expr(query.where, scope), "WHERE")
        outputs, stars = [], []
        for i, item in enumerate(query.items):
            if isinstance(item.expr, A.Star):
                if item.expr.qualifier:
                    for src in scope.sources:
                        if src.matches(item.expr.qualifier[-1]):
                            stars.append(src)
                else:
                    stars.extend(scope.sources)
                continue
            resolved = self.resolve_expr(item.expr, scope)
            self.framed.append(resolved)
            name = item.alias
            if name is None and isinstance(item.expr, A.ColumnRef):
                name = item.expr.parts[-1]
            outputs.append((name, resolved))
            if item.alias:
                scope.aliases[item.alias.lower()] = resolved
        for g in query.group_by:
            resolved = self._resolve_grouping(g, scope, outputs)
            self.group_exprs.append(resolved)
            self.framed.append(resolved)
        if query.having is not None:
            self.classify(self.resolve_expr(query.having, scope, use_aliases=True), "HAVING")
        for o in query.order_by:
            self.framed.append(self._resolve_grouping(o.expr, scope, outputs))
        return _Source("derived", None, outputs=outputs, stars=stars)

    def _resolve_grouping(self, expr, scope, outputs):
        if isinstance(expr, A.Literal) and isinstance(expr.value, int) and 1 <= expr.value <= len(outputs):
            return outputs[expr.value - 1][1]
        return self.resolve_expr(expr, scope, use_aliases=True)

    def _add_ctes(self, with_, scope: _Scope):
        for name, q in with_:
            src = self.analyze_query(q, scope)
            src.alias = name
            scope.ctes[name.lower()] = src

    def add_from(self, item, scope: _Scope):
        if isinstance(item, A.TableRef):
            cte = scope.cte(item.name)
            if cte is not None:
                scope.sources.append(replace(cte, alias=item.alias or item.name))
                return
            occ = self.new_occ(item.name, item.alias)
            scope.sources.append(_Source("base", item.alias, occ=occ))
        elif isinstance(item, A.SubqueryRef):
            src = self.analyze_query(item.query, scope.parent)
            src.alias = item.alias
            scope.sources.append(src)
        elif isinstance(item, A.UnnestRef):
            prefix = self.resolve_expr(item.expr, scope)
            if not (isinstance(prefix, A.ColumnRef) and prefix.bound):
                self.warn(f"UNNEST of {render(item.expr)} is not a column path; ignored")
                prefix = None
            scope.sources.append(_Source("unnest", item.alias, prefix=prefix))
        elif isinstance(item, A.Join):
            self.add_from(item.left, scope)
            split = len(scope.sources)
            self.add_from(item.right, scope)
            if item.on is not None:
                self.classify(self.resolve_expr(item.on, scope), "ON")
            for col in item.using:
                left_scope = _Scope(scope.sources[:split])
                right_scope = _Scope(scope.sources[split:])
                lhs = self._resolve_here((col,), left_scope)
                rhs = self._resolve_here((col,), right_scope)
                if lhs is None or rhs is None:
                    self.warn(f"USING column {col!r} not found on both sides")
                    continue
                self.classify(A.Compare("=", lhs, rhs), "USING")

    # -- predicate classification --------------------------------------------

    def classify(self, pred, clause: str):
        for c in A.conjuncts(pred):
            self.classify_one(c, clause)

    def classify_one(self, c, clause: str):
        if isinstance(c, A.InSubquery) and not c.negated:
            if self._subquery_pair(c):
                return
        if any(isinstance(n, (A.InSubquery, A.SubqueryExpr)) for n in A.walk(c, into_queries=False)):
            self.warn(f"{clause} predicate with a subquery is not enforced: {render(c)}")
            return
        refs = A.column_refs(c)
        if any(not r.bound for r in refs):
            self.warn(f"{clause} predicate has unbound columns and is not enforced: {render(c)}")
            return
        occs = sorted({r.source for r in refs})
        if not occs:
            return
        if len(occs) == 1:
            if A.has_aggregate(c):
                self.warn(f"{clause} predicate over an aggregate is not enforced per row: {render(c)}")
                return
            occ = self.occs[occs[0]]
            if c not in occ.constraints:
                occ.constraints.append(c)
            return
        if len(occs) == 2 and isinstance(c, A.Compare) and c.op == "=":
            left, right = _join_side(c.left), _join_side(c.right)
            if left is not None and right is not None and left[0].source != right[0].source:
                self.add_pair(left, right, render(c, qualified=True))
                return
        self.cross.append(render(c, qualified=True))
        self.warn(f"cross-table predicate is not enforced: {render(c, qualified=True)}")

    def _subquery_pair(self, c: A.InSubquery) -> bool:
        outer = _join_side(c.expr)
        query = c.query
        if outer is None or not isinstance(query, A.Select) or len(query.items) != 1:
            return False
        src = self.last_subquery_outputs(query)
        if src is None:
            return False
        inner = _join_side(src)
        if inner is None or inner[0].source == outer[0].source:
            return False
        self.add_pair(inner, outer, render(c, qualified=True))
        return True

    def last_subquery_outputs(self, query: A.Select):
        # re-resolve the single select item in a throwaway scope over the same occurrences
        for name, expr in self._subquery_cache.get(id(query), []):
            return expr
        return None

    def add_pair(self, a, b, condition: str):
        (ra, ca), (rb, cb) = a, b
        if ra.source > rb.source:
            (ra, ca), (rb, cb) = (rb, cb), (ra, ca)
        oa, ob = self.occs[ra.source], self.occs[rb.source]
        pair = JoinPair(
            JoinSide(oa.table, ra.path, oa.alias, ca),
            JoinSide(ob.table, rb.path, ob.alias, cb),
            condition,
        )
        if pair not in self.pairs:
            self.pairs.append(pair)


def _join_side(expr):
    """Unwrap CAST chains down to a bound column; returns (ref, casts) or None."""
    casts = []
    while isinstance(expr, A.Cast):
        casts.append((expr.type_name, expr.safe))
        expr = expr.expr
    if isinstance(expr, A.ColumnRef) and expr.bound and expr.source is not None:
        return expr, tuple(reversed(casts))
    return None


# ---------------------------------------------------------------------------
# merging and coverage


def _columns_of(pred) -> set[ColumnPath]:
    return {r.path for r in A.column_refs(pred) if r.path is not None}


def _merge_occurrences(table: str, occs: list[_Occ], conflicts: list[dict]) -> list[Any]:
    lists = []
    for occ in occs:
        if occ.constraints not in lists:
            lists.append(occ.constraints)
    if len(lists) == 1:
        return list(lists[0])
    by_column: dict[ColumnPath, list[str]] = {}
    for lst in lists:
        for c in lst:
            for col in _columns_of(c):
                text = render(c)
                by_column.setdefault(col, [])
                if text not in by_column[col]:
                    by_column[col].append(text)
    for col, texts in by_column.items():
        constrained_in = sum(1 for lst in lists if any(col in _columns_of(c) for c in lst))
        if len(texts) > 1 or constrained_in < len(lists):
            conflicts.append({"table": table, "column": str(col), "predicates": texts})
    branches = [A.make_and(lst) if lst else A.Literal(True) for lst in lists]
    return [A.Or(tuple(branches))]


def _literal(expr) -> tuple[bool, Any]:
    if isinstance(expr, A.Literal) and expr.value is not None:
        return True, expr.value
    if isinstance(expr, A.Unary) and expr.op == "-" and isinstance(expr.operand, A.Literal):
        return True, -expr.operand.value
    return False, None


def _bare(expr) -> A.ColumnRef | None:
    return expr if isinstance(expr, A.ColumnRef) and expr.bound else None


def _equality_values(cond) -> tuple[A.ColumnRef | None, list[Any]]:
    """Column and literal values from `col = lit`, `col IN (...)` or an OR of those."""
    if isinstance(cond, A.Compare) and cond.op == "=":
        for col, lit in ((cond.left, cond.right), (cond.right, cond.left)):
            ok, value = _literal(lit)
            if _bare(col) is not None and ok:
                return col, [value]
        return None, []
    if isinstance(cond, A.InList) and not cond.negated and _bare(cond.expr) is not None:
        values = []
        for item in cond.items:
            ok, value = _literal(item)
            if not ok:
                return None, []
            values.append(value)
        return cond.expr, values
    if isinstance(cond, A.Or):
        col, values = None, []
        for item in cond.items:
            c, vs = _equality_values(item)
            if c is None or (col is not None and (c.source, c.path) != (col.source, col.path)):
                return None, []
            col = c
            values.extend(v for v in vs if v not in values)
        return col, values
    return None, []


class _CoverageBuilder:
    def __init__(self, analyzer: _Analyzer):
        self.a = analyzer
        self.out: list[Any] = []

    def field(self, table: str, path: ColumnPath) -> FieldDef | None:
        schema = next((o.schema for o in self.a.occs if o.table == table), None)
        if schema is None:
            return None
        try:
            return self.a.schemas.resolve_path(schema, path)
        except PathResolutionError:
            return None

    def add(self, target):
        if target not in self.out:
            self.out.append(target)

    def case_targets(self, exprs):
        for expr in exprs:
            for node in A.walk(expr, into_queries=False):
                if isinstance(node, A.Case):
                    self._case(node)

    def _case(self, case: A.Case):
        per_col: dict[tuple, tuple[A.ColumnRef, list]] = {}
        operand = _bare(case.operand) if case.operand is not None else None
        for cond, _ in case.whens:
            if operand is not None:
                ok, value = _literal(cond)
                if not ok:
                    continue
                col, values = operand, [value]
            else:
                col, values = _equality_values(cond)
                if col is None:
                    continue
            key = (col.table, col.path)
            entry = per_col.setdefault(key, (col, []))
            entry[1].extend(v for v in values if v not in entry[1])
        for (table, path), (col, values) in per_col.items():
            f = self.field(table, path)
            self.add(ValueSet(table, path, tuple(values), sentinel_for(f, values), f, "case"))

    def where_value_sets(self, table: str, constraints):
        for c in constraints:
            col, values = _equality_values(c)
            if col is not None and len(values) > 1:
                self.add(ValueSet(table, col.path, tuple(values), None, self.field(table, col.path), "where"))

    def partitions(self, table: str, constraints):
        for expr in self.a.group_exprs + self.a.framed:
            for node in A.walk(expr, into_queries=False):
                if not (isinstance(node, A.FuncCall) and node.name == "DATE_TRUNC" and len(node.args) == 2):
                    continue
                col = _bare(node.args[0])
                part = node.args[1]
                if col is None or col.table != table or not isinstance(part, A.DatePart):
                    continue
                if part.name not in ("DAY", "WEEK", "ISOWEEK", "MONTH", "QUARTER", "YEAR"):
                    continue
                lo, hi = _date_bounds(col.path, constraints)
                if lo is None or hi is None or lo > hi:
                    continue
                self.add(Partition(table, col.path, part.name, lo, hi, self.field(table, col.path)))

    def spreads(self, table: str, constraints):
        partitioned = {c.column for c in self.out if isinstance(c, Partition) and c.table == table}
        for c in constraints:
            if isinstance(c, A.Between) and not c.negated and _bare(c.expr) is not None:
                ok_lo, lo = _literal(c.lo)
                ok_hi, hi = _literal(c.hi)
                if ok_lo and ok_hi and c.expr.path not in partitioned:
                    self.add(RangeSpread(table, c.expr.path, lo, hi, self.field(table, c.expr.path)))


def _as_date_literal(value) -> date | None:
    if isinstance(value, date):
        return value
    if isinstance(value, str):
        try:
            return parse_date(value[:10])
        except ValueError:
            return None
    return None


def _date_bounds(path: ColumnPath, constraints) -> tuple[date | None, date | None]:
    lo = hi = None

    def tighten_lo(d):
        nonlocal lo
        if d is not None and (lo is None or d > lo):
            lo = d

    def tighten_hi(d):
        nonlocal hi
        if d is not None and (hi is None or d < hi):
            hi = d

    for c in constraints:
        if isinstance(c, A.Between) and not c.negated and _bare(c.expr) is not None and c.expr.path == path:
            tighten_lo(_as_date_literal(_literal(c.lo)[1]))
            tighten_hi(_as_date_literal(_literal(c.hi)[1]))
        elif isinstance(c, A.Compare) and c.op in ("<", "<=", ">", ">="):
            op, col, lit = c.op, c.left, c.right
            if _bare(col) is None:
                op = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}[op]
                col, lit = c.right, c.left
            if _bare(col) is None or col.path != path:
                continue
            d = _as_date_literal(_literal(lit)[1])
            if d is None:
                continue
            if op in (">", ">="):
                tighten_lo(d if op == ">=" else date.fromordinal(d.toordinal() + 1))
            else:
                tighten_hi(d if op == "<=" else date.fromordinal(d.toordinal() - 1))
    return lo, hi


# ---------------------------------------------------------------------------
# signals


def _drop_column(pred, path: ColumnPath):
    """Remove conjuncts that reference only ``path``; returns None when nothing is left."""
    if isinstance(pred, A.And):
        return A.make_and([_drop_column(i, path) for i in pred.items])
    if isinstance(pred, A.Or):
        items = [_drop_column(i, path) for i in pred.items]
        items = [i if i is not None else A.Literal(True) for i in items]
        if all(isinstance(i, A.Literal) and i.value is True for i in items):
            return None
        return A.Or(tuple(items))
    cols = _columns_of(pred)
    if cols and all(c == path for c in cols):
        return None
    return pred


def _apply_signals(analysis: QueryAnalysis, schemas: SchemaSet, context: ContextMap):
    for key, spec in context.signals.items():
        path = ColumnPath.parse(key)
        applied = False
        for t in analysis.targets:
            local = path
            if len(path) > 1 and path.head in (t.table, t.table.rsplit(".", 1)[-1], *t.aliases):
                local = ColumnPath(path.segments[1:])
            elif len(path) > 1 and any(path.head == other.table for other in analysis.targets if other is not t):
                continue
            if t.schema_name is not None:
                try:
                    schemas.resolve_path(t.schema_name, local)
                except PathResolutionError:
                    continue
            applied = True
            kept = []
            for c in t.constraints:
                d = _drop_column(c, local)
                if d is not None:
                    kept.append(d)
            t.constraints = kept
            analysis.coverage = [c for c in analysis.coverage if not (c.table == t.table and c.column == local)]
            ref = A.ColumnRef(local.segments, t.table, local)
            pred = spec.predicate(ref)
            if pred is not None:
                t.constraints.append(pred)
            t.signals[local] = spec
            t.referenced_columns.add(local)
        if not applied:
            analysis.warnings.append(f"signal {key!r} matches no generation target")


def _apply_context_constraints(analysis: QueryAnalysis, schemas: SchemaSet, context: ContextMap):
    for text in context.constraints:
        expr = parse_expression(text)

        def bind(node):
            if not isinstance(node, A.ColumnRef) or node.bound:
                return None
            for t in analysis.targets:
                parts = node.parts
                if len(parts) > 1 and parts[0] in (t.table, *t.aliases):
                    parts = parts[1:]
                elif len(parts) > 1 and any(parts[0] == o.table for o in analysis.targets):
                    continue
                path = ColumnPath(tuple(parts))
                if t.schema_name is None:
                    return A.ColumnRef(node.parts, t.table, path)
                try:
                    schemas.resolve_path(t.schema_name, path)
                except PathResolutionError:
                    continue
                return A.ColumnRef(node.parts, t.table, path)
            return None

        bound = A.transform(expr, bind)
        tables = A.tables_of(bound)
        if len(tables) != 1 or any(not r.bound for r in A.column_refs(bound)):
            analysis.warnings.append(f"context constraint {text!r} does not bind to exactly one table; ignored")
            continue
        target = analysis.target(next(iter(tables)))
        for c in A.conjuncts(bound):
            if c not in target.constraints:
                target.constraints.append(c)
            target.referenced_columns.update(_columns_of(c))


# ---------------------------------------------------------------------------
# entry points


def _run(ast, schemas: SchemaSet, context: ContextMap, allow_unresolved: bool) -> tuple[_Analyzer, bool]:
    analyzer = _Analyzer(schemas, context, allow_unresolved)
    analyzer._subquery_cache = {}
    original = analyzer.analyze_query

    def caching(query, parent):
        src = original(query, parent)
        analyzer._subquery_cache[id(query)] = src.outputs
        return src

    analyzer.analyze_query = caching
    if isinstance(ast, A.CreateFunction):
        scope = _Scope()
        for pname, ptype in ast.params:
            if ptype in schemas or ptype in context.tables or ptype.rsplit(".", 1)[-1] in schemas:
                occ = analyzer.new_occ(ptype, pname)
                scope.sources.append(_Source("base", pname, occ=occ))
        body = analyzer.resolve_expr(ast.body, scope)
        analyzer.framed.append(body)
        return analyzer, True
    analyzer.analyze_query(ast, None)
    return analyzer, False


def _build(sql: str, ast, schemas: SchemaSet, context: ContextMap, allow_unresolved: bool) -> QueryAnalysis:
    analyzer, is_function = _run(ast, schemas, context, allow_unresolved)
    if analyzer.missing:
        names = ", ".join(dict.fromkeys(analyzer.missing))
        raise AnalysisError(f"no loadable schema for table(s): {names}")
    conflicts: list[dict] = []
    targets: list[TableTarget] = []
    by_table: dict[str, list[_Occ]] = {}
    for occ in analyzer.occs:
        by_table.setdefault(occ.table, []).append(occ)
    for i, (table, occs) in enumerate(by_table.items(), start=1):
        target = TableTarget(
            name=f"T{i}",
            table=table,
            schema_name=occs[0].schema,
            aliases=[o.alias for o in occs if o.alias],
            constraints=_merge_occurrences(table, occs, conflicts),
            referenced_columns=set().union(*(o.referenced for o in occs)),
            occurrences=len(occs),
        )
        targets.append(target)
    builder = _CoverageBuilder(analyzer)
    builder.case_targets(analyzer.framed)
    for t in targets:
        builder.where_value_sets(t.table, t.constraints)
        builder.partitions(t.table, t.constraints)
        builder.spreads(t.table, t.constraints)
    coverage = sorted(builder.out, key=coverage_key)
    analysis = QueryAnalysis(
        sql=sql,
        targets=targets,
        joins=list(analyzer.pairs),
        coverage=coverage,
        cross_table=analyzer.cross,
        conflicts=conflicts,
        warnings=analyzer.warnings,
        flagged=flagged_constructs(ast),
        is_function=is_function,
    )
    if context.signals:
        _apply_signals(analysis, schemas, context)
    if context.constraints:
        _apply_context_constraints(analysis, schemas, context)
    return analysis


def analyze(sql: str, schemas: SchemaSet, context: ContextMap | None = None, allow_unresolved: bool = False) -> QueryAnalysis:
    """Parse ``sql`` and extract targets, joins and coverage, applying user signals last."""
    ast = parse_sql(sql)
    return _build(sql, ast, schemas, context or ContextMap(), allow_unresolved)


def _loose(ast, schemas: SchemaSet | None) -> QueryAnalysis:
    return _build("", ast, schemas or SchemaSet({}, {}, ()), ContextMap(), allow_unresolved=True)


def extract_targets(ast, schemas: SchemaSet | None = None) -> list[TableTarget]:
    return _loose(ast, schemas).targets


def extract_joins(ast, schemas: SchemaSet | None = None) -> list[JoinPair]:
    return _loose(ast, schemas).joins


def extract_coverage_targets(ast, schemas: SchemaSet | None = None) -> list[Any]:
    return _loose(ast, schemas).coverage


def signal_generators(target: TableTarget) -> dict[ColumnPath, Incremental]:
    return {p: s for p, s in target.signals.items() if isinstance(s, Incremental)}
