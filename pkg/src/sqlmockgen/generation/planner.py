"""Generation planning: one request per nested top-level field and per scalar column group."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any

from ..analysis import QueryAnalysis, TableTarget
from ..context import ColumnGroup, ContextMap, group_columns, reachable_messages
from ..coverage import Partition, RangeSpread, ValueSet
from ..errors import PlanError
from ..schema import ColumnPath, FieldDef, MessageKind, SchemaSet, describe_subset
from ..sql import ast as A
from ..sql.render import literal_text, render
from .prompt import Prompt, build_generation_prompt

log = logging.getLogger(__name__)

DEFAULT_ROWS = 5


def stable_seed(*parts: Any) -> int:
    """A platform-independent 63-bit seed from any JSON-able parts."""
    digest = hashlib.sha256(json.dumps([str(p) for p in parts]).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class GenerationRequest:
    index: int
    table: str
    schema_name: str
    scope: str  # "group:<n>" or "nested:<field>"
    columns: tuple[ColumnPath, ...]
    row_count: int
    constraints_text: str
    signals_text: str
    user_input: str
    proto_description: str
    requested: frozenset = frozenset()
    group: ColumnGroup | None = None
    constraints: tuple = ()
    coverage: tuple = ()
    signals: tuple = ()  # of (ColumnPath, ValueSpec)
    unique: tuple = ()
    list_length: tuple[int, int] = (1, 3)
    recursion_cap: int = 3
    seed: int = 0
    attempt: int = 1
    retry_context: str | None = None
    schemas: SchemaSet | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if (self.retry_context is not None) != (self.attempt > 1):
            raise ValueError("retry_context is present exactly when attempt > 1")

    @property
    def is_nested(self) -> bool:
        return self.scope.startswith("nested:")

    @property
    def key(self) -> tuple[str, str]:
        return (self.table, self.scope)

    def prompt(self) -> Prompt:
        return build_generation_prompt(
            self.constraints_text,
            self.signals_text,
            self.row_count,
            ", ".join(str(c) for c in self.columns),
            self.user_input,
            self.proto_description,
            self.retry_context,
        )


@dataclass
class TablePlan:
    target: TableTarget
    row_count: int
    groups: list[ColumnGroup]
    requests: list[GenerationRequest]
    skipped: list[str] = field(default_factory=list)
    unique: tuple[ColumnPath, ...] = ()


@dataclass
class Plan:
    tables: list[TablePlan]
    warnings: list[str] = field(default_factory=list)

    @property
    def requests(self) -> list[GenerationRequest]:
        return [r for t in self.tables for r in t.requests]

    def table(self, name: str) -> TablePlan:
        for t in self.tables:
            if t.target.table == name:
                return t
        raise KeyError(name)


def coverage_demand(analysis: QueryAnalysis, table: str) -> int:
    return sum(c.demand for c in analysis.coverage_for(table))


def disjunct_demand(target: TableTarget) -> int:
    return max([len(c.items) for c in target.constraints if isinstance(c, A.Or)] or [0])


def required_rows(analysis: QueryAnalysis, target: TableTarget) -> int:
    return max(coverage_demand(analysis, target.table), disjunct_demand(target))


def unique_columns(schemas: SchemaSet, root: str, context: ContextMap) -> tuple[ColumnPath, ...]:
    """Primary-key heuristic: a field named ``id`` or annotated "primary key", plus user-listed columns."""
    out = []
    for f in schemas.get(root).fields:
        if f.deprecated or f.repeated or isinstance(f.kind, MessageKind):
            continue
        if f.name == "id" or (f.annotation and "primary key" in f.annotation.lower()):
            out.append(ColumnPath.of(f.name))
    for key in context.unique_columns:
        path = ColumnPath.parse(key)
        if len(path) > 1 and path.head == root:
            path = ColumnPath(path.segments[1:])
        try:
            schemas.resolve_path(root, path)
        except Exception:
            continue
        if path not in out:
            out.append(path)
    return tuple(out)


def _in_scope(path: ColumnPath, columns: tuple[ColumnPath, ...]) -> bool:
    return any(path.strip_indices().startswith(c) for c in columns)


def _pred_columns(pred) -> list[ColumnPath]:
    return [r.path for r in A.column_refs(pred) if r.path is not None]


def _value_text(v) -> str:
    return json.dumps(v, default=str, ensure_ascii=False)


def coverage_text(c) -> str:
    if isinstance(c, ValueSet):
        text = f"{c.column} ∈ {{{', '.join(_value_text(str(v)) for v in c.values)}}}"
        if c.sentinel is not None:
            text += f"; include a row for each value and one row with another value such as {_value_text(str(c.sentinel))}"
        else:
            text += "; include a row for each value"
        return text
    if isinstance(c, Partition):
        return (f"{c.column}: at least one row in every {c.part.lower()} from "
                f"{c.lo.isoformat()} to {c.hi.isoformat()}")
    if isinstance(c, RangeSpread):
        return f"{c.column}: include {literal_text(c.lo)}, {literal_text(c.hi)} and a value between them"
    return str(c)


def render_constraints(constraints, coverage) -> str:
    lines = [f"- {render(c)}" for c in constraints] + [f"- {coverage_text(c)}" for c in coverage]
    return "\n".join(lines)


def render_signals(row_count: int, group: ColumnGroup | None, signals, unique) -> str:
    lines = [f"Number of rows required: {row_count}"]
    if group is not None and group.hinted:
        lines.append(f"Column correlations: {group.correlation_note} ({', '.join(str(m) for m in group.members)})")
    for path, spec in signals:
        lines.append(f"{path}: {spec.describe()}")
    if unique:
        lines.append("Values must be unique across rows for: " + ", ".join(str(u) for u in unique))
    return "\n".join(lines)


def render_user_input(context: ContextMap) -> str:
    parts = []
    if context.question:
        parts.append(f"The data must support this question: {context.question}")
    if context.user_criteria:
        parts.append(context.user_criteria)
    return " ".join(parts)


def requested_paths(schemas: SchemaSet, root: str, columns, cap: int) -> frozenset:
    out = set()
    for path, _ in schemas.walk(root, recursion_cap=cap):
        p = path.strip_indices()
        if _in_scope(p, columns):
            out.add(p)
    return frozenset(out)


def _check_unresolved(schemas: SchemaSet, root: str, allow: bool) -> list[str]:
    bad = []
    for message in reachable_messages(schemas, root):
        for f in schemas.get(message).fields:
            if isinstance(f.kind, MessageKind) and f.kind.ref not in schemas.messages and not f.deprecated:
                bad.append(f"{message}.{f.name} -> {f.kind.ref}")
    if bad and not allow:
        raise PlanError("unresolved nested references (stale or removed schema): " + "; ".join(bad))
    return bad


def _scope_fields(top: list[FieldDef], skip: set[str]) -> tuple[list[FieldDef], list[FieldDef]]:
    nested = [f for f in top if not f.deprecated and f.name not in skip and (f.repeated or isinstance(f.kind, MessageKind))]
    return nested, [f for f in top if f not in nested]


def plan_table(
    analysis: QueryAnalysis,
    target: TableTarget,
    context: ContextMap,
    schemas: SchemaSet,
    seed: int = 0,
    allow_unresolved: bool = False,
    recursion_cap: int = 3,
    start_index: int = 0,
    attempt: int = 1,
    retry: dict | None = None,
    only: set | None = None,
) -> TablePlan:
    root = target.schema_name
    demand = required_rows(analysis, target)
    if context.row_count is not None and context.row_count < demand:
        names = "; ".join(coverage_text(c) for c in analysis.coverage_for(target.table)) or "disjunctive constraints"
        raise PlanError(
            f"row_count {context.row_count} is below the {demand} rows required for {target.table} ({names})"
        )
    rows = context.row_count if context.row_count is not None else max(DEFAULT_ROWS, demand)
    bad = _check_unresolved(schemas, root, allow_unresolved)
    skip = {entry.split(" ->")[0].split(".", 1)[1] for entry in bad if entry.startswith(root + ".")}
    schema = schemas.get(root)
    nested, _ = _scope_fields(list(schema.fields), skip)
    groups, warnings = group_columns(schemas, root, context.correlations)
    for w in warnings:
        log.warning(w)
    unique = unique_columns(schemas, root, context)
    signals = sorted(target.signals.items(), key=lambda kv: str(kv[0]))
    coverage = analysis.coverage_for(target.table)

    scopes: list[tuple[str, tuple[ColumnPath, ...], ColumnGroup | None]] = []
    for i, g in enumerate(groups):
        scopes.append((f"group:{i + 1}", g.members, g))
    for f in nested:
        scopes.append((f"nested:{f.name}", (ColumnPath.of(f.name),), None))
    # keep declaration order across both kinds
    order = {f.name: i for i, f in enumerate(schema.fields)}
    scopes.sort(key=lambda s: order[s[1][0].head])

    requests = []
    for scope, columns, group in scopes:
        if only is not None and (target.table, scope) not in only:
            continue
        in_constraints = tuple(c for c in target.constraints if any(_in_scope(p, columns) for p in _pred_columns(c)))
        in_coverage = tuple(c for c in coverage if _in_scope(c.column, columns))
        in_signals = tuple((p, s) for p, s in signals if _in_scope(p, columns))
        in_unique = tuple(u for u in unique if _in_scope(u, columns))
        top = [c.head for c in columns]
        retry_text = (retry or {}).get((target.table, scope)) if attempt > 1 else None
        if attempt > 1 and retry_text is None:
            retry_text = "regenerating after a failed validation of related data"
        requests.append(
            GenerationRequest(
                index=start_index + len(requests),
                table=target.table,
                schema_name=root,
                scope=scope,
                columns=columns,
                row_count=rows,
                constraints_text=render_constraints(in_constraints, in_coverage),
                signals_text=render_signals(rows, group, in_signals, in_unique),
                user_input=render_user_input(context),
                proto_description=describe_subset(schemas, root, top),
                requested=requested_paths(schemas, root, columns, recursion_cap),
                group=group,
                constraints=in_constraints,
                coverage=in_coverage,
                signals=in_signals,
                unique=in_unique,
                list_length=context.list_length,
                recursion_cap=recursion_cap,
                seed=stable_seed(seed, target.table, scope, attempt),
                attempt=attempt,
                retry_context=retry_text,
                schemas=schemas,
            )
        )
    return TablePlan(target, rows, groups, requests, sorted(skip), unique)


def plan_requests(
    analysis: QueryAnalysis,
    context: ContextMap,
    schemas: SchemaSet,
    seed: int = 0,
    allow_unresolved: bool = False,
    recursion_cap: int = 3,
) -> Plan:
    """Deterministic request plan for every generation target."""
    tables, warnings = [], []
    index = 0
    for target in analysis.targets:
        if target.schema_name is None:
            warnings.append(f"table {target.table} has no schema and is not generated")
            continue
        tp = plan_table(analysis, target, context, schemas, seed, allow_unresolved, recursion_cap, index)
        if tp.skipped:
            warnings.append(f"{target.table}: skipped unresolved nested fields {', '.join(tp.skipped)}")
        index += len(tp.requests)
        tables.append(tp)
    return Plan(tables, warnings)
