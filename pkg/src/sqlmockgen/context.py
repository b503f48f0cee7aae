"""Context map: user signals, annotation merging/filling, and column grouping."""

from __future__ import annotations

import json
import logging
import re
from contextlib import nullcontext
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ContextError, PathResolutionError
from .schema import ColumnPath, EnumKind, FieldDef, MessageKind, Primitive, PrimitiveKind, SchemaSet
from .sql import ast as A
from .validation.evaluator import Uneval, compare_values

log = logging.getLogger(__name__)

MAX_GROUP_SIZE = 30


# ---------------------------------------------------------------------------
# value specs


@dataclass(frozen=True)
class LiteralSpec:
    value: Any

    def predicate(self, col: A.ColumnRef):
        return A.Compare("=", col, A.Literal(self.value))

    def describe(self) -> str:
        return f"must equal {json.dumps(self.value, default=str)}"


@dataclass(frozen=True)
class OneOf:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ContextError("one_of needs at least one value")

    def predicate(self, col: A.ColumnRef):
        return A.InList(col, tuple(A.Literal(v) for v in self.values))

    def describe(self) -> str:
        return "must be one of " + ", ".join(json.dumps(v, default=str) for v in self.values)


@dataclass(frozen=True)
class Range:
    lo: Any
    hi: Any
    inclusive: bool = True

    def __post_init__(self):
        try:
            if compare_values(self.lo, self.hi) > 0:
                raise ContextError(f"range lower bound {self.lo!r} exceeds upper bound {self.hi!r}")
        except Uneval:
            raise ContextError(f"range bounds {self.lo!r} and {self.hi!r} are not comparable") from None

    def predicate(self, col: A.ColumnRef):
        if self.inclusive:
            return A.Between(col, A.Literal(self.lo), A.Literal(self.hi))
        return A.And((A.Compare(">", col, A.Literal(self.lo)), A.Compare("<", col, A.Literal(self.hi))))

    def describe(self) -> str:
        brackets = "[]" if self.inclusive else "()"
        return f"must lie in {brackets[0]}{self.lo}, {self.hi}{brackets[1]}"


@dataclass(frozen=True)
class Incremental:
    start: Any = 1
    step: Any = 1

    def predicate(self, col: A.ColumnRef):
        return None

    def value_at(self, i: int) -> Any:
        return self.start + self.step * i

    def describe(self) -> str:
        return f"increments from {self.start} by {self.step} per row"


@dataclass(frozen=True)
class UniformFloat:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ContextError(f"uniform lower bound {self.lo} exceeds upper bound {self.hi}")

    def predicate(self, col: A.ColumnRef):
        return A.Between(col, A.Literal(float(self.lo)), A.Literal(float(self.hi)))

    def describe(self) -> str:
        return f"uniformly distributed floats in [{self.lo}, {self.hi}]"


@dataclass(frozen=True)
class SeededChoice:
    values: tuple
    weights: tuple | None = None

    def __post_init__(self):
        if not self.values:
            raise ContextError("choice needs at least one value")
        if self.weights is not None:
            if len(self.weights) != len(self.values):
                raise ContextError("choice weights must match values")
            if sum(self.weights) <= 0 or any(w < 0 for w in self.weights):
                raise ContextError("choice weights must be non-negative and sum to a positive number")

    def predicate(self, col: A.ColumnRef):
        return A.InList(col, tuple(A.Literal(v) for v in self.values))

    def describe(self) -> str:
        text = "drawn from " + ", ".join(json.dumps(v, default=str) for v in self.values)
        if self.weights:
            text += " with weights " + ", ".join(str(w) for w in self.weights)
        return text


ValueSpec = LiteralSpec | OneOf | Range | Incremental | UniformFloat | SeededChoice


def parse_value_spec(raw: Any) -> ValueSpec:
    """Build a ValueSpec from its JSON form; bare scalars are literals, bare lists one_of."""
    if isinstance(raw, list):
        return OneOf(tuple(raw))
    if not isinstance(raw, dict):
        return LiteralSpec(raw)
    if "literal" in raw:
        return LiteralSpec(raw["literal"])
    if "one_of" in raw:
        return OneOf(tuple(raw["one_of"]))
    if "range" in raw:
        lo, hi = raw["range"]
        return Range(lo, hi, bool(raw.get("inclusive", True)))
    if "incremental" in raw:
        inc = raw["incremental"] or {}
        return Incremental(inc.get("start", 1), inc.get("step", 1))
    if "uniform" in raw:
        lo, hi = raw["uniform"]
        return UniformFloat(float(lo), float(hi))
    if "choice" in raw:
        choice = raw["choice"]
        weights = choice.get("weights")
        return SeededChoice(tuple(choice["values"]), tuple(weights) if weights is not None else None)
    raise ContextError(f"unrecognized value spec {json.dumps(raw)[:80]}")


# ---------------------------------------------------------------------------
# context map


@dataclass(frozen=True)
class Correlation:
    columns: tuple[str, ...]
    note: str | None = None
    ordering: tuple[str, ...] = ()


@dataclass
class ContextMap:
    question: str | None = None
    user_criteria: str | None = None
    signals: dict[str, ValueSpec] = field(default_factory=dict)
    row_count: int | None = None
    unique_columns: tuple[str, ...] = ()
    instances_per_test: int = 1
    tables: dict[str, str] = field(default_factory=dict)
    correlations: tuple[Correlation, ...] = ()
    docs: dict[str, str] = field(default_factory=dict)
    constraints: tuple[str, ...] = ()
    list_length: tuple[int, int] = (1, 3)

    def __post_init__(self):
        if self.row_count is not None and (not isinstance(self.row_count, int) or self.row_count < 1):
            raise ContextError("row_count must be a positive integer")
        if not isinstance(self.instances_per_test, int) or self.instances_per_test < 1:
            raise ContextError("instances_per_test must be a positive integer")
        lo, hi = self.list_length
        if lo < 0 or hi < lo:
            raise ContextError("list_length must be [min, max] with 0 <= min <= max")

    def check(self, schemas: SchemaSet, roots: list[str]) -> list[str]:
        """Raise if a signal key resolves in none of ``roots``; return warnings for other keys."""
        warnings = []
        for key in self.signals:
            if not _resolves_somewhere(schemas, roots, key):
                raise ContextError(f"signal column {key!r} does not resolve in any loaded schema")
        for key in self.unique_columns:
            if not _resolves_somewhere(schemas, roots, key):
                warnings.append(f"unique column {key!r} does not resolve in any loaded schema")
        return warnings


def _resolves_somewhere(schemas: SchemaSet, roots: list[str], key: str) -> bool:
    path = ColumnPath.parse(key)
    for root in roots:
        if root not in schemas:
            continue
        candidates = [path]
        if len(path) > 1 and path.head == root:
            candidates.append(ColumnPath(path.segments[1:]))
        for p in candidates:
            try:
                schemas.resolve_path(root, p)
                return True
            except PathResolutionError:
                pass
    return False


def context_from_dict(raw: dict) -> ContextMap:
    if not isinstance(raw, dict):
        raise ContextError("context map must be a JSON object")
    known = {
        "question", "user_criteria", "signals", "row_count", "unique_columns", "instances_per_test",
        "tables", "correlations", "docs", "constraints", "list_length",
    }
    unknown = set(raw) - known
    if unknown:
        log.warning("ignoring unknown context keys: %s", ", ".join(sorted(unknown)))
    signals = {str(k): parse_value_spec(v) for k, v in (raw.get("signals") or {}).items()}
    correlations = []
    for item in raw.get("correlations") or []:
        if isinstance(item, list):
            correlations.append(Correlation(tuple(item)))
        else:
            correlations.append(
                Correlation(tuple(item["columns"]), item.get("note"), tuple(item.get("ordering") or ()))
            )
    list_length = tuple(raw.get("list_length") or (1, 3))
    return ContextMap(
        question=raw.get("question"),
        user_criteria=raw.get("user_criteria"),
        signals=signals,
        row_count=raw.get("row_count"),
        unique_columns=tuple(raw.get("unique_columns") or ()),
        instances_per_test=raw.get("instances_per_test", 1),
        tables=dict(raw.get("tables") or {}),
        correlations=tuple(correlations),
        docs={str(k): str(v) for k, v in (raw.get("docs") or {}).items()},
        constraints=tuple(raw.get("constraints") or ()),
        list_length=(int(list_length[0]), int(list_length[1])),
    )


def load_context(path: str | Path | None) -> ContextMap:
    if path is None:
        return ContextMap()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ContextError(f"context map {path} is not valid JSON: {exc}") from None
    return context_from_dict(raw)


def load_docs(path: str | Path) -> dict[str, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ContextError("annotation docs must be a JSON object of column path -> text")
    return {str(k): str(v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# annotations


def _owner_and_field(schemas: SchemaSet, root: str, path: ColumnPath) -> tuple[str, FieldDef]:
    message = root
    for seg in path.segments[:-1]:
        f = schemas.resolve_path(message, ColumnPath.of(seg))
        if not isinstance(f.kind, MessageKind) or f.kind.ref not in schemas.messages:
            raise PathResolutionError(f"{seg!r} is not a resolved message field", seg)
        message = f.kind.ref
    return message, schemas.resolve_path(message, ColumnPath.of(path.leaf))


def merge_annotations(schemas: SchemaSet, root: str, docs: dict[str, str]) -> SchemaSet:
    """Attach external documentation to fields; docs override inline comments."""
    result = schemas
    for key, text in docs.items():
        try:
            path = ColumnPath.parse(key)
            if len(path) > 1 and path.head == root and root not in [f.name for f in schemas.get(root).fields]:
                path = ColumnPath(path.segments[1:])
            owner, f = _owner_and_field(result, root, path)
        except (PathResolutionError, ValueError) as exc:
            log.warning("annotation doc key %r ignored: %s", key, exc)
            continue
        message = result.get(owner)
        result = result.with_message(message.replace_field(replace(f, annotation=text, machine_annotation=False)))
    return result


def reachable_messages(schemas: SchemaSet, root: str) -> list[str]:
    order = [root]
    i = 0
    while i < len(order):
        for f in schemas.get(order[i]).fields:
            if isinstance(f.kind, MessageKind) and f.kind.ref in schemas.messages and f.kind.ref not in order:
                order.append(f.kind.ref)
        i += 1
    return order


def fill_annotations(
    schemas: SchemaSet, root: str, backend, max_workers: int = 10, limiter=None
) -> tuple[SchemaSet, int]:
    """Ask the backend for text on every unannotated field; returns the schema set and fill count."""
    gaps = []
    for name in reachable_messages(schemas, root):
        for f in schemas.get(name).fields:
            if not f.annotation and not f.deprecated:
                gaps.append((name, f))
    if not gaps:
        return schemas, 0

    def ask(item):
        message, f = item
        try:
            with limiter or nullcontext():
                return backend.annotate(message, f)
        except Exception as exc:  # best effort
            log.warning("annotation fill failed for %s.%s: %s", message, f.name, exc)
            return None

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        texts = list(pool.map(ask, gaps))
    result = schemas
    filled = 0
    for (message, f), text in zip(gaps, texts):
        if not text:
            continue
        current = result.get(message)
        result = result.with_message(current.replace_field(replace(f, annotation=text, machine_annotation=True)))
        filled += 1
    return result, filled


def stub_annotation(f: FieldDef) -> str:
    return f"{f.type_label} field {f.name}"


# ---------------------------------------------------------------------------
# column grouping

_ORDER_WORDS = {
    "created": 0, "creation": 0, "opened": 0, "open": 0, "signed": 1,
    "effective": 2, "start": 2, "begin": 2, "started": 2,
    "closed": 3, "close": 3, "end": 3, "ended": 3, "completed": 3,
}


@dataclass(frozen=True)
class ColumnGroup:
    members: tuple[ColumnPath, ...]
    correlation_note: str = "no known correlations between these columns"
    ordering: tuple[ColumnPath, ...] = ()
    hinted: bool = False

    def __post_init__(self):
        if not 1 <= len(self.members) <= MAX_GROUP_SIZE:
            raise ValueError(f"a column group holds 1..{MAX_GROUP_SIZE} columns, got {len(self.members)}")


def is_scalar_column(f: FieldDef) -> bool:
    return not f.deprecated and not f.repeated and not isinstance(f.kind, MessageKind)


def is_date_like(f: FieldDef) -> bool:
    return isinstance(f.kind, PrimitiveKind) and f.kind.type in (Primitive.DATE, Primitive.TIMESTAMP)


def _short_names(names: list[str]) -> list[str]:
    tokens = [n.split("_") for n in names]
    prefix = 0
    while all(len(t) > prefix + 1 for t in tokens) and len({t[prefix] for t in tokens}) == 1:
        prefix += 1
    suffix = 0
    while all(len(t) > prefix + suffix + 1 for t in tokens) and len({t[-1 - suffix] for t in tokens}) == 1:
        suffix += 1
    return ["_".join(t[prefix : len(t) - suffix]) for t in tokens]


def infer_ordering(fields: list[FieldDef]) -> list[str]:
    """Order date columns by lifecycle words (created, effective, closed, ...)."""
    ranked = []
    for f in fields:
        if not is_date_like(f):
            continue
        ranks = [_ORDER_WORDS[t] for t in f.name.lower().split("_") if t in _ORDER_WORDS]
        if ranks:
            ranked.append((ranks[0], f.name))
    if len({r for r, _ in ranked}) < 2:
        return []
    ranked.sort(key=lambda item: item[0])
    # keep one column per rank so the chain is strict
    seen, chain = set(), []
    for rank, name in ranked:
        if rank not in seen:
            seen.add(rank)
            chain.append(name)
    return chain


def ordering_note(names: list[str]) -> str:
    return "dates must be mutually consistent: " + " ≤ ".join(_short_names(names))


def group_columns(
    schemas: SchemaSet, root: str, hints: tuple[Correlation, ...] | list = (), max_size: int = MAX_GROUP_SIZE
) -> tuple[list[ColumnGroup], list[str]]:
    """Partition a table's top-level scalar columns into generation groups.

    Returns the groups and any warnings about dropped hints.
    """
    schema = schemas.get(root)
    scalars = [f for f in schema.fields if is_scalar_column(f)]
    by_name = {f.name: f for f in scalars}
    position = {f.name: i for i, f in enumerate(scalars)}
    taken: set[str] = set()
    warnings: list[str] = []
    hinted: list[tuple[list[str], str | None, list[str]]] = []

    for hint in hints:
        cols = []
        for c in hint.columns:
            name = c.split(".", 1)[1] if c.startswith(root + ".") else c
            if name not in by_name:
                warnings.append(f"correlation hint column {c!r} is not a scalar column of {root}; hint dropped")
                cols = None
                break
            if name not in taken and name not in cols:
                cols.append(name)
        if not cols or len(cols) < 2:
            continue
        ordering = [o.split(".", 1)[1] if o.startswith(root + ".") else o for o in hint.ordering]
        ordering = [o for o in ordering if o in cols] or infer_ordering([by_name[c] for c in cols])
        taken.update(cols)
        hinted.append((cols, hint.note, ordering))

    prefixes: dict[str, list[str]] = {}
    for f in scalars:
        if f.name in taken or "_" not in f.name:
            continue
        prefixes.setdefault(f.name.split("_")[0], []).append(f.name)
    for prefix, cols in prefixes.items():
        if len(cols) < 2:
            continue
        taken.update(cols)
        hinted.append((cols, None, infer_ordering([by_name[c] for c in cols])))

    linked: list[list[str]] = []
    for f in scalars:
        if f.name in taken or not f.annotation or f.machine_annotation:
            continue
        words = set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", f.annotation))
        partners = [o.name for o in scalars if o.name != f.name and o.name not in taken and o.name in words]
        if partners:
            cluster = [f.name] + partners
            for existing in linked:
                if set(existing) & set(cluster):
                    existing.extend(c for c in cluster if c not in existing)
                    break
            else:
                linked.append(cluster)
    for cluster in linked:
        cluster = [c for c in cluster if c not in taken]
        if len(cluster) < 2:
            continue
        cluster.sort(key=position.__getitem__)
        taken.update(cluster)
        hinted.append((cluster, None, infer_ordering([by_name[c] for c in cluster])))

    groups: list[ColumnGroup] = []
    for cols, note, ordering in hinted:
        cols = sorted(cols, key=position.__getitem__)
        if ordering:
            text = note or ordering_note(ordering)
        else:
            text = note or "these columns are related; keep their values mutually consistent"
        for i in range(0, len(cols), max_size):
            chunk = cols[i : i + max_size]
            chunk_order = [o for o in ordering if o in chunk]
            groups.append(
                ColumnGroup(
                    tuple(ColumnPath.of(c) for c in chunk),
                    text,
                    tuple(ColumnPath.of(c) for c in chunk_order) if len(chunk_order) >= 2 else (),
                    hinted=True,
                )
            )
    rest = [f.name for f in scalars if f.name not in taken]
    for i in range(0, len(rest), max_size):
        groups.append(ColumnGroup(tuple(ColumnPath.of(c) for c in rest[i : i + max_size])))
    groups.sort(key=lambda g: position[g.members[0].head])
    return groups, warnings


def enum_values(f: FieldDef) -> tuple[str, ...]:
    return f.kind.values if isinstance(f.kind, EnumKind) else ()
