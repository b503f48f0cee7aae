"""Structural-integrity scoring of generated rows against a reference schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .schema import DEFAULT_RECURSION_CAP, ColumnPath, EnumKind, FieldDef, MessageKind, SchemaSet
from .validation.rules import scalar_problem, values_at

CRITERIA = (
    ("primary_key_generated", "Primary key generated"),
    ("correct_field_names", "Correct field names"),
    ("columns_generated", "Columns generated"),
    ("nested_incorrect_level", "Nested fields with incorrect level of nesting"),
    ("nested_with_correct_name", "Nested fields with correct name"),
    ("nested_enum_correct", "Nested fields with correct enum values"),
    ("nested_scalar_correct", "Nested fields with correct scalar values"),
    ("nested_all_values", "Nested fields with all values generated"),
)
INVERTED = {"nested_incorrect_level"}


@dataclass(frozen=True)
class Ratio:
    numerator: int
    denominator: int
    inverted: bool = False

    def __post_init__(self):
        if not 0 <= self.numerator <= self.denominator:
            raise ValueError(f"bad ratio {self.numerator}/{self.denominator}")

    @property
    def normalized(self) -> float:
        # an empty denominator is vacuously perfect
        if self.denominator == 0:
            return 1.0
        frac = self.numerator / self.denominator
        return 1.0 - frac if self.inverted else frac

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


@dataclass
class IntegrityScore:
    counts: dict[str, Ratio] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    def __getitem__(self, key: str) -> Ratio:
        return self.counts[key]

    def to_dict(self) -> dict:
        return {
            "criteria": {
                k: {"numerator": r.numerator, "denominator": r.denominator, "normalized": round(r.normalized, 6)}
                for k, r in self.counts.items()
            },
            "excluded": list(self.excluded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        width = max(len(title) for _, title in CRITERIA)
        lines = [f"{'criterion'.ljust(width)}  count    normalized"]
        for key, title in CRITERIA:
            r = self.counts[key]
            lines.append(f"{title.ljust(width)}  {str(r).ljust(7)}  {r.normalized:.3f}")
        return "\n".join(lines)


def _is_primary_key(f: FieldDef) -> bool:
    return f.name == "id" or bool(f.annotation and "primary key" in f.annotation.lower())


def _subtree(schemas: SchemaSet, f: FieldDef, cap: int, root: str) -> list[tuple[ColumnPath, FieldDef]]:
    """Scalar leaves under a top-level message field, within the recursion cap."""
    out = []
    for path, leaf in schemas.walk(root, recursion_cap=cap):
        if path.head == f.name and len(path) > 1 and not isinstance(leaf.kind, MessageKind):
            out.append((path, leaf))
    return out


def _misplaced(schemas: SchemaSet, message_name: str, record, out: list[str], prefix: str):
    """Collect keys that do not belong at this nesting level, and scalars where records belong."""
    message = schemas.messages.get(message_name)
    if message is None or not isinstance(record, dict):
        return
    fields = {f.name: f for f in message.fields}
    for key, value in record.items():
        f = fields.get(key)
        path = f"{prefix}.{key}"
        if f is None:
            out.append(path)
            continue
        if isinstance(f.kind, MessageKind):
            for element in value if isinstance(value, list) else [value]:
                if not isinstance(element, dict):
                    out.append(path)
                else:
                    _misplaced(schemas, f.kind.ref, element, out, path)
        elif isinstance(value, dict) or (isinstance(value, list) and not f.repeated):
            out.append(path)


def score_integrity(rows: list[dict], schemas: SchemaSet, root: str,
                    recursion_cap: int = DEFAULT_RECURSION_CAP) -> IntegrityScore:
    """Count every structural criterion by walking the rows against the reference schema."""
    schema = schemas.get(root)
    excluded = []
    top = []
    for f in schema.fields:
        if f.deprecated:
            continue
        if isinstance(f.kind, MessageKind) and f.kind.ref not in schemas.messages:
            excluded.append(f.name)
            continue
        top.append(f)
    nested = [f for f in top if isinstance(f.kind, MessageKind)]
    keys = {k for r in rows for k in r}

    pks = [f for f in top if _is_primary_key(f) and not isinstance(f.kind, MessageKind)]
    pk_ok = 0
    for f in pks:
        values = [r.get(f.name) for r in rows]
        if rows and all(v is not None for v in values) and len({repr(v) for v in values}) == len(values):
            pk_ok += 1

    names = sum(1 for f in top if f.name in keys)
    generated = sum(1 for f in top if rows and all(r.get(f.name) not in (None, [], {}) for r in rows))

    wrong_level = with_name = enum_ok = scalar_ok = all_values = 0
    enum_bearing = 0
    for f in nested:
        leaves = _subtree(schemas, f, recursion_cap, root)
        present = [r[f.name] for r in rows if r.get(f.name) is not None]
        if present:
            with_name += 1
        misplaced: list[str] = []
        for value in present:
            for element in value if isinstance(value, list) else [value]:
                if not isinstance(element, dict):
                    misplaced.append(f.name)
                else:
                    _misplaced(schemas, f.kind.ref, element, misplaced, f.name)
        if misplaced:
            wrong_level += 1

        observed = [(leaf, v) for path, leaf in leaves for r in rows for v in values_at(r, path.segments)]
        flat = [(leaf, x) for leaf, v in observed for x in (v if isinstance(v, list) else [v])]
        enums = [(leaf, x) for leaf, x in flat if isinstance(leaf.kind, EnumKind)]
        scalars = [(leaf, x) for leaf, x in flat if not isinstance(leaf.kind, EnumKind)]
        has_enum = any(isinstance(leaf.kind, EnumKind) for _, leaf in leaves)
        if has_enum:
            enum_bearing += 1
            if enums and all(scalar_problem(leaf, x) is None for leaf, x in enums):
                enum_ok += 1
        if flat and not misplaced and all(scalar_problem(leaf, x) is None for leaf, x in scalars):
            scalar_ok += 1
        if leaves and all(any(True for r in rows for _ in values_at(r, path.segments)) for path, _ in leaves):
            all_values += 1

    counts = {
        "primary_key_generated": Ratio(pk_ok, len(pks)),
        "correct_field_names": Ratio(names, len(top)),
        "columns_generated": Ratio(generated, len(top)),
        "nested_incorrect_level": Ratio(wrong_level, len(nested), inverted=True),
        "nested_with_correct_name": Ratio(with_name, len(nested)),
        "nested_enum_correct": Ratio(enum_ok, enum_bearing),
        "nested_scalar_correct": Ratio(scalar_ok, len(nested)),
        "nested_all_values": Ratio(all_values, len(nested)),
    }
    return IntegrityScore(counts, excluded)
