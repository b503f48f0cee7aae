"""ValidationReport and the full r1 to r5 validation pass."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..schema import DEFAULT_RECURSION_CAP, SchemaSet
from .judge import Judge, judge_semantics
from .results import FAIL, PASS, RULE_TITLES, RULES, RuleResult, Violation
from .rules import check_correlation, check_joins, check_structure
from .stats import DEFAULT_ALPHA, DEFAULT_PEARSON_THRESHOLD


@dataclass
class ValidationReport:
    results: dict[str, RuleResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.status != FAIL for r in self.results.values())

    @property
    def verdict(self) -> str:
        return PASS if self.passed else FAIL

    @property
    def violations(self) -> list[Violation]:
        return [v for rule in RULES if rule in self.results for v in self.results[rule].violations]

    def failing_tables(self) -> set[str]:
        return {v.table for v in self.violations if v.table}

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "rules": {k: self.results[k].to_dict() for k in RULES if k in self.results}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str) + "\n"

    def to_text(self) -> str:
        """Human-readable block; this is what retry prompts embed."""
        lines = [f"validation {self.verdict.upper()}"]
        for rule in RULES:
            r = self.results.get(rule)
            if r is None:
                continue
            head = f"{rule} {RULE_TITLES[rule]}: {r.status.upper()}"
            if r.reason:
                head += f" ({r.reason})"
            lines.append(head)
            lines.extend(f"  - {v.text()}" for v in r.violations)
        return "\n".join(lines)

    def violation_text(self, table: str | None = None) -> str:
        return "\n".join(v.text() for v in self.violations if table is None or v.table in (None, table))


def validate_all(
    tables: dict[str, list[dict]],
    schemas: SchemaSet,
    analysis,
    groups: dict[str, list] | None = None,
    judge: Judge | None = None,
    pearson_threshold: float = DEFAULT_PEARSON_THRESHOLD,
    alpha: float = DEFAULT_ALPHA,
    recursion_cap: int = DEFAULT_RECURSION_CAP,
) -> ValidationReport:
    """Run r1 through r5 in order without short-circuiting."""
    groups = groups or {}
    merged: dict[str, RuleResult] = {}

    def add(result: RuleResult):
        merged[result.rule] = merged[result.rule].merge(result) if result.rule in merged else result

    for target in analysis.targets:
        if target.schema_name is None or target.table not in tables:
            continue
        rows = tables[target.table]
        r1, r2 = check_structure(rows, schemas, target.schema_name, target.table, recursion_cap)
        add(r1)
        add(r2)
    for target in analysis.targets:
        if target.table in tables:
            add(check_correlation(tables[target.table], groups.get(target.table, []), target.table,
                                  pearson_threshold, alpha))
    add(check_joins(tables, analysis.joins))
    add(judge_semantics(tables, analysis, schemas, judge))
    for rule in RULES:
        merged.setdefault(rule, RuleResult.skipped(rule, "no tables"))
    return ValidationReport(merged)
