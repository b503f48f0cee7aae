"""Validation result types shared by the rules, the judge and the report."""

from __future__ import annotations

from dataclasses import dataclass, field

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
RULES = ("r1", "r2", "r3", "r4", "r5")
RULE_TITLES = {
    "r1": "missing columns",
    "r2": "data types",
    "r3": "column correlations",
    "r4": "join constraints",
    "r5": "semantic constraints",
}


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    table: str | None = None
    column: str | None = None
    row: int | None = None

    def text(self) -> str:
        where = ".".join(p for p in (self.table, self.column) if p)
        row = f" row {self.row}" if self.row is not None else ""
        loc = f" [{where}{row}]" if where or row else ""
        return f"{self.rule}{loc}: {self.message}"

    def to_dict(self) -> dict:
        return {"rule": self.rule, "table": self.table, "column": self.column, "row": self.row,
                "message": self.message}


@dataclass
class RuleResult:
    rule: str
    status: str = PASS
    violations: list[Violation] = field(default_factory=list)
    reason: str | None = None
    notes: list[str] = field(default_factory=list)

    @classmethod
    def skipped(cls, rule: str, reason: str) -> "RuleResult":
        return cls(rule, SKIPPED, reason=reason)

    @classmethod
    def from_violations(cls, rule: str, violations: list[Violation], notes=()) -> "RuleResult":
        return cls(rule, FAIL if violations else PASS, list(violations), notes=list(notes))

    def merge(self, other: "RuleResult") -> "RuleResult":
        """Combine per-table results: any fail fails; all skipped stays skipped."""
        if self.status == SKIPPED and other.status == SKIPPED:
            reason = "; ".join(r for r in (self.reason, other.reason) if r)
            return RuleResult(self.rule, SKIPPED, reason=reason, notes=self.notes + other.notes)
        violations = self.violations + other.violations
        status = FAIL if violations else PASS
        reasons = [r for r in (self.reason, other.reason) if r]
        return RuleResult(self.rule, status, violations, "; ".join(reasons) or None, self.notes + other.notes)

    def to_dict(self) -> dict:
        out = {"rule": self.rule, "status": self.status, "violations": [v.to_dict() for v in self.violations]}
        if self.reason:
            out["reason"] = self.reason
        if self.notes:
            out["notes"] = list(self.notes)
        return out


@dataclass(frozen=True)
class JudgeVerdict:
    verdict: str  # VALID | NOT_VALID | NOT_PRESENT
    reason: str = ""

    VALID = "VALID"
    NOT_VALID = "NOT_VALID"
    NOT_PRESENT = "NOT_PRESENT"

    @property
    def ok(self) -> bool:
        return self.verdict == self.VALID

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.reason}
