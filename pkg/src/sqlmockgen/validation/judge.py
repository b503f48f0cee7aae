"""Semantic validation (r5): the deterministic judge, with a backend judge for unevaluable residue."""

from __future__ import annotations

import logging
import re
from typing import Any, Protocol

from ..generation.prompt import build_judge_prompt
from ..postprocess import set_path
from ..records import serialize_rows
from ..schema import SchemaSet
from ..sql import ast as A
from ..sql.render import render
from ..values import display
from .evaluator import UNEVALUABLE, evaluate_predicate
from .results import FAIL, PASS, SKIPPED, JudgeVerdict, RuleResult, Violation
from .rules import values_at

log = logging.getLogger(__name__)

MAX_REPORTED_ROWS = 5

# NOT PRESENT and NOT VALID both contain VALID, so test the longer tokens first
_VERDICTS = (
    (re.compile(r"\bNOT[\s_]+PRESENT\b", re.I), JudgeVerdict.NOT_PRESENT),
    (re.compile(r"\bNOT[\s_]+VALID\b", re.I), JudgeVerdict.NOT_VALID),
    (re.compile(r"\bVALID\b", re.I), JudgeVerdict.VALID),
)


class VerdictError(ValueError):
    pass


def parse_verdict(text: str) -> JudgeVerdict:
    if not text or not text.strip():
        raise VerdictError("judge returned an empty reply")
    for pattern, verdict in _VERDICTS:
        m = pattern.search(text)
        if m:
            reason = (text[: m.start()] + text[m.end():]).strip(" \n:-.")
            return JudgeVerdict(verdict, reason)
    raise VerdictError(f"no verdict token in judge reply: {text[:80]!r}")


class Judge(Protocol):
    def verdict(self, data: str, constraints: str) -> JudgeVerdict: ...


class BackendJudge:
    """Asks a text backend with the judge prompt and parses the verdict token."""

    def __init__(self, backend):
        self.backend = backend

    def verdict(self, data: str, constraints: str) -> JudgeVerdict:
        prompt = build_judge_prompt(data, constraints)
        return parse_verdict(self.backend.complete(prompt.system, prompt.user))


def _columns(pred) -> list[str]:
    # unbound references come from hand-written predicates and name their dotted path
    return sorted({str(r.path) if r.path is not None else ".".join(r.parts) for r in A.column_refs(pred)})


def _present(rows, column: str) -> bool:
    segments = tuple(column.split("."))
    return any(True for row in rows for _ in values_at(row, segments))


def judge_constraint(rows: list[dict], pred) -> tuple[JudgeVerdict | None, list[int]]:
    """Deterministic verdict for one conjunctive constraint; None means unevaluable residue."""
    cols = _columns(pred)
    missing = [c for c in cols if not _present(rows, c)]
    if missing:
        return JudgeVerdict(JudgeVerdict.NOT_PRESENT, f"column {', '.join(missing)} is absent from the data"), []
    if not rows:
        return JudgeVerdict(JudgeVerdict.NOT_VALID, "no rows"), []
    results = [evaluate_predicate(r, pred) for r in rows]
    failing = [i for i, r in enumerate(results) if r is False]
    if failing:
        return JudgeVerdict(JudgeVerdict.NOT_VALID, f"{len(failing)} of {len(rows)} rows violate it"), failing
    if any(r is UNEVALUABLE for r in results):
        return None, [i for i, r in enumerate(results) if r is UNEVALUABLE]
    return JudgeVerdict(JudgeVerdict.VALID), []


def _feasible(value: Any, column, constraints) -> bool:
    row: dict = {}
    set_path(row, column.segments, value)
    for c in constraints:
        if {str(r.path) for r in A.column_refs(c) if r.path is not None} == {str(column)}:
            if evaluate_predicate(row, c) is False:
                return False
    return True


def _coverage_violations(table: str, rows, targets, constraints) -> list[Violation]:
    out = []
    for t in targets:
        ok, missing = t.check(rows)
        if ok:
            continue
        reachable = [v for v in missing if _feasible(v, t.column, constraints)]
        if missing and not reachable:
            continue
        need = ", ".join(display(v) for v in reachable) or "an interior value"
        out.append(Violation("r5", f"NOT VALID: coverage {t.kind} on {t.column} is missing {need}",
                             table, str(t.column)))
    return out


def _row_excerpt(rows, indices, cols) -> str:
    parts = []
    for i in indices[:MAX_REPORTED_ROWS]:
        cells = []
        for c in cols:
            found = list(values_at(rows[i], tuple(c.split("."))))
            cells.append(f"{c}={display(found[0]) if found else 'missing'}")
        parts.append(f"row {i} ({', '.join(cells)})")
    more = f" and {len(indices) - MAX_REPORTED_ROWS} more" if len(indices) > MAX_REPORTED_ROWS else ""
    return "; ".join(parts) + more


def judge_table(
    table: str, rows: list[dict], constraints, coverage, schemas: SchemaSet | None = None, root: str | None = None,
    judge: Judge | None = None,
) -> tuple[list[Violation], list[str], list[tuple[str, JudgeVerdict]]]:
    """(violations, notes, per-constraint verdicts) for one table."""
    violations: list[Violation] = []
    notes: list[str] = []
    verdicts: list[tuple[str, JudgeVerdict]] = []
    residue = []
    for c in constraints:
        text = render(c)
        verdict, rows_hit = judge_constraint(rows, c)
        if verdict is None:
            residue.append(c)
            continue
        verdicts.append((text, verdict))
        if not verdict.ok:
            label = verdict.verdict.replace("_", " ")
            detail = f"; {_row_excerpt(rows, rows_hit, _columns(c))}" if rows_hit else ""
            violations.append(Violation("r5", f"{label}: constraint {text}: {verdict.reason}{detail}",
                                        table, ", ".join(_columns(c)) or None))
    violations.extend(_coverage_violations(table, rows, coverage, constraints))
    if residue:
        texts = "\n".join(f"- {render(c)}" for c in residue)
        if judge is None:
            notes.append(f"{table}: {len(residue)} unevaluable constraint(s) skipped without a backend judge")
            log.warning("unevaluable constraints on %s skipped: %s", table, "; ".join(render(c) for c in residue))
        else:
            data = serialize_rows(schemas, root, rows) if schemas is not None and root else repr(rows)
            try:
                verdict = judge.verdict(data, texts)
            except Exception as exc:  # unparseable or failed judge reply counts as a failure
                violations.append(Violation("r5", f"judge error: {exc}", table))
            else:
                verdicts.append((texts, verdict))
                if not verdict.ok:
                    label = verdict.verdict.replace("_", " ")
                    cols = sorted({c for p in residue for c in _columns(p)})
                    violations.append(Violation("r5", f"{label}: {verdict.reason or texts}", table,
                                                ", ".join(cols) or None))
    return violations, notes, verdicts


def judge_semantics(tables, analysis, schemas: SchemaSet | None = None, judge: Judge | None = None) -> RuleResult:
    """r5 across every generation target.  ``tables`` maps table name to rows."""
    violations: list[Violation] = []
    notes: list[str] = []
    evaluated = 0
    for target in analysis.targets:
        rows = tables.get(target.table)
        if rows is None:
            continue
        coverage = analysis.coverage_for(target.table)
        v, n, verdicts = judge_table(target.table, rows, target.constraints, coverage, schemas,
                                     target.schema_name, judge)
        violations.extend(v)
        notes.extend(n)
        evaluated += len(verdicts) + len(coverage)
    if not violations and not evaluated and notes:
        return RuleResult(rule="r5", status=SKIPPED, reason="; ".join(notes), notes=notes)
    return RuleResult("r5", FAIL if violations else PASS, violations, notes=notes)
