"""End-to-end pipeline: analyze, plan, generate, enforce, validate, with scoped retries and instances."""

from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .analysis import QueryAnalysis, analyze, signal_generators
from .context import ContextMap, fill_annotations, merge_annotations
from .errors import BackendUnavailable, EnforcementError
from .generation.backends import Limiter
from .generation.deterministic import DeterministicBackend
from .generation.planner import Plan, plan_requests, plan_table, stable_seed
from .generation.runner import RawGeneration, assemble_rows, run_requests
from .postprocess import EnforcementLog, TableData, enforce_constraints, enforce_joins
from .records import serialize_rows
from .schema import DEFAULT_RECURSION_CAP, ColumnPath, SchemaSet
from .validation.judge import Judge
from .validation.report import ValidationReport, validate_all
from .validation.results import FAIL, RuleResult, Violation
from .validation.stats import DEFAULT_ALPHA, DEFAULT_PEARSON_THRESHOLD

log = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 3
DEFAULT_MAX_CONCURRENCY = 10
SUCCESS, FAILURE = "Success", "Failure"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    max_retries: int = DEFAULT_MAX_RETRIES
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY
    allow_unresolved: bool = False
    recursion_cap: int = DEFAULT_RECURSION_CAP
    pearson_threshold: float = DEFAULT_PEARSON_THRESHOLD
    alpha: float = DEFAULT_ALPHA
    join_fanout: int = 1
    enforce_joins: bool = True
    fill_annotations: bool = True

    def __post_init__(self):
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")


@dataclass
class Attempt:
    index: int
    tables: dict[str, TableData]
    report: ValidationReport
    regenerated: list[tuple[str, str]]
    prompts: dict[tuple[str, str], str]
    enforcement: EnforcementLog
    generation_errors: dict[tuple[str, str], str] = field(default_factory=dict)
    removed_columns: dict[tuple[str, str], list[str]] = field(default_factory=dict)
    prompt_tokens: int = 0
    output_tokens: int = 0

    def to_dict(self) -> dict:
        return {
            "attempt": self.index,
            "verdict": self.report.verdict,
            "regenerated": [f"{t}/{s}" for t, s in self.regenerated],
            "generation_errors": {f"{t}/{s}": e for (t, s), e in sorted(self.generation_errors.items())},
            "removed_columns": {f"{t}/{s}": c for (t, s), c in sorted(self.removed_columns.items())},
            "enforcement": self.enforcement.to_dict(),
            "report": self.report.to_dict(),
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
        }


@dataclass
class PipelineRun:
    analysis: QueryAnalysis
    seed: int
    plan: Plan
    attempts: list[Attempt] = field(default_factory=list)
    status: str = FAILURE
    warnings: list[str] = field(default_factory=list)
    schemas: SchemaSet | None = None
    annotations_filled: int = 0
    backend_calls: int = 0
    wall_seconds: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    @property
    def final(self) -> Attempt | None:
        return self.attempts[-1] if self.attempts else None

    @property
    def tables(self) -> dict[str, TableData]:
        return self.final.tables if self.final else {}

    @property
    def report(self) -> ValidationReport | None:
        return self.final.report if self.final else None

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "seed": self.seed,
            "status": self.status,
            "attempt_count": len(self.attempts),
            "requests_per_plan": len(self.plan.requests),
            "backend_calls": self.backend_calls,
            "annotations_filled": self.annotations_filled,
            "prompt_tokens": sum(a.prompt_tokens for a in self.attempts),
            "output_tokens": sum(a.output_tokens for a in self.attempts),
            "warnings": list(self.warnings),
            "attempts": [a.to_dict() for a in self.attempts],
        }
        if timing:
            out["wall_seconds"] = round(self.wall_seconds, 3)
        return out

    def serialize_tables(self, fmt: str = "textproto") -> dict[str, str]:
        assert self.schemas is not None
        return {name: serialize_rows(self.schemas, t.schema_name, t.rows, fmt) for name, t in self.tables.items()}


def _scope_of(plan: Plan, table: str, column: str | None) -> list[tuple[str, str]]:
    try:
        tp = plan.table(table)
    except KeyError:
        return []
    keys = [r.key for r in tp.requests]
    if not column:
        return keys
    hits = []
    for part in column.split(", "):
        head = ColumnPath.parse(part.split("[")[0]).head if part else None
        for r in tp.requests:
            if any(c.head == head for c in r.columns) and r.key not in hits:
                hits.append(r.key)
    return hits or keys


def _retry_scopes(plan: Plan, report: ValidationReport, errors: dict) -> dict[tuple[str, str], str]:
    """Map each failing (table, scope) to the violation text it is retried with."""
    texts: dict[tuple[str, str], list[str]] = {}
    for key, err in errors.items():
        texts.setdefault(key, []).append(f"generation error: {err}")
    for v in report.violations:
        tables = [v.table] if v.table else [t.target.table for t in plan.tables]
        for t in tables:
            for key in _scope_of(plan, t, v.column):
                texts.setdefault(key, []).append(v.text())
    if not texts:
        # failure without a locatable cause regenerates everything
        for r in plan.requests:
            texts[r.key] = [report.to_text()]
    return {k: "\n".join(dict.fromkeys(v)) for k, v in texts.items()}


def _prepare_schemas(analysis, schemas, context, backend, config, limiter) -> tuple[SchemaSet, int]:
    filled = 0
    for root in dict.fromkeys(t.schema_name for t in analysis.targets if t.schema_name):
        if context.docs:
            schemas = merge_annotations(schemas, root, context.docs)
        if config.fill_annotations and hasattr(backend, "annotate"):
            schemas, n = fill_annotations(schemas, root, backend, config.max_concurrency, limiter)
            filled += n
    return schemas, filled


def _enforce(plan: Plan, analysis, schemas, raws: dict, config) -> tuple[dict[str, TableData], EnforcementLog, list[Violation]]:
    tables: dict[str, TableData] = {}
    log_ = EnforcementLog()
    errors: list[Violation] = []
    for tp in plan.tables:
        name = tp.target.table
        current = [raws[r.key] for r in tp.requests if r.key in raws]
        data = TableData(name, tp.target.schema_name, assemble_rows(current, tp.row_count))
        try:
            data, tlog = enforce_constraints(
                data, tp.target.constraints, analysis.coverage_for(name), schemas, tp.unique,
                signal_generators(tp.target),
            )
            log_.extend(tlog)
        except EnforcementError as exc:
            errors.append(Violation("r5", f"constraint enforcement failed: {exc}", name))
        tables[name] = data
    if config.enforce_joins and analysis.joins:
        try:
            tables, jlog = enforce_joins(tables, analysis.joins, schemas, config.join_fanout)
            log_.extend(jlog)
        except EnforcementError as exc:
            errors.append(Violation("r4", f"join enforcement failed: {exc}"))
    return tables, log_, errors


def run_pipeline(
    sql: str,
    schemas: SchemaSet,
    context: ContextMap | None = None,
    backend=None,
    judge: Judge | None = None,
    config: PipelineConfig | None = None,
    limiter: Limiter | None = None,
) -> PipelineRun:
    """One instance: analyze, generate and validate, retrying failing scopes up to max_retries times."""
    started = time.perf_counter()
    context = context or ContextMap()
    config = config or PipelineConfig()
    backend = backend or DeterministicBackend(config.seed)
    limiter = limiter or Limiter(config.max_concurrency)
    analysis = analyze(sql, schemas, context, config.allow_unresolved)
    schemas, filled = _prepare_schemas(analysis, schemas, context, backend, config, limiter)
    plan = plan_requests(analysis, context, schemas, config.seed, config.allow_unresolved, config.recursion_cap)
    run = PipelineRun(analysis, config.seed, plan, warnings=list(analysis.warnings) + plan.warnings,
                      schemas=schemas, annotations_filled=filled)
    raws: dict[tuple[str, str], RawGeneration] = {}
    requests = plan.requests
    for k in range(1, config.max_retries + 1):
        results = run_requests(requests, backend, config.max_concurrency, limiter)
        run.backend_calls += len(results)
        unavailable = [r for r in results if r.unavailable]
        if unavailable:
            raise BackendUnavailable(unavailable[0].error or "backend unavailable")
        for r in results:
            raws[r.request.key] = r
        gen_errors = {r.request.key: r.error for r in results if r.error}
        tables, elog, enforce_errors = _enforce(plan, analysis, schemas, raws, config)
        groups = {tp.target.table: tp.groups for tp in plan.tables}
        report = validate_all(
            {n: t.rows for n, t in tables.items()}, schemas, analysis, groups, judge,
            config.pearson_threshold, config.alpha, config.recursion_cap,
        )
        for v in enforce_errors:
            existing = report.results[v.rule]
            report.results[v.rule] = RuleResult(v.rule, FAIL, existing.violations + [v], existing.reason,
                                                existing.notes)
        attempt = Attempt(
            k, tables, report, [r.request.key for r in results], {r.request.key: r.prompt_text for r in results},
            elog, gen_errors, {r.request.key: [str(p) for p in r.removed] for r in results if r.removed},
            sum(r.prompt_tokens for r in results), sum(r.output_tokens for r in results),
        )
        run.attempts.append(attempt)
        if report.passed and not gen_errors:
            run.status = SUCCESS
            break
        if k == config.max_retries:
            break
        retry = _retry_scopes(plan, report, gen_errors)
        requests = []
        for tp in plan.tables:
            only = {key for key in retry if key[0] == tp.target.table}
            if not only:
                continue
            requests.extend(plan_table(
                analysis, tp.target, context, schemas, config.seed, config.allow_unresolved, config.recursion_cap,
                len(requests), attempt=k + 1, retry=retry, only=only,
            ).requests)
        log.info("attempt %d failed; regenerating %d request(s)", k, len(requests))
    run.wall_seconds = time.perf_counter() - started
    return run


def instance_seeds(seed: int, n: int) -> list[int]:
    return [stable_seed(seed, i) for i in range(n)]


def run_instances(
    sql: str,
    schemas: SchemaSet,
    context: ContextMap | None = None,
    backend=None,
    judge: Judge | None = None,
    n: int | None = None,
    config: PipelineConfig | None = None,
    limiter: Limiter | None = None,
    backend_factory=None,
) -> list[PipelineRun]:
    """``n`` independent runs with derived seeds, concurrent under one shared worker bound."""
    context = context or ContextMap()
    config = config or PipelineConfig()
    n = n if n is not None else context.instances_per_test
    if n < 1:
        raise ValueError("instance count must be at least 1")
    limiter = limiter or Limiter(config.max_concurrency)
    seeds = instance_seeds(config.seed, n)

    def one(s: int) -> PipelineRun:
        cfg = PipelineConfig(**{**config.__dict__, "seed": s})
        be = backend_factory(s) if backend_factory else (backend or DeterministicBackend(s))
        return run_pipeline(sql, schemas, context, be, judge, cfg, limiter)

    if n == 1:
        return [one(seeds[0])]
    with ThreadPoolExecutor(max_workers=min(n, config.max_concurrency)) as pool:
        return list(pool.map(one, seeds))


def input_digest(*texts: str) -> str:
    h = hashlib.sha256()
    for t in texts:
        h.update(t.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def build_manifest(runs: list[PipelineRun], inputs: dict, seed: int, timing: bool = False) -> dict:
    return {
        "inputs": inputs,
        "seed": seed,
        "instance_seeds": [r.seed for r in runs],
        "instances": [r.to_dict(timing) for r in runs],
        "successes": sum(r.success for r in runs),
        "status": SUCCESS if any(r.success for r in runs) else FAILURE,
    }
