"""Command line entry point: generate, analyze and score."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from .analysis import analyze
from .context import load_context, load_docs
from .errors import BackendUnavailable, MockgenError
from .generation.backends import DEFAULT_TEMPERATURE, HttpBackend
from .generation.deterministic import DeterministicBackend
from .orchestrator import (
    DEFAULT_MAX_CONCURRENCY, DEFAULT_MAX_RETRIES, PipelineConfig, build_manifest, run_instances,
)
from .records import parse_rows
from .schema import load_schemas
from .scoring import score_integrity
from .validation.judge import BackendJudge
from .validation.stats import DEFAULT_ALPHA, DEFAULT_PEARSON_THRESHOLD

log = logging.getLogger("sqlmockgen")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_UNAVAILABLE = 0, 1, 2, 3
EXTENSIONS = {"textproto": "textproto", "json": "json"}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", action="append", required=True, help="schema file (repeatable)")
    p.add_argument("--sql", required=True, help="SQL query or function file")
    p.add_argument("--context", help="context map JSON")
    p.add_argument("--docs", help="annotation docs JSON (column path to text)")
    p.add_argument("--allow-unresolved", action="store_true", help="skip unresolved nested references")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sqlmockgen", description="Generate query-driven mock data for nested schemas.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate, enforce and validate test data")
    _common(g)
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--format", choices=sorted(EXTENSIONS), default="textproto")
    g.add_argument("--backend", choices=["deterministic", "http"], default="deterministic")
    g.add_argument("--endpoint", help="HTTP backend URL")
    g.add_argument("--model", default="default")
    g.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    g.add_argument("--judge", choices=["deterministic", "backend"], default="deterministic",
                   help="who judges constraints the evaluator cannot decide")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rows", type=int, help="row count override")
    g.add_argument("--instances", type=int, help="instances per test")
    g.add_argument("--max-retries", type=int, default=DEFAULT_MAX_RETRIES)
    g.add_argument("--max-concurrency", type=int, default=DEFAULT_MAX_CONCURRENCY)
    g.add_argument("--pearson-threshold", type=float, default=DEFAULT_PEARSON_THRESHOLD)
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    g.add_argument("--recursion-cap", type=int, default=3)
    g.add_argument("--no-annotate", action="store_true", help="do not fill missing annotations")
    g.add_argument("--dump-analysis", action="store_true", help="print the analysis JSON and stop")
    g.add_argument("--timing", action="store_true", help="record wall time in the manifest")

    a = sub.add_parser("analyze", help="print the query analysis JSON")
    _common(a)

    s = sub.add_parser("score", help="score data files against a reference schema")
    s.add_argument("--schema", action="append", required=True)
    s.add_argument("--data", required=True, help="data file (textproto or JSON)")
    s.add_argument("--root", required=True, help="message the data rows conform to")
    s.add_argument("--recursion-cap", type=int, default=3)
    return parser


def _load_inputs(args):
    schemas = load_schemas(args.schema)
    sql = Path(args.sql).read_text(encoding="utf-8")
    context = load_context(args.context)
    if args.docs:
        context = dataclasses.replace(context, docs={**context.docs, **load_docs(args.docs)})
    return schemas, sql, context


def _analysis_json(sql, schemas, context, allow) -> str:
    return _dump(analyze(sql, schemas, context, allow).to_dict())


def cmd_analyze(args) -> int:
    schemas, sql, context = _load_inputs(args)
    sys.stdout.write(_analysis_json(sql, schemas, context, args.allow_unresolved))
    return EXIT_OK


def _backend(args):
    if args.backend == "deterministic":
        return None
    if not args.endpoint:
        raise MockgenError("--endpoint is required with --backend http")
    backend = HttpBackend(args.endpoint, args.model, args.temperature)
    backend.probe()
    return backend


def cmd_generate(args) -> int:
    schemas, sql, context = _load_inputs(args)
    if args.rows is not None:
        context = dataclasses.replace(context, row_count=args.rows)
    if args.dump_analysis:
        sys.stdout.write(_analysis_json(sql, schemas, context, args.allow_unresolved))
        return EXIT_OK
    backend = _backend(args)
    judge = None
    if args.judge == "backend":
        if backend is None:
            raise MockgenError("--judge backend needs --backend http")
        judge = BackendJudge(backend)
    config = PipelineConfig(
        seed=args.seed, max_retries=args.max_retries, max_concurrency=args.max_concurrency,
        allow_unresolved=args.allow_unresolved, recursion_cap=args.recursion_cap,
        pearson_threshold=args.pearson_threshold, alpha=args.alpha, fill_annotations=not args.no_annotate,
    )
    runs = run_instances(sql, schemas, context, backend, judge, args.instances, config)
    out = Path(args.out)
    ext = EXTENSIONS[args.format]
    for i, run in enumerate(runs):
        base = out / f"instance_{i}"
        for table, text in sorted(run.serialize_tables(args.format).items()):
            _write(base / f"{table}.{ext}", text)
        if run.report is not None:
            _write(base / "report.json", run.report.to_json())
            _write(base / "report.txt", run.report.to_text() + "\n")
    inputs = {
        "sql": {"name": Path(args.sql).name, "sha256": _sha256(args.sql)},
        "schemas": [{"name": Path(p).name, "sha256": _sha256(p)} for p in args.schema],
        "context": {"name": Path(args.context).name, "sha256": _sha256(args.context)} if args.context else None,
        "backend": args.backend,
        "judge": args.judge,
        "format": args.format,
    }
    manifest = build_manifest(runs, inputs, args.seed, args.timing)
    _write(out / "manifest.json", _dump(manifest))
    _write(out / "analysis.json", _dump(runs[0].analysis.to_dict()))
    ok = manifest["successes"]
    print(f"{ok}/{len(runs)} instance(s) succeeded; output in {out}")
    return EXIT_OK if ok else EXIT_ALL_FAILED


def cmd_score(args) -> int:
    schemas = load_schemas(args.schema)
    text = Path(args.data).read_text(encoding="utf-8")
    parsed = parse_rows(schemas, args.root, text)
    score = score_integrity(parsed.rows, schemas, args.root, args.recursion_cap)
    print(score.to_table())
    sys.stdout.write(score.to_json())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"generate": cmd_generate, "analyze": cmd_analyze, "score": cmd_score}[args.command]
    try:
        return handler(args)
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except (MockgenError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
