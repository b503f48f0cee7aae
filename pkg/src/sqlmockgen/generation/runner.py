"""Request dispatch over a bounded pool, output parsing and hallucination filtering."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..errors import BackendUnavailable, FormatError, GenerationError
from ..records import ParseResult, parse_rows
from ..schema import ColumnPath, SchemaSet
from .backends import Limiter
from .planner import GenerationRequest

log = logging.getLogger(__name__)

_FENCE = re.compile(r"^\s*```[A-Za-z0-9_-]*\s*\n(.*?)\n?\s*```\s*$", re.S)
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


@dataclass
class RawGeneration:
    request: GenerationRequest
    text: str | None
    requested: frozenset
    rows: list[dict] = field(default_factory=list)
    fragments: list[str] = field(default_factory=list)
    removed: list[ColumnPath] = field(default_factory=list)
    error: str | None = None
    unavailable: bool = False
    prompt_text: str = ""
    prompt_tokens: int = 0
    output_tokens: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None


def strip_fences(text: str) -> str:
    m = _FENCE.match(text)
    if m:
        return m.group(1)
    # fenced block embedded in chatter
    inner = re.search(r"```[A-Za-z0-9_-]*\s*\n(.*?)\n?\s*```", text, re.S)
    return inner.group(1) if inner else text


def parse_generation(text: str, schemas: SchemaSet, root: str) -> ParseResult:
    """Parse textproto-like or JSON output; raises FormatError when nothing is recoverable."""
    if text is None or not text.strip():
        raise FormatError("backend returned empty output")
    body = strip_fences(text).strip()
    fmt = "json" if body[:1] in ("[", "{") and not re.match(r"^\{\s*\w+\s*[:{]", body) else None
    if fmt == "json" or body[:1] == "[":
        body = _TRAILING_COMMA.sub(r"\1", body)
        fmt = "json"
    try:
        result = parse_rows(schemas, root, body, fmt)
    except FormatError:
        raise FormatError(f"unparseable backend output: {text[:80]!r}") from None
    if not result.rows or all(not r for r in result.rows):
        raise FormatError(f"unparseable backend output: {text[:80]!r}")
    return result


def filter_hallucinations(rows: list[dict], requested) -> tuple[list[dict], list[ColumnPath]]:
    """Drop every value whose column path was not requested; report the dropped paths."""
    requested = {ColumnPath.parse(p) if not isinstance(p, ColumnPath) else p.strip_indices() for p in requested}
    if not requested:
        raise ValueError("requested column set must be non-empty")
    removed: list[ColumnPath] = []

    def clean(record: dict, prefix: tuple[str, ...]) -> dict:
        out = {}
        for key, value in record.items():
            path = ColumnPath(prefix + (key,))
            if path not in requested:
                if path not in removed:
                    removed.append(path)
                continue
            if isinstance(value, dict):
                value = clean(value, path.segments)
            elif isinstance(value, list):
                value = [clean(v, path.segments) if isinstance(v, dict) else v for v in value]
            out[key] = value
        return out

    cleaned = [clean(r, ()) for r in rows]
    return [r for r in cleaned if r], removed


def _approx_tokens(text: str | None) -> int:
    return len(text.split()) if text else 0


def _run_one(request: GenerationRequest, backend, limiter: Limiter) -> RawGeneration:
    prompt = request.prompt()
    raw = RawGeneration(request, None, request.requested, prompt_text=prompt.text,
                        prompt_tokens=_approx_tokens(prompt.text))
    try:
        with limiter:
            raw.text = backend.generate(request, prompt)
    except BackendUnavailable as exc:
        raw.error, raw.unavailable = str(exc), True
        return raw
    except Exception as exc:  # recorded per request, siblings unaffected
        raw.error = f"{type(exc).__name__}: {exc}"
        return raw
    raw.output_tokens = _approx_tokens(raw.text)
    try:
        parsed = parse_generation(raw.text, request.schemas, request.schema_name)
    except (FormatError, GenerationError) as exc:
        raw.error = str(exc)
        return raw
    raw.fragments = parsed.fragments
    raw.rows, raw.removed = filter_hallucinations(parsed.rows, request.requested)
    if raw.removed:
        log.info("removed hallucinated columns from %s %s: %s", request.table, request.scope,
                 ", ".join(str(p) for p in raw.removed))
    if not raw.rows:
        raw.error = "every generated column was outside the requested schema"
    return raw


def run_requests(
    requests: list[GenerationRequest], backend, max_concurrency: int = 10, limiter: Limiter | None = None
) -> list[RawGeneration]:
    """Dispatch requests with bounded concurrency; results come back in plan order."""
    if not requests:
        return []
    limiter = limiter or Limiter(max_concurrency)
    workers = max(1, min(max_concurrency, len(requests)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, r, backend, limiter) for r in requests]
        return [f.result() for f in futures]


def assemble_rows(raws: list[RawGeneration], row_count: int) -> list[dict]:
    """Positional merge: row i joins the i-th record of every request, in plan order."""
    rows = []
    for i in range(row_count):
        merged: dict = {}
        for raw in raws:
            if i < len(raw.rows):
                merged.update(raw.rows[i])
        rows.append(merged)
    return rows
