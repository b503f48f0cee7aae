"""Backend protocol and the HTTP text-completion backend."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Protocol

import requests

from ..errors import BackendError, BackendUnavailable
from ..schema import FieldDef

log = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "SQLMOCKGEN_API_TOKEN"
DEFAULT_TEMPERATURE = 0.1
TRANSPORT_RETRIES = 2


class Backend(Protocol):
    name: str

    def generate(self, request, prompt) -> str: ...

    def annotate(self, message: str, f: FieldDef) -> str: ...

    def complete(self, system: str, user: str) -> str: ...


class Limiter:
    """Bounds in-flight backend calls across every pool that shares it."""

    def __init__(self, limit: int = 10):
        if limit < 1:
            raise ValueError("concurrency limit must be positive")
        self.limit = limit
        self._sem = threading.BoundedSemaphore(limit)
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0
        self.calls = 0

    def __enter__(self):
        self._sem.acquire()
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.peak = max(self.peak, self.in_flight)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self.in_flight -= 1
        self._sem.release()
        return False


@dataclass
class HttpBackend:
    endpoint: str
    model: str = "default"
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 8192
    timeout: float = 120.0
    token_env: str = DEFAULT_TOKEN_ENV
    retries: int = TRANSPORT_RETRIES
    backoff: float = 0.5
    name: str = "http"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, system: str, user: str) -> str:
        body = {
            "system": system,
            "user": user,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "model": self.model,
        }
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.endpoint, json=body, headers=self._headers(), timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                log.warning("backend transport error (attempt %d): %s", attempt + 1, exc)
            else:
                if resp.status_code >= 500:
                    last = BackendError(f"backend returned HTTP {resp.status_code}")
                    log.warning("backend HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                elif resp.status_code >= 400:
                    raise BackendError(f"backend rejected the request: HTTP {resp.status_code} {resp.text[:200]}")
                else:
                    try:
                        payload = resp.json()
                    except ValueError:
                        raise BackendError("backend response is not JSON") from None
                    if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
                        raise BackendError("backend response lacks a 'text' field")
                    return payload["text"]
            if attempt < self.retries:
                time.sleep(self.backoff * (2**attempt))
        if isinstance(last, requests.RequestException):
            raise BackendUnavailable(f"backend at {self.endpoint} is unreachable: {last}")
        raise BackendError(str(last))

    def generate(self, request, prompt) -> str:
        return self.complete(prompt.system, prompt.user)

    def annotate(self, message: str, f: FieldDef) -> str:
        system = "You write one-sentence descriptions of database columns."
        user = (
            f"Describe the column {f.name} ({f.type_label}) of table {message} in one sentence. "
            "Reply with the sentence only."
        )
        lines = self.complete(system, user).strip().splitlines()
        return lines[0].strip() if lines else ""

    def probe(self) -> None:
        """Raise BackendUnavailable when the endpoint cannot be reached at all."""
        try:
            requests.head(self.endpoint, timeout=min(self.timeout, 10.0))
        except requests.RequestException as exc:
            raise BackendUnavailable(f"backend at {self.endpoint} is unreachable: {exc}") from None
