"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class MockgenError(Exception):
    """Base class for every error raised by this package."""


class SchemaSyntaxError(MockgenError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(MockgenError):
    """Structural problem in a schema set (duplicates, cycles)."""


class PathResolutionError(MockgenError):
    def __init__(self, message: str, segment: str | None = None):
        super().__init__(message)
        self.segment = segment


class SerializationError(MockgenError):
    pass


class SqlSyntaxError(MockgenError):
    def __init__(self, message: str, position: int, line: int = 0, column: int = 0):
        super().__init__(f"{message} at line {line}, column {column}")
        self.position = position
        self.line = line
        self.column = column


class AnalysisError(MockgenError):
    pass


class ContextError(MockgenError):
    pass


class PlanError(MockgenError):
    pass


class GenerationError(MockgenError):
    pass


class FormatError(GenerationError):
    """Backend output could not be parsed into rows at all."""


class BackendError(MockgenError):
    pass


class BackendUnavailable(BackendError):
    """Transport-level failure after all transport retries were spent."""


class EnforcementError(MockgenError):
    def __init__(self, message: str, predicate: object = None):
        super().__init__(message)
        self.predicate = predicate
