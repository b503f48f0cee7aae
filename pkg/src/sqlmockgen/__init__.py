"""Query-driven mock test data generation for nested table schemas."""

__version__ = "0.1.0"
