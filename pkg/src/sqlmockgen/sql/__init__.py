"""GoogleSQL subset: lexer, AST, parser and renderer."""

from .parser import parse_expression, parse_sql
from .render import render

__all__ = ["parse_sql", "parse_expression", "render"]
