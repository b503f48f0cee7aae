"""Compact SQL text for expressions, used in prompts, reports and the analysis dump.

Comparisons render without spaces around the operator (``date>='2023-01-01'``);
bound column references render as their column path without table aliases.
"""

from __future__ import annotations

from datetime import date

from ..values import EnumVal, Timestamp, format_timestamp
from . import ast as A

_PREC = {A.Or: 1, A.And: 2, A.Not: 3}


def literal_text(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, EnumVal):
        value = value.name
    if isinstance(value, str):
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"
    if isinstance(value, date):
        return f"DATE '{value.isoformat()}'"
    if isinstance(value, Timestamp):
        return f"TIMESTAMP '{format_timestamp(value)}'"
    if isinstance(value, bytes):
        return "b" + repr(value)[1:]
    return repr(value)


def _prec(node) -> int:
    for cls, p in _PREC.items():
        if isinstance(node, cls):
            return p
    if isinstance(node, (A.Compare, A.Between, A.Like, A.InList, A.InSubquery, A.IsNull, A.IsBool)):
        return 4
    if isinstance(node, A.BinaryOp):
        return 6 if node.op in ("+", "-", "||") else 7
    return 10


def _wrap(node, parent_prec: int, qualified: bool) -> str:
    text = render(node, qualified)
    return f"({text})" if _prec(node) < parent_prec else text


def render(node, qualified: bool = False) -> str:
    """Render an expression; ``qualified`` prefixes bound columns with their table."""
    if node is None:
        return ""
    if isinstance(node, A.ColumnRef):
        if node.path is not None:
            text = str(node.path)
            return f"{node.table}.{text}" if qualified and node.table else text
        return ".".join(node.parts)
    if isinstance(node, A.Literal):
        return literal_text(node.value)
    if isinstance(node, A.Star):
        return ".".join(node.qualifier + ("*",)) if node.qualifier else "*"
    if isinstance(node, A.Param):
        return node.name
    if isinstance(node, A.Unary):
        return f"{node.op}{_wrap(node.operand, 8, qualified)}"
    if isinstance(node, A.BinaryOp):
        p = _prec(node)
        return f"{_wrap(node.left, p, qualified)} {node.op} {_wrap(node.right, p + 1, qualified)}"
    if isinstance(node, A.Compare):
        return f"{_wrap(node.left, 5, qualified)}{node.op}{_wrap(node.right, 5, qualified)}"
    if isinstance(node, A.Between):
        neg = "NOT " if node.negated else ""
        return (
            f"{_wrap(node.expr, 5, qualified)} {neg}BETWEEN "
            f"{_wrap(node.lo, 5, qualified)} AND {_wrap(node.hi, 5, qualified)}"
        )
    if isinstance(node, A.Like):
        neg = "NOT " if node.negated else ""
        return f"{_wrap(node.expr, 5, qualified)} {neg}LIKE {_wrap(node.pattern, 5, qualified)}"
    if isinstance(node, A.InList):
        neg = "NOT " if node.negated else ""
        items = ", ".join(render(i, qualified) for i in node.items)
        return f"{_wrap(node.expr, 5, qualified)} {neg}IN ({items})"
    if isinstance(node, A.InSubquery):
        neg = "NOT " if node.negated else ""
        return f"{_wrap(node.expr, 5, qualified)} {neg}IN (<subquery>)"
    if isinstance(node, A.IsNull):
        return f"{_wrap(node.expr, 5, qualified)} IS {'NOT ' if node.negated else ''}NULL"
    if isinstance(node, A.IsBool):
        word = "TRUE" if node.value else "FALSE"
        return f"{_wrap(node.expr, 5, qualified)} IS {'NOT ' if node.negated else ''}{word}"
    if isinstance(node, A.And):
        return " AND ".join(_wrap(i, 3, qualified) for i in node.items)
    if isinstance(node, A.Or):
        return " OR ".join(_wrap(i, 2, qualified) for i in node.items)
    if isinstance(node, A.Not):
        return f"NOT {_wrap(node.operand, 4, qualified)}"
    if isinstance(node, A.DatePart):
        return node.name
    if isinstance(node, A.FuncCall):
        distinct = "DISTINCT " if node.distinct else ""
        return f"{node.name}({distinct}{', '.join(render(a, qualified) for a in node.args)})"
    if isinstance(node, A.Cast):
        return f"{'SAFE_CAST' if node.safe else 'CAST'}({render(node.expr, qualified)} AS {node.type_name})"
    if isinstance(node, A.Case):
        parts = ["CASE"]
        if node.operand is not None:
            parts.append(render(node.operand, qualified))
        for cond, result in node.whens:
            parts.append(f"WHEN {render(cond, qualified)} THEN {render(result, qualified)}")
        if node.else_ is not None:
            parts.append(f"ELSE {render(node.else_, qualified)}")
        parts.append("END")
        return " ".join(parts)
    if isinstance(node, A.SubqueryExpr):
        return "EXISTS (<subquery>)" if node.exists else "(<subquery>)"
    if isinstance(node, A.Opaque):
        return " ".join(node.text.split())
    return repr(node)
