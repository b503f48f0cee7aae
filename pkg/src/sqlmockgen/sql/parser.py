"""Recursive-descent / Pratt parser for a GoogleSQL subset.

Handles SELECT with subqueries, joins, GROUP BY, HAVING, ORDER BY, LIMIT,
set operations, WITH clauses, and CREATE FUNCTION with an expression body.
Constructs outside the subset (window functions, INTERVAL, QUALIFY, ...)
are kept as :class:`Opaque` nodes rather than rejected.
"""

from __future__ import annotations

from ..errors import SqlSyntaxError
from ..values import parse_date, parse_timestamp
from . import ast as A
from .lexer import Token, tokenize

EVALUABLE_FUNCTIONS = {
    "CAST", "SAFE_CAST", "DATE", "TIMESTAMP_SECONDS", "PARSE_TIMESTAMP", "FORMAT_TIMESTAMP",
    "DATE_TRUNC", "LOWER", "UPPER",
}

AGGREGATES = {
    "COUNT", "SUM", "AVG", "MIN", "MAX", "ARRAY_AGG", "STRING_AGG", "COUNTIF", "ANY_VALUE",
    "LOGICAL_AND", "LOGICAL_OR", "STDDEV", "STDDEV_POP", "STDDEV_SAMP", "VARIANCE", "VAR_POP",
    "VAR_SAMP", "APPROX_COUNT_DISTINCT", "BIT_AND", "BIT_OR", "BIT_XOR", "ARRAY_CONCAT_AGG",
}

DATE_PARTS = {
    "MICROSECOND", "MILLISECOND", "SECOND", "MINUTE", "HOUR", "DAY", "DAYOFWEEK", "DAYOFYEAR",
    "WEEK", "ISOWEEK", "MONTH", "QUARTER", "YEAR", "ISOYEAR", "DATE", "TIME", "DATETIME",
}

_PART_FUNCTIONS = {
    "DATE_TRUNC", "TIMESTAMP_TRUNC", "DATETIME_TRUNC", "TIME_TRUNC", "LAST_DAY",
    "DATE_DIFF", "TIMESTAMP_DIFF", "DATETIME_DIFF",
}

_TYPED_LITERALS = {"DATE", "TIMESTAMP", "DATETIME", "TIME", "NUMERIC", "BIGNUMERIC", "JSON"}

_COMPARE = {"=": "=", "!=": "!=", "<>": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}

# binding powers
BP_OR, BP_AND, BP_NOT, BP_CMP, BP_BIT, BP_ADD, BP_MUL, BP_UNARY, BP_POSTFIX = 1, 2, 3, 4, 5, 6, 7, 8, 9

_JOIN_STARTERS = ("JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS")
_CLAUSE_END = {
    "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "UNION", "INTERSECT", "EXCEPT", "ON",
    "USING", "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "QUALIFY", "WINDOW", "WHEN", "THEN",
    "ELSE", "END", "AND", "OR", "AS", "OFFSET",
}


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.last_end = 0

    # -- token helpers ------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
            self.last_end = tok.end
        return tok

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        found = tok.value if tok.kind != "eof" else "end of input"
        raise SqlSyntaxError(f"{message} (found {found!r})", tok.pos, tok.line, tok.col)

    def accept_kw(self, *names: str) -> Token | None:
        if self.peek().is_kw(*names):
            return self.next()
        return None

    def accept_op(self, *ops: str) -> Token | None:
        if self.peek().is_op(*ops):
            return self.next()
        return None

    def expect_kw(self, name: str) -> Token:
        if not self.peek().is_kw(name):
            self.error(f"expected {name}")
        return self.next()

    def expect_op(self, op: str) -> Token:
        if not self.peek().is_op(op):
            self.error(f"expected {op!r}")
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind == "ident" or (tok.kind == "keyword" and tok.value not in _CLAUSE_END and tok.value != "SELECT"):
            return self.next()
        self.error(f"expected {what}")

    def span_from(self, start: int) -> tuple[int, int]:
        return (start, self.last_end)

    def skip_balanced(self) -> str:
        """Consume a parenthesised group starting at '(' and return its text."""
        start = self.peek().pos
        self.expect_op("(")
        depth = 1
        while depth:
            tok = self.next()
            if tok.kind == "eof":
                self.error("unbalanced parentheses")
            if tok.is_op("("):
                depth += 1
            elif tok.is_op(")"):
                depth -= 1
        return self.text[start : self.last_end]

    # -- statements ---------------------------------------------------------

    def parse_statement(self):
        if self.peek().is_kw("CREATE"):
            stmt = self.parse_create_function()
        else:
            stmt = self.parse_query()
        self.accept_op(";")
        if self.peek().kind != "eof":
            self.error("unexpected trailing input")
        return stmt

    def parse_create_function(self) -> A.CreateFunction:
        start = self.next().pos
        if self.accept_kw("OR"):
            self.expect_kw("REPLACE")
        while self.peek().is_kw("TEMP", "TEMPORARY", "PUBLIC") or (
            self.peek().kind == "ident" and self.peek().value.upper() == "PRIVATE"
        ):
            self.next()
        self.expect_kw("FUNCTION")
        if self.peek().is_kw("IF"):
            self.next()
            self.expect_kw("NOT")
            self.expect_kw("EXISTS")
        name = self.parse_dotted_name()
        self.expect_op("(")
        params = []
        if not self.peek().is_op(")"):
            while True:
                pname = self.expect_ident("parameter name").value
                ptype = self.parse_type()
                params.append((pname, ptype))
                if not self.accept_op(","):
                    break
        self.expect_op(")")
        returns = None
        if self.accept_kw("RETURNS"):
            returns = self.parse_type()
        while self.peek().kind == "ident" and self.peek().value.upper() in ("LANGUAGE", "OPTIONS"):
            word = self.next().value.upper()
            if word == "LANGUAGE":
                self.next()
            else:
                self.skip_balanced()
        self.expect_kw("AS")
        self.expect_op("(")
        if self.peek().is_kw("SELECT", "WITH"):
            body = A.SubqueryExpr(self.parse_query())
        else:
            body = self.parse_expr()
        self.expect_op(")")
        return A.CreateFunction(name, tuple(params), returns, body, span=self.span_from(start))

    def parse_dotted_name(self) -> str:
        parts = [self.expect_ident("name").value]
        while self.peek().is_op(".") and self.peek(1).kind in ("ident", "keyword"):
            self.next()
            parts.append(self.next().value)
        return ".".join(parts)

    def parse_type(self) -> str:
        start = self.peek().pos
        tok = self.next()
        if tok.kind not in ("ident", "keyword"):
            self.error("expected a type name", tok)
        while self.peek().is_op(".") and self.peek(1).kind == "ident":
            self.next()
            self.next()
        if self.peek().is_op("<"):
            depth = 0
            while True:
                t = self.next()
                if t.kind == "eof":
                    self.error("unterminated type parameter list")
                if t.is_op("<"):
                    depth += 1
                elif t.is_op(">"):
                    depth -= 1
                elif t.is_op(">>"):
                    depth -= 2
                if depth <= 0:
                    break
        if self.peek().is_op("(") and tok.value.upper() in ("NUMERIC", "BIGNUMERIC", "STRING", "BYTES"):
            self.skip_balanced()
        return self.text[start : self.last_end]

    # -- queries ------------------------------------------------------------

    def parse_query(self):
        start = self.peek().pos
        ctes = ()
        if self.accept_kw("WITH"):
            items = []
            while True:
                name = self.expect_ident("CTE name").value
                self.expect_kw("AS")
                self.expect_op("(")
                items.append((name, self.parse_query()))
                self.expect_op(")")
                if not self.accept_op(","):
                    break
            ctes = tuple(items)
        query = self.parse_query_term()
        while self.peek().is_kw("UNION", "INTERSECT", "EXCEPT"):
            op = self.next().value
            is_all = bool(self.accept_kw("ALL"))
            self.accept_kw("DISTINCT")
            right = self.parse_query_term()
            query = A.SetOp(op, query, right, is_all, span=self.span_from(start))
        if isinstance(query, A.SetOp):
            order_by, limit = self.parse_order_limit()
            query = A.SetOp(query.op, query.left, query.right, query.all, order_by, limit, ctes, span=self.span_from(start))
        elif ctes or (self.peek().is_kw("ORDER", "LIMIT") and not query.order_by and query.limit is None):
            order_by, limit = self.parse_order_limit()
            query = A.Select(
                query.items, query.from_, query.where, query.group_by, query.having,
                query.order_by or order_by, query.limit if query.limit is not None else limit,
                query.distinct, ctes, span=self.span_from(start),
            )
        return query

    def parse_query_term(self):
        if self.peek().is_op("("):
            self.next()
            q = self.parse_query()
            self.expect_op(")")
            return q
        return self.parse_select()

    def parse_order_limit(self):
        order_by = ()
        limit = None
        if self.peek().is_kw("ORDER"):
            self.next()
            self.expect_kw("BY")
            order_by = tuple(self.parse_order_items())
        if self.accept_kw("LIMIT"):
            limit = self.parse_expr()
            if self.accept_kw("OFFSET"):
                self.parse_expr()
        return order_by, limit

    def parse_order_items(self):
        items = []
        while True:
            start = self.peek().pos
            expr = self.parse_expr()
            desc = False
            if self.accept_kw("DESC"):
                desc = True
            else:
                self.accept_kw("ASC")
            if self.accept_kw("NULLS"):
                if not self.accept_kw("FIRST"):
                    self.expect_kw("LAST")
            items.append(A.OrderItem(expr, desc, span=self.span_from(start)))
            if not self.accept_op(","):
                return items

    def parse_select(self) -> A.Select:
        start = self.expect_kw("SELECT").pos
        distinct = bool(self.accept_kw("DISTINCT"))
        self.accept_kw("ALL")
        if self.peek().is_kw("AS") and self.peek(1).kind in ("ident", "keyword"):
            self.next()
            self.next()  # AS STRUCT / AS VALUE
        items = []
        while True:
            items.append(self.parse_select_item())
            if not self.accept_op(","):
                break
        from_ = None
        if self.accept_kw("FROM"):
            from_ = self.parse_from()
        where = self.parse_expr() if self.accept_kw("WHERE") else None
        group_by = ()
        if self.peek().is_kw("GROUP"):
            self.next()
            self.expect_kw("BY")
            if self.peek().kind == "ident" and self.peek().value.upper() in ("ROLLUP", "CUBE"):
                self.next()
            group_by = tuple(self.parse_expr_list())
        having = self.parse_expr() if self.accept_kw("HAVING") else None
        if self.accept_kw("QUALIFY"):
            qstart = self.peek().pos
            inner = self.parse_expr()
            having = A.make_and([having, A.Opaque(self.text[qstart : self.last_end], (inner,))])
        if self.accept_kw("WINDOW"):
            while True:
                self.expect_ident("window name")
                self.expect_kw("AS")
                self.skip_balanced()
                if not self.accept_op(","):
                    break
        order_by, limit = self.parse_order_limit()
        return A.Select(tuple(items), from_, where, group_by, having, order_by, limit, distinct, span=self.span_from(start))

    def parse_expr_list(self):
        items = [self.parse_expr()]
        while self.accept_op(","):
            items.append(self.parse_expr())
        return items

    def parse_select_item(self) -> A.SelectItem:
        start = self.peek().pos
        if self.peek().is_op("*"):
            self.next()
            expr = A.Star(span=self.span_from(start))
            self._skip_star_modifiers()
            return A.SelectItem(expr, None, span=self.span_from(start))
        expr = self.parse_expr()
        if isinstance(expr, A.Star):
            self._skip_star_modifiers()
            return A.SelectItem(expr, None, span=self.span_from(start))
        alias = self.parse_alias()
        return A.SelectItem(expr, alias, span=self.span_from(start))

    def _skip_star_modifiers(self):
        while self.peek().is_kw("EXCEPT", "REPLACE") and self.peek(1).is_op("("):
            self.next()
            self.skip_balanced()

    def parse_alias(self) -> str | None:
        if self.accept_kw("AS"):
            return self.expect_ident("alias").value
        tok = self.peek()
        if tok.kind == "ident":
            self.next()
            return tok.value
        return None

    # -- FROM ---------------------------------------------------------------

    def parse_from(self):
        start = self.peek().pos
        left = self.parse_from_item()
        while True:
            tok = self.peek()
            if tok.is_op(","):
                self.next()
                right = self.parse_from_item()
                left = A.Join("COMMA", left, right, span=self.span_from(start))
                continue
            if not tok.is_kw(*_JOIN_STARTERS):
                return left
            kind = "INNER"
            if tok.is_kw("INNER"):
                self.next()
            elif tok.is_kw("LEFT", "RIGHT", "FULL"):
                kind = self.next().value
                self.accept_kw("OUTER")
            elif tok.is_kw("CROSS"):
                self.next()
                kind = "CROSS"
            self.expect_kw("JOIN")
            right = self.parse_from_item()
            on = None
            using = ()
            if self.accept_kw("ON"):
                on = self.parse_expr()
            elif self.accept_kw("USING"):
                self.expect_op("(")
                cols = [self.expect_ident("column").value]
                while self.accept_op(","):
                    cols.append(self.expect_ident("column").value)
                self.expect_op(")")
                using = tuple(cols)
            left = A.Join(kind, left, right, on, using, span=self.span_from(start))

    def parse_from_item(self):
        start = self.peek().pos
        tok = self.peek()
        if tok.is_op("("):
            if self.peek(1).is_kw("SELECT", "WITH") or self.peek(1).is_op("("):
                self.next()
                if self.peek().is_kw("SELECT", "WITH") or self._paren_query_ahead():
                    query = self.parse_query()
                    self.expect_op(")")
                    alias = self.parse_alias()
                    return A.SubqueryRef(query, alias, span=self.span_from(start))
                inner = self.parse_from()
                self.expect_op(")")
                return inner
            self.next()
            inner = self.parse_from()
            self.expect_op(")")
            return inner
        if tok.is_kw("UNNEST"):
            self.next()
            self.expect_op("(")
            expr = self.parse_expr()
            self.expect_op(")")
            alias = self.parse_alias()
            if self.peek().is_kw("WITH") and self.peek(1).is_kw("OFFSET"):
                self.next()
                self.next()
                self.parse_alias()
            return A.UnnestRef(expr, alias, span=self.span_from(start))
        name = self.parse_table_name()
        alias = self.parse_alias()
        return A.TableRef(name, alias, span=self.span_from(start))

    def _paren_query_ahead(self) -> bool:
        i = self.pos
        while self.tokens[i].is_op("("):
            i += 1
        return self.tokens[i].is_kw("SELECT", "WITH")

    def parse_table_name(self) -> str:
        tok = self.next()
        if tok.kind not in ("ident",) and not (tok.kind == "keyword" and tok.value not in _CLAUSE_END):
            self.error("expected a table name", tok)
        parts = [tok.value]
        while self.peek().is_op(".") and self.peek(1).kind in ("ident", "keyword"):
            self.next()
            parts.append(self.next().value)
        return ".".join(parts)

    # -- expressions --------------------------------------------------------

    def parse_expr(self, min_bp: int = 0):
        start = self.peek().pos
        left = self.parse_prefix()
        while True:
            tok = self.peek()
            negated = False
            lookahead = tok
            if tok.is_kw("NOT") and self.peek(1).is_kw("BETWEEN", "LIKE", "IN"):
                lookahead = self.peek(1)
                negated = True
            if lookahead.is_kw("OR"):
                if BP_OR < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_OR + 1)
                left = A.make_or([left, right])
                left = A.Or(left.items, span=self.span_from(start))
            elif lookahead.is_kw("AND"):
                if BP_AND < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_AND + 1)
                merged = A.make_and([left, right])
                left = A.And(merged.items, span=self.span_from(start))
            elif lookahead.kind == "op" and lookahead.value in _COMPARE:
                if BP_CMP < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_CMP + 1)
                left = A.Compare(_COMPARE[lookahead.value], left, right, span=self.span_from(start))
            elif lookahead.is_kw("IS"):
                if BP_CMP < min_bp:
                    break
                self.next()
                neg = bool(self.accept_kw("NOT"))
                if self.accept_kw("NULL"):
                    left = A.IsNull(left, neg, span=self.span_from(start))
                elif self.accept_kw("TRUE"):
                    left = A.IsBool(left, True, neg, span=self.span_from(start))
                elif self.accept_kw("FALSE"):
                    left = A.IsBool(left, False, neg, span=self.span_from(start))
                else:
                    self.error("expected NULL, TRUE or FALSE after IS")
            elif lookahead.is_kw("BETWEEN"):
                if BP_CMP < min_bp:
                    break
                if negated:
                    self.next()
                self.next()
                lo = self.parse_expr(BP_BIT)
                self.expect_kw("AND")
                hi = self.parse_expr(BP_BIT)
                left = A.Between(left, lo, hi, negated, span=self.span_from(start))
            elif lookahead.is_kw("LIKE"):
                if BP_CMP < min_bp:
                    break
                if negated:
                    self.next()
                self.next()
                pattern = self.parse_expr(BP_CMP + 1)
                left = A.Like(left, pattern, negated, span=self.span_from(start))
            elif lookahead.is_kw("IN"):
                if BP_CMP < min_bp:
                    break
                if negated:
                    self.next()
                self.next()
                if self.peek().is_kw("UNNEST"):
                    self.next()
                    self.skip_balanced()
                    left = A.Opaque(self.text[start : self.last_end], (left,), span=self.span_from(start))
                    continue
                self.expect_op("(")
                if self.peek().is_kw("SELECT", "WITH"):
                    query = self.parse_query()
                    self.expect_op(")")
                    left = A.InSubquery(left, query, negated, span=self.span_from(start))
                else:
                    items = tuple(self.parse_expr_list()) if not self.peek().is_op(")") else ()
                    self.expect_op(")")
                    left = A.InList(left, items, negated, span=self.span_from(start))
            elif tok.kind == "op" and tok.value in ("|", "^", "&", "<<", ">>"):
                if BP_BIT < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_BIT + 1)
                left = A.BinaryOp(tok.value, left, right, span=self.span_from(start))
            elif tok.kind == "op" and tok.value in ("+", "-", "||"):
                if BP_ADD < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_ADD + 1)
                left = A.BinaryOp(tok.value, left, right, span=self.span_from(start))
            elif tok.kind == "op" and tok.value in ("*", "/", "%"):
                if BP_MUL < min_bp:
                    break
                self.next()
                right = self.parse_expr(BP_MUL + 1)
                left = A.BinaryOp(tok.value, left, right, span=self.span_from(start))
            elif tok.is_op("["):
                self.next()
                index = self.parse_expr()
                self.expect_op("]")
                left = A.FuncCall("SUBSCRIPT", (left, index), unevaluable=True, span=self.span_from(start))
            elif tok.is_op(".") and self.peek(1).kind in ("ident", "keyword"):
                self.next()
                name = self.next().value
                left = A.FuncCall("FIELD", (left, A.Literal(name)), unevaluable=True, span=self.span_from(start))
            else:
                break
        return left

    def parse_prefix(self):
        start = self.peek().pos
        tok = self.peek()
        if tok.is_kw("NOT"):
            self.next()
            operand = self.parse_expr(BP_NOT)
            return A.Not(operand, span=self.span_from(start))
        if tok.is_op("-", "+", "~"):
            self.next()
            operand = self.parse_expr(BP_UNARY)
            if tok.value == "-" and isinstance(operand, A.Literal) and isinstance(operand.value, (int, float)) and not isinstance(operand.value, bool):
                return A.Literal(-operand.value, span=self.span_from(start))
            if tok.value == "+":
                return operand
            return A.Unary(tok.value, operand, span=self.span_from(start))
        if tok.is_op("("):
            self.next()
            if self.peek().is_kw("SELECT", "WITH"):
                query = self.parse_query()
                self.expect_op(")")
                return A.SubqueryExpr(query, span=self.span_from(start))
            inner = self.parse_expr()
            if self.peek().is_op(","):
                items = [inner]
                while self.accept_op(","):
                    items.append(self.parse_expr())
                self.expect_op(")")
                return A.FuncCall("STRUCT", tuple(items), unevaluable=True, span=self.span_from(start))
            self.expect_op(")")
            return inner
        if tok.is_op("*"):
            self.next()
            return A.Star(span=self.span_from(start))
        if tok.kind == "number":
            self.next()
            text = tok.value
            value = int(text) if text.isdigit() else float(text)
            return A.Literal(value, span=self.span_from(start))
        if tok.kind == "string":
            self.next()
            return A.Literal(tok.value, span=self.span_from(start))
        if tok.kind == "bytes":
            self.next()
            return A.Literal(tok.value.encode("latin-1", errors="replace"), span=self.span_from(start))
        if tok.kind == "param":
            self.next()
            return A.Param(tok.value, span=self.span_from(start))
        if tok.is_kw("TRUE", "FALSE"):
            self.next()
            return A.Literal(tok.value == "TRUE", span=self.span_from(start))
        if tok.is_kw("NULL"):
            self.next()
            return A.Literal(None, span=self.span_from(start))
        if tok.is_kw("CASE"):
            return self.parse_case()
        if tok.is_kw("CAST", "SAFE_CAST"):
            self.next()
            self.expect_op("(")
            expr = self.parse_expr()
            self.expect_kw("AS")
            type_name = self.parse_type()
            self.expect_op(")")
            return A.Cast(expr, type_name.upper(), tok.value == "SAFE_CAST", span=self.span_from(start))
        if tok.is_kw("EXTRACT"):
            self.next()
            self.expect_op("(")
            part = self.next().value.upper()
            self.expect_kw("FROM")
            expr = self.parse_expr()
            if self.accept_kw("AT"):
                self.parse_expr()
            self.expect_op(")")
            return A.FuncCall("EXTRACT", (A.DatePart(part), expr), unevaluable=True, span=self.span_from(start))
        if tok.is_kw("EXISTS"):
            self.next()
            self.expect_op("(")
            query = self.parse_query()
            self.expect_op(")")
            return A.SubqueryExpr(query, exists=True, span=self.span_from(start))
        if tok.is_kw("INTERVAL"):
            self.next()
            inner = self.parse_expr(BP_UNARY)
            part = self.next().value
            if self.peek().kind == "ident" and self.peek().value.upper() == "TO":
                self.next()
                self.next()
            return A.Opaque(self.text[start : self.last_end], (inner, A.DatePart(part.upper())), span=self.span_from(start))
        if tok.is_kw("ARRAY"):
            self.next()
            if self.peek().is_op("<"):
                self.pos -= 1
                self.parse_type()
            if self.peek().is_op("("):
                self.next()
                query = self.parse_query()
                self.expect_op(")")
                return A.FuncCall("ARRAY", (A.SubqueryExpr(query),), unevaluable=True, span=self.span_from(start))
            return self.parse_array_literal(start)
        if tok.is_op("["):
            return self.parse_array_literal(start)
        if tok.is_kw("STRUCT"):
            self.next()
            if self.peek().is_op("<"):
                self.pos -= 1
                self.parse_type()
            self.expect_op("(")
            items = []
            if not self.peek().is_op(")"):
                while True:
                    item = self.parse_expr()
                    if self.accept_kw("AS"):
                        self.expect_ident("field name")
                    items.append(item)
                    if not self.accept_op(","):
                        break
            self.expect_op(")")
            return A.FuncCall("STRUCT", tuple(items), unevaluable=True, span=self.span_from(start))
        if tok.kind == "ident" and tok.value.upper() in _TYPED_LITERALS and self.peek(1).kind == "string":
            self.next()
            lit = self.next().value
            kind = tok.value.upper()
            try:
                if kind == "DATE":
                    value = parse_date(lit)
                elif kind == "TIMESTAMP":
                    value = parse_timestamp(lit)
                else:
                    value = lit
            except ValueError:
                self.error(f"invalid {kind} literal {lit!r}", tok)
            return A.Literal(value, span=self.span_from(start))
        if tok.kind == "ident" or tok.is_kw("IF", "LEFT", "RIGHT", "REPLACE") or (
            tok.kind == "keyword" and self.peek(1).is_op("(") and tok.value not in ("SELECT",)
        ):
            return self.parse_name_or_call()
        self.error("expected an expression")

    def parse_array_literal(self, start: int):
        self.expect_op("[")
        items = []
        if not self.peek().is_op("]"):
            items = self.parse_expr_list()
        self.expect_op("]")
        return A.FuncCall("ARRAY", tuple(items), unevaluable=True, span=self.span_from(start))

    def parse_case(self) -> A.Case:
        start = self.expect_kw("CASE").pos
        operand = None
        if not self.peek().is_kw("WHEN"):
            operand = self.parse_expr()
        whens = []
        while self.accept_kw("WHEN"):
            cond = self.parse_expr()
            self.expect_kw("THEN")
            result = self.parse_expr()
            whens.append((cond, result))
        if not whens:
            self.error("CASE needs at least one WHEN")
        else_ = self.parse_expr() if self.accept_kw("ELSE") else None
        self.expect_kw("END")
        return A.Case(operand, tuple(whens), else_, span=self.span_from(start))

    def parse_name_or_call(self):
        start = self.peek().pos
        first = self.next()
        parts = first.value.split(".") if first.quoted else [first.value]
        while self.peek().is_op(".") and (self.peek(1).kind in ("ident", "keyword") or self.peek(1).is_op("*")):
            if self.peek(1).is_op("*"):
                self.next()
                self.next()
                return A.Star(tuple(parts), span=self.span_from(start))
            self.next()
            nxt = self.next()
            parts.extend(nxt.value.split(".") if nxt.quoted else [nxt.value])
        if self.peek().is_op("("):
            return self.parse_call(".".join(parts).upper(), start)
        return A.ColumnRef(tuple(parts), span=self.span_from(start))

    def parse_call(self, name: str, start: int):
        self.expect_op("(")
        distinct = bool(self.accept_kw("DISTINCT"))
        args = []
        if not self.peek().is_op(")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept_op(","):
                    break
        # aggregate modifiers
        while not self.peek().is_op(")"):
            tok = self.peek()
            if tok.kind == "ident" and tok.value.upper() in ("IGNORE", "RESPECT"):
                self.next()
                self.expect_kw("NULLS")
            elif tok.is_kw("ORDER"):
                self.next()
                self.expect_kw("BY")
                self.parse_order_items()
            elif tok.is_kw("LIMIT"):
                self.next()
                self.parse_expr()
            elif tok.is_kw("AS") and name in ("CAST", "SAFE_CAST"):
                self.next()
                self.parse_type()
            else:
                self.error(f"unexpected token in call to {name}")
        self.expect_op(")")
        if name in _PART_FUNCTIONS:
            args = [self._as_date_part(a) for a in args]
        base = name.split(".")[-1] if name.startswith("SAFE.") else name
        node = A.FuncCall(
            name,
            tuple(args),
            distinct,
            unevaluable=base not in EVALUABLE_FUNCTIONS,
            aggregate=base in AGGREGATES,
            span=self.span_from(start),
        )
        if self.peek().is_kw("OVER"):
            self.next()
            if self.peek().is_op("("):
                self.skip_balanced()
            else:
                self.expect_ident("window name")
            return A.Opaque(self.text[start : self.last_end], (node,), span=self.span_from(start))
        return node

    @staticmethod
    def _as_date_part(arg):
        if isinstance(arg, A.ColumnRef) and len(arg.parts) == 1 and arg.parts[0].upper() in DATE_PARTS:
            return A.DatePart(arg.parts[0].upper(), span=arg.span)
        if isinstance(arg, A.FuncCall) and arg.name in DATE_PARTS and len(arg.args) == 1:
            return A.DatePart(arg.name, span=arg.span)
        return arg


def parse_sql(text: str):
    """Parse one statement into an AST (a query node or :class:`CreateFunction`)."""
    return Parser(text).parse_statement()


def parse_expression(text: str):
    """Parse a standalone scalar/predicate expression."""
    parser = Parser(text)
    expr = parser.parse_expr()
    if parser.peek().kind != "eof":
        parser.error("unexpected trailing input")
    return expr


def flagged_constructs(node) -> list[str]:
    """Source text of every opaque or unevaluable construct in the tree."""
    out = []
    for n in A.walk(node):
        if isinstance(n, A.Opaque):
            out.append(n.text)
        elif isinstance(n, A.FuncCall) and n.unevaluable and not n.aggregate and n.name not in ("STRUCT", "ARRAY", "FIELD", "SUBSCRIPT"):
            out.append(n.name)
    return out
