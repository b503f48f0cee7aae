"""Tokenizer for the GoogleSQL subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import SqlSyntaxError

KEYWORDS = {
    "ALL", "AND", "ARRAY", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "CREATE", "CROSS", "DESC",
    "DISTINCT", "ELSE", "END", "EXCEPT", "EXISTS", "FALSE", "FROM", "FULL", "FUNCTION", "GROUP",
    "HAVING", "IF", "IN", "INNER", "INTERSECT", "INTERVAL", "IS", "JOIN", "LEFT", "LIKE", "LIMIT",
    "NOT", "NULL", "OFFSET", "ON", "OR", "ORDER", "OUTER", "OVER", "PUBLIC", "REPLACE", "RETURNS",
    "RIGHT", "SAFE_CAST", "SELECT", "STRUCT", "TEMP", "TEMPORARY", "THEN", "TRUE", "UNION", "UNNEST",
    "USING", "WHEN", "WHERE", "WITH", "EXTRACT", "QUALIFY", "WINDOW", "NULLS", "FIRST", "LAST",
}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, number, string, bytes, op, param, eof
    value: str
    pos: int
    line: int
    col: int
    end: int = 0
    quoted: bool = False

    def is_kw(self, *names: str) -> bool:
        return self.kind == "keyword" and self.value in names

    def is_op(self, *ops: str) -> bool:
        return self.kind == "op" and self.value in ops


_STRING_START = re.compile(r"""([rRbB]{0,2})('''|\"\"\"|'|")""")
_NUMBER = re.compile(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPS = ["<>", "!=", "<=", ">=", "||", "<<", ">>", "=", "<", ">", "+", "-", "*", "/", "%", ",", ".", "(", ")", "[", "]", ";", "&", "|", "^", "~"]

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"', "0": "\0", "`": "`", "?": "?"}


def _unescape(body: str, raw: bool) -> str:
    if raw or "\\" not in body:
        return body
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in _ESCAPES:
                out.append(_ESCAPES[nxt])
                i += 2
                continue
            if nxt in "xX" and i + 3 < len(body) + 1:
                out.append(chr(int(body[i + 2 : i + 4], 16)))
                i += 4
                continue
            out.append(nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)

    def err(message: str, at: int):
        raise SqlSyntaxError(message, at, line, at - line_start + 1)

    while pos < n:
        ch = text[pos]
        if ch == "\n":
            pos += 1
            line += 1
            line_start = pos
            continue
        if ch in " \t\r\f":
            pos += 1
            continue
        if text.startswith("--", pos) or ch == "#":
            end = text.find("\n", pos)
            pos = n if end < 0 else end
            continue
        if text.startswith("/*", pos):
            end = text.find("*/", pos + 2)
            if end < 0:
                err("unterminated block comment", pos)
            chunk = text[pos : end + 2]
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rindex("\n") + 1
            pos = end + 2
            continue
        col = pos - line_start + 1
        m = _STRING_START.match(text, pos)
        if m and (m.group(1) == "" or text[pos].lower() in "rb"):
            prefix, quote = m.group(1).lower(), m.group(2)
            start = m.end()
            i = start
            while True:
                if i >= n:
                    err("unterminated string literal", pos)
                if text[i] == "\\" and "r" not in prefix:
                    i += 2
                    continue
                if text.startswith(quote, i):
                    break
                if text[i] == "\n" and len(quote) == 1:
                    err("unterminated string literal", pos)
                i += 1
            body = text[start:i]
            end = i + len(quote)
            kind = "bytes" if "b" in prefix else "string"
            tokens.append(Token(kind, _unescape(body, "r" in prefix), pos, line, col, end))
            if "\n" in text[pos:end]:
                line += text[pos:end].count("\n")
                line_start = pos + text[pos:end].rindex("\n") + 1
            pos = end
            continue
        if ch == "`":
            end = text.find("`", pos + 1)
            if end < 0:
                err("unterminated quoted identifier", pos)
            tokens.append(Token("ident", text[pos + 1 : end], pos, line, col, end + 1, quoted=True))
            pos = end + 1
            continue
        if ch.isdigit() or (ch == "." and pos + 1 < n and text[pos + 1].isdigit()):
            m = _NUMBER.match(text, pos)
            tokens.append(Token("number", m.group(), pos, line, col, m.end()))
            pos = m.end()
            continue
        if ch == "@":
            m = _IDENT.match(text, pos + 1 + (1 if text.startswith("@@", pos) else 0))
            if not m:
                err("bad query parameter", pos)
            tokens.append(Token("param", text[pos : m.end()], pos, line, col, m.end()))
            pos = m.end()
            continue
        m = _IDENT.match(text, pos)
        if m:
            word = m.group()
            if word.upper() in KEYWORDS:
                tokens.append(Token("keyword", word.upper(), pos, line, col, m.end()))
            else:
                tokens.append(Token("ident", word, pos, line, col, m.end()))
            pos = m.end()
            continue
        for op in _OPS:
            if text.startswith(op, pos):
                tokens.append(Token("op", op, pos, line, col, pos + len(op)))
                pos += len(op)
                break
        else:
            err(f"unexpected character {ch!r}", pos)
    tokens.append(Token("eof", "", n, line, n - line_start + 1, n))
    return tokens
