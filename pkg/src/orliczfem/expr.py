"""Tiny arithmetic expression language for coefficient fields and custom integrands.

Grammar (whitespace insignificant)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right associative, binds tighter than unary minus on the left
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Functions: ``abs``, ``ln``, ``exp``, ``min``, ``max``, ``sqrt``. Constants: ``pi``.
Names are resolved against the variable set given at compile time, typically
``x1..xd`` for spatial coordinates and ``xi1..xid`` / ``s`` for gradient arguments.

Compiled expressions are vectorized numpy closures, so ``-x1^2`` evaluates as
``-(x1^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = ["ExpressionError", "Expression", "compile_expression"]


class ExpressionError(ValueError):
    """Parse or name-resolution failure with a 1-based line/column position."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)

_FUNCS: dict[str, tuple[int, Callable]] = {
    "abs": (1, np.abs),
    "ln": (1, np.log),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "min": (-1, lambda *a: _reduce(np.minimum, a)),
    "max": (-1, lambda *a: _reduce(np.maximum, a)),
}

_CONSTS = {"pi": math.pi}


def _reduce(fn, args):
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            stripped = len(src[pos:]) - len(src[pos:].lstrip())
            raise _located(src, pos + stripped, f"unexpected character {src[pos + stripped]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


def _located(src: str, pos: int, message: str) -> ExpressionError:
    line = src.count("\n", 0, pos) + 1
    col = pos - (src.rfind("\n", 0, pos) + 1) + 1
    return ExpressionError(message, line, col)


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.src = src
        self.names = set(names)
        self.toks = _tokenize(src)
        self.i = 0
        self.used: set[str] = set()

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise _located(self.src, tok.pos, f"expected {text!r}, found {found}")
        return tok

    def parse(self):
        if self.peek().kind == "end":
            raise _located(self.src, 0, "empty expression")
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise _located(self.src, tok.pos, f"unexpected token {tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self):
        tok = self.peek()
        if tok.text == "-":
            self.take()
            inner = self.unary()
            return lambda env: -inner(env)
        if tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            exponent = self.unary()
            return _binary("^", base, exponent)
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            value = float(tok.text)
            return lambda env: value
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            if self.peek().text == "(":
                return self.call(tok)
            if tok.text in self.names:
                self.used.add(tok.text)
                name = tok.text
                return lambda env: env[name]
            if tok.text in _CONSTS:
                value = _CONSTS[tok.text]
                return lambda env: value
            raise _located(self.src, tok.pos, f"unknown name {tok.text!r}")
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise _located(self.src, tok.pos, f"unexpected {found}")

    def call(self, name_tok: _Tok):
        if name_tok.text not in _FUNCS:
            raise _located(self.src, name_tok.pos, f"unknown function {name_tok.text!r}")
        arity, fn = _FUNCS[name_tok.text]
        self.expect("(")
        args = [self.expr()]
        while self.peek().text == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if arity > 0 and len(args) != arity:
            raise _located(self.src, name_tok.pos, f"{name_tok.text} takes {arity} argument(s), got {len(args)}")
        if arity < 0 and len(args) < 2:
            raise _located(self.src, name_tok.pos, f"{name_tok.text} needs at least 2 arguments")
        return lambda env: fn(*(a(env) for a in args))


def _binary(op: str, lhs, rhs):
    if op == "+":
        return lambda env: lhs(env) + rhs(env)
    if op == "-":
        return lambda env: lhs(env) - rhs(env)
    if op == "*":
        return lambda env: lhs(env) * rhs(env)
    if op == "/":
        return lambda env: lhs(env) / rhs(env)
    return lambda env: np.power(lhs(env), rhs(env))


@dataclass(frozen=True)
class Expression:
    """A compiled expression.

    Attributes:
        source: Original text.
        names: Variable names the expression may reference.
        used: Subset of ``names`` actually referenced.
    """

    source: str
    names: tuple[str, ...]
    used: frozenset[str]
    _fn: Callable

    def __call__(self, env: Mapping[str, np.ndarray | float]) -> np.ndarray:
        missing = self.used.difference(env)
        if missing:
            raise KeyError(f"missing variables: {sorted(missing)}")
        shape = np.broadcast_shapes(*(np.shape(env[k]) for k in self.used)) if self.used else ()
        with np.errstate(all="ignore"):
            out = self._fn(env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else np.asarray(out, dtype=float)

    @property
    def is_constant(self) -> bool:
        return not self.used


def compile_expression(src: str, names: Sequence[str], *, line_offset: int = 0, column_offset: int = 0) -> Expression:
    """Parse ``src`` into a vectorized callable over the given variable names.

    Args:
        src: Expression text.
        names: Allowed variable names.
        line_offset: Added to the reported line of a parse error, so errors can
            point into the enclosing configuration file.
        column_offset: Added to the column when the error is on the first line.

    Raises:
        ExpressionError: on malformed input or unknown names.
    """
    try:
        parser = _Parser(src, names)
        fn = parser.parse()
    except ExpressionError as err:
        col = err.column + (column_offset if err.line == 1 else 0)
        raise ExpressionError(err.message, err.line + line_offset, col) from None
    return Expression(src, tuple(names), frozenset(parser.used), fn)
