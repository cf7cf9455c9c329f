"""Expression language for system definitions.

Grammar (whitespace insignificant)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" integer-exponent)?
    atom    := number | identifier | func "(" expr ")" | "(" expr ")"

Identifiers are ``q1``, ``q2`` and ``u``; functions are ``sin cos tan exp log
sqrt atan``.  The exponent of ``^`` must be a constant integer, optionally
negated or parenthesized.  Trees evaluate on floats or on :class:`Taylor`
series, the latter giving exact derivatives.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

from .errors import ExpressionSyntaxError, UnknownIdentifier
from .taylor import Taylor

VARIABLES = ("q1", "q2", "u")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {src[pos]!r}", src, pos)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, variables: tuple[str, ...]):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.variables = variables

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ExpressionSyntaxError(f"expected {text!r}, found {found!r}", self.src, tok.pos)
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {tok.text!r}", self.src, tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            base = Pow(base, self.integer_exponent())
        return base

    def integer_exponent(self) -> int:
        tok = self.peek()
        if tok.text == "(":
            self.take()
            k = self.integer_exponent()
            self.expect(")")
            return k
        if tok.text == "-":
            self.take()
            return -self.integer_exponent()
        tok = self.take()
        if tok.kind != "num" or not re.fullmatch(r"\d+(\.0*)?", tok.text):
            raise ExpressionSyntaxError("exponent of '^' must be a constant integer", self.src, tok.pos)
        return int(float(tok.text))

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in self.variables:
                return Var(tok.text)
            raise UnknownIdentifier(f"unknown identifier {tok.text!r}", self.src, tok.pos)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected {found!r}", self.src, tok.pos)


def parse_expression(src: str, variables: tuple[str, ...] = VARIABLES) -> Node:
    """Parse ``src`` into an expression tree."""
    return _Parser(src, variables).parse()


_FLOAT_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "atan": math.atan,
}


def evaluate(node: Node, env: Mapping[str, object]):
    """Evaluate ``node`` with variables bound in ``env`` (floats or Taylor series)."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, BinOp):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        base = evaluate(node.base, env)
        if isinstance(base, Taylor):
            return base**node.exponent
        return float(base) ** node.exponent
    if isinstance(node, Call):
        arg = evaluate(node.arg, env)
        if isinstance(arg, Taylor):
            return getattr(arg, node.func)()
        return _FLOAT_FUNCS[node.func](arg)
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    if isinstance(node, Pow):
        return free_variables(node.base)
    return free_variables(node.left) | free_variables(node.right)


def emit(node: Node) -> str:
    """Canonical, fully parenthesized text; ``parse_expression(emit(n)) == n``."""
    if isinstance(node, Num):
        if node.value < 0 or math.copysign(1.0, node.value) < 0:
            return f"(-{-node.value!r})"
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{emit(node.arg)})"
    if isinstance(node, BinOp):
        return f"({emit(node.left)} {node.op} {emit(node.right)})"
    if isinstance(node, Pow):
        return f"({emit(node.base)}^({node.exponent}))"
    if isinstance(node, Call):
        return f"{node.func}({emit(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")
