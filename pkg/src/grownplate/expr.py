"""Small arithmetic language for defining fields in config files.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*`` and ``/``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | 'x' | 'y' | 'pi' | 'e' | FUNC '(' expr ')' | '(' expr ')'

Functions: sin, cos, exp, sqrt (radians). Evaluation is vectorised over numpy
arrays for ``x`` and ``y``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


class ExprSyntaxError(ValueError):
    def __init__(self, msg, text, pos):
        super().__init__(f"{msg} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


class ExprDomainError(ValueError):
    pass


FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
CONSTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


@dataclass(frozen=True)
class FieldExpr:
    text: str
    tree: object

    def __call__(self, x, y):
        return eval_expr(self, x, y)

    @property
    def variables(self) -> set:
        """Names of the coordinates the expression depends on."""
        out, stack = set(), [self.tree]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            elif isinstance(node, (Unary, Call)):
                stack.append(node.arg)
            elif isinstance(node, Binary):
                stack += [node.left, node.right]
        return out


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex)
        num, name, other = m.groups()
        if num is not None:
            tokens.append(("num", float(num), start))
        elif name is not None:
            tokens.append(("name", name, start))
        elif other is not None:
            if other not in "+-*/^()":
                raise ExprSyntaxError(f"unexpected character {other!r}", text, start)
            tokens.append(("op", other, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(msg, self.text, tok[2])

    def expect(self, op):
        tok = self.take()
        if tok[:2] != ("op", op):
            raise self.error(f"expected {op!r}", tok)

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            node = Binary(self.take()[1], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            node = Binary(self.take()[1], node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] in (("op", "-"), ("op", "+")):
            op = self.take()[1]
            return Unary(op, self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Num(val)
        if kind == "name":
            if val in ("x", "y"):
                return Var(val)
            if val in CONSTS:
                return Num(CONSTS[val])
            if val in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise self.error(f"unknown name {val!r}", tok)
        if tok[:2] == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected a number, variable or '('", tok)


def parse_expr(text: str) -> FieldExpr:
    return FieldExpr(text, _Parser(text).parse())


def _eval(node, x, y):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Unary):
        a = _eval(node.arg, x, y)
        return -a if node.op == "-" else a
    if isinstance(node, Call):
        a = np.asarray(_eval(node.arg, x, y), dtype=float)
        if node.func == "sqrt" and np.any(a < 0):
            raise ExprDomainError("sqrt of a negative number")
        return FUNCS[node.func](a)
    a = _eval(node.left, x, y)
    b = _eval(node.right, x, y)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero")
        return a / b
    a = np.asarray(a, dtype=float)
    if np.any((a < 0) & (np.asarray(b) != np.round(b))):
        raise ExprDomainError("negative base with non-integer exponent")
    with np.errstate(divide="raise", invalid="raise"):
        try:
            return np.power(a, b)
        except FloatingPointError as exc:
            raise ExprDomainError(str(exc)) from None


def eval_expr(e: FieldExpr | str, x, y):
    """Evaluate at scalar or array coordinates; raises ExprDomainError."""
    if isinstance(e, str):
        e = parse_expr(e)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = np.asarray(_eval(e.tree, x, y), dtype=float)
        except FloatingPointError as exc:
            raise ExprDomainError(f"{e.text!r}: {exc}") from None
    out = np.broadcast_to(out, np.broadcast(x, y).shape)
    if not np.all(np.isfinite(out)):
        raise ExprDomainError(f"{e.text!r} is not finite on the domain")
    return out if out.ndim else float(out)
