"""Arithmetic expressions over (x1, x2) for coefficient data.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x1' | 'x2' | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := sin | cos | exp | abs

``^`` is right associative and binds tighter than unary minus on its left,
so ``-x1^2`` is ``-(x1^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "abs")
VARIABLES = ("x1", "x2")
CONSTANTS = {"pi": math.pi}


class ExpressionError(ValueError):
    """Raised for malformed expression text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


# ---------------------------------------------------------------- AST nodes


class Node:
    def eval(self, x1, x2):
        raise NotImplementedError

    def eval_d(self, x1, x2, var):
        """Value and derivative along ``var`` (forward-mode)."""
        raise NotImplementedError

    def depends_on(self, var: str) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Node):
    value: float

    def eval(self, x1, x2):
        return np.full(np.broadcast(x1, x2).shape, self.value)

    def eval_d(self, x1, x2, var):
        v = self.eval(x1, x2)
        return v, np.zeros_like(v)

    def depends_on(self, var):
        return False

    def __str__(self):
        if self.value == math.pi:
            return "pi"
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Node):
    name: str

    def eval(self, x1, x2):
        src = x1 if self.name == "x1" else x2
        return np.broadcast_to(np.asarray(src, dtype=float), np.broadcast(x1, x2).shape).copy()

    def eval_d(self, x1, x2, var):
        v = self.eval(x1, x2)
        return v, np.full_like(v, 1.0 if self.name == var else 0.0)

    def depends_on(self, var):
        return self.name == var

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def eval(self, x1, x2):
        return -self.arg.eval(x1, x2)

    def eval_d(self, x1, x2, var):
        v, dv = self.arg.eval_d(x1, x2, var)
        return -v, -dv

    def depends_on(self, var):
        return self.arg.depends_on(var)

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def eval(self, x1, x2):
        a = self.left.eval(x1, x2)
        b = self.right.eval(x1, x2)
        with np.errstate(all="ignore"):
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            if self.op == "/":
                return a / b
            return np.power(a, b)

    def eval_d(self, x1, x2, var):
        a, da = self.left.eval_d(x1, x2, var)
        b, db = self.right.eval_d(x1, x2, var)
        with np.errstate(all="ignore"):
            if self.op == "+":
                return a + b, da + db
            if self.op == "-":
                return a - b, da - db
            if self.op == "*":
                return a * b, da * b + a * db
            if self.op == "/":
                return a / b, (da * b - a * db) / (b * b)
            p = np.power(a, b)
            if not self.right.depends_on(var):
                # constant exponent: avoids log of negative bases
                d = np.where(da == 0.0, 0.0, b * np.power(a, b - 1.0) * da)
            else:
                d = p * (db * np.log(a) + b * da / a)
            return p, d

    def depends_on(self, var):
        return self.left.depends_on(var) or self.right.depends_on(var)

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def eval(self, x1, x2):
        v = self.arg.eval(x1, x2)
        with np.errstate(all="ignore"):
            return getattr(np, self.func)(v)

    def eval_d(self, x1, x2, var):
        v, dv = self.arg.eval_d(x1, x2, var)
        with np.errstate(all="ignore"):
            if self.func == "sin":
                return np.sin(v), np.cos(v) * dv
            if self.func == "cos":
                return np.cos(v), -np.sin(v) * dv
            if self.func == "exp":
                e = np.exp(v)
                return e, e * dv
            return np.abs(v), np.sign(v) * dv

    def depends_on(self, var):
        return self.arg.depends_on(var)

    def __str__(self):
        return f"{self.func}({self.arg})"


# ------------------------------------------------------------------ parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, found {what}", pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", pos, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExpressionError(f"unknown identifier {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {what}", pos, self.text)


class Expression:
    """Immutable parsed expression, evaluable on numpy arrays."""

    __slots__ = ("text", "root")

    def __init__(self, text: str, root: Node):
        self.text = text
        self.root = root

    def __call__(self, x1, x2=0.0):
        return self.root.eval(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))

    def gradient_component(self, x1, x2, var: str = "x1"):
        """Exact partial derivative along ``var`` by forward-mode differentiation."""
        _, d = self.root.eval_d(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), var)
        return d

    def depends_on(self, var: str) -> bool:
        return self.root.depends_on(var)

    def unparse(self) -> str:
        return str(self.root)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __str__(self):
        return self.text


def parse_expression(text: str) -> Expression:
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return Expression(text.strip(), _Parser(text).parse())


def constant(value: float) -> Expression:
    return Expression(repr(float(value)), Num(float(value)))
