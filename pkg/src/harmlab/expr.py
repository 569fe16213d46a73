"""Small arithmetic expression language for coefficient fields.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | "y" | "pi" | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := sin | cos | exp | abs

Expressions evaluate elementwise on numpy arrays and can be differentiated
symbolically, which is how manufactured forcings are built from an exact
solution.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
VARS = ("x", "y")

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


class ExprError(ValueError):
    """Malformed expression; ``pos`` is the character offset of the problem."""

    def __init__(self, msg: str, pos: int | None = None):
        super().__init__(msg if pos is None else f"{msg} at position {pos}")
        self.pos = pos


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


@dataclass(frozen=True)
class _Log:
    # produced only when differentiating a variable exponent
    arg: object


def tokenize(text: str) -> list:
    """List of ``(kind, value, pos)``; kinds are ``num``, ``name`` and ``op``."""
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprError("unexpected character", pos)
        start = m.start(m.lastindex)
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num), start))
        elif name is not None:
            out.append(("name", name, start))
        elif op in "+-*/^()":
            out.append(("op", op, start))
        else:
            raise ExprError(f"unexpected character {op!r}", start)
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, op: str):
        t = self.take()
        if t[:2] != ("op", op):
            raise ExprError(f"expected {op!r}", t[2])

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            node = Bin(self.take()[1], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            node = Bin(self.take()[1], node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(val)
        if kind == "name":
            if val in VARS:
                return Var(val)
            if val == "pi":
                return Num(math.pi)
            if val in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExprError(f"unknown name {val!r}", pos)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ExprError("unexpected end of expression" if kind == "end" else f"unexpected {val!r}", pos)


def parse(text: str):
    """Parse ``text`` into an expression tree."""
    if not isinstance(text, str):
        raise ExprError(f"expression must be a string, got {type(text).__name__}")
    p = _Parser(text)
    node = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ExprError(f"trailing input {val!r}", pos)
    return node


def _const(n) -> float | None:
    return n.value if isinstance(n, Num) else None


def _add(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if ca is not None and cb is not None:
        return Num(ca + cb)
    return Bin("+", a, b)


def _sub(a, b):
    if _const(b) == 0:
        return a
    if _const(a) == 0:
        return _neg(b)
    return Bin("-", a, b)


def _mul(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0 or cb == 0:
        return Num(0.0)
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca is not None and cb is not None:
        return Num(ca * cb)
    return Bin("*", a, b)


def _div(a, b):
    if _const(a) == 0:
        return Num(0.0)
    if _const(b) == 1:
        return a
    return Bin("/", a, b)


def _neg(a):
    c = _const(a)
    return Num(-c) if c is not None else Neg(a)


def diff(node, var: str):
    """Symbolic derivative with respect to ``var``.

    ``abs`` differentiates to ``sign``-like ``a / abs(a)`` (undefined at 0).
    ``a ^ b`` with non-constant ``b`` uses ``a^b (b' ln a + b a'/a)``, valid
    for ``a > 0``.
    """
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return _neg(diff(node.arg, var))
    if isinstance(node, Call):
        a, da = node.arg, diff(node.arg, var)
        if node.fn == "sin":
            return _mul(Call("cos", a), da)
        if node.fn == "cos":
            return _neg(_mul(Call("sin", a), da))
        if node.fn == "exp":
            return _mul(node, da)
        return _mul(_div(a, Call("abs", a)), da)
    a, b = node.left, node.right
    da, db = diff(a, var), diff(b, var)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), Bin("^", b, Num(2.0)))
    cb = _const(b)
    if cb is not None:
        return _mul(_mul(Num(cb), Bin("^", a, Num(cb - 1.0))), da)
    return _mul(node, _add(_mul(db, _Log(a)), _div(_mul(b, da), a)))


class Expression:
    """Parsed expression with its source text.

    >>> e = Expression("1 + x^2")
    >>> float(e(2.0))
    5.0
    >>> float(e.derivative("x")(3.0))
    6.0
    """

    def __init__(self, source: str, tree=None):
        self.source = source
        self.tree = parse(source) if tree is None else tree

    def __call__(self, x=0.0, y=0.0) -> np.ndarray:
        return evaluate(self.tree, x, y)

    def derivative(self, var: str) -> "Expression":
        if var not in VARS:
            raise ExprError(f"cannot differentiate with respect to {var!r}")
        return Expression(f"d({self.source})/d{var}", diff(self.tree, var))

    def __repr__(self):
        return f"Expression({self.source!r})"


def evaluate(node, x=0.0, y=0.0) -> np.ndarray:
    """Evaluate elementwise; ``x`` and ``y`` broadcast against each other."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)

    def ev(n):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Var):
            return x if n.name == "x" else y
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, _Log):
            return np.log(ev(n.arg))
        if isinstance(n, Call):
            return FUNCS[n.fn](ev(n.arg))
        a, b = ev(n.left), ev(n.right)
        if n.op == "+":
            return a + b
        if n.op == "-":
            return a - b
        if n.op == "*":
            return a * b
        if n.op == "/":
            return a / b
        return np.power(a, b)

    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(ev(node), dtype=float), shape)
    return np.array(out)
