"""Closed-form profile expressions with exact first and second derivatives.

Profiles are small expression trees in the single variable ``rho``.  They are
evaluated with second-order jets (value, first and second derivative), so the
derivatives handed to the criteria and to the characteristic solver carry no
finite-difference error.  Jets also work over numpy arrays, elementwise.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Any

import numpy as np


class Jet:
    """Truncated Taylor jet ``(v, d1, d2)`` with chain-rule arithmetic."""

    __slots__ = ("v", "d1", "d2")

    def __init__(self, v, d1=0.0, d2=0.0):
        self.v = v
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def lift(cls, x) -> "Jet":
        return x if isinstance(x, Jet) else cls(x, 0.0, 0.0)

    def __repr__(self) -> str:
        return f"Jet({self.v!r}, {self.d1!r}, {self.d2!r})"

    def __add__(self, other):
        o = Jet.lift(other)
        return Jet(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-Jet.lift(other))

    def __rsub__(self, other):
        return Jet.lift(other) - self

    def __mul__(self, other):
        o = Jet.lift(other)
        return Jet(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.v
        return Jet(inv, -self.d1 * inv**2, (2.0 * self.d1**2 * inv - self.d2) * inv**2)

    def __truediv__(self, other):
        return self * Jet.lift(other).reciprocal()

    def __rtruediv__(self, other):
        return Jet.lift(other) * self.reciprocal()

    def __pow__(self, n):
        if isinstance(n, Jet):
            raise TypeError("jet exponents are not supported")
        if n == 0:
            return Jet(np.ones_like(self.v) if isinstance(self.v, np.ndarray) else 1.0)
        if isinstance(n, int) and n > 0:
            f = self.v ** n
            f1 = n * self.v ** (n - 1)
            f2 = n * (n - 1) * self.v ** (n - 2) if n > 1 else 0.0
            return self._compose(f, f1, f2)
        return self._compose(self.v**n, n * self.v ** (n - 1), n * (n - 1) * self.v ** (n - 2))

    def _compose(self, f, f1, f2) -> "Jet":
        # outer function value and its derivatives at self.v
        return Jet(f, f1 * self.d1, f2 * self.d1**2 + f1 * self.d2)

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.v)
        return self._compose(s, 0.5 / s, -0.25 / (s * self.v))

    def sin(self) -> "Jet":
        s, c = np.sin(self.v), np.cos(self.v)
        return self._compose(s, c, -s)

    def cos(self) -> "Jet":
        s, c = np.sin(self.v), np.cos(self.v)
        return self._compose(c, -s, -c)


def jsqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


# --- expression trees -------------------------------------------------------


class Expr:
    """Base class of profile expressions in ``rho``."""

    precedence = 100

    def jet(self, rho) -> Jet:
        raise NotImplementedError

    def __call__(self, rho):
        return self.jet(rho).v

    def d1(self, rho):
        return self.jet(rho).d1

    def d2(self, rho):
        return self.jet(rho).d2

    def values(self, rho):
        """Return ``(f, f', f'')`` broadcast to the shape of ``rho``."""
        j = self.jet(Jet(np.asarray(rho, dtype=float), 1.0, 0.0))
        shape = np.shape(rho)
        return tuple(np.broadcast_to(np.asarray(c, dtype=float), shape).copy() for c in (j.v, j.d1, j.d2))

    # operator sugar
    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Add(self, Neg(as_expr(other)))

    def __rsub__(self, other):
        return Add(as_expr(other), Neg(self))

    def __mul__(self, other):
        return Mul(as_expr(other), self) if isinstance(other, (int, float)) else Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n):
        return Pow(self, float(n) if not isinstance(n, int) else n)

    def __repr__(self) -> str:
        return f"Expr({self})"


def _jet_of(rho) -> Jet:
    return rho if isinstance(rho, Jet) else Jet(rho, 1.0, 0.0)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True, repr=False)
class Const(Expr):
    c: float

    def jet(self, rho):
        j = _jet_of(rho)
        return Jet(self.c + 0.0 * j.v, 0.0 * j.v, 0.0 * j.v)

    def __str__(self):
        return _fmt(self.c)


@dataclass(frozen=True, repr=False)
class Rho(Expr):
    def jet(self, rho):
        return _jet_of(rho)

    def __str__(self):
        return "rho"


@dataclass(frozen=True, repr=False)
class Add(Expr):
    a: Expr
    b: Expr
    precedence = 10

    def jet(self, rho):
        return self.a.jet(rho) + self.b.jet(rho)

    def __str__(self):
        if isinstance(self.b, Neg):
            return f"{self.a} - {_wrap(self.b.a, 11)}"
        return f"{self.a} + {_wrap(self.b, 10)}"


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    a: Expr
    precedence = 30

    def jet(self, rho):
        return -self.a.jet(rho)

    def __str__(self):
        return f"-{_wrap(self.a, 30)}"


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    a: Expr
    b: Expr
    precedence = 20

    def jet(self, rho):
        return self.a.jet(rho) * self.b.jet(rho)

    def __str__(self):
        return f"{_wrap(self.a, 20)}*{_wrap(self.b, 21)}"


@dataclass(frozen=True, repr=False)
class Div(Expr):
    a: Expr
    b: Expr
    precedence = 20

    def jet(self, rho):
        return self.a.jet(rho) / self.b.jet(rho)

    def __str__(self):
        return f"{_wrap(self.a, 20)}/{_wrap(self.b, 21)}"


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    a: Expr
    n: Any
    precedence = 40

    def jet(self, rho):
        return self.a.jet(rho) ** self.n

    def __str__(self):
        return f"{_wrap(self.a, 41)}**{self.n!r}"


@dataclass(frozen=True, repr=False)
class Call(Expr):
    fn: str
    a: Expr

    def jet(self, rho):
        return getattr(self.a.jet(rho), self.fn)()

    def __str__(self):
        return f"{self.fn}({self.a})"


def _wrap(e: Expr, prec: int) -> str:
    s = str(e)
    return f"({s})" if e.precedence < prec else s


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    if isinstance(x, str):
        return parse_expr(x)
    raise TypeError(f"cannot convert {type(x).__name__} to a profile expression")


rho = Rho()


def sin(a) -> Expr:
    return Call("sin", as_expr(a))


def cos(a) -> Expr:
    return Call("cos", as_expr(a))


def sqrt(a) -> Expr:
    return Call("sqrt", as_expr(a))


def wave(amplitude: float, k: float, phase: float = 0.0, kind: str = "sin") -> Expr:
    """``amplitude * sin(k*rho + phase)`` (or ``cos``)."""
    arg = Const(k) * rho
    if phase:
        arg = arg + Const(phase)
    return Const(amplitude) * Call(kind, arg)


def polynomial(coeffs) -> Expr:
    """``sum(c_i * rho**i)``, lowest degree first."""
    out: Expr | None = None
    for i, c in enumerate(coeffs):
        if c == 0:
            continue
        term = Const(c) if i == 0 else (Const(c) * rho if i == 1 else Const(c) * Pow(rho, i))
        out = term if out is None else out + term
    return out if out is not None else Const(0.0)


_FUNCS = {"sin", "cos", "sqrt"}
_NAMES = {"pi": math.pi}


def parse_expr(text: str) -> Expr:
    """Parse an arithmetic expression in ``rho`` such as ``0.1*sin(2*rho + 0.3)``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid profile expression {text!r}: {exc.msg}") from None
    return _convert(tree.body, text)


def _convert(node, text: str) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id == "rho":
            return rho
        if node.id in _NAMES:
            return Const(_NAMES[node.id])
        raise ValueError(f"unknown name {node.id!r} in profile expression {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _convert(node.operand, text)
        return Neg(inner) if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp):
        a, b = _convert(node.left, text), _convert(node.right, text)
        if isinstance(node.op, ast.Add):
            return Add(a, b)
        if isinstance(node.op, ast.Sub):
            return Add(a, Neg(b))
        if isinstance(node.op, ast.Mult):
            return Mul(a, b)
        if isinstance(node.op, ast.Div):
            return Div(a, b)
        if isinstance(node.op, ast.Pow) and isinstance(b, Const):
            n = b.c
            return Pow(a, int(n) if float(n).is_integer() else n)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ValueError(f"{node.func.id}() takes one argument in {text!r}")
        return Call(node.func.id, _convert(node.args[0], text))
    raise ValueError(f"unsupported construct in profile expression {text!r}")
