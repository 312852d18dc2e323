"""Expression trees over chart coordinates.

Every partial derivative in the package flows through :func:`diff`. Trees are
immutable; the smart constructors (:func:`add`, :func:`mul`, ...) only perform
local cleanup (zero/one elimination and constant folding), so two expressions
are compared by evaluating them, never structurally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import SingularityError, UnknownCoordinateError, MissingCoordinateError

Number = Union[int, float]

FUNCTIONS = ("sqrt", "ln", "sin", "cos", "atan")


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()
    prec = 100

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, n):
        return power(self, n)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, slots=True, repr=False)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Pow(Expr):
    base: Expr
    n: int


@dataclass(frozen=True, slots=True, repr=False)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Call(Expr):
    fn: str
    arg: Expr


for _cls in (Add, Sub, Mul, Div, Pow, Neg, Call):
    _cls.__repr__ = lambda self: f"{type(self).__name__}<{to_text(self)}>"

ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- smart constructors -----------------------------------------------------

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(b, Neg):
        return sub(a, b.a)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if isinstance(b, Neg):
        return add(a, b.a)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    if isinstance(a, Mul) and isinstance(a.a, Const):
        return mul(Const(-a.a.value), a.b)
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if isinstance(a, Const):
        if isinstance(b, Const):
            return Const(a.value * b.value)
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Mul) and isinstance(b.a, Const):
            return mul(Const(a.value * b.a.value), b.b)
        if isinstance(b, Neg):
            return mul(Const(-a.value), b.a)
        if isinstance(b, Div) and isinstance(b.a, Const):
            return div(Const(a.value * b.a.value), b.b)
        if isinstance(b, Div) and isinstance(b.a, Mul) and isinstance(b.a.a, Const):
            return div(mul(Const(a.value * b.a.a.value), b.a.b), b.b)
        return Mul(a, b)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.a, b.a)
    if isinstance(a, Neg):
        return neg(mul(a.a, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.a))
    if isinstance(b, Mul) and isinstance(b.a, Const):
        return mul(b.a, mul(a, b.b))
    if isinstance(a, Mul) and isinstance(a.a, Const):
        return mul(a.a, mul(a.b, b))
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if isinstance(a, Const) and b.value != 0.0:
            return Const(a.value / b.value)
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(a, Mul) and isinstance(a.a, Const):
        return mul(a.a, div(a.b, b))
    if isinstance(a, Neg):
        return neg(div(a.a, b))
    return Div(a, b)


def power(base: Expr, n) -> Expr:
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError("power node takes integer exponents only; compose sqrt for halves")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0.0 and n < 0:
            return Pow(base, n)
        return Const(base.value ** n)
    if isinstance(base, Pow):
        return power(base.base, base.n * n)
    return Pow(base, n)


def call(fn: str, arg: Expr) -> Expr:
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function {fn!r}")
    if isinstance(arg, Const):
        try:
            return Const(_apply(fn, arg.value))
        except (ValueError, ZeroDivisionError):
            pass
    return Call(fn, arg)


def sqrt(e) -> Expr:
    return call("sqrt", as_expr(e))


def ln(e) -> Expr:
    return call("ln", as_expr(e))


def sin(e) -> Expr:
    return call("sin", as_expr(e))


def cos(e) -> Expr:
    return call("cos", as_expr(e))


def atan(e) -> Expr:
    return call("atan", as_expr(e))


def _apply(fn: str, x: float) -> float:
    if fn == "sqrt":
        if x < 0.0:
            raise ValueError("sqrt of negative")
        return math.sqrt(x)
    if fn == "ln":
        if x <= 0.0:
            raise ValueError("log of non-positive")
        return math.log(x)
    if fn == "sin":
        return math.sin(x)
    if fn == "cos":
        return math.cos(x)
    return math.atan(x)


def total(terms: Iterable[Expr]) -> Expr:
    out: Expr = ZERO
    for t in terms:
        out = add(out, t)
    return out


# -- differentiation --------------------------------------------------------

def diff(e: Expr, c, chart=None) -> Expr:
    """Exact partial derivative of `e` with respect to coordinate `c`.

    All chart coordinates are treated as independent. When `chart` is given
    the coordinate must be declared in it.
    """
    name = c.name if isinstance(c, Var) else c
    if chart is not None and name not in chart:
        raise UnknownCoordinateError(name)
    memo: dict[int, Expr] = {}
    return _diff(e, name, memo)


def _diff(e: Expr, c: str, memo: dict) -> Expr:
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    out = _diff_node(e, c, memo)
    # keep e alive so id() stays unique for the lifetime of memo
    memo[key] = (e, out)
    return out


def _diff_node(e: Expr, c: str, memo: dict) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == c else ZERO
    if isinstance(e, Add):
        return add(_diff(e.a, c, memo), _diff(e.b, c, memo))
    if isinstance(e, Sub):
        return sub(_diff(e.a, c, memo), _diff(e.b, c, memo))
    if isinstance(e, Neg):
        return neg(_diff(e.a, c, memo))
    if isinstance(e, Mul):
        da, db = _diff(e.a, c, memo), _diff(e.b, c, memo)
        return add(mul(da, e.b), mul(e.a, db))
    if isinstance(e, Div):
        da, db = _diff(e.a, c, memo), _diff(e.b, c, memo)
        return sub(div(da, e.b), div(mul(e.a, db), power(e.b, 2)))
    if isinstance(e, Pow):
        du = _diff(e.base, c, memo)
        if _is_const(du, 0.0):
            return ZERO
        return mul(mul(Const(float(e.n)), power(e.base, e.n - 1)), du)
    if isinstance(e, Call):
        du = _diff(e.arg, c, memo)
        if _is_const(du, 0.0):
            return ZERO
        u = e.arg
        if e.fn == "sqrt":
            return div(mul(Const(0.5), du), e)
        if e.fn == "ln":
            return div(du, u)
        if e.fn == "sin":
            return mul(call("cos", u), du)
        if e.fn == "cos":
            return neg(mul(call("sin", u), du))
        if e.fn == "atan":
            return div(du, add(ONE, power(u, 2)))
    raise TypeError(f"unsupported node {type(e).__name__}")


# -- evaluation -------------------------------------------------------------

def evaluate(e: Expr, pt: Mapping[str, float]) -> float:
    """Evaluate `e` recursively at the point `pt` (coordinate name -> value).

    Raises :class:`MissingCoordinateError` for unassigned coordinates and
    :class:`SingularityError` (naming the offending subexpression) at analytic
    singularities or when the result is not finite.
    """
    val = _eval(e, pt)
    if not math.isfinite(val):
        raise SingularityError(to_text(e), "non-finite result")
    return val


def _eval(e: Expr, pt: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(pt[e.name])
        except KeyError:
            raise MissingCoordinateError(e.name) from None
    if isinstance(e, Add):
        return _eval(e.a, pt) + _eval(e.b, pt)
    if isinstance(e, Sub):
        return _eval(e.a, pt) - _eval(e.b, pt)
    if isinstance(e, Neg):
        return -_eval(e.a, pt)
    if isinstance(e, Mul):
        return _eval(e.a, pt) * _eval(e.b, pt)
    if isinstance(e, Div):
        den = _eval(e.b, pt)
        if den == 0.0:
            raise SingularityError(to_text(e), "division by zero")
        return _eval(e.a, pt) / den
    if isinstance(e, Pow):
        b = _eval(e.base, pt)
        if b == 0.0 and e.n < 0:
            raise SingularityError(to_text(e), "division by zero")
        try:
            return b ** e.n
        except OverflowError:
            raise SingularityError(to_text(e), "overflow") from None
    if isinstance(e, Call):
        x = _eval(e.arg, pt)
        if e.fn == "sqrt" and x < 0.0:
            raise SingularityError(to_text(e), "sqrt of negative")
        if e.fn == "ln" and x <= 0.0:
            raise SingularityError(to_text(e), "log of non-positive")
        return _apply(e.fn, x)
    raise TypeError(f"unsupported node {type(e).__name__}")


def free_vars(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, (Add, Sub, Mul, Div)):
            stack.append(n.a)
            stack.append(n.b)
        elif isinstance(n, Neg):
            stack.append(n.a)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Call):
            stack.append(n.arg)
    return frozenset(out)


def subs(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace coordinates by expressions, rebuilding through the smart constructors."""
    memo: dict[int, tuple[Expr, Expr]] = {}

    def go(n: Expr) -> Expr:
        hit = memo.get(id(n))
        if hit is not None:
            return hit[1]
        if isinstance(n, Const):
            out = n
        elif isinstance(n, Var):
            out = as_expr(mapping[n.name]) if n.name in mapping else n
        elif isinstance(n, Add):
            out = add(go(n.a), go(n.b))
        elif isinstance(n, Sub):
            out = sub(go(n.a), go(n.b))
        elif isinstance(n, Mul):
            out = mul(go(n.a), go(n.b))
        elif isinstance(n, Div):
            out = div(go(n.a), go(n.b))
        elif isinstance(n, Neg):
            out = neg(go(n.a))
        elif isinstance(n, Pow):
            out = power(go(n.base), n.n)
        elif isinstance(n, Call):
            out = call(n.fn, go(n.arg))
        else:
            raise TypeError(type(n).__name__)
        memo[id(n)] = (n, out)
        return out

    return go(e)


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


# -- finite-difference oracle ----------------------------------------------

@dataclass(frozen=True)
class FDCheck:
    analytic: float
    numeric: float
    abs_err: float


def fd_check(e: Expr, c: str, pt: Mapping[str, float], h: float = 1e-5) -> FDCheck:
    """Compare the symbolic derivative with a central difference of step `h`."""
    if c not in pt:
        raise MissingCoordinateError(c)
    plus = dict(pt)
    minus = dict(pt)
    plus[c] = pt[c] + h
    minus[c] = pt[c] - h
    numeric = (evaluate(e, plus) - evaluate(e, minus)) / (2.0 * h)
    analytic = evaluate(diff(e, c), pt)
    return FDCheck(analytic, numeric, abs(analytic - numeric))


# -- printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _fmt_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        return 3 if e.value < 0 else 5
    return _PREC.get(type(e), 5)


def to_text(e: Expr) -> str:
    """Render `e` in the config-file expression syntax with minimal parentheses."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.a)
        return "-" + (f"({inner})" if _prec(e.a) <= 3 else inner)
    if isinstance(e, Pow):
        base = to_text(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        n = str(e.n) if e.n >= 0 else f"({e.n})"
        return f"{base}^{n}"
    p = _PREC[type(e)]
    left = to_text(e.a)
    if _prec(e.a) < p:
        left = f"({left})"
    if isinstance(e, Add) and (isinstance(e.b, Const) and e.b.value < 0):
        return f"{left}-{_fmt_number(-e.b.value)}"
    right = to_text(e.b)
    # non-associative right operands need parentheses at equal precedence
    if _prec(e.b) < p or (_prec(e.b) == p and isinstance(e, (Sub, Div))) or _prec(e.b) == 3:
        right = f"({right})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    return f"{left}{op}{right}"
