"""Differential forms and decomposable multivector fields with Expr coefficients.

A :class:`Form` over an ordered coordinate tuple stores one coefficient per
strictly ascending tuple of coordinate indices; ``(0, 3)`` over
``(x1, x2, y1, v1_1, ...)`` means ``dx1 ^ dv1_1``. The interior product uses

    i(d/d xi_j)(dxi_{i1} ^ ... ^ dxi_{ik}) = (-1)^(r-1) dxi_{i1} ^ ...(omit r)... ^ dxi_{ik}

when ``j = i_r`` (1-based r), which gives ``i(d/dx^a) d^m x = d^{m-1}x_a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import symbolic as sym
from .errors import DegreeError, MissingCoordinateError, UnknownCoordinateError
from .program import compile_expr

Key = tuple[int, ...]


def _sort_sign(idx: Sequence[int]) -> tuple[Key | None, int]:
    """Sort indices, returning (sorted key, permutation sign); None on repeats."""
    if len(set(idx)) != len(idx):
        return None, 0
    inversions = sum(1 for a in range(len(idx)) for b in range(a + 1, len(idx)) if idx[a] > idx[b])
    return tuple(sorted(idx)), (-1 if inversions % 2 else 1)


@dataclass(frozen=True, eq=False)
class Form:
    coords: tuple[str, ...]
    degree: int
    terms: Mapping[Key, sym.Expr] = field(default_factory=dict)

    def __post_init__(self):
        if self.degree > len(self.coords) or self.degree < 0:
            raise DegreeError(f"degree {self.degree} impossible over {len(self.coords)} coordinates")
        clean = {}
        for k, c in self.terms.items():
            if len(k) != self.degree or list(k) != sorted(set(k)):
                raise ValueError(f"bad key {k} for a {self.degree}-form")
            if not sym.is_zero(c):
                clean[k] = c
        object.__setattr__(self, "terms", clean)

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, coords, degree):
        return cls(tuple(coords), degree, {})

    @classmethod
    def scalar(cls, coords, f):
        return cls(tuple(coords), 0, {(): sym.as_expr(f)})

    @classmethod
    def basis(cls, coords, *names: str) -> "Form":
        """The basis form ``d names[0] ^ d names[1] ^ ...`` (names in any order)."""
        coords = tuple(coords)
        idx = []
        for n in names:
            if n not in coords:
                raise UnknownCoordinateError(n)
            idx.append(coords.index(n))
        key, sign = _sort_sign(idx)
        if key is None:
            return cls.zero(coords, len(names))
        return cls(coords, len(names), {key: sym.Const(float(sign))})

    # algebra --------------------------------------------------------------
    def _check(self, other: "Form"):
        if other.coords != self.coords:
            raise ValueError("forms live over different coordinate systems")

    def __add__(self, other: "Form") -> "Form":
        self._check(other)
        if other.degree != self.degree:
            raise DegreeError("cannot add forms of different degree")
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = sym.add(terms[k], c) if k in terms else c
        return Form(self.coords, self.degree, terms)

    def __neg__(self) -> "Form":
        return Form(self.coords, self.degree, {k: sym.neg(c) for k, c in self.terms.items()})

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def scale(self, f) -> "Form":
        f = sym.as_expr(f)
        return Form(self.coords, self.degree, {k: sym.mul(f, c) for k, c in self.terms.items()})

    def __rmul__(self, f) -> "Form":
        return self.scale(f)

    def __xor__(self, other: "Form") -> "Form":
        return wedge(self, other)

    def coeff(self, *names: str) -> sym.Expr:
        """Coefficient of ``d names[0] ^ ...`` (sign-adjusted for the given order)."""
        idx = [self.coords.index(n) for n in names]
        key, sign = _sort_sign(idx)
        if key is None or key not in self.terms:
            return sym.ZERO
        return sym.mul(sym.Const(float(sign)), self.terms[key])

    def is_zero(self) -> bool:
        return not self.terms

    def key_names(self, key: Key) -> tuple[str, ...]:
        return tuple(self.coords[i] for i in key)

    def evaluate(self, pt: Mapping[str, float]) -> dict[Key, float]:
        return {k: sym.evaluate(c, pt) for k, c in self.terms.items()}

    def evaluate_batch(self, X: np.ndarray, layout: Sequence[str] | None = None) -> dict[Key, np.ndarray]:
        layout = tuple(layout) if layout is not None else self.coords
        return {k: compile_expr(c, layout)(X) for k, c in self.terms.items()}

    def __repr__(self):
        if not self.terms:
            return f"Form<0, degree {self.degree}>"
        parts = []
        for k, c in sorted(self.terms.items()):
            basis = "^".join("d" + self.coords[i] for i in k) or "1"
            parts.append(f"({sym.to_text(c)})*{basis}")
        return "Form<" + " + ".join(parts) + ">"


def max_abs_difference(a: Form, b: Form, X: np.ndarray, layout: Sequence[str] | None = None) -> float:
    """Largest coefficient-wise deviation between two forms at the rows of X."""
    if a.degree != b.degree:
        raise DegreeError("forms of different degree")
    diff = a - b
    worst = 0.0
    for vals in diff.evaluate_batch(X, layout).values():
        worst = max(worst, float(np.max(np.abs(vals))) if vals.size else 0.0)
    return worst


def wedge(a: Form, b: Form) -> Form:
    a._check(b)
    deg = a.degree + b.degree
    if deg > len(a.coords):
        raise DegreeError(f"wedge of degrees {a.degree}+{b.degree} exceeds dimension {len(a.coords)}")
    terms: dict[Key, sym.Expr] = {}
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            key, sign = _sort_sign(ka + kb)
            if key is None:
                continue
            t = sym.mul(ca, cb)
            if sign < 0:
                t = sym.neg(t)
            terms[key] = sym.add(terms[key], t) if key in terms else t
    return Form(a.coords, deg, terms)


def ext_d(a: Form) -> Form:
    """Exterior derivative ``d(c dxi_I) = sum_j dc/dxi_j dxi_j ^ dxi_I``."""
    if a.degree + 1 > len(a.coords):
        raise DegreeError("exterior derivative of a top-degree form leaves the chart")
    terms: dict[Key, sym.Expr] = {}
    pos = {n: i for i, n in enumerate(a.coords)}
    for k, c in a.terms.items():
        for name in sym.free_vars(c):
            if name not in pos:
                raise UnknownCoordinateError(name)
            j = pos[name]
            if j in k:
                continue
            dc = sym.diff(c, name)
            if sym.is_zero(dc):
                continue
            key, sign = _sort_sign((j,) + k)
            if sign < 0:
                dc = sym.neg(dc)
            terms[key] = sym.add(terms[key], dc) if key in terms else dc
    return Form(a.coords, a.degree + 1, terms)


@dataclass(frozen=True, eq=False)
class VectorField:
    coords: tuple[str, ...]
    comps: Mapping[int, sym.Expr] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "comps", {i: c for i, c in self.comps.items() if not sym.is_zero(c)})

    @classmethod
    def from_names(cls, coords, comps: Mapping[str, object]) -> "VectorField":
        coords = tuple(coords)
        out = {}
        for n, c in comps.items():
            if n not in coords:
                raise UnknownCoordinateError(n)
            out[coords.index(n)] = sym.as_expr(c)
        return cls(coords, out)

    @classmethod
    def partial(cls, coords, name: str) -> "VectorField":
        return cls.from_names(coords, {name: 1.0})

    def component(self, name: str) -> sym.Expr:
        return self.comps.get(self.coords.index(name), sym.ZERO)


def contract(v: VectorField, a: Form) -> Form:
    """Interior product i(v)a."""
    if a.degree < 1:
        raise DegreeError("cannot contract a vector field with a 0-form")
    if v.coords != a.coords:
        raise ValueError("vector field and form live over different coordinates")
    terms: dict[Key, sym.Expr] = {}
    for k, c in a.terms.items():
        for r, idx in enumerate(k):
            comp = v.comps.get(idx)
            if comp is None:
                continue
            t = sym.mul(comp, c)
            if r % 2:
                t = sym.neg(t)
            key = k[:r] + k[r + 1:]
            terms[key] = sym.add(terms[key], t) if key in terms else t
    return Form(a.coords, a.degree - 1, terms)


@dataclass(frozen=True, eq=False)
class MultiVector:
    """``factor * legs[0] ^ ... ^ legs[m-1]``; decomposable by construction."""

    factor: sym.Expr
    legs: tuple[VectorField, ...]

    @property
    def coords(self):
        return self.legs[0].coords

    def transversality_defect(self, base: Sequence[str]) -> list[list[sym.Expr]]:
        """Matrix ``legs[a](x^b) - delta_ab``; all zero means normalized and transverse."""
        out = []
        for a, leg in enumerate(self.legs):
            row = []
            for b, name in enumerate(base):
                row.append(sym.sub(leg.component(name), sym.ONE if a == b else sym.ZERO))
            out.append(row)
        return out


def contract_multi(X: MultiVector, a: Form) -> Form:
    """i(f V_1 ^ ... ^ V_m) a = f i(V_m) ... i(V_1) a."""
    m = len(X.legs)
    if a.degree < m:
        raise DegreeError(f"cannot contract an {m}-vector with a {a.degree}-form")
    if sym.is_zero(X.factor):
        return Form.zero(a.coords, a.degree - m)
    out = a
    for leg in X.legs:
        out = contract(leg, out)
    return out.scale(X.factor)


def pullback(a: Form, mapping: Mapping[str, sym.Expr], target: Sequence[str]) -> Form:
    """Pull `a` back along the map whose components are ``mapping``.

    Coordinates of `a` absent from `mapping` must exist in `target` and are
    carried over unchanged (identity components).
    """
    target = tuple(target)
    if a.degree > len(target):
        raise DegreeError(f"cannot pull a {a.degree}-form back to {len(target)} dimensions")
    images: list[sym.Expr] = []
    for n in a.coords:
        if n in mapping:
            images.append(sym.as_expr(mapping[n]))
        elif n in target:
            images.append(sym.Var(n))
        else:
            images.append(None)  # only an error if actually used
    diffs: dict[int, Form] = {}

    def d_image(i: int) -> Form:
        if i not in diffs:
            img = images[i]
            if img is None:
                raise MissingCoordinateError(a.coords[i])
            terms = {}
            for name in sym.free_vars(img):
                if name not in target:
                    raise UnknownCoordinateError(name)
                d = sym.diff(img, name)
                if not sym.is_zero(d):
                    terms[(target.index(name),)] = d
            diffs[i] = Form(target, 1, terms)
        return diffs[i]

    result = Form.zero(target, a.degree)
    for k, c in a.terms.items():
        for name in sym.free_vars(c):
            i = a.coords.index(name) if name in a.coords else None
            if i is not None and images[i] is None:
                raise MissingCoordinateError(name)
        sub = sym.subs(c, {n: img for n, img in zip(a.coords, images) if img is not None})
        piece = Form.scalar(target, sub)
        for i in k:
            piece = wedge(piece, d_image(i))
        result = result + piece
    return result


def pullback_section(a: Form, section: Mapping[str, sym.Expr], base: Sequence[str]) -> Form:
    """Pull `a` back along a section ``x -> (x, s(x))`` onto the base coordinates.

    `section` supplies every fiber coordinate that `a` involves as an
    expression in the base coordinates.
    """
    base = tuple(base)
    for name, e in section.items():
        extra = sym.free_vars(sym.as_expr(e)) - set(base)
        if extra:
            raise ValueError(f"section component {name} depends on non-base coordinates {sorted(extra)}")
    for k, c in a.terms.items():
        for i in k:
            n = a.coords[i]
            if n not in base and n not in section:
                raise MissingCoordinateError(n)
        for n in sym.free_vars(c):
            if n not in base and n not in section:
                raise MissingCoordinateError(n)
    return pullback(a, section, base)


# basis forms on base directions ------------------------------------------

def volume(coords: Sequence[str], base: Sequence[str]) -> Form:
    """``d^m x = dx^1 ^ ... ^ dx^m``."""
    return Form.basis(coords, *base)


def volume_minus(coords: Sequence[str], base: Sequence[str], alpha: int) -> Form:
    """``d^{m-1}x_alpha = i(d/dx^alpha) d^m x``."""
    coords = tuple(coords)
    return contract(VectorField.partial(coords, base[alpha]), volume(coords, base))


def forms_from_terms(coords: Sequence[str], degree: int, items: Iterable[tuple[Sequence[str], sym.Expr]]) -> Form:
    out = Form.zero(coords, degree)
    for names, c in items:
        out = out + Form.basis(coords, *names).scale(c)
    return out
