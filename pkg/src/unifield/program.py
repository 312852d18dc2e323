"""Flattening of expression trees into postfix programs for batch evaluation.

A :class:`Program` is the form in which expressions reach the hot kernels:
an ``(n, 2)`` int64 array of ``(opcode, argument)`` pairs, a table of
constants, and the coordinate layout it reads from. The kernels evaluate a
program at many points at once (one point per row of a 2-D array).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from . import symbolic as sym
from .errors import SingularityError, UnknownCoordinateError

OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_NEG = range(8)
OP_SQRT, OP_LN, OP_SIN, OP_COS, OP_ATAN = range(8, 13)

_BINARY = {sym.Add: OP_ADD, sym.Sub: OP_SUB, sym.Mul: OP_MUL, sym.Div: OP_DIV}
_CALLS = {"sqrt": OP_SQRT, "ln": OP_LN, "sin": OP_SIN, "cos": OP_COS, "atan": OP_ATAN}


@dataclass(frozen=True, eq=False)
class Program:
    code: np.ndarray
    consts: np.ndarray
    coords: tuple[str, ...]
    depth: int
    nodes: tuple[sym.Expr, ...]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at every row of `X` (shape ``(npts, len(coords))``)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.coords):
            raise ValueError(f"expected points of width {len(self.coords)}, got shape {X.shape}")
        out = np.empty(X.shape[0])
        instr, point = kernels.eval_program(self.code, self.consts, X, out, self.depth)
        if instr >= 0:
            node = self.nodes[instr]
            raise SingularityError(sym.to_text(node), f"singular at point {point}")
        return out

    def at(self, x: Sequence[float]) -> float:
        return float(self(np.asarray(x, dtype=np.float64)[None, :])[0])


def compile_expr(e: sym.Expr, coords: Sequence[str]) -> Program:
    coords = tuple(coords)
    slot = {c: i for i, c in enumerate(coords)}
    code: list[tuple[int, int]] = []
    nodes: list[sym.Expr] = []
    consts: list[float] = []
    depth = 0
    max_depth = 0

    def emit(op, arg, node, delta):
        nonlocal depth, max_depth
        code.append((op, arg))
        nodes.append(node)
        depth += delta
        max_depth = max(max_depth, depth)

    # iterative post-order walk; deep trees would overflow recursion
    stack: list[tuple[sym.Expr, bool]] = [(e, False)]
    while stack:
        n, done = stack.pop()
        if isinstance(n, sym.Const):
            consts.append(n.value)
            emit(OP_CONST, len(consts) - 1, n, 1)
        elif isinstance(n, sym.Var):
            if n.name not in slot:
                raise UnknownCoordinateError(n.name)
            emit(OP_VAR, slot[n.name], n, 1)
        elif type(n) in _BINARY:
            if done:
                emit(_BINARY[type(n)], 0, n, -1)
            else:
                stack.append((n, True))
                stack.append((n.b, False))
                stack.append((n.a, False))
        elif isinstance(n, (sym.Neg, sym.Pow, sym.Call)):
            if done:
                if isinstance(n, sym.Neg):
                    emit(OP_NEG, 0, n, 0)
                elif isinstance(n, sym.Pow):
                    emit(OP_POW, n.n, n, 0)
                else:
                    emit(_CALLS[n.fn], 0, n, 0)
            else:
                stack.append((n, True))
                child = n.a if isinstance(n, sym.Neg) else n.base if isinstance(n, sym.Pow) else n.arg
                stack.append((child, False))
        else:
            raise TypeError(type(n).__name__)
    return Program(
        code=np.asarray(code, dtype=np.int64).reshape(-1, 2),
        consts=np.asarray(consts, dtype=np.float64),
        coords=coords,
        depth=max(max_depth, 1),
        nodes=tuple(nodes),
    )
