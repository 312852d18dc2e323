"""Finite-difference Dirichlet solver for the Euler-Lagrange equation (m = 2) and residual reports.

The discrete residual at an interior node is the non-conservative form

    R = E0(x, y, v) - sum_{a,n} d2L/dv_a dv_n (x, y, v) w_an

with ``E0 = dL/dy - sum_a d2L/dx^a dv_a - sum_a d2L/dy dv_a v_a``, ``v`` the
central first differences and ``w`` the central second differences. This is
:func:`unifield.field_eqs.el_residual` with every derivative of the section
replaced by its second-order stencil.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from . import symbolic as sym
from .bundles import CompiledTable, LagrangianProblem, _table
from .errors import ConvergenceError

log = logging.getLogger(__name__)

SECTION_HEADER = ["x1", "x2", "y1", "v1_1", "v1_2", "p1_1", "p1_2", "p"]
REPORT_HEADER = ["x1", "x2", "res_el_1", "res_hdw_y_1", "res_hdw_p_1", "res_w0", "res_w1_max", "res_hol_max"]
MAX_HALVINGS = 20


@dataclass(frozen=True)
class Grid:
    a1: float
    b1: float
    a2: float
    b2: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 3 or self.n2 < 3:
            raise ValueError(f"grid needs at least 3 nodes per direction, got {self.n1}x{self.n2}")
        if not (self.b1 > self.a1 and self.b2 > self.a2):
            raise ValueError("grid rectangle is empty")

    @property
    def h1(self) -> float:
        return (self.b1 - self.a1) / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return (self.b2 - self.a2) / (self.n2 - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.a1, self.b1, self.n1), np.linspace(self.a2, self.b2, self.n2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


# -- discrete operators ---------------------------------------------------------

def _first_differences(Y: np.ndarray, h1: float, h2: float) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside, second-order one-sided on the boundary."""
    return np.gradient(Y, h1, axis=0, edge_order=2), np.gradient(Y, h2, axis=1, edge_order=2)


def _interior_stencils(Y: np.ndarray, h1: float, h2: float):
    c = Y[1:-1, 1:-1]
    v1 = (Y[2:, 1:-1] - Y[:-2, 1:-1]) / (2 * h1)
    v2 = (Y[1:-1, 2:] - Y[1:-1, :-2]) / (2 * h2)
    w11 = (Y[2:, 1:-1] - 2 * c + Y[:-2, 1:-1]) / (h1 * h1)
    w22 = (Y[1:-1, 2:] - 2 * c + Y[1:-1, :-2]) / (h2 * h2)
    w12 = (Y[2:, 2:] - Y[2:, :-2] - Y[:-2, 2:] + Y[:-2, :-2]) / (4 * h1 * h2)
    return c, v1, v2, w11, w12, w22


class DiscreteEL:
    """Compiled coefficient tables of the discrete Euler-Lagrange operator (m = 2, N = 1)."""

    def __init__(self, prob: LagrangianProblem):
        ch = prob.chart
        if ch.m != 2 or ch.N != 1:
            raise ValueError(f"the Dirichlet solver supports m = 2, N = 1 only (got m = {ch.m}, N = {ch.N})")
        self.prob = prob
        y = ch.ys[0]
        vs = [ch.v(0, 0), ch.v(0, 1)]
        E0 = prob.dL_dy[0]
        for a in range(2):
            E0 = sym.sub(E0, prob.d2L_dx_dv[a, 0, a])
            E0 = sym.sub(E0, sym.mul(prob.d2L_dy_dv[0, 0, a], sym.Var(vs[a])))
        Hs = prob.hessian_exprs[0, :, 0, :]
        wrt = [y] + vs
        exprs = [E0] + [sym.diff(E0, c) for c in wrt]
        for a in range(2):
            for n in range(2):
                exprs.append(Hs[a, n])
                exprs.extend(sym.diff(Hs[a, n], c) for c in wrt)
        self.table = CompiledTable(np.array(exprs, dtype=object), ch.coords)

    def _points(self, X1, X2, c, v1, v2) -> np.ndarray:
        P = np.zeros((c.size, len(self.prob.chart)))
        P[:, 0], P[:, 1], P[:, 2], P[:, 3], P[:, 4] = X1.ravel(), X2.ravel(), c.ravel(), v1.ravel(), v2.ravel()
        return P

    def evaluate(self, grid: Grid, Y: np.ndarray, jacobian: bool = True):
        X1, X2 = grid.mesh()
        c, v1, v2, w11, w12, w22 = _interior_stencils(Y, grid.h1, grid.h2)
        shape = c.shape
        T = self.table(self._points(X1[1:-1, 1:-1], X2[1:-1, 1:-1], c, v1, v2))
        T = T.T.reshape(-1, *shape)
        E0, dE0 = T[0], T[1:4]
        H, dH = {}, {}
        k = 4
        for a in range(2):
            for n in range(2):
                H[a, n], dH[a, n] = T[k], T[k + 1:k + 4]
                k += 4
        W = {(0, 0): w11, (0, 1): w12, (1, 0): w12, (1, 1): w22}
        R = E0 - sum(H[key] * W[key] for key in H)
        if not jacobian:
            return R, None
        a = [dE0[i] - sum(dH[key][i] * W[key] for key in H) for i in range(3)]
        coeffs = (a[0], a[1], a[2], -H[0, 0], -H[0, 1], -H[1, 0], -H[1, 1])
        coeffs = tuple(np.ascontiguousarray(t, dtype=np.float64) for t in coeffs)
        ab = kernels.assemble_banded(*coeffs, grid.h1, grid.h2)
        return R, np.asarray(ab)


# -- sections -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteSection:
    """Nodal values ``y[A, i, j]`` at ``(a1 + i h1, a2 + j h2)``; every other field is derived on demand."""

    prob: LagrangianProblem
    grid: Grid
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 2:
            y = y[None]
        if y.shape != (self.prob.N,) + self.grid.shape:
            raise ValueError(f"nodal array has shape {y.shape}, expected {(self.prob.N,) + self.grid.shape}")
        object.__setattr__(self, "y", y)

    @cached_property
    def v(self) -> np.ndarray:
        """``v[A, a, i, j]``."""
        out = np.empty((self.prob.N, self.prob.m) + self.grid.shape)
        for A in range(self.prob.N):
            out[A] = _first_differences(self.y[A], self.grid.h1, self.grid.h2)
        return out

    @cached_property
    def points(self) -> np.ndarray:
        """Chart vectors (momenta and p filled in) at every node, row-major."""
        ch = self.prob.chart
        m, N = ch.m, ch.N
        X1, X2 = self.grid.mesh()
        P = np.zeros((X1.size, len(ch)))
        P[:, 0], P[:, 1] = X1.ravel(), X2.ravel()
        P[:, m:m + N] = self.y.reshape(N, -1).T
        s = m + N
        P[:, s:s + N * m] = self.v.reshape(N * m, -1).T
        mom = self.prob.compiled("dL_dv")(P).reshape(-1, N * m)
        P[:, s + N * m:s + 2 * N * m] = mom
        L = self.prob.compiled("L")(P).reshape(-1)
        P[:, -1] = L - np.sum(mom * P[:, s:s + N * m], axis=1)
        return P

    @property
    def momenta(self) -> np.ndarray:
        """``momenta[A, a, i, j]`` is ``p^a_A`` from the restricted Legendre map."""
        ch = self.prob.chart
        k = ch.N * ch.m
        s = ch.m + ch.N + k
        return self.points[:, s:s + k].T.reshape((ch.N, ch.m) + self.grid.shape)

    @property
    def p(self) -> np.ndarray:
        return self.points[:, -1].reshape(self.grid.shape)

    @classmethod
    def from_function(cls, prob: LagrangianProblem, grid: Grid, fn: Callable) -> "DiscreteSection":
        X1, X2 = grid.mesh()
        return cls(prob, grid, np.asarray(fn(X1, X2), dtype=float))


def coons_patch(B: np.ndarray) -> np.ndarray:
    """Bilinearly blended transfinite interpolation of the boundary values of B."""
    n1, n2 = B.shape
    s = np.linspace(0.0, 1.0, n1)[:, None]
    t = np.linspace(0.0, 1.0, n2)[None, :]
    out = (1 - s) * B[0:1, :] + s * B[-1:, :] + (1 - t) * B[:, 0:1] + t * B[:, -1:]
    out -= (1 - s) * (1 - t) * B[0, 0] + s * (1 - t) * B[-1, 0] + (1 - s) * t * B[0, -1] + s * t * B[-1, -1]
    out[0, :], out[-1, :], out[:, 0], out[:, -1] = B[0, :], B[-1, :], B[:, 0], B[:, -1]
    return out


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50


def solve_dirichlet(prob: LagrangianProblem, grid: Grid, boundary: Callable, opts: SolverOptions | None = None,
                    initial: np.ndarray | None = None) -> DiscreteSection:
    """Damped Newton on the discrete Euler-Lagrange equations with Dirichlet data.

    `boundary` maps node coordinate arrays ``(X1, X2)`` to values; only its
    boundary values are used. The result's ``meta`` records iterations,
    final residual and wall time.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    op = DiscreteEL(prob)
    X1, X2 = grid.mesh()
    B = np.asarray(boundary(X1, X2), dtype=float) * np.ones(grid.shape)
    if not np.all(np.isfinite(B[grid.boundary_mask()])):
        raise ValueError("boundary data is not finite")
    Y = coons_patch(B) if initial is None else np.array(initial, dtype=float)
    Y[grid.boundary_mask()] = B[grid.boundary_mask()]
    n2i = grid.n2 - 2
    bw = n2i + 1
    R, ab = op.evaluate(grid, Y)
    norm = float(np.max(np.abs(R)))
    l2 = float(np.linalg.norm(R))
    history = [norm]
    damping: list[float] = []
    it = 0
    while norm > opts.tol:
        if it >= opts.max_iter:
            raise ConvergenceError(f"Newton did not converge in {opts.max_iter} iterations (max residual {norm:.3e})")
        it += 1
        try:
            step = solve_banded((bw, bw), ab, -R.ravel(), check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"singular Jacobian at Newton iteration {it}: {exc}") from exc
        step = step.reshape(R.shape)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = Y.copy()
            trial[1:-1, 1:-1] += t * step
            try:
                R_new, ab_new = op.evaluate(grid, trial)
            except Exception:  # left the analytic domain of L
                R_new = None
            # damping uses the 2-norm; the max-norm is only the stopping test
            if R_new is not None and float(np.linalg.norm(R_new)) < l2:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"damped Newton stalled at iteration {it} (max residual {norm:.3e})")
        Y, R, ab = trial, R_new, ab_new
        norm = float(np.max(np.abs(R)))
        l2 = float(np.linalg.norm(R))
        history.append(norm)
        damping.append(t)
        log.debug("newton iteration %d: damping %.3g, max residual %.3e", it, t, norm)
    meta = {"iterations": it, "residual": norm, "history": history, "damping": damping, "seconds": time.perf_counter() - t0}
    log.info("solve converged in %d iterations, max residual %.3e", it, norm)
    return DiscreteSection(prob, grid, Y, meta)


# -- residual report ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Per-node residual fields on the grid; EL and HDW are NaN at boundary nodes."""

    section: DiscreteSection
    el: np.ndarray
    hdw_y: np.ndarray
    hdw_p: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    hol: np.ndarray

    FAMILIES = ("el", "hdw_y", "hdw_p", "w0", "w1", "hol")

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in self.FAMILIES:
            vals = np.abs(getattr(self, name))
            vals = vals[np.isfinite(vals)]
            out[name] = {"max": float(vals.max()) if vals.size else 0.0,
                         "rms": float(np.sqrt(np.mean(vals ** 2))) if vals.size else 0.0}
        return out


def _hamiltonian_partials_batch(prob: LagrangianProblem, P: np.ndarray):
    from .field_eqs import hamiltonian_partials

    ch = prob.chart
    k = ch.N * ch.m
    if prob.hamiltonian is not None:
        Hp = prob.compiled("dH_dp")(P).reshape(-1, ch.N, ch.m)
        Hy = prob.compiled("dH_dy")(P).reshape(-1, ch.N)
        return Hp, Hy
    s = ch.m + ch.N + k
    Hp = np.empty((P.shape[0], ch.N, ch.m))
    Hy = np.empty((P.shape[0], ch.N))
    for r, row in enumerate(P):
        Hp[r], Hy[r] = hamiltonian_partials(prob, row[:ch.m], row[ch.m:ch.m + ch.N], row[s:s + k])
    return Hp, Hy


def residual_report(prob: LagrangianProblem, ds: DiscreteSection) -> ResidualReport:
    """All residual families of a discrete section.

    EL uses the solver's nine-point stencil; the second HDW family uses
    central differences of the derived momenta. Both are NaN on the boundary.
    The first HDW family, W1 and the holonomy residual are reported per node
    as the largest entry over (A, alpha).
    """
    ch = prob.chart
    g = ds.grid
    N, m = ch.N, ch.m
    shape = g.shape
    P = ds.points
    el = np.full((N,) + shape, np.nan)
    if m == 2 and N == 1:
        R, _ = DiscreteEL(prob).evaluate(g, ds.y[0], jacobian=False)
        el[0, 1:-1, 1:-1] = R
    Hp, Hy = _hamiltonian_partials_batch(prob, P)
    Hp = np.moveaxis(Hp.reshape(shape + (N, m)), (2, 3), (0, 1))
    Hy = np.moveaxis(Hy.reshape(shape + (N,)), 2, 0)
    hdw_y = np.full((N,) + shape, np.nan)
    hdw_p = np.full((N,) + shape, np.nan)
    mom = ds.momenta
    inner = (slice(1, -1), slice(1, -1))
    # Boundary momenta come from one-sided velocities; differencing them over
    # one cell would turn their O(h^2) error into O(h). The divergence is taken
    # over the interior block instead, one-sided on its outer ring.
    # Grids with fewer than 5 nodes along an axis fall back to plain central
    # differences along it.
    def d_inner(f, axis, h):
        if f.shape[axis] >= 5:
            return np.gradient(f[inner], h, axis=axis, edge_order=2)
        return np.gradient(f, h, axis=axis)[inner]

    for A in range(N):
        hdw_y[A][inner] = np.max(np.abs(Hp[A] - ds.v[A]), axis=0)[inner]
        div = d_inner(mom[A, 0], 0, g.h1) + d_inner(mom[A, 1], 1, g.h2)
        hdw_p[A][inner] = -Hy[A][inner] - div
    L = prob.compiled("L")(P).reshape(shape)
    k = N * m
    s = m + N
    coupling = P[:, -1] + np.sum(P[:, s:s + k] * P[:, s + k:s + 2 * k], axis=1)
    w0 = coupling.reshape(shape) - L
    dLdv = prob.compiled("dL_dv")(P).reshape(-1, k)
    w1 = np.max(np.abs(P[:, s + k:s + 2 * k] - dLdv), axis=1).reshape(shape)
    # derived velocities are the stencil derivatives of y, so this only sees rounding
    hol = np.zeros(shape)
    for A in range(N):
        d = _first_differences(ds.y[A], g.h1, g.h2)
        hol = np.maximum(hol, np.max(np.abs(ds.v[A] - np.stack(d)), axis=0))
    return ResidualReport(ds, el, hdw_y, hdw_p, w0, w1, hol)


# -- CSV ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.17g}"


def _check_csv_chart(prob: LagrangianProblem):
    if prob.m != 2 or prob.N != 1:
        raise ValueError("the CSV formats are defined for m = 2, N = 1")


def export_csv(obj: DiscreteSection | ResidualReport, path) -> None:
    """Write a section or a report in row-major grid order."""
    ds = obj.section if isinstance(obj, ResidualReport) else obj
    _check_csv_chart(ds.prob)
    X1, X2 = ds.grid.mesh()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(obj, ResidualReport):
            w.writerow(REPORT_HEADER)
            cols = [X1, X2, obj.el[0], obj.hdw_y[0], obj.hdw_p[0], obj.w0, obj.w1, obj.hol]
        else:
            w.writerow(SECTION_HEADER)
            cols = [X1, X2, ds.y[0], ds.v[0, 0], ds.v[0, 1], ds.momenta[0, 0], ds.momenta[0, 1], ds.p]
        for row in zip(*(c.ravel() for c in cols)):
            w.writerow([_fmt(v) for v in row])


def read_section_csv(path, prob: LagrangianProblem) -> DiscreteSection:
    """Re-ingest a section file; the grid is recovered from the node coordinates."""
    _check_csv_chart(prob)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SECTION_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SECTION_HEADER)}")
    data = np.array([[float(v) for v in r[:3]] for r in rows[1:] if r], dtype=float)
    xs1 = np.unique(data[:, 0])
    xs2 = np.unique(data[:, 1])
    n1, n2 = xs1.size, xs2.size
    if n1 * n2 != data.shape[0]:
        raise ValueError(f"{path}: {data.shape[0]} rows do not form a {n1}x{n2} grid")
    grid = Grid(float(xs1[0]), float(xs1[-1]), float(xs2[0]), float(xs2[-1]), n1, n2)
    X1, X2 = grid.mesh()
    scale = max(1.0, float(np.max(np.abs(data[:, :2]))))
    if np.max(np.abs(data[:, 0] - X1.ravel())) > 1e-9 * scale or np.max(np.abs(data[:, 1] - X2.ravel())) > 1e-9 * scale:
        raise ValueError(f"{path}: nodes are not a uniform grid in row-major order")
    return DiscreteSection(prob, grid, data[:, 2].reshape(n1, n2))


def fit_order(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
