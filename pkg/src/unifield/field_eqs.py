"""Field-equation residuals and coefficient systems.

Sign conventions: :func:`el_residual` is ``dL/dy - d/dx^a (dL/dv_a)`` along
the prolongation. For the minimal surface this is ``-(1/L^3)`` times the
usual expanded operator ``(1+y2^2) y11 + (1+y1^2) y22 - 2 y1 y2 y12``, and the
unified residual with ``Y0 = d/dy`` equals ``-el_residual``. Zero sets agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import symbolic as sym
from .bundles import (
    JetPoint,
    LagrangianProblem,
    hamiltonian_function,
    hessian,
    legendre_invert,
    legendre_restricted,
    regularity,
    unified_forms,
    jet_tensor,
    SINGULAR_REFUSAL,
)
from .errors import HDWRelationError, InconsistentSystemError, SingularLagrangianError
from .exterior import Form, MultiVector, VectorField, contract, contract_multi, pullback_section

FD_STEP = 1e-6
SEMI_HOLONOMY_TOL = 1e-12
HDW_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SectionExprs:
    """A section given by expressions in the base coordinates.

    ``y`` is required; ``v`` (shape ``(N, m)``), ``momenta`` (``(N, m)``,
    entry ``[A, a]`` is ``p^a_A``) and ``p`` are optional. Missing velocities
    are derived as ``dy/dx``; missing momenta through the Legendre map and a
    missing ``p`` through the Hamiltonian section.
    """

    base: tuple[str, ...]
    y: tuple[sym.Expr, ...]
    v: np.ndarray | None = None
    momenta: np.ndarray | None = None
    p: sym.Expr | None = None

    def __post_init__(self):
        allowed = set(self.base)
        items = list(self.y)
        for arr in (self.v, self.momenta):
            if arr is not None:
                items.extend(arr.ravel())
        if self.p is not None:
            items.append(self.p)
        for e in items:
            bad = sym.free_vars(e) - allowed
            if bad:
                raise ValueError(f"section components may only reference base coordinates; found {sorted(bad)}")

    @property
    def supplied(self) -> dict[str, bool]:
        return {"v": self.v is not None, "momenta": self.momenta is not None, "p": self.p is not None}

    @property
    def m(self) -> int:
        return len(self.base)

    @property
    def N(self) -> int:
        return len(self.y)

    def dy(self) -> np.ndarray:
        """``[A, a] -> d y^A / dx^a``."""
        out = np.empty((self.N, self.m), dtype=object)
        for A in range(self.N):
            for a in range(self.m):
                out[A, a] = sym.diff(self.y[A], self.base[a])
        return out

    def d2y(self) -> np.ndarray:
        """``[A, a, b] -> d2 y^A / dx^a dx^b``."""
        first = self.dy()
        out = np.empty((self.N, self.m, self.m), dtype=object)
        for A in range(self.N):
            for a in range(self.m):
                for b in range(self.m):
                    out[A, a, b] = sym.diff(first[A, a], self.base[b])
        return out

    def velocities(self) -> np.ndarray:
        return self.v if self.v is not None else self.dy()

    def components(self, prob: LagrangianProblem) -> dict[str, sym.Expr]:
        """Every fiber coordinate of W as an expression in x (for pullbacks)."""
        ch = prob.chart
        out: dict[str, sym.Expr] = {}
        for A in range(ch.N):
            out[ch.ys[A]] = self.y[A]
        vel = self.velocities()
        for A in range(ch.N):
            for a in range(ch.m):
                out[ch.v(A, a)] = vel[A, a]
        lift = {n: e for n, e in out.items()}
        for A in range(ch.N):
            for a in range(ch.m):
                if self.momenta is not None:
                    out[ch.pm(A, a)] = self.momenta[A, a]
                else:
                    out[ch.pm(A, a)] = sym.subs(prob.dL_dv[A, a], lift)
        if self.p is not None:
            out["p"] = self.p
        else:
            pv = sym.total(sym.mul(out[ch.pm(A, a)], out[ch.v(A, a)]) for A in range(ch.N) for a in range(ch.m))
            out["p"] = sym.sub(sym.subs(prob.L, lift), pv)
        return out

    def evaluate(self, prob: LagrangianProblem, x: Sequence[float]) -> dict[str, float]:
        pt = dict(zip(self.base, map(float, x)))
        comps = self.components(prob)
        out = dict(pt)
        for n, e in comps.items():
            out[n] = sym.evaluate(e, pt)
        return out


def section_from_text(base: Sequence[str], y: Sequence[str], v=None, momenta=None, p=None) -> SectionExprs:
    from .parser import parse

    base = tuple(base)
    conv = lambda t: parse(t, base) if isinstance(t, str) else sym.as_expr(t)
    arr = lambda tbl: None if tbl is None else np.array([[conv(t) for t in row] for row in tbl], dtype=object)
    return SectionExprs(base, tuple(conv(t) for t in y), arr(v), arr(momenta), None if p is None else conv(p))


def _prolongation(prob: LagrangianProblem, s: SectionExprs, x) -> tuple[JetPoint, dict]:
    pt = dict(zip(s.base, map(float, x)))
    y = np.array([sym.evaluate(e, pt) for e in s.y])
    v = np.array([[sym.evaluate(e, pt) for e in row] for row in s.dy()], dtype=float).reshape(s.N, s.m)
    return JetPoint(np.asarray(x, dtype=float), y, v), pt


# -- Euler-Lagrange -----------------------------------------------------------

def el_residual(prob: LagrangianProblem, s: SectionExprs, x) -> np.ndarray:
    """``R^A = dL/dy^A - d/dx^a (dL/dvA_a)`` along ``j1 phi``, by the chain rule."""
    jp, pt = _prolongation(prob, s, x)
    vec = jp.vector(prob.chart)
    Ly = prob.compiled("dL_dy").at(vec)
    Lxv = prob.compiled("d2L_dx_dv").at(vec)  # [nu, B, mu]
    Lyv = prob.compiled("d2L_dy_dv").at(vec)  # [A, B, nu]
    Hs = prob.compiled("hessian_exprs").at(vec)  # [A, a, B, b]
    d2y = np.array([[[sym.evaluate(e, pt) for e in row] for row in plane] for plane in s.d2y()], dtype=float)
    out = np.empty(prob.N)
    for B in range(prob.N):
        div = sum(Lxv[nu, B, nu] for nu in range(prob.m))
        div += float(np.einsum("an,an->", Lyv[:, B, :], jp.v))
        # d/dx^nu of vA_a = d2y^A/dx^a dx^nu
        div += float(np.einsum("aAc,Aac->", Hs[:, :, B, :].transpose(1, 0, 2), d2y))
        out[B] = Ly[B] - div
    return out


def el_residual_expr(prob: LagrangianProblem, s: SectionExprs) -> list[sym.Expr]:
    """The same residual built by substitution then symbolic x-differentiation."""
    ch = prob.chart
    lift = {ch.ys[A]: s.y[A] for A in range(ch.N)}
    dy = s.dy()
    for A in range(ch.N):
        for a in range(ch.m):
            lift[ch.v(A, a)] = dy[A, a]
    out = []
    for B in range(ch.N):
        r = sym.subs(prob.dL_dy[B], lift)
        for a in range(ch.m):
            r = sym.sub(r, sym.diff(sym.subs(prob.dL_dv[B, a], lift), s.base[a]))
        out.append(r)
    return out


@dataclass(frozen=True)
class GSystem:
    """Affine solution set ``particular + span(nullspace)`` of the G-system.

    ``particular[A, a, n]`` is ``G^A_{a n}`` (the coefficient of ``d/dvA_n``
    in leg ``a``); ``nullspace`` has one such table per basis vector.
    """

    particular: np.ndarray
    nullspace: np.ndarray
    rank: int
    matrix: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)

    def residual(self, G: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(G, dtype=float).ravel() - self.rhs


def g_system(prob: LagrangianProblem, jp: JetPoint) -> tuple[np.ndarray, np.ndarray]:
    """Matrix (N x N m^2) and right side of the linear system relating the G^A_{a n}."""
    N, m = prob.N, prob.m
    vec = jp.vector(prob.chart)
    Hs = prob.compiled("hessian_exprs").at(vec)  # [A, a, B, n]
    Ly = prob.compiled("dL_dy").at(vec)
    Lxv = prob.compiled("d2L_dx_dv").at(vec)  # [n, B, mu]
    Lyv = prob.compiled("d2L_dy_dv").at(vec)  # [A, B, n]
    M = np.zeros((N, N * m * m))
    for B in range(N):
        # unknown (A, a, n) flattened A-major
        M[B] = Hs[:, :, B, :].reshape(-1)
    rhs = np.empty(N)
    for B in range(N):
        rhs[B] = Ly[B] - sum(Lxv[n, B, n] for n in range(m)) - float(np.einsum("An,An->", Lyv[:, B, :], jp.v))
    return M, rhs


def solve_g_system(prob: LagrangianProblem, jp: JetPoint, tol: float = 1e-10) -> GSystem:
    """Least-norm particular solution plus an orthonormal nullspace basis."""
    N, m = prob.N, prob.m
    M, rhs = g_system(prob, jp)
    U, svals, Vt = np.linalg.svd(M, full_matrices=True)
    cutoff = tol * max(1.0, svals.max() if svals.size else 0.0)
    rank = int(np.sum(svals > cutoff))
    part = np.zeros(N * m * m)
    if rank:
        coeffs = (U[:, :rank].T @ rhs) / svals[:rank]
        part = Vt[:rank].T @ coeffs
    if np.linalg.norm(M @ part - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        raise InconsistentSystemError("no Euler-Lagrange multivector at this point: right side outside the range")
    null = Vt[rank:].reshape(-1, N, m, m)
    return GSystem(part.reshape(N, m, m), null, rank, M, rhs)


# -- Hamilton-De Donder-Weyl --------------------------------------------------

def _hamiltonian_partials(prob: LagrangianProblem, x, y, momenta) -> tuple[np.ndarray, np.ndarray]:
    """(dH/dp^a_A as [A, a], dH/dy^A) at (x, y, momenta)."""
    ch = prob.chart
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    momenta = np.asarray(momenta, dtype=float).reshape(ch.N, ch.m)
    if prob.hamiltonian is not None:
        vec = JetPoint(x, y, np.zeros((ch.N, ch.m))).vector(ch)
        s = ch.m + ch.N + ch.N * ch.m
        vec[s:s + ch.N * ch.m] = momenta.ravel()
        return prob.compiled("dH_dp").at(vec), prob.compiled("dH_dy").at(vec)
    h = FD_STEP
    seed = legendre_invert(prob, momenta, x=x, y=y)
    Hp = np.empty((ch.N, ch.m))
    for A in range(ch.N):
        for a in range(ch.m):
            e = np.zeros_like(momenta)
            e[A, a] = h
            Hp[A, a] = (hamiltonian_function(prob, momenta + e, seed) - hamiltonian_function(prob, momenta - e, seed)) / (2 * h)
    Hy = np.empty(ch.N)
    for A in range(ch.N):
        e = np.zeros(ch.N)
        e[A] = h
        plus = JetPoint(x, y + e, seed.v)
        minus = JetPoint(x, y - e, seed.v)
        Hy[A] = (hamiltonian_function(prob, momenta, plus) - hamiltonian_function(prob, momenta, minus)) / (2 * h)
    return Hp, Hy


def hamiltonian_partials(prob: LagrangianProblem, x, y, momenta) -> tuple[np.ndarray, np.ndarray]:
    return _hamiltonian_partials(prob, x, y, momenta)


def hdw_residual(prob: LagrangianProblem, s: SectionExprs, x) -> np.ndarray:
    """Stacked ``dH/dp^a_A - dy^A/dx^a`` (A-major) and ``-dH/dy^A - d p^a_A/dx^a``."""
    if s.momenta is None:
        raise ValueError("hdw_residual needs a section with explicit momenta")
    pt = dict(zip(s.base, map(float, x)))
    N, m = s.N, s.m
    y = np.array([sym.evaluate(e, pt) for e in s.y])
    mom = np.array([[sym.evaluate(e, pt) for e in row] for row in s.momenta], dtype=float)
    dy = np.array([[sym.evaluate(e, pt) for e in row] for row in s.dy()], dtype=float)
    divp = np.array([sum(sym.evaluate(sym.diff(s.momenta[A, a], s.base[a]), pt) for a in range(m)) for A in range(N)])
    Hp, Hy = _hamiltonian_partials(prob, x, y, mom)
    return np.concatenate([(Hp - dy).ravel(), -Hy - divp])


def holonomy_residual(s: SectionExprs, x) -> np.ndarray:
    if s.v is None:
        raise ValueError("holonomy_residual needs explicit velocities")
    pt = dict(zip(s.base, map(float, x)))
    dy = s.dy()
    return np.array([[sym.evaluate(s.v[A, a], pt) - sym.evaluate(dy[A, a], pt) for a in range(s.m)] for A in range(s.N)])


# -- unified residual ---------------------------------------------------------

def unified_residual_form(prob: LagrangianProblem, s: SectionExprs, Y0: VectorField, omega0: Form | None = None) -> Form:
    """``psi0^* i(Y0) Omega_0`` as a top form on the base."""
    if omega0 is None:
        omega0 = unified_forms(prob)[1]
    comps = s.components(prob)
    comps.pop("p", None)
    contracted = contract(Y0, omega0)
    # Y0 coefficients are functions on W0: pull them back together with the form
    return pullback_section(contracted, comps, prob.chart.xs)


def unified_residual(prob: LagrangianProblem, s: SectionExprs, Y0: VectorField, x, omega0: Form | None = None) -> float:
    """Coefficient of ``d^m x`` in ``psi0^* i(Y0) Omega_0`` at x."""
    f = unified_residual_form(prob, s, Y0, omega0)
    key = tuple(range(prob.m))
    if key not in f.terms:
        return 0.0
    return sym.evaluate(f.terms[key], dict(zip(prob.chart.xs, map(float, x))))


def unified_residual_closed_form(prob: LagrangianProblem, s: SectionExprs, Y0: VectorField, x) -> float:
    """``f^A (dp^a_A/dx^a - dL/dy^A) + g^A_a (p^a_A - dL/dvA_a) + h^a_A (vA_a - dyA/dx^a)``."""
    ch = prob.chart
    comps = s.components(prob)
    comps.pop("p", None)
    pt = dict(zip(ch.xs, map(float, x)))
    at = {n: sym.evaluate(e, pt) for n, e in comps.items()}
    at.update(pt)
    coeff = lambda name: sym.evaluate(Y0.component(name), at)
    total = 0.0
    for A in range(ch.N):
        divp = sum(sym.evaluate(sym.diff(comps[ch.pm(A, a)], ch.xs[a]), pt) for a in range(ch.m))
        total += coeff(ch.ys[A]) * (divp - sym.evaluate(prob.dL_dy[A], at))
        for a in range(ch.m):
            total += coeff(ch.v(A, a)) * (at[ch.pm(A, a)] - sym.evaluate(prob.dL_dv[A, a], at))
            dy = sym.evaluate(sym.diff(comps[ch.ys[A]], ch.xs[a]), pt)
            total += coeff(ch.pm(A, a)) * (at[ch.v(A, a)] - dy)
    return total


# -- multivector coefficients -------------------------------------------------

@dataclass(frozen=True)
class FieldCoeffs:
    """Coefficients of ``f * wedge_a (d/dx^a + F^A_a d/dy^A + G^A_{a n} d/dvA_n + H^n_{a A} d/dp^n_A)``.

    ``F[A, a]``, ``G[A, a, n]`` and ``H[A, a, n]`` (the coefficient of
    ``d/dp^n_A`` in leg ``a``); G or H may be absent.
    """

    F: np.ndarray
    G: np.ndarray | None = None
    H: np.ndarray | None = None
    f: float = 1.0

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        object.__setattr__(self, "F", F)
        N, m = F.shape
        for name in ("G", "H"):
            tbl = getattr(self, name)
            if tbl is not None:
                tbl = np.asarray(tbl, dtype=float)
                if tbl.shape != (N, m, m):
                    raise ValueError(f"{name} table has shape {tbl.shape}, expected {(N, m, m)}")
                object.__setattr__(self, name, tbl)


def semi_holonomy_check(coeffs: FieldCoeffs, jp: JetPoint, tol: float = SEMI_HOLONOMY_TOL) -> bool:
    """True iff ``F^A_a = vA_a`` entrywise."""
    return bool(np.all(np.abs(coeffs.F - jp.v) <= tol))


def build_multivector(coeffs: FieldCoeffs, domain: str, chart) -> MultiVector:
    """Decomposable m-vector with the given coefficients on ``"jet"``, ``"w0"`` or ``"dual"``."""
    if domain not in ("jet", "w0", "dual"):
        raise ValueError(f"unknown domain {domain!r}")
    N, m = coeffs.F.shape
    legs = []
    for a in range(m):
        comps: dict[str, float] = {chart.xs[a]: 1.0}
        for A in range(N):
            comps[chart.ys[A]] = coeffs.F[A, a]
            if domain in ("jet", "w0") and coeffs.G is not None:
                for n in range(m):
                    comps[chart.v(A, n)] = coeffs.G[A, a, n]
            if domain in ("w0", "dual") and coeffs.H is not None:
                for n in range(m):
                    comps[chart.pm(A, n)] = coeffs.H[A, a, n]
        legs.append(VectorField.from_names(chart.coords, comps))
    return MultiVector(sym.Const(float(coeffs.f)), tuple(legs))


def jet_tensor_defect(coeffs: FieldCoeffs, jp: JetPoint, chart) -> np.ndarray:
    """Components ``[A, n]`` of ``J(X)`` at `jp`; zero iff X is semi-holonomic."""
    X = build_multivector(coeffs, "jet", chart)
    pt = jp.mapping(chart)
    out = np.zeros((chart.N, chart.m))
    for (A, n), form in jet_tensor(chart).items():
        val = contract_multi(X, form)
        if () in val.terms:
            out[A, n] = sym.evaluate(val.terms[()], pt)
    return out


def lagrangian_coeffs(prob: LagrangianProblem, jp: JetPoint, combo: np.ndarray | None = None) -> FieldCoeffs:
    """Semi-holonomic coefficients ``F = v`` with G from the G-system (plus a nullspace combination)."""
    gs = solve_g_system(prob, jp)
    G = gs.particular.copy()
    if combo is not None and gs.nullspace.size:
        G = G + np.tensordot(np.asarray(combo, dtype=float), gs.nullspace, axes=1)
    return FieldCoeffs(jp.v.copy(), G)


def fl_relate(prob: LagrangianProblem, lag: FieldCoeffs, jp: JetPoint, tol: float = HDW_TOL) -> FieldCoeffs:
    """Push an Euler-Lagrange multivector through the Legendre map.

    Returns F unchanged and ``H[A, a, n] = d p^n_A / dx^a`` along the legs,
    after checking ``F = dH/dp`` and ``sum_n H[A, n, n] = -dH/dy^A`` at the
    image point.
    """
    reg = regularity(prob, jp)
    if not reg.regular:
        raise SingularLagrangianError(SINGULAR_REFUSAL)
    if lag.G is None:
        raise ValueError("fl_relate needs the G table")
    if not semi_holonomy_check(lag, jp, 1e-10):
        raise ValueError("fl_relate needs semi-holonomic coefficients (F = v)")
    N, m = prob.N, prob.m
    vec = jp.vector(prob.chart)
    Hs = reg.hessian.reshape(N, m, N, m)  # [B, mu, A, nu]
    Lxv = prob.compiled("d2L_dx_dv").at(vec)  # [a, A, n]
    Lyv = prob.compiled("d2L_dy_dv").at(vec)  # [B, A, n]
    Hhat = np.empty((N, m, m))
    for A in range(N):
        for a in range(m):
            for n in range(m):
                val = Lxv[a, A, n]
                val += sum(Lyv[B, A, n] * lag.F[B, a] for B in range(N))
                val += sum(Hs[B, mu, A, n] * lag.G[B, a, mu] for B in range(N) for mu in range(m))
                Hhat[A, a, n] = val
    mom = legendre_restricted(prob, jp)
    Hp, Hy = _hamiltonian_partials(prob, jp.x, jp.y, mom)
    err_p = float(np.max(np.abs(lag.F - Hp)))
    trace = np.array([sum(Hhat[A, n, n] for n in range(m)) for A in range(N)])
    err_y = float(np.max(np.abs(trace + Hy)))
    if err_p > tol or err_y > tol:
        raise HDWRelationError(f"HDW relations violated: |F - dH/dp| = {err_p:.3e}, |tr G^ + dH/dy| = {err_y:.3e}")
    return FieldCoeffs(lag.F.copy(), None, Hhat, lag.f)


def unified_coeffs(prob: LagrangianProblem, jp: JetPoint, combo: np.ndarray | None = None) -> FieldCoeffs:
    """Full W0 coefficients (F, G, H) for a Lagrange-Hamiltonian multivector at a W1 point."""
    lag = lagrangian_coeffs(prob, jp, combo)
    ham = fl_relate(prob, lag, jp)
    return FieldCoeffs(lag.F, lag.G, ham.H, 1.0)
