"""Legendre maps, the coupling function, the W0/W1 constraints and Hamiltonian sections.

Numeric points carry arrays with the index conventions of :class:`~unifield.chart.Chart`:
``v[A, alpha]`` is ``vA_alpha`` and ``momenta[A, alpha]`` is the multimomentum
``p^alpha_A``, its conjugate. Flattened Hessians use the (A, alpha) A-major
order everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import symbolic as sym
from .chart import Chart
from .errors import (
    ConvergenceError,
    MissingCoordinateError,
    SingularLagrangianError,
    SingularityError,
)
from .exterior import Form, VectorField, contract, ext_d, volume, volume_minus, wedge
from .program import compile_expr

DET_THRESHOLD = 1e-12
SINGULAR_REFUSAL = "singular Lagrangian: unified constraint algorithm beyond W1 not implemented"


def _table(shape, fn) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        out[idx] = fn(*idx)
    return out


class CompiledTable:
    """A table of expressions evaluated together at batches of chart points."""

    def __init__(self, exprs: np.ndarray, coords: Sequence[str]):
        self.shape = exprs.shape
        self._progs = [compile_expr(e, coords) for e in exprs.ravel()]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        cols = [p(X) for p in self._progs]
        out = np.stack(cols, axis=-1) if cols else np.empty((X.shape[0], 0))
        return out.reshape((X.shape[0],) + self.shape)

    def at(self, x: np.ndarray) -> np.ndarray:
        return self(np.asarray(x, dtype=float)[None, :])[0]


@dataclass(frozen=True, eq=False)
class LagrangianProblem:
    """A first-order Lagrangian ``L(x, y, v)`` on a trivial bundle; volume form ``d^m x``.

    ``hamiltonian`` optionally holds a closed-form ``H(x, y, p^alpha_A)``.
    """

    chart: Chart
    L: sym.Expr
    hamiltonian: sym.Expr | None = None

    def __post_init__(self):
        bad = sym.free_vars(self.L) - set(self.chart.jet_coords)
        if bad:
            raise ValueError(f"Lagrangian may only depend on x, y, v; found {sorted(bad)}")
        if self.hamiltonian is not None:
            allowed = set(self.chart.xs + self.chart.ys + self.chart.pms)
            bad = sym.free_vars(self.hamiltonian) - allowed
            if bad:
                raise ValueError(f"Hamiltonian may only depend on x, y, p^alpha_A; found {sorted(bad)}")

    @property
    def m(self) -> int:
        return self.chart.m

    @property
    def N(self) -> int:
        return self.chart.N

    def scaled(self, c: float) -> "LagrangianProblem":
        return replace(self, L=sym.mul(sym.Const(c), self.L), hamiltonian=None)

    # symbolic derivative tables ------------------------------------------
    @cached_property
    def dL_dy(self) -> np.ndarray:
        ch = self.chart
        return _table((ch.N,), lambda A: sym.diff(self.L, ch.ys[A]))

    @cached_property
    def dL_dv(self) -> np.ndarray:
        ch = self.chart
        return _table((ch.N, ch.m), lambda A, a: sym.diff(self.L, ch.v(A, a)))

    @cached_property
    def hessian_exprs(self) -> np.ndarray:
        """``[A, a, B, b] -> d2L / dvA_a dvB_b``."""
        ch = self.chart
        return _table((ch.N, ch.m, ch.N, ch.m), lambda A, a, B, b: sym.diff(self.dL_dv[A, a], ch.v(B, b)))

    @cached_property
    def d2L_dx_dv(self) -> np.ndarray:
        """``[nu, B, mu] -> d2L / dx^nu dvB_mu``."""
        ch = self.chart
        return _table((ch.m, ch.N, ch.m), lambda n, B, mu: sym.diff(self.dL_dv[B, mu], ch.xs[n]))

    @cached_property
    def d2L_dy_dv(self) -> np.ndarray:
        """``[A, B, nu] -> d2L / dy^A dvB_nu``."""
        ch = self.chart
        return _table((ch.N, ch.N, ch.m), lambda A, B, n: sym.diff(self.dL_dv[B, n], ch.ys[A]))

    @cached_property
    def hamiltonian_hat(self) -> sym.Expr:
        """``H^ = -L + p^alpha_A vA_alpha`` on W_r."""
        ch = self.chart
        pv = sym.total(sym.mul(sym.Var(ch.pm(A, a)), sym.Var(ch.v(A, a))) for A in range(ch.N) for a in range(ch.m))
        return sym.sub(pv, self.L)

    # compiled evaluation ------------------------------------------------
    def compiled(self, name: str) -> CompiledTable:
        cache = self.__dict__.setdefault("_compiled", {})
        if name not in cache:
            if name == "L":
                exprs = _table((), lambda: self.L)
            elif name == "H":
                if self.hamiltonian is None:
                    raise ValueError("no closed-form Hamiltonian supplied")
                exprs = _table((), lambda: self.hamiltonian)
            elif name == "dH_dp":
                ch = self.chart
                exprs = _table((ch.N, ch.m), lambda A, a: sym.diff(self.hamiltonian, ch.pm(A, a)))
            elif name == "dH_dy":
                ch = self.chart
                exprs = _table((ch.N,), lambda A: sym.diff(self.hamiltonian, ch.ys[A]))
            else:
                exprs = getattr(self, name)
            cache[name] = CompiledTable(exprs, self.chart.coords)
        return cache[name]


# -- points -----------------------------------------------------------------

@dataclass(frozen=True)
class JetPoint:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        v = np.asarray(self.v, dtype=float)
        if v.ndim < 2:
            v = v.reshape(self.y.size, self.x.size)
        object.__setattr__(self, "v", v)
        if self.v.shape != (self.y.size, self.x.size):
            raise ValueError(f"velocity shape {self.v.shape} does not match (N, m) = {(self.y.size, self.x.size)}")

    def vector(self, chart: Chart) -> np.ndarray:
        _check_dims(chart, self.x, self.y)
        out = np.zeros(len(chart))
        m, N = chart.m, chart.N
        out[:m] = self.x
        out[m:m + N] = self.y
        out[m + N:m + N + N * m] = self.v.ravel()
        return out

    def mapping(self, chart: Chart) -> dict[str, float]:
        return dict(zip(chart.jet_coords, self.vector(chart)[: len(chart.jet_coords)]))


@dataclass(frozen=True)
class UnifiedPoint:
    """A point of W (``p`` set) or of W_r (``p`` is None)."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    momenta: np.ndarray
    p: float | None = None

    def __post_init__(self):
        jp = JetPoint(self.x, self.y, self.v)
        object.__setattr__(self, "x", jp.x)
        object.__setattr__(self, "y", jp.y)
        object.__setattr__(self, "v", jp.v)
        mom = np.asarray(self.momenta, dtype=float).reshape(jp.v.shape)
        object.__setattr__(self, "momenta", mom)
        if self.p is not None:
            object.__setattr__(self, "p", float(self.p))

    @property
    def jet(self) -> JetPoint:
        """Projection to J1E."""
        return JetPoint(self.x, self.y, self.v)

    def restricted(self) -> "UnifiedPoint":
        """Projection W -> W_r forgetting the scalar momentum."""
        return UnifiedPoint(self.x, self.y, self.v, self.momenta, None)

    def vector(self, chart: Chart) -> np.ndarray:
        out = JetPoint(self.x, self.y, self.v).vector(chart)
        m, N = chart.m, chart.N
        s = m + N + N * m
        out[s:s + N * m] = self.momenta.ravel()
        out[-1] = 0.0 if self.p is None else self.p
        return out

    def mapping(self, chart: Chart) -> dict[str, float]:
        vec = self.vector(chart)
        names = chart.coords if self.p is not None else chart.coords[:-1]
        return dict(zip(names, vec))


def _check_dims(chart: Chart, x, y):
    if x.size != chart.m or y.size != chart.N:
        raise ValueError(f"point dimensions ({x.size}, {y.size}) do not match chart ({chart.m}, {chart.N})")


# -- Legendre maps ----------------------------------------------------------

def legendre_restricted(prob: LagrangianProblem, jp: JetPoint) -> np.ndarray:
    """Momenta ``p^alpha_A = dL/dvA_alpha`` at `jp`."""
    return prob.compiled("dL_dv").at(jp.vector(prob.chart))


def legendre_extended(prob: LagrangianProblem, jp: JetPoint) -> UnifiedPoint:
    mom = legendre_restricted(prob, jp)
    L = float(prob.compiled("L").at(jp.vector(prob.chart)))
    return UnifiedPoint(jp.x, jp.y, jp.v, mom, L - float(np.sum(mom * jp.v)))


def hessian(prob: LagrangianProblem, jp: JetPoint) -> np.ndarray:
    """The (N*m) x (N*m) velocity Hessian in (A, alpha) A-major order."""
    k = prob.N * prob.m
    return prob.compiled("hessian_exprs").at(jp.vector(prob.chart)).reshape(k, k)


@dataclass(frozen=True)
class Regularity:
    regular: bool
    det: float
    hessian: np.ndarray = field(repr=False)


def regularity(prob: LagrangianProblem, jp: JetPoint) -> Regularity:
    Hs = hessian(prob, jp)
    det = float(np.linalg.det(Hs))
    return Regularity(abs(det) > DET_THRESHOLD, det, Hs)


def legendre_invert(
    prob: LagrangianProblem,
    momenta,
    seed: JetPoint | None = None,
    *,
    x=None,
    y=None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> JetPoint:
    """Solve ``dL/dv (x, y, v) = momenta`` for v by damped Newton.

    The seed supplies x, y and the starting velocity; without a seed the
    start is ``v = momenta`` at the given (or zero) x, y.
    """
    ch = prob.chart
    mom = np.asarray(momenta, dtype=float).reshape(ch.N, ch.m)
    if seed is None:
        seed = JetPoint(np.zeros(ch.m) if x is None else x, np.zeros(ch.N) if y is None else y, mom.copy())
    grad = prob.compiled("dL_dv")
    hess = prob.compiled("hessian_exprs")
    vec = seed.vector(ch)
    vs = slice(ch.m + ch.N, ch.m + ch.N + ch.N * ch.m)
    k = ch.N * ch.m

    def resid(vv):
        return mom.ravel() - grad.at(vv).ravel()

    r = resid(vec)
    for it in range(max_iter):
        Hs = hess.at(vec).reshape(k, k)
        if abs(np.linalg.det(Hs)) <= DET_THRESHOLD:
            # at the seed this is the Lagrangian's fault; later it means Newton ran off
            if it == 0:
                raise SingularLagrangianError(f"singular velocity Hessian at v = {vec[vs].tolist()}")
            raise ConvergenceError(f"Legendre inversion reached a singular Hessian at iterate {it} (v = {vec[vs].tolist()})")
        if np.max(np.abs(r)) <= tol:
            return JetPoint(seed.x, seed.y, vec[vs].reshape(ch.N, ch.m))
        step = np.linalg.solve(Hs, r)
        norm0 = np.linalg.norm(r)
        t = 1.0
        r_new = None
        for _ in range(30):
            trial = vec.copy()
            trial[vs] += t * step
            try:
                r_new = resid(trial)
            except SingularityError:
                r_new = None
            else:
                if np.linalg.norm(r_new) < norm0:
                    break
            t *= 0.5
        if r_new is None:
            raise ConvergenceError("Legendre inversion left the analytic domain of L")
        vec, r = trial, r_new
    if np.max(np.abs(r)) <= tol:
        return JetPoint(seed.x, seed.y, vec[vs].reshape(ch.N, ch.m))
    raise ConvergenceError(f"Legendre inversion did not converge in {max_iter} iterations (residual {np.max(np.abs(r)):.3e})")


def hamiltonian_function(prob: LagrangianProblem, momenta, seed: JetPoint | None = None, *, x=None, y=None) -> float:
    """``H = p^alpha_A v*A_alpha - L(v*)`` with ``v*`` the inverse Legendre image of `momenta`."""
    jp = legendre_invert(prob, momenta, seed, x=x, y=y)
    mom = np.asarray(momenta, dtype=float).reshape(jp.v.shape)
    L = float(prob.compiled("L").at(jp.vector(prob.chart)))
    return float(np.sum(mom * jp.v)) - L


# -- coupling and constraints ----------------------------------------------

def coupling(up: UnifiedPoint) -> float:
    """``C^ = p + p^alpha_A vA_alpha``."""
    if up.p is None:
        raise MissingCoordinateError("p")
    return up.p + float(np.sum(up.momenta * up.v))


def w0_residual(prob: LagrangianProblem, up: UnifiedPoint) -> float:
    c = coupling(up)
    return c - float(prob.compiled("L").at(up.vector(prob.chart)))


def w1_residual(prob: LagrangianProblem, up: UnifiedPoint) -> np.ndarray:
    return up.momenta - legendre_restricted(prob, up.jet)


def hamiltonian_section_hat(prob: LagrangianProblem, up: UnifiedPoint) -> UnifiedPoint:
    """Complete a point of W_r to the unique point of W0 above it (``p = -H^``)."""
    if up.p is not None:
        raise ValueError("hamiltonian_section_hat expects a point of W_r (no scalar momentum)")
    L = float(prob.compiled("L").at(up.vector(prob.chart)))
    return UnifiedPoint(up.x, up.y, up.v, up.momenta, L - float(np.sum(up.momenta * up.v)))


def require_regular(prob: LagrangianProblem, jp: JetPoint) -> Regularity:
    reg = regularity(prob, jp)
    if not reg.regular:
        raise SingularLagrangianError(SINGULAR_REFUSAL)
    return reg


# -- canonical forms --------------------------------------------------------

def _dxm(ch: Chart) -> Form:
    return volume(ch.coords, ch.xs)


def _dxm1(ch: Chart, a: int) -> Form:
    return volume_minus(ch.coords, ch.xs, a)


def _d(ch: Chart, name: str) -> Form:
    return Form.basis(ch.coords, name)


def vertical_endomorphism_components(ch: Chart) -> dict[tuple[int, int], Form]:
    """``(A, nu) -> (dy^A - vA_alpha dx^alpha) ^ d^{m-1}x_nu``.

    These are the form parts of the vertical endomorphism contracted with
    ``d^m x``; the same table is the jet tensor J, whose vector part is
    ``d/dvA_nu``.
    """
    out = {}
    for A in range(ch.N):
        theta = _d(ch, ch.ys[A])
        for a in range(ch.m):
            theta = theta - _d(ch, ch.xs[a]).scale(sym.Var(ch.v(A, a)))
        for nu in range(ch.m):
            out[(A, nu)] = wedge(theta, _dxm1(ch, nu))
    return out


def jet_tensor(ch: Chart) -> dict[tuple[int, int], Form]:
    return vertical_endomorphism_components(ch)


def poincare_cartan(prob: LagrangianProblem) -> tuple[Form, Form]:
    """Theta_L = i(V)L + L and Omega_L = -d Theta_L."""
    ch = prob.chart
    theta = _dxm(ch).scale(prob.L)
    for (A, nu), comp in vertical_endomorphism_components(ch).items():
        theta = theta + comp.scale(prob.dL_dv[A, nu])
    return theta, -ext_d(theta)


def omega_lagrangian_expanded(prob: LagrangianProblem) -> Form:
    """Omega_L written out term by term in natural coordinates."""
    ch = prob.chart
    Hs = prob.hessian_exprs
    out = Form.zero(ch.coords, ch.m + 1)
    for A in range(ch.N):
        for a in range(ch.m):
            for B in range(ch.N):
                for nu in range(ch.m):
                    out = out - (_d(ch, ch.v(B, nu)) ^ _d(ch, ch.ys[A]) ^ _dxm1(ch, a)).scale(Hs[A, a, B, nu])
                    out = out + (_d(ch, ch.v(B, nu)) ^ _dxm(ch)).scale(sym.mul(Hs[A, a, B, nu], sym.Var(ch.v(A, a))))
            for B in range(ch.N):
                out = out - (_d(ch, ch.ys[B]) ^ _d(ch, ch.ys[A]) ^ _dxm1(ch, a)).scale(prob.d2L_dy_dv[B, A, a])
    for B in range(ch.N):
        c = sym.neg(prob.dL_dy[B])
        for A in range(ch.N):
            for a in range(ch.m):
                c = sym.add(c, sym.mul(prob.d2L_dy_dv[B, A, a], sym.Var(ch.v(A, a))))
        for a in range(ch.m):
            c = sym.add(c, prob.d2L_dx_dv[a, B, a])
        out = out + (_d(ch, ch.ys[B]) ^ _dxm(ch)).scale(c)
    return out


def _momentum_part(ch: Chart) -> Form:
    out = Form.zero(ch.coords, ch.m)
    for A in range(ch.N):
        for a in range(ch.m):
            out = out + (_d(ch, ch.ys[A]) ^ _dxm1(ch, a)).scale(sym.Var(ch.pm(A, a)))
    return out


def _minus_dp_dy(ch: Chart) -> Form:
    out = Form.zero(ch.coords, ch.m + 1)
    for A in range(ch.N):
        for a in range(ch.m):
            out = out - (_d(ch, ch.pm(A, a)) ^ _d(ch, ch.ys[A]) ^ _dxm1(ch, a))
    return out


def liouville(ch: Chart) -> tuple[Form, Form]:
    """Multimomentum Liouville forms (Theta, Omega), Omega written out."""
    theta = _momentum_part(ch) + _dxm(ch).scale(sym.Var("p"))
    omega = _minus_dp_dy(ch) - (_d(ch, "p") ^ _dxm(ch))
    return theta, omega


def unified_forms(prob: LagrangianProblem, *, corrupt: bool = False) -> tuple[Form, Form]:
    """Theta_0 and the written-out Omega_0 on W0.

    ``corrupt`` flips the sign of the ``d(pv - L) ^ d^m x`` term; it exists
    only so the check harness can prove it detects a sign error.
    """
    ch = prob.chart
    Hhat = prob.hamiltonian_hat
    theta = _dxm(ch).scale(sym.neg(Hhat)) + _momentum_part(ch)
    dH = ext_d(Form.scalar(ch.coords, Hhat))
    first = dH ^ _dxm(ch)
    omega = (-first if corrupt else first) + _minus_dp_dy(ch)
    return theta, omega


def hamilton_cartan(ch: Chart, H: sym.Expr) -> tuple[Form, Form]:
    """Theta_h, Omega_h for a Hamiltonian ``H(x, y, p^alpha_A)``, Omega_h written out."""
    theta = _momentum_part(ch) - _dxm(ch).scale(H)
    omega = _minus_dp_dy(ch) + (ext_d(Form.scalar(ch.coords, H)) ^ _dxm(ch))
    return theta, omega


def legendre_pullback_map(prob: LagrangianProblem) -> dict[str, sym.Expr]:
    """Components of the extended Legendre map as expressions on J1E."""
    ch = prob.chart
    out: dict[str, sym.Expr] = {}
    pv = sym.ZERO
    for A in range(ch.N):
        for a in range(ch.m):
            out[ch.pm(A, a)] = prob.dL_dv[A, a]
            pv = sym.add(pv, sym.mul(prob.dL_dv[A, a], sym.Var(ch.v(A, a))))
    out["p"] = sym.sub(prob.L, pv)
    return out


def w0_embedding_map(prob: LagrangianProblem) -> dict[str, sym.Expr]:
    """``p = L - p^alpha_A vA_alpha``: the embedding of W0 in W."""
    return {"p": sym.neg(prob.hamiltonian_hat)}


def partial(ch: Chart, name: str) -> VectorField:
    return VectorField.partial(ch.coords, name)


def contract_partial(ch: Chart, name: str, form: Form) -> Form:
    return contract(partial(ch, name), form)


def random_points(
    rng: np.random.Generator,
    ch: Chart,
    n: int,
    *,
    x_box: float = 1.0,
    y_box: float = 1.0,
    v_box: float = 2.0,
    p_box: float = 0.7,
    p_scalar_box: float = 2.0,
) -> np.ndarray:
    """Uniform samples of full chart vectors, one per row.

    Velocities are drawn inside the ball ``|v| <= v_box`` and momenta inside
    ``|p| <= p_box`` (Euclidean norm over all components), which keeps
    samples inside the domain of square-root Hamiltonians.
    """
    m, N = ch.m, ch.N
    k = N * m

    def ball(radius):
        d = rng.normal(size=(n, k))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = radius * rng.uniform(size=(n, 1)) ** (1.0 / k)
        return d * r

    return np.hstack([
        rng.uniform(-x_box, x_box, size=(n, m)),
        rng.uniform(-y_box, y_box, size=(n, N)),
        ball(v_box),
        ball(p_box),
        rng.uniform(-p_scalar_box, p_scalar_box, size=(n, 1)),
    ])


def point_from_vector(ch: Chart, vec: np.ndarray, with_p: bool = True) -> UnifiedPoint:
    m, N = ch.m, ch.N
    s = m + N
    k = N * m
    return UnifiedPoint(vec[:m], vec[m:s], vec[s:s + k].reshape(N, m), vec[s + k:s + 2 * k].reshape(N, m),
                        float(vec[-1]) if with_p else None)


def flat_fn(fn: Callable, ch: Chart):
    """Adapt a point-wise function of UnifiedPoint to chart vectors."""
    return lambda vec: fn(point_from_vector(ch, vec))
