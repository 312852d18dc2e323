"""The identity-check suite run by ``unifield check``.

Each check samples seed-determined random points and reports the number of
samples and the worst deviation against its tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import symbolic as sym
from .bundles import (
    SINGULAR_REFUSAL,
    JetPoint,
    LagrangianProblem,
    UnifiedPoint,
    hamiltonian_function,
    hamiltonian_section_hat,
    legendre_extended,
    legendre_invert,
    legendre_pullback_map,
    legendre_restricted,
    liouville,
    omega_lagrangian_expanded,
    point_from_vector,
    poincare_cartan,
    random_points,
    regularity,
    unified_forms,
    w0_residual,
    w1_residual,
)
from .config import CheckOptions
from .errors import SingularLagrangianError, SingularityError
from .exterior import (
    Form,
    VectorField,
    contract,
    contract_multi,
    ext_d,
    max_abs_difference,
    pullback,
    volume,
    volume_minus,
)
from .field_eqs import (
    build_multivector,
    jet_tensor_defect,
    lagrangian_coeffs,
    section_from_text,
    semi_holonomy_check,
    solve_g_system,
    unified_coeffs,
    unified_residual,
    unified_residual_closed_form,
)

EXACT = 1e-12
NUMERIC = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    samples: int
    worst: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst)) and self.worst <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status} {self.name:<28} n={self.samples:<4d} worst={self.worst:.3e} tol={self.tol:.0e}{extra}"


class Suite:
    def __init__(self, prob: LagrangianProblem, opts: CheckOptions, corrupt: bool = False):
        self.prob = prob
        self.ch = prob.chart
        self.opts = opts
        self.corrupt = corrupt
        self.rng = np.random.default_rng(opts.seed)
        self.X = random_points(self.rng, self.ch, opts.points, x_box=opts.x_box, y_box=opts.y_box,
                               v_box=opts.v_box, p_box=opts.p_box)
        self.theta0, self.omega0 = unified_forms(prob, corrupt=corrupt)

    # helpers ---------------------------------------------------------------
    def jet(self, row) -> JetPoint:
        return point_from_vector(self.ch, row).jet

    def on_w1(self, row) -> np.ndarray:
        """Move a sample onto W1 (momenta from the Legendre map, p from the Hamiltonian section)."""
        up = legendre_extended(self.prob, self.jet(row))
        return up.vector(self.ch)

    def dxm(self) -> Form:
        return volume(self.ch.coords, self.ch.xs)

    def dvar(self, name) -> Form:
        return Form.basis(self.ch.coords, name)

    # checks ------------------------------------------------------------------
    def regular(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            reg = regularity(self.prob, self.jet(row))
            if not reg.regular:
                raise SingularLagrangianError(SINGULAR_REFUSAL)
            worst = max(worst, 1.0 / abs(reg.det))
        return CheckResult("bundles.regularity", len(self.X), 0.0, EXACT, f"min |det| = {1.0 / worst:.3e}")

    def fd_derivatives(self) -> CheckResult:
        worst = 0.0
        names = self.ch.ys + self.ch.vs
        n = 0
        for row in self.X[: min(len(self.X), 25)]:
            pt = self.jet(row).mapping(self.ch)
            for c in names:
                r = sym.fd_check(self.prob.L, c, pt, 1e-5)
                worst = max(worst, r.abs_err / (1.0 + abs(r.analytic)))
                n += 1
        return CheckResult("symbolic.fd_derivatives", n, worst, 1e-6)

    def d_squared(self) -> CheckResult:
        dd = ext_d(ext_d(self.theta0)) if self.theta0.degree + 2 <= len(self.ch) else Form.zero(self.ch.coords, 0)
        worst = max_abs_difference(dd, Form.zero(dd.coords, dd.degree), self.X) if dd.degree else 0.0
        return CheckResult("exterior.d_squared", len(self.X), worst, EXACT)

    def omega0_expanded(self) -> CheckResult:
        worst = max_abs_difference(-ext_d(self.theta0), self.omega0, self.X)
        return CheckResult("exterior.omega0_expanded", len(self.X), worst, EXACT)

    def liouville(self) -> CheckResult:
        theta, omega = liouville(self.ch)
        worst = max_abs_difference(-ext_d(theta), omega, self.X)
        return CheckResult("exterior.liouville", len(self.X), worst, EXACT)

    def poincare_cartan(self) -> CheckResult:
        theta_l, omega_l = poincare_cartan(self.prob)
        theta, _ = liouville(self.ch)
        pb = pullback(theta, legendre_pullback_map(self.prob), self.ch.coords)
        worst = max(max_abs_difference(pb, theta_l, self.X),
                    max_abs_difference(omega_l, omega_lagrangian_expanded(self.prob), self.X))
        return CheckResult("bundles.poincare_cartan", len(self.X), worst, EXACT)

    def velocity_contraction(self) -> CheckResult:
        worst = 0.0
        for A in range(self.ch.N):
            for a in range(self.ch.m):
                got = contract(VectorField.partial(self.ch.coords, self.ch.v(A, a)), self.omega0)
                coeff = sym.sub(sym.Var(self.ch.pm(A, a)), self.prob.dL_dv[A, a])
                worst = max(worst, max_abs_difference(got, self.dxm().scale(coeff), self.X))
        return CheckResult("unified.velocity_semibasic", len(self.X) * self.ch.N * self.ch.m, worst, EXACT)

    def momentum_contraction(self) -> CheckResult:
        worst = 0.0
        for A in range(self.ch.N):
            for a in range(self.ch.m):
                got = contract(VectorField.partial(self.ch.coords, self.ch.pm(A, a)), self.omega0)
                want = self.dxm().scale(sym.Var(self.ch.v(A, a)))
                want = want - (self.dvar(self.ch.ys[A]) ^ volume_minus(self.ch.coords, self.ch.xs, a))
                worst = max(worst, max_abs_difference(got, want, self.X))
        return CheckResult("unified.momentum_holonomy", len(self.X) * self.ch.N * self.ch.m, worst, EXACT)

    def projectability(self) -> CheckResult:
        worst = 0.0
        for A in range(self.ch.N):
            for a in range(self.ch.m):
                got = sym.diff(self.prob.hamiltonian_hat, self.ch.v(A, a))
                want = sym.sub(sym.Var(self.ch.pm(A, a)), self.prob.dL_dv[A, a])
                a_ = Form.scalar(self.ch.coords, got)
                b_ = Form.scalar(self.ch.coords, want)
                worst = max(worst, max_abs_difference(a_, b_, self.X))
        return CheckResult("bundles.projectability", len(self.X), worst, EXACT)

    def hamiltonian_section(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            up = point_from_vector(self.ch, row, with_p=False)
            full = hamiltonian_section_hat(self.prob, up)
            worst = max(worst, abs(w0_residual(self.prob, full)))
            worst = max(worst, float(np.max(np.abs(full.vector(self.ch)[:-1] - up.vector(self.ch)[:-1]))))
            # injectivity: any other p misses W0 by exactly the shift
            shifted = UnifiedPoint(full.x, full.y, full.v, full.momenta, full.p + 1.0)
            worst = max(worst, abs(w0_residual(self.prob, shifted) - 1.0))
        return CheckResult("constraints.hamiltonian_section", len(self.X), worst, EXACT)

    def legendre_graph(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            jp = self.jet(row)
            img = legendre_extended(self.prob, jp)
            worst = max(worst, abs(w0_residual(self.prob, img)), float(np.max(np.abs(w1_residual(self.prob, img)))))
            # converse: a point of W0 cut by the W1 equations is the image of its projection
            mom = legendre_restricted(self.prob, jp)
            cut = hamiltonian_section_hat(self.prob, UnifiedPoint(jp.x, jp.y, jp.v, mom))
            worst = max(worst, float(np.max(np.abs(cut.vector(self.ch) - img.vector(self.ch)))))
            # a random sample off the graph must fail one of the constraints
            off = point_from_vector(self.ch, row)
            gap = max(abs(w0_residual(self.prob, off)), float(np.max(np.abs(w1_residual(self.prob, off)))))
            if np.max(np.abs(off.vector(self.ch) - img.vector(self.ch))) > 1e-6 and gap == 0.0:
                worst = np.inf
        return CheckResult("constraints.legendre_graph", 2 * len(self.X), worst, EXACT)

    def legendre_roundtrip(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            jp = self.jet(row)
            back = legendre_invert(self.prob, legendre_restricted(self.prob, jp), JetPoint(jp.x, jp.y, legendre_restricted(self.prob, jp)))
            worst = max(worst, float(np.max(np.abs(back.v - jp.v))))
        return CheckResult("bundles.legendre_roundtrip", len(self.X), worst, 1e-10)

    def hamiltonian(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            jp = self.jet(row)
            img = legendre_extended(self.prob, jp)
            H = hamiltonian_function(self.prob, img.momenta, JetPoint(jp.x, jp.y, img.momenta))
            worst = max(worst, abs(H + img.p))
            if self.prob.hamiltonian is not None:
                vec = img.vector(self.ch)
                worst = max(worst, abs(H - float(self.prob.compiled("H").at(vec))))
        detail = "closed form compared" if self.prob.hamiltonian is not None else "H = -p on the graph"
        return CheckResult("bundles.hamiltonian", len(self.X), worst, 1e-10, detail)

    def _combos(self, jp) -> np.ndarray:
        dim = solve_g_system(self.prob, jp).nullspace.shape[0]
        return self.rng.normal(size=dim)

    def lagrangian_field(self) -> CheckResult:
        _, omega_l = poincare_cartan(self.prob)
        worst = 0.0
        for row in self.X:
            jp = self.jet(row)
            coeffs = lagrangian_coeffs(self.prob, jp, self._combos(jp))
            res = contract_multi(build_multivector(coeffs, "jet", self.ch), omega_l)
            pt = jp.mapping(self.ch)
            vals = [abs(sym.evaluate(c, pt)) for c in res.terms.values()]
            worst = max([worst] + vals)
        return CheckResult("lagrangian.field_equation", len(self.X), worst, 1e-10)

    def unified_field(self) -> CheckResult:
        worst = 0.0
        for row in self.X:
            jp = self.jet(row)
            coeffs = unified_coeffs(self.prob, jp, self._combos(jp))  # fl_relate asserts the HDW relations
            X0 = build_multivector(coeffs, "w0", self.ch)
            res = contract_multi(X0, self.omega0)
            pt = legendre_extended(self.prob, jp).mapping(self.ch)
            vals = [abs(sym.evaluate(c, pt)) for c in res.terms.values()]
            worst = max([worst] + vals)
        return CheckResult("unified.field_equation", len(self.X), worst, NUMERIC)

    def semi_holonomy(self) -> CheckResult:
        worst = 0.0
        for row in self.X[: min(len(self.X), 20)]:
            jp = self.jet(row)
            coeffs = lagrangian_coeffs(self.prob, jp)
            if not semi_holonomy_check(coeffs, jp):
                worst = np.inf
            worst = max(worst, float(np.max(np.abs(jet_tensor_defect(coeffs, jp, self.ch)))))
        return CheckResult("jet.semi_holonomy", min(len(self.X), 20), worst, EXACT)

    def unified_residual(self) -> CheckResult:
        ch = self.ch
        rng = self.rng
        poly = lambda: f"{rng.uniform(-.5, .5):.6f} + {rng.uniform(-.5, .5):.6f}*x1*x{ch.m} + {rng.uniform(-.3, .3):.6f}*x1^2"
        worst = 0.0
        n = 0
        for _ in range(min(len(self.X), 20)):
            s = section_from_text(
                ch.xs, [poly() for _ in range(ch.N)],
                v=[[poly() for _ in range(ch.m)] for _ in range(ch.N)],
                momenta=[[poly() for _ in range(ch.m)] for _ in range(ch.N)],
            )
            comps = {c: rng.normal() for c in ch.ys + ch.vs + ch.pms}
            Y0 = VectorField.from_names(ch.coords, comps)
            x = rng.uniform(-0.5, 0.5, size=ch.m)
            try:
                a = unified_residual(self.prob, s, Y0, x, self.omega0)
                b = unified_residual_closed_form(self.prob, s, Y0, x)
            except SingularityError:
                continue
            worst = max(worst, abs(a - b) / (1.0 + abs(b)))
            n += 1
        return CheckResult("unified.residual_agreement", n, worst, 1e-10)

    ORDER = (
        "regular", "fd_derivatives", "d_squared", "omega0_expanded", "liouville", "poincare_cartan",
        "velocity_contraction", "momentum_contraction", "projectability", "hamiltonian_section", "legendre_graph",
        "legendre_roundtrip", "hamiltonian", "semi_holonomy", "lagrangian_field", "unified_field", "unified_residual",
    )

    def run(self, report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
        out = []
        for name in self.ORDER:
            res = getattr(self, name)()
            out.append(res)
            if report:
                report(res)
        return out


def run_checks(prob: LagrangianProblem, opts: CheckOptions, corrupt: bool = False, report=None) -> list[CheckResult]:
    """Run the full suite; raises SingularLagrangianError for singular problems."""
    return Suite(prob, opts, corrupt).run(report)
