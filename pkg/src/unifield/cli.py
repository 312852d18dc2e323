"""Command-line interface: ``unifield derive|check|solve|report``.

Log verbosity comes from the ``UNIFIELD_LOG`` environment variable
(``debug``, ``info``, ``warning``; default ``warning``).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from . import symbolic as sym
from .bundles import SINGULAR_REFUSAL, JetPoint, LagrangianProblem, regularity, unified_forms
from .checks import run_checks
from .config import CheckOptions, ProblemConfig, load_config
from .errors import ParseError, SingularLagrangianError, UnifieldError
from .program import compile_expr
from .solver import (
    export_csv,
    read_section_csv,
    residual_report,
    solve_dirichlet,
)

log = logging.getLogger("unifield")


def _setup_logging():
    level = os.environ.get("UNIFIELD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _text(e: sym.Expr) -> str:
    return sym.to_text(e)


def _form_lines(label: str, form) -> list[str]:
    lines = [f"{label}:"]
    for key in sorted(form.terms):
        basis = "^".join("d" + n for n in form.key_names(key))
        lines.append(f"  [{basis}] {_text(form.terms[key])}")
    if not form.terms:
        lines.append("  0")
    return lines


def el_equation(prob: LagrangianProblem, A: int) -> sym.Expr:
    """Left side of ``d/dx^a (dL/dvA_a) - dL/dyA = 0`` with second derivatives named ``yA_ab``."""
    ch = prob.chart
    out = sym.neg(prob.dL_dy[A])
    for a in range(ch.m):
        out = sym.add(out, prob.d2L_dx_dv[a, A, a])
        for B in range(ch.N):
            out = sym.add(out, sym.mul(prob.d2L_dy_dv[B, A, a], sym.Var(ch.v(B, a))))
            for n in range(ch.m):
                lo, hi = sorted((a, n))
                w = sym.Var(f"y{B + 1}_{lo + 1}{hi + 1}")
                out = sym.add(out, sym.mul(prob.hessian_exprs[A, a, B, n], w))
    return out


def derive_report(cfg: ProblemConfig) -> str:
    prob = cfg.problem
    ch = prob.chart
    out = [f"chart: m = {ch.m}, N = {ch.N}; coordinates {', '.join(ch.coords)}", f"L = {_text(prob.L)}", "", "Legendre map:"]
    for A in range(ch.N):
        for a in range(ch.m):
            out.append(f"  {ch.pm(A, a)} = {_text(prob.dL_dv[A, a])}")
    pv = sym.total(sym.mul(prob.dL_dv[A, a], sym.Var(ch.v(A, a))) for A in range(ch.N) for a in range(ch.m))
    out.append(f"  p = {_text(sym.sub(prob.L, pv))}")
    out += ["", "velocity Hessian (A-major rows and columns):"]
    for A in range(ch.N):
        for a in range(ch.m):
            row = [_text(prob.hessian_exprs[A, a, B, b]) for B in range(ch.N) for b in range(ch.m)]
            out.append(f"  {ch.v(A, a)}: " + " | ".join(row))
    jp = JetPoint(np.zeros(ch.m), np.zeros(ch.N), np.zeros((ch.N, ch.m)))
    try:
        reg = regularity(prob, jp)
        state = "regular" if reg.regular else "singular"
        out.append(f"  det at x = 0, y = 0, v = 0: {reg.det:.12g} ({state})")
    except UnifieldError as exc:
        out.append(f"  det at x = 0, y = 0, v = 0: not evaluable ({exc})")
    out += ["", f"H^ = {_text(prob.hamiltonian_hat)}", ""]
    theta0, omega0 = unified_forms(prob)
    out += _form_lines("Theta_0", theta0) + _form_lines("Omega_0", omega0)
    out += ["", "Euler-Lagrange equations (yA_ab = d2 yA / dx^a dx^b):"]
    for A in range(ch.N):
        out.append(f"  EL[{A + 1}]: {_text(el_equation(prob, A))} = 0")
    if prob.hamiltonian is not None:
        out += ["", f"H = {_text(prob.hamiltonian)}", "Hamilton-De Donder-Weyl equations:"]
        for A in range(ch.N):
            for a in range(ch.m):
                out.append(f"  d{ch.ys[A]}/d{ch.xs[a]} = {_text(sym.diff(prob.hamiltonian, ch.pm(A, a)))}")
            div = " + ".join(f"d{ch.pm(A, a)}/d{ch.xs[a]}" for a in range(ch.m))
            out.append(f"  {div} = {_text(sym.neg(sym.diff(prob.hamiltonian, ch.ys[A])))}")
    return "\n".join(out)


def cmd_derive(args) -> int:
    cfg = load_config(args.config)
    print(derive_report(cfg))
    return 0


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    c = cfg.check
    opts = CheckOptions(seed=c.seed if args.seed is None else args.seed,
                        points=c.points if args.points is None else args.points,
                        x_box=c.x_box, y_box=c.y_box, v_box=c.v_box, p_box=c.p_box)
    print(f"checks: seed {opts.seed}, {opts.points} points, kernels {kernels.BACKEND}")
    results = run_checks(cfg.problem, opts, corrupt=args.corrupt_sign, report=lambda r: print(r.line(), flush=True))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _default_path(cfg: ProblemConfig, suffix: str) -> Path:
    src = Path(cfg.path) if cfg.path else Path("unifield.ini")
    return src.with_name(f"{src.stem}_{suffix}.csv")


def _print_summary(rep) -> None:
    names = {"el": "EL", "hdw_y": "HDW dy/dx", "hdw_p": "HDW div p", "w0": "W0", "w1": "W1", "hol": "holonomy"}
    for key, s in rep.summary().items():
        print(f"  {names[key]:<10} max {s['max']:.3e}  rms {s['rms']:.3e}")


def _exact_error(cfg: ProblemConfig, ds) -> float | None:
    if cfg.exact is None:
        return None
    prog = compile_expr(cfg.exact, cfg.chart.xs)
    X1, X2 = ds.grid.mesh()
    exact = prog(np.column_stack([X1.ravel(), X2.ravel()])).reshape(ds.grid.shape)
    return float(np.max(np.abs(ds.y[0] - exact)))


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    prob = cfg.problem
    if prob.m != 2 or prob.N != 1:
        raise UnifieldError(f"solve supports m = 2, N = 1 only (config has m = {prob.m}, N = {prob.N})")
    grid = cfg.grid()
    bprog = compile_expr(cfg.boundary, cfg.chart.xs)
    boundary = lambda X1, X2: bprog(np.column_stack([X1.ravel(), X2.ravel()])).reshape(X1.shape)
    ds = solve_dirichlet(prob, grid, boundary, cfg.solver)
    rep = residual_report(prob, ds)
    section = cfg.section_path or _default_path(cfg, "section")
    report = cfg.report_path or _default_path(cfg, "report")
    export_csv(ds, section)
    export_csv(rep, report)
    print(f"solved {grid.n1}x{grid.n2} grid in {ds.meta['iterations']} Newton iterations "
          f"({ds.meta['seconds']:.3f} s, kernels {kernels.BACKEND})")
    _print_summary(rep)
    err = _exact_error(cfg, ds)
    if err is not None:
        print(f"  max |y - exact| {err:.3e}")
    print(f"wrote {section}\nwrote {report}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    ds = read_section_csv(args.section, cfg.problem)
    rep = residual_report(cfg.problem, ds)
    out = Path(args.out) if args.out else (cfg.report_path or _default_path(cfg, "report"))
    export_csv(rep, out)
    print(f"report for {args.section} ({ds.grid.n1}x{ds.grid.n2} grid)")
    _print_summary(rep)
    err = _exact_error(cfg, ds)
    if err is not None:
        print(f"  max |y - exact| {err:.3e}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unifield", description="Unified Lagrangian-Hamiltonian field theory toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("derive", help="print the symbolic constructions for a problem")
    p.add_argument("config")
    p.set_defaults(func=cmd_derive)
    p = sub.add_parser("check", help="run the identity-check suite at random points")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--corrupt-sign", action="store_true",
                   help="test mode: flip one sign in Omega_0 to confirm the suite catches it")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("solve", help="solve the Dirichlet problem and write section and report CSVs")
    p.add_argument("config")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("report", help="residual report for a section CSV")
    p.add_argument("section")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SingularLagrangianError as exc:
        print(f"error: {exc if str(exc) else SINGULAR_REFUSAL}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # output piped into e.g. `head`; silence the interpreter's flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1
    except (UnifieldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
