import math

import numpy as np
import pytest

from unifield.errors import ConvergenceError
from unifield.solver import (
    REPORT_HEADER,
    SECTION_HEADER,
    DiscreteSection,
    Grid,
    SolverOptions,
    coons_patch,
    export_csv,
    fit_order,
    read_section_csv,
    residual_report,
    solve_dirichlet,
)

from conftest import make_problem


def scherk(X1, X2):
    return np.log(np.cos(X1)) - np.log(np.cos(X2))


def plane(X1, X2):
    return 0.3 + 0.7 * X1 - 1.2 * X2


SQUARE = (-0.5, 0.5, -0.5, 0.5)


def test_grid_validation():
    g = Grid(0, 1, 0, 2, 5, 9)
    assert g.h1 == 0.25 and g.h2 == 0.25
    with pytest.raises(ValueError):
        Grid(0, 1, 0, 1, 2, 2)
    with pytest.raises(ValueError):
        Grid(1, 0, 0, 1, 3, 3)


def test_coons_patch_reproduces_bilinear():
    g = Grid(0, 1, 0, 1, 6, 7)
    X1, X2 = g.mesh()
    B = 1 + 2 * X1 - X2 + 0.5 * X1 * X2
    np.testing.assert_allclose(coons_patch(B), B, atol=1e-14)


def test_plane_is_reproduced(minsurf, backend):
    g = Grid(-1, 1, 0, 2, 15, 11)
    X1, X2 = g.mesh()
    ds = solve_dirichlet(minsurf, g, plane)
    np.testing.assert_allclose(ds.y[0], plane(X1, X2), atol=1e-12)
    # start from a bumped plane so Newton has work to do
    bump = np.sin(np.pi * (X1 + 1) / 2) * np.sin(np.pi * X2 / 2)
    ds = solve_dirichlet(minsurf, g, plane, initial=plane(X1, X2) + 2.0 * bump)
    np.testing.assert_allclose(ds.y[0], plane(X1, X2), atol=1e-12)
    assert ds.meta["iterations"] >= 3 and min(ds.meta["damping"]) < 1.0


def test_zero_boundary_gives_zero(minsurf):
    g = Grid(*SQUARE, 9, 9)
    ds = solve_dirichlet(minsurf, g, lambda X1, X2: np.zeros_like(X1))
    assert np.max(np.abs(ds.y)) == 0.0


def test_scherk_convergence_order(minsurf, backend):
    hs, errs = [], []
    for n in (17, 33, 65):
        g = Grid(*SQUARE, n, n)
        ds = solve_dirichlet(minsurf, g, scherk)
        assert ds.meta["residual"] <= 1e-10
        hs.append(g.h1)
        errs.append(float(np.max(np.abs(ds.y[0] - scherk(*g.mesh())))))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.6 <= r <= 4.4 for r in ratios), ratios
    assert abs(fit_order(hs, errs) - 2.0) <= 0.1


def test_boundary_values_exact_and_history_decreasing(minsurf):
    g = Grid(*SQUARE, 17, 13)
    X1, X2 = g.mesh()
    ds = solve_dirichlet(minsurf, g, scherk, initial=0.5 * np.cos(np.pi * X1) * np.cos(np.pi * X2))
    B = scherk(X1, X2)
    mask = g.boundary_mask()
    np.testing.assert_array_equal(ds.y[0][mask], B[mask])
    assert ds.meta["history"][-1] <= 1e-10


def test_steep_scherk_patch(minsurf):
    # |grad y| reaches tan(1.4) ~ 5.8 on the boundary
    g = Grid(-1.4, 1.4, -1.4, 1.4, 31, 31)
    ds = solve_dirichlet(minsurf, g, scherk)
    assert ds.meta["residual"] <= 1e-10
    assert np.max(np.abs(ds.y[0] - scherk(*g.mesh()))) < 1e-2


def test_nonconvergence_reported(minsurf):
    g = Grid(-1.4, 1.4, -1.4, 1.4, 31, 31)
    with pytest.raises(ConvergenceError, match="did not converge in 1 iterations"):
        solve_dirichlet(minsurf, g, scherk, SolverOptions(max_iter=1))


def test_stall_reported(minsurf):
    # a flat start under steep data leaves Newton where the 1/L^3 factor flattens the residual
    g = Grid(-1, 1, 0, 2, 15, 11)
    with pytest.raises(ConvergenceError, match="stalled"):
        solve_dirichlet(minsurf, g, plane, initial=np.zeros(g.shape))


def test_scaling_lagrangian_leaves_solution(minsurf):
    g = Grid(*SQUARE, 17, 17)
    a = solve_dirichlet(minsurf, g, scherk)
    b = solve_dirichlet(minsurf.scaled(3.7), g, scherk)
    np.testing.assert_allclose(a.y, b.y, atol=1e-10)


def test_y_dependent_lagrangian():
    # L = |v|^2/2 + y^2/2: EL is the Helmholtz-type equation Lap y = y, solved by exp(x1)*cosh(0)... use sinh
    prob = make_problem("0.5*(v1_1^2 + v1_2^2) + 0.5*y1^2")
    exact = lambda X1, X2: np.exp(0.6 * X1 + 0.8 * X2)
    errs = []
    for n in (17, 33):
        g = Grid(0, 1, 0, 1, n, n)
        ds = solve_dirichlet(prob, g, exact)
        errs.append(np.max(np.abs(ds.y[0] - exact(*g.mesh()))))
    assert errs[1] < 5e-5 and 3.6 <= errs[0] / errs[1] <= 4.4


def test_explicit_x_dependence():
    # L = |v|^2/2 - f(x) y with f = -2(x1 + x2)... EL: Lap y = -f; exact y = x1^2 x2 + x2^2 x1
    prob = make_problem("0.5*(v1_1^2 + v1_2^2) + 2*(x1 + x2)*y1")
    exact = lambda X1, X2: X1**2 * X2 + X2**2 * X1
    g = Grid(0, 1, 0, 1, 9, 9)
    ds = solve_dirichlet(prob, g, exact)
    np.testing.assert_allclose(ds.y[0], exact(*g.mesh()), atol=1e-12)  # cubic: the stencil is exact


def test_solver_rejects_other_dimensions():
    prob = make_problem("0.5*(v1_1^2 + v2_1^2)", m=1, N=2)
    with pytest.raises(ValueError):
        solve_dirichlet(prob, Grid(0, 1, 0, 1, 5, 5), plane)


# -- residual report ------------------------------------------------------------------

def test_report_after_solve(minsurf):
    g = Grid(*SQUARE, 33, 33)
    ds = solve_dirichlet(minsurf, g, scherk)
    s = residual_report(minsurf, ds).summary()
    assert s["el"]["max"] <= 1e-9
    assert s["hdw_p"]["max"] <= 5e-3
    assert s["hdw_y"]["max"] <= 1e-13
    for key in ("w0", "w1", "hol"):
        assert s[key]["max"] <= 1e-13


def test_report_exact_scherk_is_second_order(minsurf):
    maxima = []
    for n in (17, 33, 65):
        ds = DiscreteSection.from_function(minsurf, Grid(*SQUARE, n, n), scherk)
        rep = residual_report(minsurf, ds)
        s = rep.summary()
        assert s["w0"]["max"] <= 1e-13 and s["w1"]["max"] <= 1e-13 and s["hol"]["max"] <= 1e-13
        maxima.append((s["el"]["max"], s["hdw_p"]["max"]))
    for k in range(2):
        r1 = maxima[0][k] / maxima[1][k]
        r2 = maxima[1][k] / maxima[2][k]
        # pre-asymptotic on the coarsest grid; the second ratio is within 10% of 4
        assert 3.2 <= r1 <= 4.5 and 3.6 <= r2 <= 4.4, maxima


def test_report_on_plane_is_clean(minsurf):
    ds = DiscreteSection.from_function(minsurf, Grid(-1, 1, 0, 2, 9, 7), plane)
    for key, s in residual_report(minsurf, ds).summary().items():
        assert s["max"] <= 1e-13, key


def test_report_boundary_cells_are_nan(minsurf):
    ds = DiscreteSection.from_function(minsurf, Grid(*SQUARE, 5, 5), scherk)
    rep = residual_report(minsurf, ds)
    mask = ds.grid.boundary_mask()
    assert np.all(np.isnan(rep.el[0][mask])) and np.all(np.isfinite(rep.el[0][~mask]))
    assert np.all(np.isnan(rep.hdw_p[0][mask]))


def test_report_numeric_hamiltonian_path(minsurf_numeric):
    ds = DiscreteSection.from_function(minsurf_numeric, Grid(*SQUARE, 7, 7), plane)
    s = residual_report(minsurf_numeric, ds).summary()
    assert s["hdw_y"]["max"] <= 1e-8 and s["hdw_p"]["max"] <= 1e-8


def test_derived_fields(minsurf):
    ds = DiscreteSection.from_function(minsurf, Grid(0, 1, 0, 1, 5, 5), lambda X1, X2: X1**2 + 3 * X2)
    X1, _ = ds.grid.mesh()
    # second-order one-sided and central differences are exact on quadratics
    np.testing.assert_allclose(ds.v[0, 0], 2 * X1, atol=1e-13)
    np.testing.assert_allclose(ds.v[0, 1], 3.0, atol=1e-13)
    L = np.sqrt(1 + (2 * X1) ** 2 + 9)
    np.testing.assert_allclose(ds.momenta[0, 0], 2 * X1 / L, atol=1e-13)
    np.testing.assert_allclose(ds.p, L - ((2 * X1) ** 2 + 9) / L, atol=1e-13)


# -- CSV ------------------------------------------------------------------------------

def test_csv_schema_and_round_trip(minsurf, tmp_path):
    ds = DiscreteSection.from_function(minsurf, Grid(*SQUARE, 3, 3), lambda a, b: np.sin(3 * a) * np.exp(b) / 7)
    path = tmp_path / "s.csv"
    export_csv(ds, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(SECTION_HEADER) and len(lines) == 10
    # row-major: x2 varies fastest
    assert lines[1].startswith("-0.5,-0.5,") and lines[2].startswith("-0.5,0,")
    back = read_section_csv(path, minsurf)
    np.testing.assert_array_equal(back.y, ds.y)
    assert back.grid == ds.grid


def test_report_csv(minsurf, tmp_path):
    ds = DiscreteSection.from_function(minsurf, Grid(*SQUARE, 4, 3), scherk)
    path = tmp_path / "r.csv"
    export_csv(residual_report(minsurf, ds), path)
    rows = [l.split(",") for l in path.read_text().splitlines()]
    assert rows[0] == REPORT_HEADER and len(rows) == 13
    assert rows[1][2:5] == ["", "", ""]
    centre = rows[1 + 1 * 3 + 1]
    assert all(c != "" for c in centre)


def test_floats_use_17_significant_digits(minsurf, tmp_path):
    ds = DiscreteSection.from_function(minsurf, Grid(0, 1, 0, 1, 3, 3), lambda a, b: a / 3 + b)
    path = tmp_path / "s.csv"
    export_csv(ds, path)
    row = path.read_text().splitlines()[2].split(",")
    assert row[2] == f"{1 / 3 * 0 + 0.5:.17g}" and float(row[2]) == 0.5
    row = path.read_text().splitlines()[4].split(",")
    assert row[2] == f"{0.5 / 3 + 0.0:.17g}"


def test_read_rejects_bad_files(minsurf, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_section_csv(p, minsurf)
    p.write_text(",".join(SECTION_HEADER) + "\n0,0,1,0,0,0,0,0\n0,1,1,0,0,0,0,0\n1,0,1,0,0,0,0,0\n")
    with pytest.raises(ValueError):
        read_section_csv(p, minsurf)


def test_fit_order_exact():
    hs = np.array([0.1, 0.05, 0.025])
    assert fit_order(hs, 3 * hs**2) == pytest.approx(2.0)
