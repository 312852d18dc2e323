import math

import numpy as np
import pytest

from unifield import symbolic as sym
from unifield.bundles import (
    DET_THRESHOLD,
    SINGULAR_REFUSAL,
    JetPoint,
    UnifiedPoint,
    coupling,
    hamilton_cartan,
    hamiltonian_function,
    hamiltonian_section_hat,
    hessian,
    legendre_extended,
    legendre_invert,
    legendre_pullback_map,
    legendre_restricted,
    liouville,
    omega_lagrangian_expanded,
    poincare_cartan,
    random_points,
    regularity,
    require_regular,
    unified_forms,
    w0_embedding_map,
    w0_residual,
    w1_residual,
)
from unifield.errors import ConvergenceError, MissingCoordinateError, SingularLagrangianError
from unifield.exterior import ext_d, max_abs_difference, pullback

from conftest import make_problem

R2 = 1 / math.sqrt(2)


def jet(v, x=(0.0, 0.0), y=(0.0,)):
    return JetPoint(np.array(x), np.array(y), np.array(v, dtype=float).reshape(1, 2))


def test_problem_rejects_momentum_in_lagrangian():
    with pytest.raises(ValueError):
        make_problem("v1_1*p1_1")


def test_legendre_restricted_examples(minsurf, quadratic):
    np.testing.assert_allclose(legendre_restricted(minsurf, jet([1, 0])), [[R2, 0]], atol=1e-15)
    np.testing.assert_allclose(legendre_restricted(minsurf, jet([0, 0])), [[0, 0]])
    v = [[0.3, -1.7]]
    np.testing.assert_allclose(legendre_restricted(quadratic, jet(v)), v)


def test_legendre_extended_examples(minsurf, rng):
    assert legendre_extended(minsurf, jet([1, 0])).p == pytest.approx(R2, abs=1e-15)
    assert legendre_extended(minsurf, jet([0, 0])).p == 1.0
    for row in random_points(rng, minsurf.chart, 50):
        up = legendre_extended(minsurf, jet(row[3:5], row[:2], row[2:3]))
        assert w0_residual(minsurf, up) == pytest.approx(0.0, abs=1e-14)


def test_legendre_invert_examples(minsurf):
    np.testing.assert_allclose(legendre_invert(minsurf, [[R2, 0]]).v, [[1, 0]], atol=1e-12)
    np.testing.assert_allclose(legendre_invert(minsurf, [[0, 0]]).v, [[0, 0]], atol=0)


def test_legendre_invert_round_trip(minsurf, rng):
    for _ in range(100):
        v = rng.normal(size=2)
        v *= rng.uniform(0, 5) / np.linalg.norm(v)
        jp = jet(v, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1))
        p = legendre_restricted(minsurf, jp)
        back = legendre_invert(minsurf, p, JetPoint(jp.x, jp.y, p))
        np.testing.assert_allclose(back.v, jp.v, atol=1e-10)
        np.testing.assert_array_equal(back.x, jp.x)
        np.testing.assert_array_equal(back.y, jp.y)


def test_legendre_invert_closed_form(minsurf, rng):
    # v_a = p_a / sqrt(1 - |p|^2)
    for _ in range(20):
        p = rng.uniform(-0.5, 0.5, size=2)
        got = legendre_invert(minsurf, p.reshape(1, 2)).v.ravel()
        np.testing.assert_allclose(got, p / math.sqrt(1 - p @ p), atol=1e-12)


def test_legendre_invert_singular():
    prob = make_problem("v1_1")
    with pytest.raises(SingularLagrangianError):
        legendre_invert(prob, [[1.0, 0.0]])


def test_legendre_invert_outside_image(minsurf):
    # |p| >= 1 is not in the image of the minimal-surface Legendre map
    with pytest.raises(ConvergenceError):
        legendre_invert(minsurf, [[1.5, 0.0]], max_iter=30)


def test_coupling_examples():
    assert coupling(UnifiedPoint([0, 0], [0], [[3, -2]], [[0, 0]], 1.0)) == 1.0
    assert coupling(UnifiedPoint([0, 0], [0], [[1, 0]], [[R2, 0]], R2)) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert coupling(UnifiedPoint([0, 0], [0], [[3, 0]], [[2, 0]], 0.0)) == 6.0
    with pytest.raises(MissingCoordinateError):
        coupling(UnifiedPoint([0, 0], [0], [[3, 0]], [[2, 0]]))


def test_w0_residual_examples(minsurf):
    assert w0_residual(minsurf, UnifiedPoint([0, 0], [0], [[0, 0]], [[0, 0]], 0.0)) == -1.0
    assert w0_residual(minsurf, UnifiedPoint([0, 0], [0], [[0, 0]], [[0, 0]], 1.0)) == 0.0


def test_w1_residual_examples(minsurf, quadratic):
    np.testing.assert_allclose(w1_residual(minsurf, UnifiedPoint([0, 0], [0], [[1, 0]], [[0, 0]])), [[-R2, 0]], atol=1e-15)
    v = [[0.4, 2.5]]
    np.testing.assert_array_equal(w1_residual(quadratic, UnifiedPoint([0, 0], [0], v, v)), [[0, 0]])


def test_hamiltonian_section_hat_examples(minsurf):
    assert hamiltonian_section_hat(minsurf, UnifiedPoint([0, 0], [0], [[0, 0]], [[0, 0]])).p == 1.0
    up = hamiltonian_section_hat(minsurf, UnifiedPoint([0, 0], [0], [[1, 0]], [[R2, 0]]))
    assert up.p == pytest.approx(R2, abs=1e-15)
    with pytest.raises(ValueError):
        hamiltonian_section_hat(minsurf, up)


def test_hamiltonian_section_round_trip(minsurf, rng):
    X = random_points(rng, minsurf.chart, 200)
    for row in X:
        r = UnifiedPoint(row[:2], row[2:3], row[3:5], row[5:7])
        w = hamiltonian_section_hat(minsurf, r)
        assert w0_residual(minsurf, w) == pytest.approx(0.0, abs=1e-13)
        np.testing.assert_array_equal(w.vector(minsurf.chart)[:-1], r.vector(minsurf.chart)[:-1])
        # the residual is affine in p with unit slope, so no other p completes r
        other = UnifiedPoint(r.x, r.y, r.v, r.momenta, w.p + 0.25)
        assert w0_residual(minsurf, other) == pytest.approx(0.25, abs=1e-13)


def test_legendre_graph_both_ways(minsurf, rng):
    ch = minsurf.chart
    X = random_points(rng, ch, 200)
    for row in X:
        jp = jet(row[3:5], row[:2], row[2:3])
        img = legendre_extended(minsurf, jp)
        assert w0_residual(minsurf, img) == pytest.approx(0, abs=1e-12)
        assert np.max(np.abs(w1_residual(minsurf, img))) <= 1e-12
        generic = UnifiedPoint(row[:2], row[2:3], row[3:5], row[5:7], row[7])
        on_both = abs(w0_residual(minsurf, generic)) <= 1e-12 and np.max(np.abs(w1_residual(minsurf, generic))) <= 1e-12
        is_image = np.allclose(generic.vector(ch), legendre_extended(minsurf, generic.jet).vector(ch), atol=1e-12, rtol=0)
        assert on_both == is_image


def test_hamiltonian_function_examples(minsurf, quadratic, rng):
    assert hamiltonian_function(minsurf, [[0, 0]]) == pytest.approx(-1.0, abs=1e-15)
    assert hamiltonian_function(minsurf, [[R2, 0]]) == pytest.approx(-R2, abs=1e-12)
    p = rng.normal(size=(1, 2))
    assert hamiltonian_function(quadratic, p) == pytest.approx(0.5 * float(np.sum(p**2)), abs=1e-12)


def test_hamiltonian_is_minus_p_on_graph(minsurf, rng):
    for row in random_points(rng, minsurf.chart, 50):
        jp = jet(row[3:5], row[:2], row[2:3])
        img = legendre_extended(minsurf, jp)
        assert hamiltonian_function(minsurf, img.momenta, JetPoint(jp.x, jp.y, img.momenta)) == pytest.approx(-img.p, abs=1e-10)


def test_regularity_examples(minsurf, rng):
    reg = regularity(minsurf, jet([0, 0]))
    np.testing.assert_allclose(reg.hessian, np.eye(2), atol=1e-15)
    assert reg.det == pytest.approx(1.0) and reg.regular
    for _ in range(20):
        v = rng.uniform(-2, 2, size=2)
        L = math.sqrt(1 + v @ v)
        reg = regularity(minsurf, jet(v))
        closed = ((1 + v @ v) * np.eye(2) - np.outer(v, v)) / L**3
        np.testing.assert_allclose(reg.hessian, closed, atol=1e-14)
        assert reg.det == pytest.approx(1 / L**4, rel=1e-12)
    affine = make_problem("v1_1")
    reg = regularity(affine, jet([0.3, 0.2]))
    assert reg.det == 0.0 and not reg.regular
    with pytest.raises(SingularLagrangianError, match="singular Lagrangian"):
        require_regular(affine, jet([0, 0]))
    assert SINGULAR_REFUSAL.startswith("singular Lagrangian")


def test_hessian_at_unit_velocity(minsurf):
    np.testing.assert_allclose(hessian(minsurf, jet([1, 0])), np.diag([1 / (2 * math.sqrt(2)), R2]), atol=1e-15)


def test_hessian_order_is_a_major():
    prob = make_problem("v1_1*v2_2 + 3*v1_2*v2_1 + 0.5*v1_1^2", m=2, N=2)
    Hs = hessian(prob, JetPoint([0, 0], [0, 0], np.zeros((2, 2))))
    # rows/columns: v1_1, v1_2, v2_1, v2_2
    want = np.zeros((4, 4))
    want[0, 0] = 1
    want[0, 3] = want[3, 0] = 1
    want[1, 2] = want[2, 1] = 3
    np.testing.assert_array_equal(Hs, want)


def test_projectability_of_hhat(minsurf):
    ch = minsurf.chart
    X = random_points(np.random.default_rng(3), ch, 50)
    for A in range(ch.N):
        for a in range(ch.m):
            got = sym.diff(minsurf.hamiltonian_hat, ch.v(A, a))
            want = sym.sub(sym.Var(ch.pm(A, a)), minsurf.dL_dv[A, a])
            for row in X:
                pt = dict(zip(ch.coords, row))
                assert sym.evaluate(got, pt) == pytest.approx(sym.evaluate(want, pt), abs=1e-14)


# -- canonical forms ------------------------------------------------------------------

POLY = "0.5*(v1_1^2 + v1_2^2) + 0.3*y1*v1_1 + x1*x2*v1_2 - 0.2*y1^2 + 0.1*v1_1^2*v1_2 + x2*y1*v1_1"


@pytest.mark.parametrize("L", ["sqrt(1 + v1_1^2 + v1_2^2)", POLY])
def test_poincare_cartan_forms(L, rng):
    prob = make_problem(L)
    X = random_points(rng, prob.chart, 100)
    theta_l, omega_l = poincare_cartan(prob)
    assert max_abs_difference(omega_l, omega_lagrangian_expanded(prob), X) <= 1e-12
    theta, _ = liouville(prob.chart)
    assert max_abs_difference(pullback(theta, legendre_pullback_map(prob), prob.chart.coords), theta_l, X) <= 1e-12


@pytest.mark.parametrize("L", ["sqrt(1 + v1_1^2 + v1_2^2)", POLY])
def test_unified_forms_expanded(L, rng):
    prob = make_problem(L)
    X = random_points(rng, prob.chart, 100)
    theta0, omega0 = unified_forms(prob)
    assert max_abs_difference(-ext_d(theta0), omega0, X) <= 1e-12
    # Theta_0 is the pullback of Theta along the embedding p = -H^ of W0
    theta, _ = liouville(prob.chart)
    assert max_abs_difference(pullback(theta, w0_embedding_map(prob), prob.chart.coords), theta0, X) <= 1e-12


def test_corrupted_omega0_differs(minsurf, rng):
    X = random_points(rng, minsurf.chart, 20)
    good = unified_forms(minsurf)[1]
    bad = unified_forms(minsurf, corrupt=True)[1]
    assert max_abs_difference(good, bad, X) > 1e-3


def test_hamilton_cartan_is_closed_form(minsurf, rng):
    theta_h, omega_h = hamilton_cartan(minsurf.chart, minsurf.hamiltonian)
    X = random_points(rng, minsurf.chart, 50)
    assert max_abs_difference(-ext_d(theta_h), omega_h, X) <= 1e-12


def test_det_threshold_value():
    assert DET_THRESHOLD == 1e-12
