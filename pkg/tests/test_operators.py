"""Nonlinear gradient/Hessian/Laplacian, hat-Delta, energy, Bochner, composition."""

import math

import numpy as np
import pytest

from finslerlab.errors import NotExpHarmonicAt, SupportViolation, ZeroGradientReference
from finslerlab.expressions import Expression
from finslerlab.operators import (
    FieldJet,
    bochner_residual,
    composition_identity,
    ellipticity_matrix,
    energy_density_jet,
    exp_energy,
    exp_harmonic_operator,
    field_jet_from_expression,
    finsler_hessian,
    finsler_laplacian,
    first_variation,
    nonlinear_gradient,
)
from oracles import fd_christoffel


def _rng(seed=0):
    return np.random.default_rng(seed)


def _affine_jet(x, slope, offset=0.0, n=2):
    x = np.asarray(x, dtype=float)
    slope = np.asarray(slope, dtype=float)
    return FieldJet(x, float(slope @ x + offset), slope,
                    np.zeros((n, n)), np.zeros((n, n, n)))


# -- gradient -------------------------------------------------------------------

def test_gradient_euclidean_self_dual(eu2):
    fj = _affine_jet([0.0, 0.0], [1.0, 2.0])
    grad, e = nonlinear_gradient(fj, eu2)
    assert np.allclose(grad, [1.0, 2.0])
    assert e == pytest.approx(5.0)


def test_gradient_zero_convention(randers_const):
    fj = _affine_jet([0.3, 0.1], [0.0, 0.0])
    grad, e = nonlinear_gradient(fj, randers_const)
    assert np.all(grad == 0.0) and e == 0.0


def test_gradient_legendre_consistency(randers_var):
    r = _rng(1)
    for _ in range(20):
        x = r.uniform(-1, 1, 2)
        du = r.standard_normal(2)
        fj = _affine_jet(x, du)
        grad, e = nonlinear_gradient(fj, randers_var)
        assert float(du @ grad) == pytest.approx(e, rel=1e-9)


# -- Hessian --------------------------------------------------------------------

def test_hessian_euclidean_unchanged(eu2):
    d2 = np.array([[2.0, 0.3], [0.3, -1.0]])
    fj = FieldJet([0.4, 0.2], 0.0, [1.0, 0.0], d2)
    assert np.allclose(finsler_hessian(fj, eu2), d2)


def test_hessian_sphere_chart_fd_oracle(sphere2):
    """u = x^1 on the sphere chart: (grad2 u)_ij = -gamma^1_ij."""
    x = np.array([0.3, -0.2])
    fj = FieldJet(x, x[0], [1.0, 0.0], np.zeros((2, 2)))
    H = finsler_hessian(fj, sphere2)
    gam = fd_christoffel(sphere2, x)
    assert np.allclose(H, -gam[0], atol=1e-6)
    assert np.abs(H - H.T).max() < 1e-12


def test_hessian_zero_gradient_raises(eu2):
    fj = FieldJet([0.0, 0.0], 0.0, [0.0, 0.0], np.eye(2))
    with pytest.raises(ZeroGradientReference):
        finsler_hessian(fj, eu2)


# -- Laplacian ------------------------------------------------------------------

def test_laplacian_flat_quadratic(eu2):
    fj = FieldJet([0.3, 0.7], 0.29, [0.3, 0.7], np.eye(2))  # u = |x|^2/2
    assert finsler_laplacian(fj, eu2) == pytest.approx(2.0, abs=1e-12)


def test_laplacian_gaussian_drift(gauss2):
    """Weighted flat Laplacian is Delta_0 u - x . Du on test polynomials."""
    r = _rng(2)
    for _ in range(5):
        x = r.uniform(-1, 1, 2)
        # u = |x|^2/2:  n - x.Du = 2 - |x|^2
        fj = FieldJet(x, 0.5 * x @ x, x.copy(), np.eye(2))
        assert finsler_laplacian(fj, gauss2) == pytest.approx(
            2.0 - float(x @ x), rel=1e-10)
        # u = x1^3: Delta_0 = 6 x1, drift = -x1 * 3 x1^2
        fj2 = FieldJet(x, x[0] ** 3, [3 * x[0] ** 2, 0.0],
                       np.array([[6 * x[0], 0.0], [0.0, 0.0]]))
        assert finsler_laplacian(fj2, gauss2) == pytest.approx(
            6 * x[0] - 3 * x[0] ** 3, rel=1e-10)


def test_laplacian_weighted_beltrami_oracle(sphere2_lebesgue):
    """Riemannian reduction: Delta^{grad u} u against the divergence-form
    coordinate formula (1/sigma) d_i(sigma a^{ij} u_j) by finite differences
    (sigma = 1 here, a the sphere-chart matrix)."""
    spec = sphere2_lebesgue
    u = Expression("x1**2 + 0.5*x1*x2 - x2**2", 2)
    rng = _rng(17)
    for _ in range(6):
        x0 = rng.uniform(-0.6, 0.6, 2)

        def flux(x, i):
            A, _ = spec.quadratic_form(x)
            fj = field_jet_from_expression(u, x, third=False)
            return float(np.linalg.inv(A)[i] @ fj.du)

        h = 1e-5
        div = 0.0
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            div += (flux(x0 + e, i) - flux(x0 - e, i)) / (2 * h)
        fj = field_jet_from_expression(u, x0)
        lap = finsler_laplacian(fj, spec)
        # Lebesgue measure: Delta_mu u = d_i(a^{ij} u_j) + a^{ij} u_j d_i log(1)
        assert lap == pytest.approx(div, rel=1e-6, abs=1e-8)


def test_laplacian_sphere_eigenfunction(sphere2):
    """First ambient coordinate: Delta u = -2 u on the round 2-sphere."""
    u = Expression("2*x1/(1 + x1**2 + x2**2)", 2)
    r = _rng(3)
    for _ in range(8):
        x = r.uniform(-0.7, 0.7, 2)
        fj = field_jet_from_expression(u, x)
        lap = finsler_laplacian(fj, sphere2)
        assert lap == pytest.approx(-2.0 * fj.u, abs=1e-4)


# -- hat-Delta -------------------------------------------------------------------

def test_exp_harmonic_affine_is_harmonic(eu2, randers_const):
    for spec in (eu2, randers_const):
        op = exp_harmonic_operator(_affine_jet([0.2, 0.4], [0.7, -0.3]), spec)
        assert abs(op.exp_lap) < 1e-12
        assert abs(op.tilde_lap) < 1e-12


def test_exp_harmonic_saddle_hand_value(eu2):
    """u = x^2 - y^2 is harmonic but hat-Delta u = 8(x^2 - y^2) != 0."""
    for x in ([0.5, 0.2], [-0.3, 0.8], [1.0, 0.4]):
        x = np.asarray(x)
        fj = FieldJet(x, x[0] ** 2 - x[1] ** 2, [2 * x[0], -2 * x[1]],
                      np.diag([2.0, -2.0]))
        op = exp_harmonic_operator(fj, eu2)
        assert op.lap == pytest.approx(0.0, abs=1e-12)
        assert op.exp_lap == pytest.approx(8 * (x[0] ** 2 - x[1] ** 2), rel=1e-12)
        assert op.tilde_lap == pytest.approx(
            math.exp(op.e / 2) * op.exp_lap, rel=1e-12)


def test_exp_harmonic_constant(eu2):
    fj = FieldJet([0.1, 0.1], 3.0, [0.0, 0.0], np.zeros((2, 2)))
    op = exp_harmonic_operator(fj, eu2)
    assert op.exp_lap == 0.0 and op.e == 0.0 and op.density == 1.0


def test_operator_result_invariants(randers_var, gauss2):
    r = _rng(4)
    for spec in (randers_var, gauss2):
        for _ in range(10):
            x = r.uniform(-1, 1, 2)
            du = r.standard_normal(2)
            d2 = r.standard_normal((2, 2))
            d2 = 0.5 * (d2 + d2.T)
            fj = FieldJet(x, 0.0, du, d2)
            op = exp_harmonic_operator(fj, spec)
            assert float(du @ op.grad) == pytest.approx(op.e, rel=1e-9)
            quad = float(op.grad @ op.hess @ op.grad)
            assert op.tilde_lap == pytest.approx(
                op.density * (op.lap + quad), rel=1e-9)


def test_strict_ellipticity(randers_var):
    r = _rng(5)
    for _ in range(100):
        x = r.uniform(-1, 1, 2)
        du = r.standard_normal(2)
        fj = _affine_jet(x, du)
        A = ellipticity_matrix(fj, randers_var)
        assert np.linalg.eigvalsh(A).min() > 0.0


# -- energy ---------------------------------------------------------------------

class _Domain:
    def __init__(self, bounds, resolution):
        self.bounds = bounds
        self.resolution = resolution


class _Field:
    def __init__(self, bounds, resolution, fn):
        self.domain = _Domain(bounds, resolution)
        n = len(bounds)
        axes = [np.linspace(b[0], b[1], resolution) for b in bounds]
        grids = np.meshgrid(*axes, indexing="ij")
        self.values = fn(*grids)


def test_energy_constant_field(eu2):
    f = _Field([[0, 1], [0, 1]], 33, lambda X, Y: np.zeros_like(X))
    assert exp_energy(f, eu2) == pytest.approx(1.0, rel=1e-12)


def test_energy_linear_field(eu2):
    f = _Field([[0, 1], [0, 1]], 129, lambda X, Y: X)
    assert exp_energy(f, eu2) == pytest.approx(math.exp(0.5), rel=1e-6)


def test_energy_second_order_convergence(eu2):
    def fn(X, Y):
        return np.sin(np.pi * X) * np.sin(np.pi * Y)

    vals = [exp_energy(_Field([[0, 1], [0, 1]], res, fn), eu2)
            for res in (17, 33, 65)]
    e1 = abs(vals[0] - vals[2])
    e2 = abs(vals[1] - vals[2])
    assert e1 / e2 > 3.2          # ~4 for a second-order scheme


# -- first variation ---------------------------------------------------------------

def _bump(bounds, resolution, seed=0):
    """Random smooth compact-support field (zero on a 2-node collar)."""
    r = _rng(seed)
    axes = [np.linspace(b[0], b[1], resolution) for b in bounds]
    X, Y = np.meshgrid(*axes, indexing="ij")
    sx = (X - bounds[0][0]) / (bounds[0][1] - bounds[0][0])
    sy = (Y - bounds[1][0]) / (bounds[1][1] - bounds[1][0])
    window = (np.sin(np.pi * sx) * np.sin(np.pi * sy)) ** 2
    modes = sum(r.normal() * np.sin((k + 1) * np.pi * sx)
                * np.sin((m + 1) * np.pi * sy)
                for k in range(3) for m in range(3))
    v = window * modes
    v[:2, :] = v[-2:, :] = 0.0
    v[:, :2] = v[:, -2:] = 0.0
    f = _Field(bounds, resolution, lambda A, B: np.zeros_like(A))
    f.values = v
    return f


def test_first_variation_affine_critical(eu2):
    bounds = [[0, 1], [0, 1]]
    u = _Field(bounds, 33, lambda X, Y: 0.7 * X - 0.2 * Y)
    v = _bump(bounds, 33, seed=6)
    rep = first_variation(u, v, eu2)
    assert abs(rep.analytic) < 1e-8
    assert abs(rep.numeric) < 1e-6
    assert abs(rep.weak_residual) < 1e-8


def test_first_variation_zero_direction(eu2):
    bounds = [[0, 1], [0, 1]]
    u = _Field(bounds, 17, lambda X, Y: X * Y)
    v = _Field(bounds, 17, lambda X, Y: np.zeros_like(X))
    rep = first_variation(u, v, eu2)
    assert rep.numeric == 0.0 and rep.analytic == 0.0 and rep.weak_residual == 0.0


def test_first_variation_numeric_vs_analytic(eu2):
    bounds = [[0, 1], [0, 1]]
    u = _Field(bounds, 65, lambda X, Y: np.sin(np.pi * X) * Y**2 + 0.3 * X)
    v = _bump(bounds, 65, seed=7)
    rep = first_variation(u, v, eu2, t_step=1e-4)
    assert rep.numeric == pytest.approx(rep.analytic,
                                        rel=1e-4, abs=1e-10)


def test_first_variation_weak_identity(gauss2):
    bounds = [[-1, 1], [-1, 1]]
    u = _Field(bounds, 33, lambda X, Y: 0.4 * X**2 + 0.1 * Y)
    v = _bump(bounds, 33, seed=8)
    rep = first_variation(u, v, gauss2)
    # discrete integration by parts holds to grid tolerance
    scale = max(1.0, abs(rep.analytic))
    assert abs(rep.weak_residual) < 2e-3 * scale


def test_first_variation_support_violation(eu2):
    bounds = [[0, 1], [0, 1]]
    u = _Field(bounds, 17, lambda X, Y: X)
    v = _Field(bounds, 17, lambda X, Y: np.ones_like(X))
    with pytest.raises(SupportViolation):
        first_variation(u, v, eu2)


# -- Bochner residual ----------------------------------------------------------------

def test_bochner_affine_flat_zero(eu2, randers_const):
    r = _rng(9)
    for spec in (eu2, randers_const):
        for _ in range(10):
            x = r.uniform(-1, 1, 2)
            du = r.standard_normal(2)
            fj = _affine_jet(x, du, offset=0.3)
            assert abs(bochner_residual(fj, spec)) < 1e-10


def test_bochner_1d_reduction():
    from finslerlab.metrics import euclidean_spec

    eu1 = euclidean_spec(1)
    fj = FieldJet([0.4], 0.9, [1.7], np.zeros((1, 1)), np.zeros((1, 1, 1)))
    assert abs(bochner_residual(fj, eu1)) < 1e-12


def test_bochner_gate(eu2):
    """Non-exp-harmonic input trips the gate."""
    x = np.array([0.5, 0.2])
    fj = FieldJet(x, x[0] ** 2 - x[1] ** 2, [2 * x[0], -2 * x[1]],
                  np.diag([2.0, -2.0]), np.zeros((2, 2, 2)))
    with pytest.raises(NotExpHarmonicAt):
        bochner_residual(fj, eu2)


def test_energy_density_jet_flat_quadratic(eu2):
    """e(u) for u = |x|^2/2 on flat space: e = |x|^2, de = 2x, d2e = 2I."""
    x = np.array([0.3, -0.6])
    fj = FieldJet(x, 0.5 * x @ x, x.copy(), np.eye(2), np.zeros((2, 2, 2)))
    ej = energy_density_jet(fj, eu2)
    assert ej.u == pytest.approx(float(x @ x), rel=1e-12)
    assert np.allclose(ej.du, 2 * x, atol=1e-10)
    assert np.allclose(ej.d2u, 2 * np.eye(2), atol=1e-9)


def test_energy_density_jet_fd_oracle(randers_var, sphere2):
    """de and d2e against finite differences of e(x) = F*^2(x, Du(x));
    the x-dependent metric exercises every envelope term."""
    u = Expression("x1**2 - 0.5*x2**2 + 0.3*x1*x2", 2)
    x0 = np.array([0.4, 0.3])
    for spec in (randers_var, sphere2):
        def e_at(x):
            fj = field_jet_from_expression(u, x)
            _, e = nonlinear_gradient(fj, spec)
            return e

        fj0 = field_jet_from_expression(u, x0)
        ej = energy_density_jet(fj0, spec)
        h = 1e-5
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            fd = (e_at(x0 + step) - e_at(x0 - step)) / (2 * h)
            assert ej.du[k] == pytest.approx(fd, rel=1e-6, abs=1e-8)
        for a in range(2):
            for b in range(2):
                sa = np.zeros(2)
                sb = np.zeros(2)
                sa[a] = h
                sb[b] = h
                fd2 = (e_at(x0 + sa + sb) - e_at(x0 + sa - sb)
                       - e_at(x0 - sa + sb) + e_at(x0 - sa - sb)) / (4 * h * h)
                assert ej.d2u[a, b] == pytest.approx(fd2, rel=5e-5, abs=1e-6)


def test_bochner_sphere_chart_solver_refinement(sphere2):
    """Solved exp-harmonic field on the sphere chart: residual below 1e-3
    once grid-converged and decreasing at second order."""
    import math

    from finslerlab.solver import GridDomain, field_jet_at_node, solve_dirichlet

    residuals = []
    for res in (33, 65):
        dom = GridDomain([[-0.5, 0.5], [-0.5, 0.5]], res,
                         boundary_data=lambda x: x[0] ** 2 - x[1] ** 2)
        fld = solve_dirichlet(dom, sphere2)
        assert fld.metadata["converged"]
        h = dom.spacing[0]
        worst = 0.0
        for px, py in ((0.0, 0.0), (0.15, -0.2), (-0.25, 0.1)):
            idx = (round((px + 0.5) / h), round((py + 0.5) / h))
            fj = field_jet_at_node(fld, idx)
            worst = max(worst, abs(bochner_residual(
                fj, sphere2, gate_tol=100 * h * h)))
        residuals.append(worst)
    assert residuals[1] < 1e-3
    assert math.log2(residuals[0] / residuals[1]) > 1.7


# -- composition identity ----------------------------------------------------------------

def test_composition_identity_linear_phi(eu2):
    fj = _affine_jet([0.2, 0.5], [1.0, 0.0], offset=0.4)
    res = composition_identity(fj, lambda s: 1.0, lambda s: 0.0, eu2)
    assert abs(res) < 1e-14


def test_composition_square_affine(eu2):
    """phi = s^2, u affine with du = (1, 0): hat-Delta(u^2) = 2(e + e^2) = 4."""
    fj = _affine_jet([0.0, 0.0], [1.0, 0.0], offset=0.0)
    res = composition_identity(fj, lambda s: 2 * s, lambda s: 2.0, eu2)
    assert abs(res) < 1e-12
    # direct value check
    from finslerlab.operators import hat_operator_applied
    dw = 2 * fj.u * fj.du
    d2w = 2 * fj.u * fj.d2u + 2 * np.outer(fj.du, fj.du)
    assert hat_operator_applied(fj, eu2, None, dw, d2w) == pytest.approx(4.0)


def test_composition_constant_field(eu2):
    fj = FieldJet([0.1, 0.9], 2.0, [0.0, 0.0], np.zeros((2, 2)))
    res = composition_identity(fj, lambda s: 2 * s, lambda s: 2.0, eu2)
    assert res == 0.0


def test_composition_randers_affine(randers_const):
    r = _rng(11)
    for _ in range(10):
        du = r.standard_normal(2)
        fj = _affine_jet(r.uniform(-1, 1, 2), du, offset=r.normal())
        for p1, p2 in ((lambda s: 2 * s, lambda s: 2.0),
                       (np.exp, np.exp),
                       (lambda s: 3 * s * s, lambda s: 6 * s)):
            assert abs(composition_identity(fj, p1, p2, randers_const)) < 1e-8
