"""Pointwise nonlinear operators and field-level energy functionals.

The central objects are the reference-vector operators of a Finsler
metric-measure space applied to scalar functions u:

    grad u    : Legendre dual of du
    (grad2 u)_ij = d2u_ij - Gamma^k_ij(x, grad u) du_k
    Delta^V u = tr_{g(V)} grad2 u - Du(grad^V tau)
    hat-Delta u = Delta^{grad u} u + (Du)^2(grad2 u)
    tilde-Delta_mu u = exp(e(u)/2) * hat-Delta u,  e(u) = F*^2(Du)

plus the energy functional E(u) = integral exp(e(u)/2) dmu, its first
variation, the Bochner-type residual, and the composition identity.  The
quasilinear operator with coefficients frozen at u, hat-Delta^{grad u},
is exposed for identities applied to other functions (energy density,
compositions phi(u)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connection import FrameJets
from .curvature import s_curvature
from .errors import (
    NotExpHarmonicAt,
    SupportViolation,
    ZeroGradientReference,
)
from .metrics import Measure, MetricSpec, legendre_batch, legendre_dual


@dataclass
class FieldJet:
    """Pointwise derivatives of a scalar function u at x.

    d3u is optional; the Bochner residual requires it.
    """

    x: np.ndarray
    u: float
    du: np.ndarray
    d2u: np.ndarray
    d3u: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.du = np.asarray(self.du, dtype=float)
        self.d2u = np.asarray(self.d2u, dtype=float)
        if self.d3u is not None:
            self.d3u = np.asarray(self.d3u, dtype=float)


@dataclass
class OperatorResult:
    grad: np.ndarray
    e: float
    hess: np.ndarray
    lap: float
    exp_lap: float
    density: float
    tilde_lap: float


def field_jet_from_expression(expr, x, third: bool = True) -> FieldJet:
    """Analytic FieldJet of an expression-tree test field."""
    from .jets import TaylorPoly, jet_space

    x = np.asarray(x, dtype=float)
    n = len(x)
    sp = jet_space(n, 3 if third else 2)
    xs = [TaylorPoly.variable(sp, i, x[i]) for i in range(n)]
    poly = expr.eval_jet(xs)
    du = np.array([poly.partial(i).value for i in range(n)])
    d2u = np.array([[poly.partial(i).partial(j).value for j in range(n)]
                    for i in range(n)])
    d3u = None
    if third:
        d3u = np.array([[[poly.partial(i).partial(j).partial(k).value
                          for k in range(n)] for j in range(n)]
                        for i in range(n)])
    return FieldJet(x, poly.value, du, d2u, d3u)


# ---------------------------------------------------------------------------
# pointwise operators
# ---------------------------------------------------------------------------

def nonlinear_gradient(fj: FieldJet, spec: MetricSpec):
    """(grad u, e(u)) with e(u) = F*^2(Du) = Du(grad u); (0, 0) at du = 0."""
    grad, fstar = legendre_dual(spec, fj.x, fj.du)
    return grad, fstar * fstar


def finsler_hessian(fj: FieldJet, spec: MetricSpec,
                    reference=None) -> np.ndarray:
    """Chern-connection Hessian at the reference vector (default grad u)."""
    if reference is None:
        if not np.any(fj.du != 0.0):
            raise ZeroGradientReference("Hessian reference grad u vanishes")
        reference, _ = legendre_dual(spec, fj.x, fj.du)
    fr = FrameJets(spec, fj.x, reference, order=3)
    return fj.d2u - np.einsum("kij,k->ij", fr.gamma, fj.du)


def _laplacian_from_frame(fr: FrameJets, du, d2u) -> tuple[float, np.ndarray]:
    """(Delta^V u, Hessian at V) given the reference frame."""
    H = d2u - np.einsum("kij,k->ij", fr.gamma, du)
    lap = float(np.einsum("ij,ij->", fr.g_inv, H)
                - du @ (fr.g_inv @ fr.delta_tau))
    return lap, H


def finsler_laplacian(fj: FieldJet, spec: MetricSpec,
                      measure: Measure | None = None,
                      reference=None) -> float:
    """Delta^V u = tr_{g(V)}(grad2 u) - Du(grad^V tau); V defaults to grad u."""
    if reference is None:
        if not np.any(fj.du != 0.0):
            raise ZeroGradientReference("Laplacian reference grad u vanishes")
        reference, _ = legendre_dual(spec, fj.x, fj.du)
    fr = FrameJets(spec, fj.x, reference, measure=measure, order=3)
    return _laplacian_from_frame(fr, fj.du, fj.d2u)[0]


_REG_EPS = 1e-12


def exp_harmonic_operator(fj: FieldJet, spec: MetricSpec,
                          measure: Measure | None = None) -> OperatorResult:
    """All pieces of the exponentially harmonic operator at one point.

    At du = 0 the reference vector is regularized by an epsilon covector
    (display only; the operator value is 0 there by continuity of each term).
    """
    du = fj.du
    if not np.any(du != 0.0):
        xi = np.zeros(spec.dim)
        xi[0] = _REG_EPS
        grad, _ = legendre_dual(spec, fj.x, xi)
        e = 0.0
    else:
        grad, fstar = legendre_dual(spec, fj.x, du)
        e = fstar * fstar
    fr = FrameJets(spec, fj.x, grad, measure=measure, order=3)
    lap, H = _laplacian_from_frame(fr, du, fj.d2u)
    quad = float(grad @ H @ grad)         # (Du)^2(grad2 u): g^{-1}(grad u) du = grad u
    exp_lap = lap + quad
    density = math.exp(e / 2.0)
    return OperatorResult(grad=grad, e=e, hess=H, lap=lap, exp_lap=exp_lap,
                          density=density, tilde_lap=density * exp_lap)


def ellipticity_matrix(fj: FieldJet, spec: MetricSpec) -> np.ndarray:
    """Principal part A^{ij} = g^{ij}(grad u) + grad u^i grad u^j of hat-Delta."""
    if not np.any(fj.du != 0.0):
        raise ZeroGradientReference("ellipticity matrix needs du != 0")
    grad, _ = legendre_dual(spec, fj.x, fj.du)
    fr = FrameJets(spec, fj.x, grad, order=2)
    return fr.g_inv + np.outer(grad, grad)


# ---------------------------------------------------------------------------
# the frozen-coefficient operator hat-Delta^{grad u} applied to other fields
# ---------------------------------------------------------------------------

def hat_operator_applied(fj_u: FieldJet, spec: MetricSpec,
                         measure: Measure | None,
                         value_du: np.ndarray, value_d2u: np.ndarray) -> float:
    """hat-Delta^{grad u} f for a field f given by (df, d2f) at x."""
    if not np.any(fj_u.du != 0.0):
        raise ZeroGradientReference("hat-Delta^{grad u} needs du != 0")
    grad, _ = legendre_dual(spec, fj_u.x, fj_u.du)
    fr = FrameJets(spec, fj_u.x, grad, measure=measure, order=3)
    lap, H = _laplacian_from_frame(fr, value_du, value_d2u)
    return lap + float(grad @ H @ grad)


# ---------------------------------------------------------------------------
# energy density jet via the Legendre chain rule
# ---------------------------------------------------------------------------

def _fstar2_partials(spec: MetricSpec, x, xi):
    """Partial derivatives of P(x, xi) = F*^2 up to second order.

    From the envelope identity P(x, xi) = 2 xi(grad) - F^2(x, grad):
        P_xi = 2 grad,            P_xixi = 2 g^{-1}(x, grad),
        P_x  = -F^2_x(x, grad),   P_xxi[i,k] = 2 d grad^k / dx^i,
        P_xx = -F^2_xx - F^2_xy . dgrad/dx.
    """
    n = spec.dim
    grad, fstar = legendre_dual(spec, x, xi)
    fr = FrameJets(spec, x, grad, order=2)
    F2 = fr.F2
    dF2_dx = np.array([F2.partial(i).value for i in range(n)])
    d2F2_xy = np.array([[F2.partial(i).partial(n + m).value for m in range(n)]
                        for i in range(n)])
    d2F2_xx = np.array([[F2.partial(i).partial(j).value for j in range(n)]
                        for i in range(n)])
    ginv = fr.g_inv
    dgrad_dx = -0.5 * np.einsum("km,im->ki", ginv, d2F2_xy)   # [k, i]
    P_x = -dF2_dx
    P_xx = -d2F2_xx - np.einsum("ik,kj->ij", d2F2_xy, dgrad_dx)
    P_xx = 0.5 * (P_xx + P_xx.T)
    P_xxi = 2.0 * dgrad_dx.T                                   # [i, k]
    return {"value": fstar * fstar, "grad": grad, "P_x": P_x,
            "P_xi": 2.0 * grad, "P_xx": P_xx, "P_xxi": P_xxi,
            "P_xixi": 2.0 * ginv}


def energy_density_jet(fj: FieldJet, spec: MetricSpec) -> FieldJet:
    """FieldJet of e(u)(x) = F*^2(x, Du(x)); requires fj.d3u."""
    if fj.d3u is None:
        raise ValueError("energy density jet needs third derivatives d3u")
    P = _fstar2_partials(spec, fj.x, fj.du)
    n = spec.dim
    de = P["P_x"] + fj.d2u @ P["P_xi"]
    d2e = (P["P_xx"]
           + np.einsum("im,mj->ij", P["P_xxi"], fj.d2u)
           + np.einsum("jk,ki->ij", P["P_xxi"], fj.d2u)
           + np.einsum("km,ki,mj->ij", P["P_xixi"], fj.d2u, fj.d2u)
           + np.einsum("k,kij->ij", P["P_xi"], fj.d3u))
    return FieldJet(fj.x, P["value"], de, 0.5 * (d2e + d2e.T))


# ---------------------------------------------------------------------------
# Bochner-type residual and composition identity
# ---------------------------------------------------------------------------

def _gate(op: OperatorResult, gate_tol):
    tol = gate_tol if gate_tol is not None else 1e-6 * (1.0 + op.e)
    if abs(op.exp_lap) > tol:
        raise NotExpHarmonicAt(
            f"|hat-Delta u| = {abs(op.exp_lap):.3e} exceeds gate {tol:.3e}")


def bochner_residual(fj: FieldJet, spec: MetricSpec,
                     measure: Measure | None = None,
                     gate_tol: float | None = None) -> float:
    """Residual of the identity

        hat-Delta^{grad u} e = 2 Ric^inf(grad u) + 2 |grad2 u|^2_{HS(grad u)}
                               - (1/2) F*^2(De(u))

    for pointwise exponentially harmonic u (gated on |hat-Delta u|).
    """
    if not np.any(fj.du != 0.0):
        raise ZeroGradientReference("Bochner residual needs du != 0")
    op = exp_harmonic_operator(fj, spec, measure)
    _gate(op, gate_tol)
    ej = energy_density_jet(fj, spec)
    hat_e = hat_operator_applied(fj, spec, measure, ej.du, ej.d2u)

    grad = op.grad
    fr = FrameJets(spec, fj.x, grad, measure=measure, order=4)
    ric_inf_raw = float(np.trace(fr.riemann))
    _, s_dot = s_curvature(spec, fj.x, grad, measure)
    ric_inf_raw += s_dot

    H = op.hess
    hs2 = float(np.einsum("ik,jl,ij,kl->", fr.g_inv, fr.g_inv, H, H))
    _, fstar_de = legendre_dual(spec, fj.x, ej.du)
    return hat_e - (2.0 * ric_inf_raw + 2.0 * hs2 - 0.5 * fstar_de ** 2)


def composition_identity(fj: FieldJet, phi_prime, phi_second,
                         spec: MetricSpec, measure: Measure | None = None,
                         gate_tol: float | None = None) -> float:
    """Residual of hat-Delta^{grad u}(phi o u) = phi''(u) (e(u) + e(u)^2)
    on pointwise exponentially harmonic u."""
    op = exp_harmonic_operator(fj, spec, measure)
    _gate(op, gate_tol)
    p1 = float(phi_prime(fj.u))
    p2 = float(phi_second(fj.u))
    dw = p1 * fj.du
    d2w = p1 * fj.d2u + p2 * np.outer(fj.du, fj.du)
    if not np.any(fj.du != 0.0):
        # constant u: both sides vanish (e = 0)
        return 0.0
    hat_w = hat_operator_applied(fj, spec, measure, dw, d2w)
    return hat_w - p2 * (op.e + op.e ** 2)


# ---------------------------------------------------------------------------
# exponential energy functional on grids
# ---------------------------------------------------------------------------

def _cell_center_samples(field):
    """Cell-centered positions, Du, and cell volume for a 1-D or 2-D field."""
    dom = field.domain
    vals = np.asarray(field.values, dtype=float)
    bounds = np.asarray(dom.bounds, dtype=float)
    n = bounds.shape[0]
    res = dom.resolution
    hs = (bounds[:, 1] - bounds[:, 0]) / (res - 1)
    if n == 1:
        h = hs[0]
        centers = (bounds[0, 0] + h * (np.arange(res - 1) + 0.5))[:, None]
        du = ((vals[1:] - vals[:-1]) / h)[:, None]
        return centers, du, h
    if n == 2:
        hx, hy = hs
        cx = bounds[0, 0] + hx * (np.arange(res - 1) + 0.5)
        cy = bounds[1, 0] + hy * (np.arange(res - 1) + 0.5)
        centers = np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1)
        dux = (vals[1:, :-1] + vals[1:, 1:] - vals[:-1, :-1]
               - vals[:-1, 1:]) / (2 * hx)
        duy = (vals[:-1, 1:] + vals[1:, 1:] - vals[:-1, :-1]
               - vals[1:, :-1]) / (2 * hy)
        du = np.stack([dux, duy], axis=-1)
        return centers, du, hx * hy
    raise NotImplementedError("grid energies support 1-D and 2-D domains")


def exp_energy(field, spec: MetricSpec, measure: Measure | None = None) -> float:
    """E(u) = integral exp(F*^2(Du)/2) dmu by composite midpoint quadrature,
    with Du from the cell-centered differences of the nodal values."""
    measure = measure if measure is not None else spec.measure
    centers, du, vol = _cell_center_samples(field)
    _, fstar2 = legendre_batch(spec, centers, du)
    sigma = measure.sigma_array(spec, centers)
    return float(np.sum(np.exp(0.5 * fstar2) * sigma) * vol)


@dataclass
class VariationReport:
    numeric: float
    analytic: float
    weak_residual: float


def first_variation(field_u, field_v, spec: MetricSpec,
                    measure: Measure | None = None,
                    t_step: float = 1e-4) -> VariationReport:
    """d/dt E(u + t v) at t = 0, three ways.

    numeric: centered difference of the midpoint-quadrature energy;
    analytic: integral of V(u) Dv(grad u) dmu on the same quadrature;
    weak_residual: analytic + integral of tilde-Delta u * v dmu, which
    vanishes to grid tolerance (discrete integration by parts).
    """
    measure = measure if measure is not None else spec.measure
    _check_compact_support(field_v)
    vals_u = np.asarray(field_u.values, dtype=float)
    vals_v = np.asarray(field_v.values, dtype=float)

    up = _clone_with_values(field_u, vals_u + t_step * vals_v)
    um = _clone_with_values(field_u, vals_u - t_step * vals_v)
    numeric = (exp_energy(up, spec, measure)
               - exp_energy(um, spec, measure)) / (2 * t_step)

    centers, du, vol = _cell_center_samples(field_u)
    _, dv, _ = _cell_center_samples(field_v)
    grad, fstar2 = legendre_batch(spec, centers, du)
    sigma = measure.sigma_array(spec, centers)
    density = np.exp(0.5 * fstar2)
    analytic = float(np.sum(density * sigma
                            * np.einsum("...k,...k->...", dv, grad)) * vol)

    weak = analytic + _tilde_against(field_u, vals_v, spec, measure)
    return VariationReport(numeric, analytic, weak)


def _clone_with_values(field, values):
    import copy

    out = copy.copy(field)
    out.values = values
    return out


def _check_compact_support(field_v, collar: int = 2):
    v = np.asarray(field_v.values)
    n = v.ndim
    for axis in range(n):
        for sl in (slice(0, collar), slice(-collar, None)):
            idx = tuple(sl if a == axis else slice(None) for a in range(n))
            if np.any(v[idx] != 0.0):
                raise SupportViolation(
                    f"variation field nonzero on the {collar}-node boundary collar")


def _tilde_against(field_u, vals_v, spec, measure) -> float:
    """integral of tilde-Delta u * v dmu over nodes in the support of v."""
    dom = field_u.domain
    vals = np.asarray(field_u.values, dtype=float)
    bounds = np.asarray(dom.bounds, dtype=float)
    res = dom.resolution
    n = bounds.shape[0]
    hs = (bounds[:, 1] - bounds[:, 0]) / (res - 1)
    total = 0.0
    cellvol = float(np.prod(hs))
    support = np.argwhere(vals_v != 0.0)
    for idx in support:
        idx = tuple(idx)
        if any(i < 1 or i >= res - 1 for i in idx):
            continue
        fj = _central_field_jet(vals, bounds, hs, idx)
        op = exp_harmonic_operator(fj, spec, measure)
        sig = measure.sigma(spec, fj.x) if measure else 1.0
        total += op.tilde_lap * vals_v[idx] * sig * cellvol
    return total


def _central_field_jet(vals, bounds, hs, idx) -> FieldJet:
    """Second-order central-difference FieldJet at an interior node."""
    n = len(idx)
    x = np.array([bounds[a, 0] + idx[a] * hs[a] for a in range(n)])

    def at(off):
        return vals[tuple(idx[a] + off[a] for a in range(n))]

    du = np.empty(n)
    d2u = np.empty((n, n))
    for a in range(n):
        ea = [0] * n
        ea[a] = 1
        du[a] = (at(ea) - at([-o for o in ea])) / (2 * hs[a])
        d2u[a, a] = (at(ea) - 2 * at([0] * n) + at([-o for o in ea])) / hs[a] ** 2
        for b in range(a + 1, n):
            eb = [0] * n
            eb[b] = 1
            pp = [ea[c] + eb[c] for c in range(n)]
            pm = [ea[c] - eb[c] for c in range(n)]
            d2u[a, b] = d2u[b, a] = (at(pp) - at(pm)
                                     - at([-v for v in pm])
                                     + at([-v for v in pp])) / (4 * hs[a] * hs[b])
    return FieldJet(x, float(at([0] * n)), du, d2u)
