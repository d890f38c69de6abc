"""Curvature and measure-coupled tensors of a Finsler metric-measure space.

Covers the spray (flag) curvature, distortion, S-curvature and its flow
derivative, weighted and mixed weighted Ricci curvature, the non-Riemannian
tensors T(Y, W), U(y, W) and div C with their norms, the comparison function
ct_c, and a numerical probe of the nonlinear Laplacian comparison bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .connection import FrameJets, chern_gamma_values, integrate_geodesic
from .distance import make_distance_model
from .errors import DomainError, InvalidK
from .metrics import (
    Measure,
    MetricSpec,
    fundamental_tensor_batch,
    legendre_dual,
    misalignment,
)


class MinusInfinityType:
    """Explicit marker for Ric^n with nonzero S-curvature (never a float)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MINUS_INFINITY"


MINUS_INFINITY = MinusInfinityType()

# |S| below this (at F-unit y) counts as the S = 0 branch of Ric^n
S_ZERO_TOL = 1e-10


# ---------------------------------------------------------------------------
# spray curvature
# ---------------------------------------------------------------------------

def riemann_curvature(spec: MetricSpec, x, y) -> np.ndarray:
    """Spray curvature R^i_k(x, y) (the Jacobi-operator matrix)."""
    return FrameJets(spec, x, y, order=4).riemann


def flag_curvature(spec: MetricSpec, x, y, e) -> float:
    """K(y, e) = g_y(R_y e, e) / (g(y,y) g(e,e) - g(y,e)^2)."""
    fr = FrameJets(spec, x, y, order=4)
    e = np.asarray(e, dtype=float)
    R = fr.riemann
    g = fr.g
    num = float(e @ g @ (R @ e))
    den = float((fr.y @ g @ fr.y) * (e @ g @ e) - (fr.y @ g @ e) ** 2)
    if abs(den) < 1e-14:
        raise ValueError("degenerate flag: e parallel to y")
    return num / den


# ---------------------------------------------------------------------------
# distortion and S-curvature
# ---------------------------------------------------------------------------

def distortion(spec: MetricSpec, x, y, measure: Measure | None = None) -> float:
    """tau(x, y) = log( sqrt(det g(x,y)) / sigma(x) )."""
    return FrameJets(spec, x, y, measure=measure, order=2).tau


def _distortion_from_frame(spec, x, y, measure):
    return FrameJets(spec, x, y, measure=measure, order=2).tau


def _geodesic_flow_samples(spec, x, y, h: float, measure):
    """States of the y-geodesic at t = -2h, -h, +h, +2h."""
    fwd = integrate_geodesic(spec, x, y, 2 * h, step=h)
    back = integrate_geodesic(spec, x, y, -2 * h, step=h)
    return [(back.xs[2], back.vs[2]), (back.xs[1], back.vs[1]),
            (fwd.xs[1], fwd.vs[1]), (fwd.xs[2], fwd.vs[2])]


def s_curvature(spec: MetricSpec, x, y,
                measure: Measure | None = None) -> tuple[float, float]:
    """(S, S_dot) at (x, y).

    S comes from the horizontal jet derivative of the distortion; S_dot is
    the five-point flow derivative of S along the integrated y-geodesic,
    which is the defining route (the geodesic is the ground truth for a
    derivative taken along the geodesic flow).
    """
    fr = FrameJets(spec, x, y, measure=measure, order=3)
    S0 = fr.S
    h = 1e-3
    states = _geodesic_flow_samples(spec, x, y, h, measure)
    svals = [FrameJets(spec, xx, vv, measure=measure, order=3).S
             for xx, vv in states]
    s_dot = (svals[0] - 8 * svals[1] + 8 * svals[2] - svals[3]) / (12 * h)
    return S0, s_dot


def s_curvature_routes(spec: MetricSpec, x, y,
                       measure: Measure | None = None) -> dict:
    """Both routes for S and S_dot, for cross-checking.

    S: (a) horizontal jet derivative, (b) five-point FD of tau along the
    geodesic.  S_dot: (a) five-point FD of S along the geodesic, (b) second
    horizontal jet derivative.
    """
    fr = FrameJets(spec, x, y, measure=measure, order=4)
    h = 1e-3
    states = _geodesic_flow_samples(spec, x, y, h, measure)
    taus = [_distortion_from_frame(spec, xx, vv, measure) for xx, vv in states]
    svals = [FrameJets(spec, xx, vv, measure=measure, order=3).S
             for xx, vv in states]
    return {
        "S_jet": fr.S,
        "S_geodesic_fd": (taus[0] - 8 * taus[1] + 8 * taus[2] - taus[3]) / (12 * h),
        "S_dot_geodesic_fd": (svals[0] - 8 * svals[1] + 8 * svals[2]
                              - svals[3]) / (12 * h),
        "S_dot_jet": fr.S_dot_jet_route,
    }


# ---------------------------------------------------------------------------
# weighted and mixed weighted Ricci curvature
# ---------------------------------------------------------------------------

def _check_k(k, n):
    if k == math.inf:
        return
    if not (k >= n):
        raise InvalidK(f"k = {k} must lie in [n, inf] with n = {n}")


def _ric_test_quantities(spec, x, y, measure):
    """(Ric trace, S, S_dot) at the F-unit rescaling of y."""
    F = spec.F(x, y)
    yu = np.asarray(y, dtype=float) / F
    ric = float(np.trace(FrameJets(spec, x, yu, order=4).riemann))
    S, S_dot = s_curvature(spec, x, yu, measure)
    return ric, S, S_dot, yu


def weighted_ricci(spec: MetricSpec, x, y, k,
                   measure: Measure | None = None):
    """Ric^k(y) for k in [n, inf]; y is rescaled to F-unit length.

    Returns MINUS_INFINITY for k = n with S != 0, per the definition.
    """
    _check_k(k, spec.dim)
    ric, S, S_dot, _ = _ric_test_quantities(spec, x, y, measure)
    return _apply_s_correction(ric, S, S_dot, k, spec.dim)


def _apply_s_correction(trace_part, S, S_dot, k, n):
    if k == math.inf:
        return trace_part + S_dot
    if k == n:
        if abs(S) <= S_ZERO_TOL:
            return trace_part + S_dot
        return MINUS_INFINITY
    return trace_part + S_dot - S * S / (k - n)


def mixed_weighted_ricci(spec: MetricSpec, x, Y, W, k,
                         measure: Measure | None = None):
    """^mRic^k_W(Y): flag-curvature trace taken with g(x, W).

    tr_W R_Y(Y) = g^{ij}(W) g_{mj}(Y) R^m_i(Y) in the coordinate frame; the
    S-curvature corrections are those of Ric^k(Y).  W = Y reduces to the
    plain weighted Ricci curvature.
    """
    _check_k(k, spec.dim)
    W = np.asarray(W, dtype=float)
    ric_unused, S, S_dot, yu = _ric_test_quantities(spec, x, Y, measure)
    frY = FrameJets(spec, x, yu, order=4)
    gW = fundamental_tensor_batch(spec, x, W[None])[0]
    trace_w = float(np.einsum("ij,mj,mi->", np.linalg.inv(gW), frY.g,
                              frY.riemann))
    return _apply_s_correction(trace_w, S, S_dot, k, spec.dim)


# ---------------------------------------------------------------------------
# non-Riemannian tensors: T, U, div C
# ---------------------------------------------------------------------------

def t_tensor(spec: MetricSpec, x, Y, W, measure: Measure | None = None):
    """T_i(Y, W) = (delta tau/delta x^i)(x, Y) - (delta tau/delta x^i)(x, W).

    Returns (covector, F*(T)).  Antisymmetric in (Y, W) by construction.
    """
    dY = FrameJets(spec, x, Y, measure=measure, order=3).delta_tau
    dW = FrameJets(spec, x, W, measure=measure, order=3).delta_tau
    cov = dY - dW
    _, fstar = legendre_dual(spec, x, cov)
    return cov, fstar


def _osculating_christoffel(fr: FrameJets) -> np.ndarray:
    """Levi-Civita symbols of ghat(z) = g(z, Y(z)) for the geodesic
    extension Y of y (radial derivative forced by the spray, transversal
    derivatives zero at the base point)."""
    n = fr.n
    dg_dx = np.empty((n, n, n))
    for kk in range(n):
        for i in range(n):
            for j in range(i, n):
                v = fr.g_jets[i, j].partial(kk).value
                dg_dx[kk, i, j] = dg_dx[kk, j, i] = v
    ell = fr.g @ fr.y
    F2 = fr.F2.value
    dY = -2.0 * np.outer(fr.spray, ell) / F2       # dY^m/dx^k
    dghat = dg_dx + 2.0 * np.einsum("ijm,mk->kij", fr.cartan, dY)
    low = np.empty((n, n, n))
    for s in range(n):
        for j in range(n):
            for l in range(n):
                low[s, j, l] = 0.5 * (dghat[j, s, l] + dghat[l, s, j]
                                      - dghat[s, j, l])
    return np.einsum("ms,sjl->mjl", fr.g_inv, low)


def u_tensor(spec: MetricSpec, x, y, W, frame: np.ndarray | None = None):
    """U(y, W) = sum_i (D^W_{e_i} E_i - Dhat_{e_i} E_i); returns (U, F(U)).

    The derivative terms of any extension E_i cancel in the difference, so U
    reduces to the g(x,y)-trace of Gamma(x, W) minus the Levi-Civita symbols
    of the osculating metric g_Y (documented convention for the geodesic
    extension Y).  ``frame`` optionally supplies the g(x,y)-orthonormal
    frame {e_i} as rows; the sum is frame-independent.
    """
    fr = FrameJets(spec, x, y, order=3)
    gamma_W = chern_gamma_values(spec, x, W)
    gamma_hat = _osculating_christoffel(fr)
    diff = gamma_W - gamma_hat
    if frame is None:
        L = np.linalg.cholesky(fr.g)
        frame = np.linalg.inv(L)                   # rows are g-orthonormal
    U = np.einsum("aj,al,mjl->m", frame, frame, diff)
    norm = spec.F(x, U) if np.any(np.abs(U) > 0.0) else 0.0
    return U, norm


def u_radial_residual(spec: MetricSpec, x, y) -> float:
    """|(Gamma(x,y) - Gammahat) y y|: the radial cancellation diagnostic."""
    fr = FrameJets(spec, x, y, order=3)
    diff = fr.gamma - _osculating_christoffel(fr)
    return float(np.linalg.norm(np.einsum("mjl,j,l->m", diff, fr.y, fr.y)))


def div_cartan(spec: MetricSpec, x, y, V, measure: Measure | None = None):
    """div C = F C^i_{jk|i} dx^j otimes dx^k and its HS norm w.r.t. g(x, V)."""
    fr = FrameJets(spec, x, y, measure=measure, order=4)
    n = fr.n
    Cup = np.empty((n, n, n), dtype=object)        # C^i_jk as jets
    for i in range(n):
        for j in range(n):
            for k in range(j, n):
                acc = None
                for l in range(n):
                    term = fr.ginv_jets[i, l] * fr.cartan_jets[l, j, k]
                    acc = term if acc is None else acc + term
                Cup[i, j, k] = Cup[i, k, j] = acc
    Cval = np.array([[[Cup[i, j, k].value for k in range(n)]
                      for j in range(n)] for i in range(n)])
    gamma = fr.gamma
    div = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            for i in range(n):
                div[j, k] += fr.horizontal_partial_value(Cup[i, j, k], i)
    # Gamma corrections of the contracted covariant derivative
    div += np.einsum("iim,mjk->jk", gamma, Cval)
    div -= np.einsum("mij,imk->jk", gamma, Cval)
    div -= np.einsum("mik,ijm->jk", gamma, Cval)
    divC = fr.F_value * div
    gV = fundamental_tensor_batch(spec, x, np.asarray(V, float)[None])[0]
    gVinv = np.linalg.inv(gV)
    hs = math.sqrt(float(np.einsum("jp,kq,jk,pq->", gVinv, gVinv, divC, divC)))
    return divC, hs


# ---------------------------------------------------------------------------
# comparison function and Laplacian comparison probe
# ---------------------------------------------------------------------------

def comparison_ct(c: float, r: float) -> float:
    """ct_c(r): sqrt(c) cot(sqrt(c) r) / 1/r / sqrt(-c) coth(sqrt(-c) r)."""
    if r <= 0:
        raise DomainError("ct_c needs r > 0")
    if c > 0:
        rc = math.sqrt(c)
        if r >= math.pi / rc:
            raise DomainError(f"ct_c undefined at r >= pi/sqrt(c) = {math.pi/rc}")
        return rc / math.tan(rc * r)
    if c == 0:
        return 1.0 / r
    rc = math.sqrt(-c)
    return rc / math.tanh(rc * r)


@dataclass
class ComparisonRow:
    x: np.ndarray
    r: float
    laplacian: float
    bound: float
    margin: float


@dataclass
class ComparisonProbe:
    N: float
    alpha: float
    C: float
    K: float
    ell: float
    rows: list = field(default_factory=list)


def laplacian_comparison_probe(spec: MetricSpec, measure: Measure | None,
                               x0, sample_points, N: float,
                               reference_field=None) -> ComparisonProbe:
    """Tabulate Delta^V r against C(N, alpha) ct_{-l}(r) at the samples.

    The curvature lower bound K is measured from the module outputs
    (min of Ric^N along the radial directions, clipped at 0), alpha from the
    misalignment at x0, C(N, alpha) = N + (alpha - 1) n - alpha, and
    l = K / C(N, alpha).  V defaults to the gradient of r itself;
    ``reference_field(x)`` may supply another reference covector.
    """
    from .operators import FieldJet, finsler_laplacian

    n = spec.dim
    if not (N > n) and N != n:
        raise InvalidK(f"N = {N} must be >= n = {n}")
    model = make_distance_model(spec, x0)
    alpha = misalignment(spec, x0, 32)
    C = N + (alpha - 1.0) * n - alpha
    if C <= 0:
        raise DomainError(f"C(N, alpha) = {C} <= 0")

    jets = []
    wric_vals = []
    for xx in sample_points:
        dj = model.eval(xx)
        jets.append((np.asarray(xx, dtype=float), dj))
        grad_r, _ = legendre_dual(spec, xx, dj.dr)
        val = weighted_ricci(spec, xx, grad_r, N, measure)
        if not isinstance(val, MinusInfinityType):
            wric_vals.append(val)
    K = max(0.0, -min(wric_vals)) if wric_vals else 0.0
    ell = K / C

    probe = ComparisonProbe(N=N, alpha=alpha, C=C, K=K, ell=ell)
    for xx, dj in jets:
        if reference_field is not None:
            ref_cov = np.asarray(reference_field(xx), dtype=float)
            V, _ = legendre_dual(spec, xx, ref_cov)
        else:
            V = None
        fj = FieldJet(x=xx, u=dj.r, du=dj.dr, d2u=dj.d2r)
        lap = finsler_laplacian(fj, spec, measure, reference=V)
        bound = C * comparison_ct(-ell, dj.r)
        probe.rows.append(ComparisonRow(xx, dj.r, lap, bound, lap - bound))
    return probe


# ---------------------------------------------------------------------------
# per-point curvature report
# ---------------------------------------------------------------------------

@dataclass
class CurvatureReport:
    x: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    riemann: np.ndarray
    ricci: float
    s_curv: float
    s_dot: float
    wric: dict
    mixed_wric: dict
    t_cov: np.ndarray
    t_norm: float
    t_antisym_residual: float
    u_vec: np.ndarray
    u_norm: float
    divc_norm: float
    alpha: float


def curvature_report(spec: MetricSpec, x, Y, W, ks=(math.inf,),
                     measure: Measure | None = None,
                     misalignment_resolution: int = 32) -> CurvatureReport:
    """Full per-(x, Y, W) record; Y and W are rescaled to F-unit length."""
    x = np.asarray(x, dtype=float)
    Y = np.asarray(Y, dtype=float) / spec.F(x, Y)
    W = np.asarray(W, dtype=float) / spec.F(x, W)
    fr = FrameJets(spec, x, Y, measure=measure, order=4)
    R = fr.riemann
    ric = float(np.trace(R))
    S, S_dot = s_curvature(spec, x, Y, measure)
    wric = {k: _apply_s_correction(ric, S, S_dot, k, spec.dim) for k in ks}
    mixed = {k: mixed_weighted_ricci(spec, x, Y, W, k, measure) for k in ks}
    t_cov, t_norm = t_tensor(spec, x, Y, W, measure)
    t_back, _ = t_tensor(spec, x, W, Y, measure)
    u_vec, u_norm = u_tensor(spec, x, Y, W)
    _, divc_norm = div_cartan(spec, x, Y, W, measure)
    alpha = misalignment(spec, x, misalignment_resolution)
    return CurvatureReport(
        x=x, Y=Y, W=W, riemann=R, ricci=ric, s_curv=S, s_dot=S_dot,
        wric=wric, mixed_wric=mixed, t_cov=t_cov, t_norm=t_norm,
        t_antisym_residual=float(np.linalg.norm(t_cov + t_back)),
        u_vec=u_vec, u_norm=u_norm, divc_norm=divc_norm, alpha=alpha)
