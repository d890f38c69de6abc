"""Spray, nonlinear connection, Chern connection, geodesics, transport.

``FrameJets`` is the shared pipeline: it expands F^2 at one sphere-bundle
point and derives every connection-level tensor from that single jet, so all
quantities are mutually consistent and carry no finite-difference noise.
Index conventions (natural coordinates, documented in docs/CONVENTIONS.md):

    G^i  = 1/4 g^{il} ( y^k d^2F^2/dx^k dy^l - dF^2/dx^l )
    N^i_j = dG^i/dy^j
    delta/delta x^i = d/dx^i - N^j_i d/dy^j
    Gamma^i_jk = 1/2 g^{il} ( dg_lj/dx^k + dg_lk/dx^j - dg_jk/dx^l )
                 with the horizontal delta-derivatives throughout
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import LeftChart, ZeroFiberVector
from .jets import TaylorPoly, jet_det, jet_matrix_inverse
from .metrics import Measure, MetricSpec, squared_metric_poly


class FrameJets:
    """All jet-level tensors of (spec, measure) at one point (x, y).

    ``order`` is the truncation order of the F^2 expansion: 2 suffices for
    spray values, 3 for connection coefficients and the S-curvature, 4 for
    curvature, S-dot, and the horizontal derivative of the Cartan tensor.
    """

    def __init__(self, spec: MetricSpec, x, y, measure: Measure | None = None,
                 order: int = 4):
        self.spec = spec
        self.measure = measure if measure is not None else spec.measure
        self.n = spec.dim
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if not np.any(self.y != 0.0):
            raise ZeroFiberVector("frame at y = 0")
        self.order = order
        self.F2 = squared_metric_poly(spec, self.x, self.y, order)
        self.space = self.F2.space

    def _require(self, order: int, what: str):
        if self.order < order:
            raise ValueError(f"{what} needs a jet of order >= {order}")

    # -- fundamental tensor ---------------------------------------------------

    @cached_property
    def y_polys(self):
        n = self.n
        return [TaylorPoly.variable(self.space, n + i, self.y[i])
                for i in range(n)]

    @cached_property
    def g_jets(self) -> np.ndarray:
        n = self.n
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            di = self.F2.partial(n + i)
            for j in range(i, n):
                out[i, j] = out[j, i] = di.partial(n + j) * 0.5
        return out

    @cached_property
    def g(self) -> np.ndarray:
        return np.array([[p.value for p in row] for row in self.g_jets])

    @cached_property
    def ginv_jets(self) -> np.ndarray:
        return jet_matrix_inverse(self.g_jets)

    @cached_property
    def g_inv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def F_value(self) -> float:
        return math.sqrt(self.F2.value)

    @cached_property
    def cartan_jets(self) -> np.ndarray:
        self._require(3, "Cartan tensor jets")
        n = self.n
        out = np.empty((n, n, n), dtype=object)
        for i in range(n):
            di = self.F2.partial(n + i)
            for j in range(i, n):
                dij = di.partial(n + j)
                for k in range(j, n):
                    val = dij.partial(n + k) * 0.25
                    for p, q, r in {(i, j, k), (i, k, j), (j, i, k),
                                    (j, k, i), (k, i, j), (k, j, i)}:
                        out[p, q, r] = val
        return out

    @cached_property
    def cartan(self) -> np.ndarray:
        C = self.cartan_jets
        return np.array([[[C[i, j, k].value for k in range(self.n)]
                          for j in range(self.n)] for i in range(self.n)])

    # -- spray / nonlinear connection ------------------------------------------

    @cached_property
    def spray_jets(self) -> np.ndarray:
        self._require(3, "spray jets")
        n = self.n
        rhs = []
        for l in range(n):
            dl = self.F2.partial(n + l)
            acc = None
            for k in range(n):
                term = self.y_polys[k] * dl.partial(k)
                acc = term if acc is None else acc + term
            rhs.append(acc - self.F2.partial(l))
        out = np.empty(n, dtype=object)
        for i in range(n):
            acc = None
            for l in range(n):
                term = self.ginv_jets[i, l] * rhs[l]
                acc = term if acc is None else acc + term
            out[i] = acc * 0.25
        return out

    @cached_property
    def spray(self) -> np.ndarray:
        return np.array([p.value for p in self.spray_jets])

    @cached_property
    def N_jets(self) -> np.ndarray:
        n = self.n
        return np.array([[self.spray_jets[i].partial(n + j) for j in range(n)]
                         for i in range(n)], dtype=object)

    @cached_property
    def N(self) -> np.ndarray:
        return np.array([[p.value for p in row] for row in self.N_jets])

    # -- horizontal derivative helpers -------------------------------------------

    def horizontal_partial_value(self, poly: TaylorPoly, i: int) -> float:
        """(delta f / delta x^i) at the base point for a jet f."""
        n = self.n
        val = poly.partial(i).value
        for j in range(n):
            val -= self.N[j, i] * poly.partial(n + j).value
        return val

    def horizontal_partial_poly(self, poly: TaylorPoly, i: int) -> TaylorPoly:
        n = self.n
        out = poly.partial(i)
        for j in range(n):
            out = out - self.N_jets[j, i] * poly.partial(n + j)
        return out

    # -- Chern connection ----------------------------------------------------------

    @cached_property
    def delta_g(self) -> np.ndarray:
        """delta g_ij / delta x^k, indexed [k, i, j]."""
        n = self.n
        out = np.empty((n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    v = self.horizontal_partial_value(self.g_jets[i, j], k)
                    out[k, i, j] = out[k, j, i] = v
        return out

    @cached_property
    def gamma(self) -> np.ndarray:
        """Chern connection coefficients Gamma^i_jk at (x, y)."""
        dg = self.delta_g
        n = self.n
        low = np.empty((n, n, n))
        for l in range(n):
            for j in range(n):
                for k in range(n):
                    low[l, j, k] = 0.5 * (dg[k, l, j] + dg[j, l, k] - dg[l, j, k])
        return np.einsum("il,ljk->ijk", self.g_inv, low)

    # -- curvature of the spray -----------------------------------------------------

    @cached_property
    def riemann(self) -> np.ndarray:
        """Spray curvature R^i_k assembled from first and second G-jets."""
        self._require(4, "spray curvature")
        n = self.n
        G = self.spray
        dG_dx = np.empty((n, n))
        dG_dy = np.empty((n, n))
        d2G_xy = np.empty((n, n, n))   # [i, j, k] = d^2 G^i / dx^j dy^k
        d2G_yy = np.empty((n, n, n))
        for i in range(n):
            for j in range(n):
                pj = self.spray_jets[i].partial(j)
                dG_dx[i, j] = pj.value
                pyj = self.spray_jets[i].partial(n + j)
                dG_dy[i, j] = pyj.value
                for k in range(n):
                    d2G_xy[i, j, k] = pj.partial(n + k).value
                    d2G_yy[i, j, k] = pyj.partial(n + k).value
        R = (2.0 * dG_dx
             - np.einsum("j,ijk->ik", self.y, d2G_xy)
             + 2.0 * np.einsum("j,ijk->ik", G, d2G_yy)
             - dG_dy @ dG_dy)
        return R

    # -- distortion and S-curvature ----------------------------------------------------

    @cached_property
    def tau_jet(self) -> TaylorPoly:
        det = jet_det(self.g_jets)
        sigma = self._sigma_jet()
        return det.log() * 0.5 - sigma.log()

    def _sigma_jet(self) -> TaylorPoly:
        n = self.n
        xs = [TaylorPoly.variable(self.space, i, self.x[i]) for i in range(n)]
        return self.measure.sigma_jet(self.spec, xs)

    @cached_property
    def tau(self) -> float:
        return self.tau_jet.value

    @cached_property
    def delta_tau(self) -> np.ndarray:
        """Horizontal derivative of the distortion, (delta tau/delta x^i)_i."""
        return np.array([self.horizontal_partial_value(self.tau_jet, i)
                         for i in range(self.n)])

    @cached_property
    def S_jet(self) -> TaylorPoly:
        self._require(4, "S-curvature jet")
        acc = None
        for i in range(self.n):
            term = self.y_polys[i] * self.horizontal_partial_poly(self.tau_jet, i)
            acc = term if acc is None else acc + term
        return acc

    @cached_property
    def S(self) -> float:
        return float(self.y @ self.delta_tau)

    @cached_property
    def S_dot_jet_route(self) -> float:
        """Second flow derivative of the distortion via jets (cross-check)."""
        return float(sum(self.y[i] * self.horizontal_partial_value(self.S_jet, i)
                         for i in range(self.n)))

    def spray_values(self) -> np.ndarray:
        """Spray values straight from the jet; order 2 suffices."""
        n = self.n
        rhs = np.empty(n)
        for l in range(n):
            dl = self.F2.partial(n + l)
            acc = -self.F2.partial(l).value
            for k in range(n):
                acc += self.y[k] * dl.partial(k).value
            rhs[l] = acc
        return 0.25 * (self.g_inv @ rhs)


# ---------------------------------------------------------------------------
# public connection operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionFrame:
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    spray: np.ndarray
    nonlinear: np.ndarray
    gamma: np.ndarray


def spray_coeffs(spec: MetricSpec, x, y) -> np.ndarray:
    """Spray coefficients G^i(x, y); 2-homogeneous in y."""
    return FrameJets(spec, x, y, order=2).spray_values()


def nonlinear_connection(spec: MetricSpec, x, y) -> np.ndarray:
    """N^i_j = dG^i/dy^j; satisfies the Euler identity y^j N^i_j = 2 G^i."""
    return FrameJets(spec, x, y, order=3).N


def chern_connection(spec: MetricSpec, x, y,
                     measure: Measure | None = None) -> ConnectionFrame:
    fj = FrameJets(spec, x, y, measure=measure, order=3)
    return ConnectionFrame(fj.x, fj.y, fj.g, fj.g_inv, fj.spray, fj.N, fj.gamma)


def chern_gamma_values(spec: MetricSpec, x, y) -> np.ndarray:
    return FrameJets(spec, x, y, order=3).gamma


def horizontal_derivative(evaluator, spec: MetricSpec, x, y,
                          measure: Measure | None = None) -> np.ndarray:
    """Horizontal Chern derivative of a tensor field at (x, y).

    ``evaluator(frame)`` must return ``(components, variance)`` where
    ``components`` is an object ndarray of jets in ``frame.space`` (rank 0
    allowed: a bare TaylorPoly) and ``variance`` is a tuple of "up"/"low"
    flags per index.  The result gains one leading covariant index:
    out[i, ...] = delta T/delta x^i with Gamma corrections per slot.
    """
    frame = FrameJets(spec, x, y, measure=measure, order=4)
    comps, variance = evaluator(frame)
    n = frame.n
    if isinstance(comps, TaylorPoly):
        comps = np.array(comps, dtype=object)
    rank = comps.ndim
    if len(variance) != rank:
        raise ValueError("variance length must match tensor rank")
    gamma = frame.gamma
    out = np.zeros((n,) + comps.shape)
    for idx in np.ndindex(comps.shape) if rank else [()]:
        poly = comps[idx] if rank else comps[()]
        for i in range(n):
            out[(i,) + idx] = frame.horizontal_partial_value(poly, i)
    for s, var in enumerate(variance):
        for idx in np.ndindex(comps.shape):
            vals = np.array([comps[idx[:s] + (m,) + idx[s + 1:]].value
                             for m in range(n)])
            for i in range(n):
                if var == "low":
                    out[(i,) + idx] -= gamma[:, i, idx[s]] @ vals
                else:
                    out[(i,) + idx] += gamma[idx[s], i, :] @ vals
    return out


def metric_evaluator(frame: FrameJets):
    """Evaluator for g_ij, for almost-metric-compatibility checks."""
    return frame.g_jets, ("low", "low")


def squared_norm_evaluator(frame: FrameJets):
    """Evaluator for the scalar F^2 (horizontally constant)."""
    return frame.F2, ()


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------

@dataclass
class GeodesicPath:
    """Sampled solution of xdd + 2G(x, xd) = 0 (or any sampled curve)."""

    ts: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    step: float
    drift: float

    def state(self, t: float):
        """Cubic-Hermite interpolated (x, v) at parameter t."""
        ts = self.ts
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        x0, x1 = self.xs[k], self.xs[k + 1]
        v0, v1 = self.vs[k], self.vs[k + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        x = h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
        d00 = 6 * s**2 - 6 * s
        d10 = 3 * s**2 - 4 * s + 1
        d01 = -6 * s**2 + 6 * s
        d11 = 3 * s**2 - 2 * s
        v = (d00 * x0 + d01 * x1) / h + d10 * v0 + d11 * v1
        return x, v


def integrate_geodesic(spec: MetricSpec, x0, y0, t_max: float,
                       step: float = 1e-3) -> GeodesicPath:
    """Classical fixed-step RK4 for the spray ODE; negative t_max integrates
    backwards.  Raises LeftChart when the path exits the chart box."""
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(y0, dtype=float).copy()
    if not np.any(v != 0.0):
        raise ZeroFiberVector("geodesic with zero initial velocity")
    if step <= 0:
        raise ValueError("step must be positive")
    h = step if t_max >= 0 else -step
    nsteps = max(1, int(round(abs(t_max) / step)))

    def rhs(state):
        xx, vv = state
        return vv, -2.0 * spray_coeffs(spec, xx, vv)

    F0 = spec.F(x, v)
    ts = [0.0]
    xs = [x.copy()]
    vs = [v.copy()]
    drift = 0.0
    t = 0.0
    for _ in range(nsteps):
        k1x, k1v = rhs((x, v))
        k2x, k2v = rhs((x + 0.5 * h * k1x, v + 0.5 * h * k1v))
        k3x, k3v = rhs((x + 0.5 * h * k2x, v + 0.5 * h * k2v))
        k4x, k4v = rhs((x + h * k3x, v + h * k3v))
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        t += h
        if not spec.chart.contains(x):
            raise LeftChart(f"geodesic left chart box at t={t:.6g}, x={x.tolist()}")
        ts.append(t)
        xs.append(x.copy())
        vs.append(v.copy())
        drift = max(drift, abs(spec.F(x, v) - F0))
    return GeodesicPath(np.array(ts), np.array(xs), np.array(vs), step, drift)


def parallel_transport(spec: MetricSpec, path: GeodesicPath, v0,
                       reference: str = "path_velocity",
                       ref_vector=None) -> np.ndarray:
    """Transport v0 along the path: vd^m + Gamma^m_jk(x, ref) xd^j v^k = 0.

    reference: 'path_velocity' uses the interpolated curve velocity as the
    Chern reference vector; 'fixed_field' uses the constant ``ref_vector``.
    Returns the transported vectors at the path sample times.
    """
    if reference not in ("path_velocity", "fixed_field"):
        raise ValueError("reference must be 'path_velocity' or 'fixed_field'")
    if reference == "fixed_field" and ref_vector is None:
        raise ValueError("fixed_field reference needs ref_vector")
    w = np.asarray(v0, dtype=float).copy()
    if not np.any(w != 0.0):
        raise ZeroFiberVector("transport of the zero vector")
    out = [w.copy()]

    def wdot(t, wv):
        xx, vv = path.state(t)
        if not spec.chart.contains(xx, margin=1e-9):
            raise LeftChart(f"transport path left chart at t={t:.6g}")
        ref = vv if reference == "path_velocity" else np.asarray(ref_vector, float)
        gam = chern_gamma_values(spec, xx, ref)
        return -np.einsum("mjk,j,k->m", gam, vv, wv)

    for k in range(len(path.ts) - 1):
        t0, t1 = path.ts[k], path.ts[k + 1]
        h = t1 - t0
        k1 = wdot(t0, w)
        k2 = wdot(t0 + 0.5 * h, w + 0.5 * h * k1)
        k3 = wdot(t0 + 0.5 * h, w + 0.5 * h * k2)
        k4 = wdot(t1, w + h * k3)
        w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(w.copy())
    return np.array(out)


def sampled_path(ts, xs, vs) -> GeodesicPath:
    """Wrap an arbitrary sampled curve (e.g. a holonomy loop) as a path."""
    ts = np.asarray(ts, dtype=float)
    return GeodesicPath(ts, np.asarray(xs, dtype=float),
                        np.asarray(vs, dtype=float),
                        float(ts[1] - ts[0]), float("nan"))
