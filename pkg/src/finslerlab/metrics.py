"""Metric families, the fundamental/Cartan tensors, and the Legendre dual.

Every family shipped here (Euclidean, Riemannian, Randers, conformal
rescalings of those) can be written as

    F(x, y) = sqrt(y^T A(x) y) + b(x) . y

with A symmetric positive definite and |b|_A < 1, which is what the
construction validator enforces on a sample net of the chart.  The uniform
(A, b) form gives closed-form evaluations of F and of the fundamental tensor
for the batched hot paths, while all higher derivatives come from exact
Taylor jets of F^2 in the 2n variables (x, y).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LegendreNoConvergence,
    NonpositiveDensity,
    NotStronglyConvex,
    SingularMetric,
    ZeroFiberVector,
)
from .expressions import Expression
from .jets import TaylorPoly, jet_space

_ZERO_TOL = 0.0  # exact zero test for fiber vectors


# ---------------------------------------------------------------------------
# chart box and measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lows: tuple
    highs: tuple

    @classmethod
    def cube(cls, dim: int, halfwidth: float = 10.0):
        return cls(tuple([-halfwidth] * dim), tuple([halfwidth] * dim))

    def contains(self, x, margin: float = 0.0) -> bool:
        return all(lo - margin <= xi <= hi + margin
                   for xi, lo, hi in zip(x, self.lows, self.highs))

    def sample_points(self) -> np.ndarray:
        """Deterministic net: center, corners, and interior probes."""
        n = len(self.lows)
        lo, hi = np.array(self.lows), np.array(self.highs)
        mid = (lo + hi) / 2
        pts = [mid]
        for mask in range(2 ** n):
            corner = np.where([(mask >> i) & 1 for i in range(n)], hi, lo)
            pts.append(corner)
        for frac in (0.25, 0.4, 0.65, 0.8):
            pts.append(lo + frac * (hi - lo))
        return np.array(pts)


class Measure:
    """Volume measure d(mu) = sigma(x) dx.

    kinds: 'lebesgue' (sigma = 1), 'density' (user expression), and
    'riemannian_volume' (sigma = sqrt(det A(x)); quadratic specs only).
    """

    def __init__(self, kind: str = "lebesgue", density: Expression | None = None):
        if kind not in ("lebesgue", "density", "riemannian_volume"):
            raise ValueError(f"unknown measure kind {kind!r}")
        if kind == "density" and density is None:
            raise ValueError("density measure needs an expression")
        self.kind = kind
        self.density = density

    def sigma(self, spec: "MetricSpec", x) -> float:
        if self.kind == "lebesgue":
            return 1.0
        if self.kind == "density":
            s = float(self.density(np.asarray(x, dtype=float)))
            if s <= 0.0:
                raise NonpositiveDensity(f"sigma({x}) = {s} <= 0")
            return s
        A, _ = spec.quadratic_form(x)
        return math.sqrt(np.linalg.det(A))

    def sigma_array(self, spec: "MetricSpec", X: np.ndarray) -> np.ndarray:
        """Vectorized density; X has shape (..., n)."""
        if self.kind == "lebesgue":
            return np.ones(X.shape[:-1])
        if self.kind == "density":
            s = np.asarray(self.density([X[..., i] for i in range(X.shape[-1])]),
                           dtype=float)
            s = np.broadcast_to(s, X.shape[:-1]).copy()
            if np.any(s <= 0.0):
                raise NonpositiveDensity("sigma <= 0 on evaluation grid")
            return s
        A, _ = spec.quadratic_form_batch(X)
        return np.sqrt(np.linalg.det(A))

    def sigma_jet(self, spec: "MetricSpec", xs) -> TaylorPoly:
        """sigma as a jet in the chart variables."""
        if self.kind == "lebesgue":
            return TaylorPoly.constant(xs[0].space, 1.0, xs[0].order)
        if self.kind == "density":
            return self.density.eval_jet(xs)
        A = spec.quadratic_form_jets(xs)[0]
        from .jets import jet_det
        return jet_det(A).sqrt()

    def describe(self) -> str:
        if self.kind == "density":
            return f"density:{self.density.source}"
        return self.kind


# ---------------------------------------------------------------------------
# metric spec
# ---------------------------------------------------------------------------

_FAMILIES = ("euclidean", "riemannian", "randers", "conformal")


class MetricSpec:
    """A parametric Finsler metric family on a chart box with a measure.

    Immutable by convention; all tensor computations derive from it.
    """

    def __init__(self, family: str, dim: int, *, a=None, b=None, phi=None,
                 base: "MetricSpec | None" = None,
                 measure: Measure | None = None, chart: Box | None = None,
                 validate: bool = True):
        if family not in _FAMILIES:
            raise NotStronglyConvex(f"unknown metric family {family!r}")
        if dim < 1:
            raise NotStronglyConvex("dimension must be >= 1")
        self.family = family
        self.dim = dim
        self.a = a
        self.b = b
        self.phi = phi
        self.base = base
        self.measure = measure if measure is not None else Measure()
        self.chart = chart if chart is not None else Box.cube(dim)

        if family == "riemannian" and a is None:
            raise NotStronglyConvex("riemannian family needs matrix a")
        if family == "randers" and (a is None or b is None):
            raise NotStronglyConvex("randers family needs a and b")
        if family == "conformal" and (phi is None or base is None):
            raise NotStronglyConvex("conformal family needs phi and a base spec")
        if family == "conformal" and base.dim != dim:
            raise NotStronglyConvex("conformal base has mismatched dimension")

        if validate:
            self._validate_construction()

    # -- uniform (A, b) closed form -----------------------------------------

    def quadratic_form(self, x):
        """(A(x), b(x)) of F = sqrt(y^T A y) + b.y at a single point."""
        x = np.asarray(x, dtype=float)
        if self.family == "euclidean":
            return np.eye(self.dim), np.zeros(self.dim)
        if self.family in ("riemannian", "randers"):
            A = np.array([[float(self.a[i, j](x)) for j in range(self.dim)]
                          for i in range(self.dim)])
            A = 0.5 * (A + A.T)
            if self.family == "riemannian":
                return A, np.zeros(self.dim)
            bv = np.array([float(self.b[i](x)) for i in range(self.dim)])
            return A, bv
        c = math.exp(float(self.phi(x)))
        A0, b0 = self.base.quadratic_form(x)
        return (c * c) * A0, c * b0

    def quadratic_form_batch(self, X: np.ndarray):
        """Vectorized (A, b); X shape (..., n) -> A (..., n, n), b (..., n)."""
        X = np.asarray(X, dtype=float)
        shape = X.shape[:-1]
        n = self.dim
        if self.family == "euclidean":
            A = np.broadcast_to(np.eye(n), shape + (n, n)).copy()
            return A, np.zeros(shape + (n,))
        env = [X[..., i] for i in range(n)]
        if self.family in ("riemannian", "randers"):
            A = np.empty(shape + (n, n))
            for i in range(n):
                for j in range(n):
                    A[..., i, j] = self.a[i, j](env)
            A = 0.5 * (A + np.swapaxes(A, -1, -2))
            bv = np.zeros(shape + (n,))
            if self.family == "randers":
                for i in range(n):
                    bv[..., i] = self.b[i](env)
            return A, bv
        c = np.exp(np.asarray(self.phi(env), dtype=float))
        c = np.broadcast_to(c, shape)
        A0, b0 = self.base.quadratic_form_batch(X)
        return (c * c)[..., None, None] * A0, c[..., None] * b0

    def quadratic_form_jets(self, xs):
        """(A, b) with entries as jets of the chart variables."""
        n = self.dim
        space, order = xs[0].space, xs[0].order
        if self.family == "euclidean":
            A = np.array([[TaylorPoly.constant(space, 1.0 if i == j else 0.0, order)
                           for j in range(n)] for i in range(n)], dtype=object)
            bz = np.array([TaylorPoly.constant(space, 0.0, order)
                           for _ in range(n)], dtype=object)
            return A, bz
        if self.family in ("riemannian", "randers"):
            A = np.empty((n, n), dtype=object)
            for i in range(n):
                for j in range(i, n):
                    A[i, j] = (self.a[i, j].eval_jet(xs)
                               + self.a[j, i].eval_jet(xs)) * 0.5
                    A[j, i] = A[i, j]
            if self.family == "randers":
                bv = np.array([self.b[i].eval_jet(xs) for i in range(n)],
                              dtype=object)
            else:
                bv = np.array([TaylorPoly.constant(space, 0.0, order)
                               for _ in range(n)], dtype=object)
            return A, bv
        c = self.phi.eval_jet(xs).exp()
        A0, b0 = self.base.quadratic_form_jets(xs)
        c2 = c * c
        A = np.array([[c2 * A0[i, j] for j in range(n)] for i in range(n)],
                     dtype=object)
        bv = np.array([c * b0[i] for i in range(n)], dtype=object)
        return A, bv

    @property
    def is_quadratic(self) -> bool:
        """True when F^2 is quadratic in y (Riemannian class)."""
        if self.family in ("euclidean", "riemannian"):
            return True
        if self.family == "conformal":
            return self.base.is_quadratic
        return False

    # -- construction validation ---------------------------------------------

    def _validate_construction(self):
        if self.measure.kind == "riemannian_volume" and not self.is_quadratic:
            raise NotStronglyConvex(
                "riemannian_volume measure requires a quadratic (Riemannian) family")
        dirs = _sphere_directions(self.dim, 16)
        for x in self.chart.sample_points():
            A, bv = self.quadratic_form(x)
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError:
                raise NotStronglyConvex(
                    f"quadratic part not positive definite at x={x.tolist()}")
            bnorm = math.sqrt(float(bv @ np.linalg.solve(A, bv)))
            if bnorm >= 1.0 - 1e-12:
                raise NotStronglyConvex(
                    f"drift norm |b|_a = {bnorm:.6f} >= 1 at x={x.tolist()}")
            G = fundamental_tensor_batch(self, x, dirs)
            eigs = np.linalg.eigvalsh(G)
            if np.min(eigs) <= 0.0:
                raise NotStronglyConvex(
                    f"fundamental tensor not positive definite at x={x.tolist()}")
            # measure positivity on the same net
            self.measure.sigma(self, x)

    # -- scalar/batched metric values ----------------------------------------

    def F(self, x, y) -> float:
        y = np.asarray(y, dtype=float)
        if not np.any(y != 0.0):
            raise ZeroFiberVector("F(x, 0) is not defined")
        A, bv = self.quadratic_form(x)
        return math.sqrt(float(y @ A @ y)) + float(bv @ y)

    def F_batch(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        A, bv = self.quadratic_form_batch(X)
        quad = np.einsum("...ij,...i,...j->...", A, Y, Y)
        return np.sqrt(quad) + np.einsum("...i,...i->...", bv, Y)

    def describe(self) -> str:
        parts = [f"family={self.family}", f"dim={self.dim}"]
        if self.a is not None:
            parts.append("a=" + ";".join(e.source for e in self.a.flat))
        if self.b is not None:
            parts.append("b=" + ";".join(e.source for e in self.b.flat))
        if self.phi is not None:
            parts.append(f"phi={self.phi.source}")
        if self.base is not None:
            parts.append(f"base=({self.base.describe()})")
        parts.append("measure=" + self.measure.describe())
        return ",".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.describe().encode()).hexdigest()[:16]

    def __repr__(self):
        return f"MetricSpec({self.family}, dim={self.dim})"


def euclidean_spec(dim: int, measure: Measure | None = None,
                   chart: Box | None = None) -> MetricSpec:
    return MetricSpec("euclidean", dim, measure=measure, chart=chart)


def riemannian_spec(dim: int, a_rows, measure: Measure | None = None,
                    chart: Box | None = None) -> MetricSpec:
    from .expressions import parse_matrix
    return MetricSpec("riemannian", dim, a=parse_matrix(a_rows, dim),
                      measure=measure, chart=chart)


def randers_spec(dim: int, a_rows, b_entries, measure: Measure | None = None,
                 chart: Box | None = None) -> MetricSpec:
    from .expressions import parse_matrix, parse_vector
    return MetricSpec("randers", dim, a=parse_matrix(a_rows, dim),
                      b=parse_vector(b_entries, dim), measure=measure,
                      chart=chart)


def _sphere_directions(n: int, per_dim: int) -> np.ndarray:
    """Deterministic unit directions: per_dim^(n-1) samples of S^{n-1}."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = np.arange(per_dim) * (2 * np.pi / per_dim)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    m = per_dim ** (n - 1)
    # Fibonacci-style spiral for S^2; random-orthant fill for higher n
    if n == 3:
        k = np.arange(m) + 0.5
        phi = np.arccos(1 - 2 * k / m)
        theta = np.pi * (1 + 5 ** 0.5) * k
        return np.stack([np.sin(phi) * np.cos(theta),
                         np.sin(phi) * np.sin(theta),
                         np.cos(phi)], axis=1)
    rng = np.random.default_rng(7)
    v = rng.standard_normal((m, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# jets of F^2 and pointwise tensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet:
    """Truncated Taylor expansion of F^2 at a sphere-bundle point.

    ``poly`` lives in the 2n variables (x^1..x^n, y^1..y^n); mixed partial
    derivatives are read off with :meth:`deriv`.
    """

    x: tuple
    y: tuple
    order: int
    poly: TaylorPoly = field(repr=False)

    def deriv(self, x_exps, y_exps) -> float:
        return self.poly.deriv(tuple(x_exps) + tuple(y_exps))

    @property
    def coefficients(self) -> np.ndarray:
        return self.poly.c

    @property
    def monomials(self):
        return self.poly.space.monomials


def squared_metric_poly(spec: MetricSpec, x, y, order: int = 4) -> TaylorPoly:
    """F^2 as a TaylorPoly around (x, y)."""
    y = np.asarray(y, dtype=float)
    if not np.any(y != 0.0):
        raise ZeroFiberVector("metric jet at y = 0")
    n = spec.dim
    space = jet_space(2 * n, order)
    xs = [TaylorPoly.variable(space, i, float(x[i])) for i in range(n)]
    ys = [TaylorPoly.variable(space, n + i, float(y[i])) for i in range(n)]
    A, bv = spec.quadratic_form_jets(xs)
    quad = None
    for i in range(n):
        for j in range(n):
            term = A[i, j] * ys[i] * ys[j]
            quad = term if quad is None else quad + term
    if spec.is_quadratic:
        return quad
    drift = None
    for i in range(n):
        term = bv[i] * ys[i]
        drift = term if drift is None else drift + term
    Fj = quad.sqrt() + drift
    return Fj * Fj


def metric_jet(spec: MetricSpec, x, y, order: int = 4) -> Jet:
    poly = squared_metric_poly(spec, x, y, order)
    return Jet(tuple(float(v) for v in x), tuple(float(v) for v in y),
               order, poly)


def eval_metric(spec: MetricSpec, x, y) -> float:
    """F(x, y); positively 1-homogeneous and generally asymmetric in y."""
    return spec.F(x, y)


@dataclass(frozen=True)
class PointFrame:
    """Fundamental data of the metric at one sphere-bundle point."""

    x: np.ndarray
    y: np.ndarray
    F_val: float
    g: np.ndarray
    g_inv: np.ndarray
    cartan: np.ndarray


def fundamental_tensor_batch(spec: MetricSpec, x, Ys: np.ndarray) -> np.ndarray:
    """g_ij(x, Y) for a batch of fiber vectors via the closed (A, b) form."""
    Ys = np.asarray(Ys, dtype=float)
    A, bv = spec.quadratic_form(x)
    Ay = Ys @ A.T
    alpha = np.sqrt(np.einsum("...i,...i->...", Ys, Ay))
    ell = Ay / alpha[..., None]
    Fv = alpha + Ys @ bv
    lb = ell + bv
    g = ((Fv / alpha)[..., None, None]
         * (A - np.einsum("...i,...j->...ij", ell, ell))
         + np.einsum("...i,...j->...ij", lb, lb))
    return g


def fundamental_tensor(spec: MetricSpec, x, y) -> PointFrame:
    """PointFrame from the order-3 jet: g = half the fiber Hessian of F^2,
    Cartan = quarter of the third fiber derivative."""
    y = np.asarray(y, dtype=float)
    if not np.any(y != 0.0):
        raise ZeroFiberVector("fundamental tensor at y = 0")
    n = spec.dim
    poly = squared_metric_poly(spec, x, y, order=3)
    g = np.empty((n, n))
    C = np.zeros((n, n, n))
    for i in range(n):
        for j in range(i, n):
            e = [0] * (2 * n)
            e[n + i] += 1
            e[n + j] += 1
            g[i, j] = g[j, i] = 0.5 * poly.deriv(e)
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                e = [0] * (2 * n)
                e[n + i] += 1
                e[n + j] += 1
                e[n + k] += 1
                val = 0.25 * poly.deriv(e)
                for p, q, r in {(i, j, k), (i, k, j), (j, i, k),
                                (j, k, i), (k, i, j), (k, j, i)}:
                    C[p, q, r] = val
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise SingularMetric(
            f"g(x, y) not positive definite at x={list(x)}, y={y.tolist()}")
    return PointFrame(np.asarray(x, dtype=float), y, spec.F(x, y),
                      g, np.linalg.inv(g), C)


# ---------------------------------------------------------------------------
# Legendre transform / dual norm
# ---------------------------------------------------------------------------

def _legendre_forward(spec: MetricSpec, x, y: np.ndarray) -> np.ndarray:
    """The Legendre map ell(y) = g(x,y) y = half d(F^2)/dy."""
    g = fundamental_tensor_batch(spec, x, y)
    return np.einsum("...ij,...j->...i", g, y)


def legendre_dual(spec: MetricSpec, x, xi):
    """Solve g_(x,grad)(grad, .) = xi; returns (grad, F*(x, xi)).

    xi = 0 maps to (0, 0) by convention.  Fiber Newton iteration with step
    halving on the residual norm; brute-force sphere maximization plus a
    Newton polish is the fallback before declaring no convergence.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi != 0.0):
        return np.zeros(spec.dim), 0.0
    scale = float(np.linalg.norm(xi))
    y0 = xi / scale
    g0 = fundamental_tensor_batch(spec, x, y0)
    y = np.linalg.solve(g0, xi)
    res = _legendre_forward(spec, x, y) - xi
    rnorm = np.linalg.norm(res)
    for _ in range(60):
        if rnorm <= 1e-13 * scale:
            break
        g = fundamental_tensor_batch(spec, x, y)
        step = np.linalg.solve(g, -res)
        t = 1.0
        while t > 1e-8:
            cand = y + t * step
            if np.any(cand != 0.0):
                cand_res = _legendre_forward(spec, x, cand) - xi
                cn = np.linalg.norm(cand_res)
                if cn < rnorm:
                    y, res, rnorm = cand, cand_res, cn
                    break
            t *= 0.5
        else:
            break
    if rnorm > 1e-9 * scale:
        y = _legendre_bruteforce(spec, x, xi)
        for _ in range(30):
            res = _legendre_forward(spec, x, y) - xi
            rnorm = np.linalg.norm(res)
            if rnorm <= 1e-13 * scale:
                break
            g = fundamental_tensor_batch(spec, x, y)
            y = y + np.linalg.solve(g, -res)
        res = _legendre_forward(spec, x, y) - xi
        if np.linalg.norm(res) > 1e-9 * scale:
            raise LegendreNoConvergence(
                f"legendre solve failed at x={list(x)}, xi={xi.tolist()}")
    return y, spec.F(x, y)


def _legendre_bruteforce(spec: MetricSpec, x, xi: np.ndarray,
                         samples: int = 720) -> np.ndarray:
    dirs = _sphere_directions(spec.dim, samples if spec.dim == 2 else 64)
    Fv = spec.F_batch(np.broadcast_to(np.asarray(x, float), dirs.shape), dirs)
    pay = dirs @ xi / Fv
    u = dirs[int(np.argmax(pay))]
    fstar = float(np.max(pay))
    return fstar * u / spec.F(x, u)


def legendre_batch(spec: MetricSpec, X: np.ndarray, Xi: np.ndarray):
    """Vectorized Legendre transform.

    Returns (grad, fstar2) where fstar2 = F*^2(x, xi).  Quadratic families
    solve one linear system; Randers-type families run the same Newton
    iteration vectorized (undamped; strong convexity makes it contract) with
    the pointwise damped solver as a per-point fallback.
    """
    X = np.asarray(X, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    A, bv = spec.quadratic_form_batch(X)
    nz = np.einsum("...i,...i->...", Xi, Xi) > 0.0
    if spec.is_quadratic:
        grad = np.linalg.solve(A, Xi[..., None])[..., 0]
        fstar2 = np.einsum("...i,...i->...", grad, Xi)
        grad = np.where(nz[..., None], grad, 0.0)
        return grad, np.where(nz, fstar2, 0.0)

    scale = np.linalg.norm(Xi, axis=-1)
    safe_scale = np.where(nz, scale, 1.0)
    y0 = Xi / safe_scale[..., None]
    e0 = np.zeros_like(Xi)
    e0[..., 0] = 1.0
    y0 = np.where(nz[..., None], y0, e0)
    g = _g_from_ab(A, bv, y0)
    y = np.linalg.solve(g, Xi[..., None])[..., 0]
    ok = np.zeros(nz.shape, dtype=bool)
    for _ in range(40):
        g = _g_from_ab(A, bv, np.where(nz[..., None], y, y0))
        ell = np.einsum("...ij,...j->...i", g, y)
        res = ell - Xi
        rn = np.linalg.norm(res, axis=-1)
        ok = rn <= 1e-12 * safe_scale
        if np.all(ok | ~nz):
            break
        y = y - np.linalg.solve(g, res[..., None])[..., 0]
    if not np.all(ok | ~nz):
        bad = np.argwhere(~(ok | ~nz))
        for idx in bad:
            t = tuple(idx)
            yi, _ = legendre_dual(spec, X[t], Xi[t])
            y[t] = yi
    y = np.where(nz[..., None], y, 0.0)
    quad = np.einsum("...ij,...i,...j->...", A, y, y)
    Fv = np.sqrt(np.where(nz, quad, 1.0)) + np.einsum("...i,...i->...", bv, y)
    return y, np.where(nz, Fv * Fv, 0.0)


def _g_from_ab(A, bv, Y):
    Ay = np.einsum("...ij,...j->...i", A, Y)
    alpha = np.sqrt(np.einsum("...i,...i->...", Y, Ay))
    ell = Ay / alpha[..., None]
    Fv = alpha + np.einsum("...i,...i->...", bv, Y)
    lb = ell + bv
    return ((Fv / alpha)[..., None, None]
            * (A - np.einsum("...i,...j->...ij", ell, ell))
            + np.einsum("...i,...j->...ij", lb, lb))


def dual_norm(spec: MetricSpec, x, xi) -> float:
    """F*(x, xi) = sup { xi(y) : F(x, y) = 1 }."""
    return legendre_dual(spec, x, xi)[1]


# ---------------------------------------------------------------------------
# misalignment
# ---------------------------------------------------------------------------

def misalignment(spec: MetricSpec, x, resolution: int = 32) -> float:
    """sup over S_xM^3 of g_V(Y, Y) / g_W(Y, Y), grid scan plus local ascent.

    The grid value is a certified lower bound; projected gradient ascent from
    the best sampled triple refines it.  Identically 1 for Riemannian specs.
    """
    if resolution < 16:
        raise ValueError("resolution must be >= 16 samples per sphere dimension")
    if spec.is_quadratic:
        return 1.0
    dirs = _sphere_directions(spec.dim, resolution)
    G = fundamental_tensor_batch(spec, x, dirs)           # (m, n, n)
    vals = np.einsum("mij,ki,kj->mk", G, dirs, dirs)      # ref V=m, arg Y=k
    col_max = np.max(vals, axis=0)
    col_min = np.min(vals, axis=0)
    ratios = col_max / col_min
    k_best = int(np.argmax(ratios))
    V = dirs[int(np.argmax(vals[:, k_best]))].copy()
    W = dirs[int(np.argmin(vals[:, k_best]))].copy()
    Y = dirs[k_best].copy()
    best = float(ratios[k_best])

    def value(V, W, Y):
        gV = fundamental_tensor_batch(spec, x, V[None])[0]
        gW = fundamental_tensor_batch(spec, x, W[None])[0]
        return float((Y @ gV @ Y) / (Y @ gW @ Y))

    step = 0.1
    for _ in range(200):
        gV = fundamental_tensor_batch(spec, x, V[None])[0]
        gW = fundamental_tensor_batch(spec, x, W[None])[0]
        CV = fundamental_tensor(spec, x, V).cartan
        CW = fundamental_tensor(spec, x, W).cartan
        qV = float(Y @ gV @ Y)
        qW = float(Y @ gW @ Y)
        dV = 2.0 * np.einsum("ijk,i,j->k", CV, Y, Y) / qV
        dW = -2.0 * np.einsum("ijk,i,j->k", CW, Y, Y) / qW
        dY = 2.0 * (gV @ Y / qV - gW @ Y / qW)
        dV -= (dV @ V) * V
        dW -= (dW @ W) * W
        dY -= (dY @ Y) * Y
        gn = math.sqrt(dV @ dV + dW @ dW + dY @ dY)
        if gn < 1e-12:
            break
        improved = False
        while step > 1e-10:
            Vc = V + step * dV
            Wc = W + step * dW
            Yc = Y + step * dY
            Vc /= np.linalg.norm(Vc)
            Wc /= np.linalg.norm(Wc)
            Yc /= np.linalg.norm(Yc)
            cand = value(Vc, Wc, Yc)
            if cand > best:
                V, W, Y, best = Vc, Wc, Yc, cand
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return max(best, 1.0)
