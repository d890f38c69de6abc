"""Dirichlet solver for exponentially harmonic functions on box charts.

The exponential energy is discretized with bilinear elements on a structured
grid and tensor-product two-point Gauss quadrature per cell (a midpoint-only
rule admits checkerboard null modes of the cell-centered gradient; the 2x2
rule is the minimal stable cellwise quadrature).  The energy is smooth and
convex in the nodal values, its exact cell Hessian

    d^2/dxi^2 exp(F*^2(xi)/2) = V(u) [ g^{-1}(x, grad) + grad grad^T ]

is symmetric positive definite, so a damped Newton iteration with an
energy-decrease line search converges; Barzilai-Borwein gradient steps are
the fallback.  The module also hosts the H-function of the expanding-ball
gradient estimate and the Liouville decay experiment.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .curvature import (
    MinusInfinityType,
    div_cartan,
    mixed_weighted_ricci,
    t_tensor,
    u_tensor,
)
from .distance import FlatDistance, make_distance_model
from .errors import BoundTooSmall, CurvatureHypothesisViolated
from .metrics import Measure, MetricSpec, legendre_batch
from .operators import FieldJet


# ---------------------------------------------------------------------------
# grid domain and field
# ---------------------------------------------------------------------------

@dataclass
class GridDomain:
    """Structured box grid; ``resolution`` counts nodes per axis (>= 9)."""

    bounds: list
    resolution: int
    boundary_data: object = 0.0     # callable(x) -> float, or a constant

    def __post_init__(self):
        self.bounds = [list(map(float, b)) for b in self.bounds]
        if self.resolution < 9:
            raise ValueError("resolution must be >= 9 nodes per axis")
        for lo, hi in self.bounds:
            if not hi > lo:
                raise ValueError("degenerate domain bounds")
        if len(self.bounds) not in (1, 2):
            raise NotImplementedError("grid solver supports 1-D and 2-D charts")

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def spacing(self):
        return np.array([(hi - lo) / (self.resolution - 1)
                         for lo, hi in self.bounds])

    def axes(self):
        return [np.linspace(lo, hi, self.resolution) for lo, hi in self.bounds]

    def nodes(self):
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def boundary_values(self, shape):
        """Evaluate boundary_data on the full grid (used on the rim only)."""
        if callable(self.boundary_data):
            nodes = self.nodes()
            flat = nodes.reshape(-1, self.dim)
            vals = np.array([float(self.boundary_data(x)) for x in flat])
            return vals.reshape(shape)
        return np.full(shape, float(self.boundary_data))


@dataclass
class ScalarField:
    domain: GridDomain
    values: np.ndarray
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# discrete energy, gradient, Hessian
# ---------------------------------------------------------------------------

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _quad_layout(dom: GridDomain):
    """Per-Gauss-point corner gradient weights and sample positions."""
    hs = dom.spacing
    if dom.dim == 1:
        corners = [(0,), (1,)]
        pts = []
        for gx in _GAUSS:
            dN = {(0,): np.array([-1.0 / hs[0]]), (1,): np.array([1.0 / hs[0]])}
            pts.append((0.5, (gx,), dN))
        return corners, pts
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    pts = []
    for gx in _GAUSS:
        for gy in _GAUSS:
            dN = {
                (0, 0): np.array([-(1 - gy) / hs[0], -(1 - gx) / hs[1]]),
                (1, 0): np.array([(1 - gy) / hs[0], -gx / hs[1]]),
                (0, 1): np.array([-gy / hs[0], (1 - gx) / hs[1]]),
                (1, 1): np.array([gy / hs[0], gx / hs[1]]),
            }
            pts.append((0.25, (gx, gy), dN))
    return corners, pts


def _corner_slices(dom: GridDomain, corner):
    if dom.dim == 1:
        return (slice(0, -1),) if corner == (0,) else (slice(1, None),)
    sx = slice(0, -1) if corner[0] == 0 else slice(1, None)
    sy = slice(0, -1) if corner[1] == 0 else slice(1, None)
    return (sx, sy)


def _gauss_positions(dom: GridDomain, offsets):
    axes = dom.axes()
    hs = dom.spacing
    if dom.dim == 1:
        cx = axes[0][:-1] + offsets[0] * hs[0]
        return cx[:, None]
    cx = axes[0][:-1] + offsets[0] * hs[0]
    cy = axes[1][:-1] + offsets[1] * hs[1]
    return np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1)


def discrete_energy_and_gradient(fld: ScalarField, spec: MetricSpec,
                                 measure: Measure | None = None):
    """(E_h, nodal gradient) of the Gauss-quadrature exponential energy.

    The gradient is the exact chain-rule derivative with respect to every
    nodal value (d F*^2/d xi = 2 grad via the Legendre dual); entries on the
    boundary rim are reported but frozen by the solver.
    """
    measure = measure if measure is not None else spec.measure
    dom = fld.domain
    vals = np.asarray(fld.values, dtype=float)
    corners, pts = _quad_layout(dom)
    cellvol = float(np.prod(dom.spacing))
    energy = 0.0
    grad = np.zeros_like(vals)
    # rejected line-search trials may overflow exp(); inf energy is a valid
    # "reject" signal, so silence the numpy warnings locally
    with np.errstate(over="ignore", invalid="ignore"):
        for w, offsets, dN in pts:
            du = None
            for c in corners:
                contrib = np.einsum("...,k->...k",
                                    vals[_corner_slices(dom, c)], dN[c])
                du = contrib if du is None else du + contrib
            X = _gauss_positions(dom, offsets)
            gvec, fstar2 = legendre_batch(spec, X, du)
            sigma = measure.sigma_array(spec, X)
            density = np.exp(0.5 * fstar2)
            energy += w * cellvol * float(np.sum(density * sigma))
            coeff = (w * cellvol) * density * sigma
            for c in corners:
                grad[_corner_slices(dom, c)] += coeff * (gvec @ dN[c])
    return energy, grad


def _interior_mask(dom: GridDomain):
    shape = (dom.resolution,) * dom.dim
    mask = np.zeros(shape, dtype=bool)
    inner = tuple(slice(1, -1) for _ in range(dom.dim))
    mask[inner] = True
    return mask


def _hessian_interior(fld: ScalarField, spec: MetricSpec, measure: Measure):
    """Exact discrete Hessian restricted to the interior nodes (SPD)."""
    dom = fld.domain
    vals = np.asarray(fld.values, dtype=float)
    res = dom.resolution
    corners, pts = _quad_layout(dom)
    cellvol = float(np.prod(dom.spacing))
    mask = _interior_mask(dom)
    unknown = -np.ones(mask.shape, dtype=np.int64)
    unknown[mask] = np.arange(int(mask.sum()))

    if dom.dim == 1:
        cell_nodes = [np.arange(res - 1), np.arange(1, res)]
        node_ids = [unknown[c] for c in cell_nodes]
    else:
        ii, jj = np.meshgrid(np.arange(res - 1), np.arange(res - 1),
                             indexing="ij")
        node_ids = []
        for c in corners:
            node_ids.append(unknown[ii + c[0], jj + c[1]].ravel())

    rows, cols, data = [], [], []
    for w, offsets, dN in pts:
        du = None
        for c in corners:
            contrib = np.einsum("...,k->...k", vals[_corner_slices(dom, c)], dN[c])
            du = contrib if du is None else du + contrib
        X = _gauss_positions(dom, offsets)
        gvec, fstar2 = legendre_batch(spec, X, du)
        sigma = measure.sigma_array(spec, X)
        density = np.exp(0.5 * fstar2)
        A, bv = spec.quadratic_form_batch(X)
        ginv = np.linalg.inv(_g_at(spec, A, bv, gvec, du))
        M = ginv + np.einsum("...i,...j->...ij", gvec, gvec)
        M = (w * cellvol) * (density * sigma)[..., None, None] * M
        Mflat = M.reshape(-1, dom.dim, dom.dim)
        for a, ca in enumerate(corners):
            ra = node_ids[a]
            va = dN[ca]
            for b, cb in enumerate(corners):
                cb_ids = node_ids[b]
                vb = dN[cb]
                entry = np.einsum("i,...ij,j->...", va, Mflat, vb)
                keep = (ra >= 0) & (cb_ids >= 0)
                rows.append(ra[keep])
                cols.append(cb_ids[keep])
                data.append(entry[keep])
    nunk = int(mask.sum())
    H = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nunk, nunk))
    return H.tocsc(), unknown, mask


def _g_at(spec, A, bv, gvec, du):
    """Fundamental tensor at the Legendre point (batched)."""
    if spec.is_quadratic:
        return A
    nz = np.einsum("...i,...i->...", du, du) > 0
    safe = np.where(nz[..., None], gvec, np.broadcast_to(
        np.eye(A.shape[-1])[0], gvec.shape))
    from .metrics import _g_from_ab
    return _g_from_ab(A, bv, safe)


# ---------------------------------------------------------------------------
# Dirichlet solve
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 60
    max_halvings: int = 40
    bb_max_iter: int = 400
    verbose: bool = False


def _initial_guess(dom: GridDomain, boundary: np.ndarray) -> np.ndarray:
    """Transfinite blend of the boundary data (exact for affine data)."""
    res = dom.resolution
    if dom.dim == 1:
        s = np.linspace(0.0, 1.0, res)
        return (1 - s) * boundary[0] + s * boundary[-1]
    s = np.linspace(0.0, 1.0, res)[:, None]
    t = np.linspace(0.0, 1.0, res)[None, :]
    g = boundary
    blend = ((1 - s) * g[0, :][None, :] + s * g[-1, :][None, :]
             + (1 - t) * g[:, 0][:, None] + t * g[:, -1][:, None]
             - ((1 - s) * (1 - t) * g[0, 0] + s * (1 - t) * g[-1, 0]
                + (1 - s) * t * g[0, -1] + s * t * g[-1, -1]))
    return blend


def solve_dirichlet(dom: GridDomain, spec: MetricSpec,
                    measure: Measure | None = None,
                    config: SolverConfig | None = None) -> ScalarField:
    """Minimize the discrete exponential energy over interior nodal values.

    Returns the field with convergence metadata; on iteration exhaustion the
    best iterate is returned with status "max_iterations" rather than raised,
    so callers can inspect the diagnostic.
    """
    measure = measure if measure is not None else spec.measure
    config = config if config is not None else SolverConfig()
    shape = (dom.resolution,) * dom.dim
    boundary = dom.boundary_values(shape)
    vals = _initial_guess(dom, boundary)
    rim = ~_interior_mask(dom)
    vals[rim] = boundary[rim]

    fld = ScalarField(dom, vals, {})
    energies = []
    status = "max_iterations"
    iterations = 0
    gnorm = math.inf
    for it in range(config.max_iter):
        iterations = it
        E, grad = discrete_energy_and_gradient(fld, spec, measure)
        energies.append(E)
        gint = grad[~rim]
        gnorm = float(np.linalg.norm(gint))
        if config.verbose:
            print(f"  newton it={it} E={E:.12g} |grad|={gnorm:.3e}")
        if gnorm <= config.tol:
            status = "converged"
            break
        H, unknown, mask = _hessian_interior(fld, spec, measure)
        try:
            direction = spla.splu(H).solve(-gint)
        except RuntimeError:
            status = "singular_hessian"
            break
        if not np.all(np.isfinite(direction)):
            direction = -gint
        slope = float(gint @ direction)
        if slope >= 0:
            direction = -gint
            slope = float(gint @ direction)
        t = 1.0
        accepted = False
        for _ in range(config.max_halvings):
            trial = fld.values.copy()
            trial[mask] += t * direction
            Et, _ = discrete_energy_and_gradient(
                ScalarField(dom, trial, {}), spec, measure)
            if Et <= E + 1e-4 * t * slope:
                fld.values = trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = _bb_descent(fld, spec, measure, config, rim)
            E, grad = discrete_energy_and_gradient(fld, spec, measure)
            energies.append(E)
            gnorm = float(np.linalg.norm(grad[~rim]))
            break
    else:
        iterations = config.max_iter

    E, grad = discrete_energy_and_gradient(fld, spec, measure)
    gnorm = float(np.linalg.norm(grad[~rim]))
    if gnorm <= config.tol:
        status = "converged"
    fld.metadata = {
        "spec_digest": spec.digest(),
        "iterations": iterations,
        "energy": E,
        "energies": energies,
        "residual_norm": gnorm,
        "status": status,
        "converged": status == "converged",
    }
    return fld


def _bb_descent(fld, spec, measure, config, rim) -> str:
    """Barzilai-Borwein gradient fallback with energy safeguarding."""
    E, grad = discrete_energy_and_gradient(fld, spec, measure)
    g_old = grad[~rim]
    u_old = fld.values[~rim].copy()
    t = 1e-3
    for _ in range(config.bb_max_iter):
        trial = fld.values.copy()
        trial[~rim] = fld.values[~rim] - t * g_old
        Et, gt = discrete_energy_and_gradient(
            ScalarField(fld.domain, trial, {}), spec, measure)
        if Et > E:
            t *= 0.5
            if t < 1e-16:
                return "line_search_stall"
            continue
        g_new = gt[~rim]
        s = trial[~rim] - u_old
        yvec = g_new - g_old
        u_old = trial[~rim].copy()
        fld.values = trial
        E = Et
        g_old = g_new
        if float(np.linalg.norm(g_new)) <= config.tol:
            return "converged"
        sy = float(s @ yvec)
        t = float(s @ s) / sy if sy > 0 else 1e-3
    return "bb_exhausted"


# ---------------------------------------------------------------------------
# nodal derivative reconstruction
# ---------------------------------------------------------------------------

def grid_energy_density(fld: ScalarField, spec: MetricSpec,
                        measure: Measure | None = None) -> np.ndarray:
    """e(u) = F*^2(x, Du) at every node; central differences inside,
    second-order one-sided stencils on the rim."""
    dom = fld.domain
    vals = np.asarray(fld.values, dtype=float)
    hs = dom.spacing
    du = np.stack([_axis_gradient(vals, hs[a], a) for a in range(dom.dim)],
                  axis=-1)
    _, fstar2 = legendre_batch(spec, dom.nodes(), du)
    return fstar2


def _axis_gradient(vals, h, axis):
    g = np.gradient(vals, h, axis=axis, edge_order=2)
    return g


_LSQ_CACHE = {}


def _lsq_pinv(dim: int, half: int):
    key = (dim, half)
    if key in _LSQ_CACHE:
        return _LSQ_CACHE[key]
    offs = np.arange(-half, half + 1)
    if dim == 1:
        pts = offs[:, None].astype(float)
    else:
        A, B = np.meshgrid(offs, offs, indexing="ij")
        pts = np.stack([A.ravel(), B.ravel()], axis=-1).astype(float)
    exps = [e for e in np.ndindex(*(5,) * dim) if sum(e) <= 4]
    design = np.stack([np.prod(pts ** np.array(e), axis=1) for e in exps],
                      axis=1)
    pinv = np.linalg.pinv(design)
    _LSQ_CACHE[key] = (exps, pinv)
    return exps, pinv


def field_jet_at_node(fld: ScalarField, index, half_window: int = 3) -> FieldJet:
    """Quartic least-squares stencil jet (with third derivatives) at a node.

    The window must fit inside the grid; used on solver output where the
    Bochner residual needs smoothed high-order derivatives.
    """
    dom = fld.domain
    vals = np.asarray(fld.values, dtype=float)
    n = dom.dim
    idx = tuple(int(i) for i in np.atleast_1d(index))
    res = dom.resolution
    for i in idx:
        if i - half_window < 0 or i + half_window >= res:
            raise ValueError("stencil window exceeds the grid")
    window = vals[tuple(slice(i - half_window, i + half_window + 1)
                        for i in idx)]
    exps, pinv = _lsq_pinv(n, half_window)
    coeff = pinv @ window.ravel()
    hs = dom.spacing
    x = np.array([dom.bounds[a][0] + idx[a] * hs[a] for a in range(n)])
    table = {tuple(e): c for e, c in zip(exps, coeff)}

    def deriv(e):
        c = table.get(tuple(e), 0.0)
        fac = math.prod(math.factorial(k) for k in e)
        scale = math.prod(hs[a] ** e[a] for a in range(n))
        return c * fac / scale

    du = np.array([deriv(tuple(1 if a == b else 0 for b in range(n)))
                   for a in range(n)])
    d2u = np.empty((n, n))
    d3u = np.empty((n, n, n))
    for a in range(n):
        for b in range(n):
            e2 = [0] * n
            e2[a] += 1
            e2[b] += 1
            d2u[a, b] = deriv(e2)
            for c in range(n):
                e3 = list(e2)
                e3[c] += 1
                d3u[a, b, c] = deriv(e3)
    return FieldJet(x, float(table[(0,) * n]), du, 0.5 * (d2u + d2u.T), d3u)


def center_node_index(dom: GridDomain, x0) -> tuple:
    axes = dom.axes()
    return tuple(int(np.argmin(np.abs(ax - c))) for ax, c in zip(axes, x0))


# ---------------------------------------------------------------------------
# H-function and gradient estimate
# ---------------------------------------------------------------------------

@dataclass
class HFieldResult:
    H: np.ndarray
    r: np.ndarray
    e: np.ndarray
    mask: np.ndarray
    argmax_index: tuple
    argmax_point: np.ndarray
    h_max: float


def _distance_grid(spec: MetricSpec, x0, nodes: np.ndarray) -> np.ndarray:
    model = make_distance_model(spec, x0)
    if isinstance(model, FlatDistance):
        z = nodes - np.asarray(x0, dtype=float)
        quad = np.einsum("...i,ij,...j->...", z, model.A, z)
        return np.sqrt(quad) + z @ model.b
    flat = nodes.reshape(-1, nodes.shape[-1])
    out = np.empty(flat.shape[0])
    for k, xx in enumerate(flat):
        try:
            out[k] = model.eval(xx).r
        except Exception:
            out[k] = 0.0
    return out.reshape(nodes.shape[:-1])


def h_function(fld: ScalarField, spec: MetricSpec, measure: Measure | None,
               x0, a: float, b: float, margin: float = 0.0) -> HFieldResult:
    """H = (a^2 - r^2)^2 e(u) / (b^2 - u^2) on the forward ball r < a.

    Zero outside the ball (the boundary factor vanishes); the argmax is
    interior.  Raises BoundTooSmall unless b^2 > sup u^2 (1 + margin).
    """
    dom = fld.domain
    nodes = dom.nodes()
    r = _distance_grid(spec, x0, nodes)
    mask = r < a
    vals = np.asarray(fld.values, dtype=float)
    sup_u2 = float(np.max(vals[mask] ** 2)) if mask.any() else 0.0
    if b * b <= sup_u2 * (1.0 + margin):
        raise BoundTooSmall(f"b^2 = {b*b:.6g} <= sup u^2 = {sup_u2:.6g}")
    e = grid_energy_density(fld, spec, measure)
    H = np.zeros_like(vals)
    H[mask] = ((a**2 - r[mask] ** 2) ** 2 * e[mask]
               / (b**2 - vals[mask] ** 2))
    arg = np.unravel_index(int(np.argmax(H)), H.shape)
    return HFieldResult(H=H, r=r, e=e, mask=mask, argmax_index=arg,
                        argmax_point=nodes[arg],
                        h_max=float(H[arg]))


@dataclass
class GradientEstimateReport:
    a: float
    b: float
    supplied_C: float
    empirical_C: float
    bound_value: float
    h_max: float
    passes: bool


def gradient_estimate_check(fld: ScalarField, spec: MetricSpec,
                            measure: Measure | None, x0, a: float, b: float,
                            C: float) -> GradientEstimateReport:
    """Check (a^2-r^2)^2 e/(b^2-u^2) <= C (a^3.5 + a^2 + 1) on the ball and
    report the smallest constant that would make it hold."""
    hres = h_function(fld, spec, measure, x0, a, b)
    denom = a ** 3.5 + a ** 2 + 1.0
    empirical = hres.h_max / denom
    return GradientEstimateReport(a=a, b=b, supplied_C=C,
                                  empirical_C=empirical,
                                  bound_value=C * denom, h_max=hres.h_max,
                                  passes=hres.h_max <= C * denom)


# ---------------------------------------------------------------------------
# Liouville experiment
# ---------------------------------------------------------------------------

def oscillating_boundary(M: float, a: float, center):
    """Bounded oscillating Dirichlet data with a scale-invariant profile."""
    center = np.asarray(center, dtype=float)

    def data(x):
        s = (np.asarray(x, dtype=float) - center) / a
        if len(s) == 1:
            return M * math.sin(0.5 * math.pi * s[0])
        return (M * math.sin(0.5 * math.pi * s[0])
                * math.cos(0.5 * math.pi * s[1]))

    return data


def liouville_bound_b(M: float, a: float) -> float:
    """b^2 = 32 a^2 M (1+M) + 4 M^2 + 1: dominates sup(4 r^2 u) on B_2a
    (|u| <= M by the maximum principle) and keeps 4u^2/(b^2-u^2)^2 below
    2/(b^2-u^2)."""
    return math.sqrt(32.0 * a * a * M * (1.0 + M) + 4.0 * M * M + 1.0)


@dataclass
class LiouvilleRecord:
    radius: float
    b: float
    h_max: float
    center_energy: float
    bound_value: float
    empirical_C: float


@dataclass
class LiouvilleResult:
    records: list
    k0_observed: float
    wric_min: float
    warnings: list


def hypothesis_check(spec: MetricSpec, measure: Measure | None, x0,
                     halfwidth: float, samples: int = 12) -> tuple:
    """Sample the mixed weighted Ricci sign and the non-Riemannian norm
    bound F^{-1}|S| + F(U) + F*(T) + |divC|_HS over the chart."""
    from .curvature import s_curvature

    rng = np.random.default_rng(2024)
    x0 = np.asarray(x0, dtype=float)
    wric_min = math.inf
    k0 = 0.0
    for _ in range(samples):
        x = x0 + rng.uniform(-halfwidth, halfwidth, spec.dim)
        Y = rng.standard_normal(spec.dim)
        W = rng.standard_normal(spec.dim)
        val = mixed_weighted_ricci(spec, x, Y, W, math.inf, measure)
        if not isinstance(val, MinusInfinityType):
            wric_min = min(wric_min, val)
        F = spec.F(x, Y)
        S, _ = s_curvature(spec, x, Y, measure)
        _, tn = t_tensor(spec, x, Y, W, measure)
        _, un = u_tensor(spec, x, Y, W)
        _, dn = div_cartan(spec, x, Y, W, measure)
        k0 = max(k0, abs(S) / F + un + tn + dn)
    return wric_min, k0


def _ball_box_halfwidth(spec: MetricSpec, x0, a: float) -> float:
    """Coordinate half-width of a box containing the forward ball B_a(x0).

    Flat symmetric families inscribe the ball exactly; a Randers drift
    stretches the forward ball backwards by the factor 1/(1 - |b|_a)."""
    if spec.is_quadratic:
        return a
    worst = 0.0
    x0 = np.asarray(x0, dtype=float)
    for frac in (0.0, 0.5, 1.0):
        for sgn in (np.ones(spec.dim), -np.ones(spec.dim)):
            x = x0 + sgn * frac * a
            A, bv = spec.quadratic_form(x)
            worst = max(worst, math.sqrt(float(bv @ np.linalg.solve(A, bv))))
    return a / max(1e-6, 1.0 - worst)


def liouville_experiment(spec: MetricSpec, measure: Measure | None, x0,
                         radii, M: float, config: SolverConfig | None = None,
                         resolution: int = 129,
                         reference_C: float = 1.0) -> LiouvilleResult:
    """Solve the Dirichlet problem on expanding boxes and record the decay
    of the center energy against the (a^3.5 + a^2 + 1) bound shape."""
    radii = list(map(float, radii))
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    x0 = np.asarray(x0, dtype=float)

    caught = []
    wric_min, k0 = hypothesis_check(spec, measure, x0, radii[-1] / 4.0)
    if wric_min < -1e-9:
        msg = (f"sampled mixed weighted Ricci min = {wric_min:.3e} < 0; "
               "Liouville hypothesis violated")
        warnings.warn(msg, CurvatureHypothesisViolated)
        caught.append(msg)

    records = []
    for a in radii:
        half = _ball_box_halfwidth(spec, x0, a)
        dom = GridDomain(
            bounds=[[c - half, c + half] for c in x0],
            resolution=resolution,
            boundary_data=oscillating_boundary(M, half, x0),
        )
        fld = solve_dirichlet(dom, spec, measure, config)
        b = liouville_bound_b(M, a)
        hres = h_function(fld, spec, measure, x0, a, b)
        center = center_node_index(dom, x0)
        e_center = float(hres.e[center])
        denom = a ** 3.5 + a ** 2 + 1.0
        records.append(LiouvilleRecord(
            radius=a, b=b, h_max=hres.h_max, center_energy=e_center,
            bound_value=reference_C * denom,
            empirical_C=hres.h_max / denom))
    return LiouvilleResult(records=records, k0_observed=k0,
                           wric_min=wric_min, warnings=caught)


def decay_slope(records, last: int = 3) -> float:
    """Log-log regression slope of center energy vs radius."""
    rs = np.log([rec.radius for rec in records[-last:]])
    es = np.log([max(rec.center_energy, 1e-300) for rec in records[-last:]])
    A = np.stack([rs, np.ones_like(rs)], axis=1)
    slope, _ = np.linalg.lstsq(A, es, rcond=None)[0]
    return float(slope)
