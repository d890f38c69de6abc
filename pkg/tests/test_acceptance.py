"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Tolerances are pinned here, not configurable.
"""

import math
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from finslerlab.cli import main
from finslerlab.curvature import (
    flag_curvature,
    laplacian_comparison_probe,
    mixed_weighted_ricci,
    s_curvature,
    t_tensor,
    u_tensor,
)
from finslerlab.expressions import Expression
from finslerlab.metrics import (
    Box,
    Measure,
    euclidean_spec,
    fundamental_tensor,
    misalignment,
)
from finslerlab.connection import FrameJets
from finslerlab.operators import (
    FieldJet,
    bochner_residual,
    composition_identity,
)
from finslerlab.solver import (
    GridDomain,
    ScalarField,
    decay_slope,
    discrete_energy_and_gradient,
    field_jet_at_node,
    gradient_estimate_check,
    liouville_bound_b,
    liouville_experiment,
    solve_dirichlet,
)
from oracles import fd_christoffel

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _report(criterion, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def _rng(seed):
    return np.random.default_rng(seed)


def _unit_dirs(rng, count, n=2):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# -- criterion 1 --------------------------------------------------------------

def test_criterion_1_riemannian_reduction(eu2, sphere2, hyper2):
    """Cartan = 0, misalignment = 1, S = 0, T = 0, U = 0, Gamma = Christoffel
    on the flat, sphere, and hyperbolic charts; runtime < 30 s."""
    t0 = time.time()
    rng = _rng(101)
    worst = {"cartan": 0.0, "alpha": 0.0, "s": 0.0, "t": 0.0, "u": 0.0,
             "gamma": 0.0}
    for spec, box in ((eu2, 1.5), (sphere2, 0.8), (hyper2, 0.45)):
        for _ in range(12):
            x = rng.uniform(-box, box, 2)
            y, w = _unit_dirs(rng, 2)
            worst["cartan"] = max(worst["cartan"], float(np.abs(
                fundamental_tensor(spec, x, y).cartan).max()))
            S, _ = s_curvature(spec, x, y)
            worst["s"] = max(worst["s"], abs(S))
            tcov, tnorm = t_tensor(spec, x, y, w)
            worst["t"] = max(worst["t"], tnorm)
            _, unorm = u_tensor(spec, x, y, w)
            worst["u"] = max(worst["u"], unorm)
            fr = FrameJets(spec, x, y, order=3)
            oracle = fd_christoffel(spec, x)
            scale = max(1.0, float(np.abs(oracle).max()))
            worst["gamma"] = max(worst["gamma"], float(np.abs(
                fr.gamma - oracle).max()) / scale)
        alpha = misalignment(spec, rng.uniform(-box, box, 2), 16)
        worst["alpha"] = max(worst["alpha"], abs(alpha - 1.0))
    elapsed = time.time() - t0
    ok = (worst["cartan"] < 1e-10 and worst["alpha"] < 1e-12
          and worst["s"] < 1e-10 and worst["t"] < 1e-9
          and worst["u"] < 1e-9 and worst["gamma"] < 1e-6
          and elapsed < 30.0)
    _report("criterion-1 riemannian-reduction",
            ok, f"worst residuals {worst}, elapsed {elapsed:.1f}s")


# -- criterion 2 --------------------------------------------------------------

def test_criterion_2_constant_curvature(eu2, sphere2, hyper2):
    """Flag curvature +1 / 0 / -1 at 100 random flags (tol 1e-6) and
    mixed weighted Ricci (W = Y) = (n-1) K on each chart."""
    rng = _rng(202)
    worst_flag = 0.0
    worst_mixed = 0.0
    for spec, K, box in ((sphere2, 1.0, 0.8), (eu2, 0.0, 1.5),
                         (hyper2, -1.0, 0.45)):
        for _ in range(100):
            x = rng.uniform(-box, box, 2)
            y, e = _unit_dirs(rng, 2)
            if abs(e[0] * y[1] - e[1] * y[0]) < 1e-3:
                e = np.array([y[1], -y[0]])
            worst_flag = max(worst_flag,
                             abs(flag_curvature(spec, x, y, e) - K))
        for _ in range(5):
            x = rng.uniform(-box, box, 2)
            y, w = _unit_dirs(rng, 2)
            val = mixed_weighted_ricci(spec, x, y, w, math.inf)
            worst_mixed = max(worst_mixed, abs(val - (2 - 1) * K))
    ok = worst_flag < 1e-6 and worst_mixed < 1e-6
    _report("criterion-2 constant-curvature",
            ok, f"flag dev {worst_flag:.2e}, mixed dev {worst_mixed:.2e}")


# -- criterion 3 --------------------------------------------------------------

def test_criterion_3_euler_lagrange_criticality(eu2):
    """|dE(u+tv)/dt at 0| <= 1e-5 ||v|| for 20 random compact-support v
    against the solver output on a 64^2-cell grid; runtime < 2 min."""
    t0 = time.time()
    from finslerlab.solver import SolverConfig

    dom = GridDomain([[0, 1], [0, 1]], 65,
                     boundary_data=lambda x: x[0] ** 2 - x[1] ** 2)
    fld = solve_dirichlet(dom, eu2, config=SolverConfig(tol=1e-10))
    assert fld.metadata["converged"]
    h = dom.spacing[0]
    nodes = dom.nodes()
    sx, sy = nodes[..., 0], nodes[..., 1]
    window = (np.sin(np.pi * sx) * np.sin(np.pi * sy)) ** 2
    rng = _rng(303)
    worst = 0.0
    for _ in range(20):
        modes = sum(rng.normal() * np.sin((k + 1) * np.pi * sx)
                    * np.sin((m + 1) * np.pi * sy)
                    for k in range(4) for m in range(4))
        v = window * modes
        v[:2, :] = v[-2:, :] = 0.0
        v[:, :2] = v[:, -2:] = 0.0
        vnorm = math.sqrt(float(np.sum(v**2)) * h * h)
        t = 1e-5
        up = ScalarField(dom, fld.values + t * v, {})
        um = ScalarField(dom, fld.values - t * v, {})
        Ep, _ = discrete_energy_and_gradient(up, eu2)
        Em, _ = discrete_energy_and_gradient(um, eu2)
        deriv = (Ep - Em) / (2 * t)
        worst = max(worst, abs(deriv) / vnorm)
    elapsed = time.time() - t0
    ok = worst <= 1e-5 and elapsed < 120.0
    _report("criterion-3 euler-lagrange-criticality",
            ok, f"max |dE/dt|/||v|| = {worst:.2e}, elapsed {elapsed:.1f}s")


# -- criterion 4 --------------------------------------------------------------

def test_criterion_4_bochner_identity(eu2, randers_const):
    """Residual = 0 (1e-10) on affine flat fields; on solver outputs the
    residual decreases at order >= 1.8 under 32 -> 64 -> 128 refinement."""
    rng = _rng(404)
    worst_affine = 0.0
    for spec in (eu2, randers_const):
        for _ in range(10):
            x = rng.uniform(-1, 1, 2)
            du = rng.standard_normal(2)
            fj = FieldJet(x, float(du @ x), du, np.zeros((2, 2)),
                          np.zeros((2, 2, 2)))
            worst_affine = max(worst_affine, abs(bochner_residual(fj, spec)))

    saddle = lambda x: x[0] ** 2 - x[1] ** 2
    probes = [(0.5, 0.5), (0.3, 0.55), (0.6, 0.35), (0.45, 0.7), (0.7, 0.6)]
    residuals = []
    for res in (33, 65, 129):
        dom = GridDomain([[0, 1], [0, 1]], res, boundary_data=saddle)
        fld = solve_dirichlet(dom, eu2)
        h = dom.spacing[0]
        worst = 0.0
        for px, py in probes:
            idx = (round(px / h), round(py / h))
            fj = field_jet_at_node(fld, idx)
            worst = max(worst, abs(bochner_residual(
                fj, eu2, gate_tol=50 * h * h)))
        residuals.append(worst)
    order1 = math.log2(residuals[0] / residuals[1])
    order2 = math.log2(residuals[1] / residuals[2])
    ok = worst_affine < 1e-10 and order1 >= 1.8 and order2 >= 1.8
    _report("criterion-4 bochner-identity", ok,
            f"affine residual {worst_affine:.2e}, refinement orders "
            f"{order1:.2f}, {order2:.2f}")


# -- criterion 5 --------------------------------------------------------------

def test_criterion_5_composition_identity(eu2, randers_const):
    """Residual <= 1e-8 for phi in {s^2, exp(s), s^3} at 50 random points."""
    rng = _rng(505)
    phis = [(lambda s: 2 * s, lambda s: 2.0),
            (np.exp, np.exp),
            (lambda s: 3 * s * s, lambda s: 6 * s)]
    worst = 0.0
    for k in range(50):
        spec = (eu2, randers_const)[k % 2]
        x = rng.uniform(-1, 1, 2)
        du = rng.standard_normal(2)
        fj = FieldJet(x, float(du @ x) + rng.normal(), du,
                      np.zeros((2, 2)), np.zeros((2, 2, 2)))
        for p1, p2 in phis:
            worst = max(worst, abs(composition_identity(fj, p1, p2, spec)))
    ok = worst <= 1e-8
    _report("criterion-5 composition-identity", ok, f"max residual {worst:.2e}")


# -- criterion 6 --------------------------------------------------------------

def test_criterion_6_laplacian_comparison_flat(eu2, eu3):
    """Delta r = (n-1)/r to 1e-8 for n in {2, 3}; margin <= 0 for N >= n."""
    worst_lap = 0.0
    worst_margin = -math.inf
    for spec, n in ((eu2, 2), (eu3, 3)):
        rng = _rng(606 + n)
        pts = [rng.uniform(0.3, 1.2, n) for _ in range(6)]
        for N in (float(n), float(n + 2), float(n) + 0.5):
            probe = laplacian_comparison_probe(spec, None, np.zeros(n),
                                               pts, N=N)
            assert probe.alpha == 1.0
            for row in probe.rows:
                worst_lap = max(worst_lap,
                                abs(row.laplacian - (n - 1) / row.r))
                worst_margin = max(worst_margin, row.margin)
    ok = worst_lap < 1e-8 and worst_margin <= 1e-10
    _report("criterion-6 laplacian-comparison-flat", ok,
            f"max |lap - (n-1)/r| = {worst_lap:.2e}, "
            f"max margin = {worst_margin:.2e}")


# -- criterion 7 --------------------------------------------------------------

def test_criterion_7_gradient_estimate_stability(eu2):
    """Empirical C must not grow by more than 10% from a = 4 to a = 8
    (the bound constant is radius-independent)."""
    from finslerlab.solver import oscillating_boundary

    emp = {}
    for a in (4.0, 8.0):
        dom = GridDomain([[-a, a], [-a, a]], 129,
                         boundary_data=oscillating_boundary(1.0, a, [0, 0]))
        fld = solve_dirichlet(dom, eu2)
        assert fld.metadata["converged"]
        rep = gradient_estimate_check(fld, eu2, None, [0, 0], a,
                                      liouville_bound_b(1.0, a), C=1.0)
        emp[a] = rep.empirical_C
    ok = emp[8.0] <= 1.10 * emp[4.0]
    _report("criterion-7 gradient-estimate-stability", ok,
            f"empirical C: a=4 -> {emp[4.0]:.3e}, a=8 -> {emp[8.0]:.3e}")


# -- criterion 8 --------------------------------------------------------------

def test_criterion_8_liouville_decay(eu2):
    """Center energy strictly decreasing over radii {2,4,8,16} with log-log
    slope <= -0.4 on the last three, for flat-Lebesgue and flat-Gaussian;
    runtime < 10 min at 128^2-cell grids."""
    t0 = time.time()
    dens = Expression("exp(-(x1**2 + x2**2)/512)", 2)
    gauss_wide = euclidean_spec(2, measure=Measure("density", dens),
                                chart=Box.cube(2, 20.0))
    details = []
    ok = True
    for name, spec in (("flat-lebesgue", eu2), ("flat-gaussian", gauss_wide)):
        result = liouville_experiment(spec, None, [0, 0],
                                      [2.0, 4.0, 8.0, 16.0], M=1.0,
                                      resolution=129)
        es = [rec.center_energy for rec in result.records]
        slope = decay_slope(result.records, last=3)
        decreasing = all(b < a for a, b in zip(es, es[1:]))
        ok = ok and decreasing and slope <= -0.4 and result.wric_min >= -1e-9
        details.append(f"{name}: energies {['%.3e' % e for e in es]}, "
                       f"slope {slope:.2f}")
    elapsed = time.time() - t0
    ok = ok and elapsed < 600.0
    _report("criterion-8 liouville-decay", ok,
            "; ".join(details) + f"; elapsed {elapsed:.0f}s")


# -- criterion 9 --------------------------------------------------------------

def test_criterion_9_harmonic_vs_exp_harmonic(eu2):
    """Interior gap between the exponential and harmonic solves with
    boundary x^2 - y^2 exceeds 10x the grid tolerance h^2."""
    saddle = lambda x: x[0] ** 2 - x[1] ** 2
    dom = GridDomain([[0, 1], [0, 1]], 65, boundary_data=saddle)
    fld = solve_dirichlet(dom, eu2)
    assert fld.metadata["converged"]
    # 5-point discrete harmonic solution with this data is the saddle itself
    nodes = dom.nodes()
    harm = nodes[..., 0] ** 2 - nodes[..., 1] ** 2
    res = dom.resolution
    interior = np.zeros((res, res), dtype=bool)
    interior[1:-1, 1:-1] = True
    idx = -np.ones((res, res), dtype=int)
    idx[interior] = np.arange(interior.sum())
    rows, cols, data = [], [], []
    rhs = np.zeros(interior.sum())
    for i in range(1, res - 1):
        for j in range(1, res - 1):
            k = idx[i, j]
            rows.append(k)
            cols.append(k)
            data.append(4.0)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                if interior[i + di, j + dj]:
                    rows.append(k)
                    cols.append(idx[i + di, j + dj])
                    data.append(-1.0)
                else:
                    rhs[k] += harm[i + di, j + dj]
    A = sp.coo_matrix((data, (rows, cols))).tocsc()
    harm_interior = spla.spsolve(A, rhs)
    oracle = harm.copy()
    oracle[interior] = harm_interior
    gap = np.abs(fld.values - oracle)[1:-1, 1:-1].max()
    h2 = dom.spacing[0] ** 2
    ok = gap > 10 * h2
    _report("criterion-9 harmonic-vs-exp-harmonic", ok,
            f"interior gap {gap:.3e} vs 10 h^2 = {10 * h2:.3e}")


# -- criterion 10 -------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    """cmd_tensors and cmd_solve byte-identical across two seeded runs."""
    pts = tmp_path / "pts.csv"
    with open(pts, "w") as fh:
        fh.write("x1,x2,Y1,Y2,W1,W2\n")
        fh.write("0.2,0.1,1.0,0.3,0.4,1.0\n")
        fh.write("-0.4,0.7,0.2,-1.0,1.0,0.1\n")
    blobs = {"tensors": [], "solve": []}
    for run in ("r1", "r2"):
        out_t = tmp_path / f"t_{run}"
        rc = main(["tensors", "--config", str(CONFIGS / "randers_flat.toml"),
                   "--points", str(pts), "--out", str(out_t), "--seed", "11"])
        assert rc == 0
        blobs["tensors"].append((out_t / "curvature_report.csv").read_bytes())
        out_s = tmp_path / f"s_{run}"
        rc = main(["solve", "--config", str(CONFIGS / "solve_saddle.toml"),
                   "--out", str(out_s), "--seed", "11"])
        assert rc == 0
        blobs["solve"].append((out_s / "solution.csv").read_bytes())
    ok = (blobs["tensors"][0] == blobs["tensors"][1]
          and blobs["solve"][0] == blobs["solve"][1])
    _report("criterion-10 determinism", ok,
            "tensors and solve CSVs byte-identical across reruns")
