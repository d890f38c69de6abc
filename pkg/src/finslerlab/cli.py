"""Command-line front end: tensors, solve, liouville, validate, geodesic.

Outputs are deterministic CSV files (17-significant-digit formatting, fixed
column order, a `# schema_version` comment line) plus a JSON run manifest.
Exit codes: 0 success, 2 config/points parse error, 3 numerical failure,
4 curvature-hypothesis warning promoted by --strict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    build_domain,
    build_solver_config,
    build_spec,
    geodesic_settings,
    liouville_settings,
    load_config,
    tensors_settings,
)
from .connection import integrate_geodesic
from .curvature import MinusInfinityType, curvature_report
from .errors import (
    BadPointsRow,
    ConfigParseError,
    CurvatureHypothesisViolated,
    FinslerError,
)
from .solver import ScalarField, decay_slope, liouville_experiment, solve_dirichlet

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_HYPOTHESIS = 4


def _fmt(x) -> str:
    if isinstance(x, MinusInfinityType):
        return "MINUS_INFINITY"
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list, rows: list):
    with open(path, "w") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def _config_digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(outdir: Path, subcommand: str, config_path: str,
                    outputs: list, summary: dict, wall_time: float) -> Path:
    for name in outputs:
        p = outdir / name
        if not p.exists() or p.stat().st_size == 0:
            raise FinslerError(f"output file {name} missing or empty")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "config_digest": _config_digest(config_path),
        "library_version": __version__,
        "wall_time_s": round(wall_time, 6),
        "outputs": outputs,
        "summary": summary,
    }
    path = outdir / "run_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# points file
# ---------------------------------------------------------------------------

def _read_points(path: str, dim: int) -> list:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 or (rows == [] and any(c.isalpha() for c in line)):
                if any(c.isalpha() for c in line):
                    continue                      # header row
            parts = line.split(",")
            if len(parts) != 3 * dim:
                raise BadPointsRow(
                    f"line {lineno}: expected {3 * dim} columns "
                    f"(x, Y, W), got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise BadPointsRow(f"line {lineno}: non-numeric entry")
            rows.append((np.array(vals[:dim]), np.array(vals[dim:2 * dim]),
                         np.array(vals[2 * dim:])))
    if not rows:
        raise BadPointsRow("points file has no data rows")
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_tensors(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    spec = build_spec(cfg)
    settings = tensors_settings(cfg)
    ks = settings["k_values"]
    points = _read_points(args.points, spec.dim)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    all_ks = tuple(ks) + (math.inf,)

    def work(row):
        x, Y, W = row
        return curvature_report(
            spec, x, Y, W, ks=all_ks,
            misalignment_resolution=settings["misalignment_resolution"])

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(work, points))
    else:
        reports = [work(row) for row in points]

    n = spec.dim
    header = ([f"x{i+1}" for i in range(n)] + [f"Y{i+1}" for i in range(n)]
              + [f"W{i+1}" for i in range(n)]
              + ["ricci", "s_curv", "s_dot"]
              + [f"wric_{_kname(k)}" for k in all_ks]
              + [f"mixed_wric_{_kname(k)}" for k in all_ks]
              + ["t_norm", "t_antisym_residual", "u_norm", "divc_norm",
                 "misalignment"])
    rows = []
    for rep in reports:
        row = (list(rep.x) + list(rep.Y) + list(rep.W)
               + [rep.ricci, rep.s_curv, rep.s_dot]
               + [rep.wric[k] for k in all_ks]
               + [rep.mixed_wric[k] for k in all_ks]
               + [rep.t_norm, rep.t_antisym_residual, rep.u_norm,
                  rep.divc_norm, rep.alpha])
        rows.append(row)
    _write_csv(outdir / "curvature_report.csv", header, rows)
    _write_manifest(outdir, "tensors", args.config, ["curvature_report.csv"],
                    {"points": len(rows), "spec_digest": spec.digest()},
                    time.time() - t0)
    return EXIT_OK


def _kname(k) -> str:
    return "inf" if k == math.inf else format(k, "g")


def _write_field_csv(path: Path, fld: ScalarField):
    dom = fld.domain
    with open(path, "w") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(f"# dim={dom.dim} resolution={dom.resolution}\n")
        fh.write("# bounds=" + ";".join(
            f"{_fmt(lo)}:{_fmt(hi)}" for lo, hi in dom.bounds) + "\n")
        vals = np.atleast_2d(np.asarray(fld.values, dtype=float))
        for row in vals:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_field_csv(path) -> tuple:
    """(values, bounds, resolution) from a field CSV written by cmd_solve."""
    bounds = None
    resolution = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if line.startswith("# dim="):
                    resolution = int(line.split("resolution=")[1])
                elif line.startswith("# bounds="):
                    bounds = [[float(v) for v in part.split(":")]
                              for part in line.split("=", 1)[1].split(";")]
                continue
            if line:
                rows.append([float(v) for v in line.split(",")])
    vals = np.array(rows)
    if len(bounds) == 1:
        vals = vals.reshape(-1)
    return vals, bounds, resolution


def cmd_solve(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    spec = build_spec(cfg)
    dom = build_domain(cfg, spec.dim)
    solver_cfg = build_solver_config(cfg)
    fld = solve_dirichlet(dom, spec, None, solver_cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_field_csv(outdir / "solution.csv", fld)
    meta = fld.metadata
    _write_manifest(
        outdir, "solve", args.config, ["solution.csv"],
        {
            "spec_digest": meta["spec_digest"],
            "iterations": meta["iterations"],
            "energy": meta["energy"],
            "residual_norm": meta["residual_norm"],
            "status": meta["status"],
        },
        time.time() - t0)
    return EXIT_OK if meta["converged"] else EXIT_NUMERICAL


def cmd_liouville(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    spec = build_spec(cfg)
    settings = liouville_settings(cfg, spec.dim)
    solver_cfg = build_solver_config(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CurvatureHypothesisViolated)
        result = liouville_experiment(
            spec, None, settings["center"], settings["radii"], settings["M"],
            solver_cfg, resolution=settings["resolution"],
            reference_C=settings["reference_C"])
    hypothesis_warned = any(
        issubclass(w.category, CurvatureHypothesisViolated) for w in caught)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    header = ["radius", "b", "h_max", "center_energy", "bound_value",
              "empirical_C"]
    rows = [[rec.radius, rec.b, rec.h_max, rec.center_energy,
             rec.bound_value, rec.empirical_C] for rec in result.records]
    _write_csv(outdir / "liouville_records.csv", header, rows)
    summary = {
        "spec_digest": spec.digest(),
        "radii": settings["radii"],
        "decay_slope_last3": decay_slope(result.records, last=3),
        "k0_observed": result.k0_observed,
        "wric_min": result.wric_min,
        "hypothesis_warning": hypothesis_warned,
    }
    _write_manifest(outdir, "liouville", args.config,
                    ["liouville_records.csv"], summary, time.time() - t0)
    if hypothesis_warned:
        print("warning: curvature hypothesis violated on samples",
              file=sys.stderr)
        if args.strict:
            return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_geodesic(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    spec = build_spec(cfg)
    settings = geodesic_settings(cfg, spec.dim)
    path = integrate_geodesic(spec, settings["x0"], settings["y0"],
                              settings["t_max"], settings["step"])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    n = spec.dim
    F0 = spec.F(settings["x0"], settings["y0"])
    header = (["t"] + [f"x{i+1}" for i in range(n)]
              + [f"v{i+1}" for i in range(n)] + ["F_drift"])
    rows = []
    for k in range(len(path.ts)):
        drift = abs(spec.F(path.xs[k], path.vs[k]) - F0)
        rows.append([path.ts[k]] + list(path.xs[k]) + list(path.vs[k])
                    + [drift])
    _write_csv(outdir / "geodesic.csv", header, rows)
    _write_manifest(outdir, "geodesic", args.config, ["geodesic.csv"],
                    {"samples": len(rows), "conservation_drift": path.drift},
                    time.time() - t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _validation_checks(spec, rng, expected_flag=None):
    """Yield (name, ok, detail) for the cross-module invariant battery."""
    from .connection import FrameJets, integrate_geodesic
    from .curvature import (
        mixed_weighted_ricci,
        t_tensor,
        weighted_ricci,
        flag_curvature,
    )
    from .metrics import (
        eval_metric,
        fundamental_tensor,
        legendre_dual,
        misalignment,
        squared_metric_poly,
    )

    n = spec.dim
    lo = np.asarray(spec.chart.lows)
    hi = np.asarray(spec.chart.highs)
    span = np.minimum(hi - lo, 4.0)
    mid = (lo + hi) / 2

    def sample_x():
        return mid + span * (rng.random(n) - 0.5) * 0.45

    def sample_y():
        v = rng.standard_normal(n)
        return v / np.linalg.norm(v)

    # homogeneity
    worst = 0.0
    for _ in range(20):
        x, y = sample_x(), sample_y()
        worst = max(worst, abs(eval_metric(spec, x, 2 * y)
                               - 2 * eval_metric(spec, x, y)))
    yield "metric_homogeneity", worst <= 1e-11, f"max residual {worst:.2e}"

    # Cartan annihilation and g positive definiteness
    worst = 0.0
    for _ in range(100):
        x, y = sample_x(), sample_y()
        fr = fundamental_tensor(spec, x, y)
        worst = max(worst, float(np.abs(
            np.einsum("ijk,k->ij", fr.cartan, y)).max()))
    yield "cartan_annihilation", worst <= 1e-10, f"max residual {worst:.2e}"

    # jet vs finite differences (orders 1 and 2)
    x, y = sample_x(), sample_y()
    poly = squared_metric_poly(spec, x, y, order=2)
    z0 = np.concatenate([x, y])
    worst = 0.0

    def f2(z):
        return eval_metric(spec, z[:n], z[n:]) ** 2

    h = 1e-4
    for v in range(2 * n):
        e = np.zeros(2 * n)
        e[v] = h
        fd = (f2(z0 + e) - f2(z0 - e)) / (2 * h)
        exps = [0] * (2 * n)
        exps[v] = 1
        worst = max(worst, abs(poly.deriv(exps) - fd) / max(1.0, abs(fd)))
    yield "jet_vs_finite_difference", worst <= 1e-5, f"max rel {worst:.2e}"

    # Legendre involution
    worst = 0.0
    for _ in range(50):
        x = sample_x()
        xi = rng.standard_normal(n)
        grad, _ = legendre_dual(spec, x, xi)
        g = fundamental_tensor(spec, x, grad).g
        worst = max(worst, float(np.linalg.norm(g @ grad - xi)
                                 / np.linalg.norm(xi)))
    yield "legendre_involution", worst <= 1e-9, f"max rel {worst:.2e}"

    # connection invariants
    worst_sym = worst_rec = worst_compat = 0.0
    for _ in range(20):
        x, y = sample_x(), sample_y()
        fr = FrameJets(spec, x, y, order=3)
        gam = fr.gamma
        worst_sym = max(worst_sym, float(np.abs(
            gam - np.swapaxes(gam, 1, 2)).max()))
        G = 0.5 * np.einsum("ijk,j,k->i", gam, y, y)
        worst_rec = max(worst_rec, float(np.abs(G - fr.spray).max()
                                         / max(1.0, np.abs(fr.spray).max())))
        resid = fr.delta_g.copy()
        for k in range(n):
            resid[k] -= np.einsum("mi,mj->ij", gam[:, k, :], fr.g)
            resid[k] -= np.einsum("mj,im->ij", gam[:, k, :], fr.g)
        worst_compat = max(worst_compat, float(np.abs(resid).max()))
    yield "chern_torsion_free", worst_sym <= 1e-10, f"max {worst_sym:.2e}"
    yield "spray_reconstruction", worst_rec <= 1e-9, f"max rel {worst_rec:.2e}"
    yield "metric_compatibility", worst_compat <= 1e-8, f"max {worst_compat:.2e}"

    # curvature identities
    worst = 0.0
    for _ in range(20):
        x, y = sample_x(), sample_y()
        fr = FrameJets(spec, x, y, order=4)
        R = fr.riemann
        scale = max(1.0, float(np.abs(R).max()))
        worst = max(worst, float(np.abs(R @ y).max()) / scale,
                    float(np.abs(y @ fr.g @ R).max()) / scale)
    yield "spray_curvature_annihilation", worst <= 1e-7, f"max rel {worst:.2e}"

    # T antisymmetry and mixed reduction
    worst_t = worst_m = 0.0
    for _ in range(10):
        x = sample_x()
        Y, W = sample_y(), sample_y()
        a, _ = t_tensor(spec, x, Y, W)
        b, _ = t_tensor(spec, x, W, Y)
        worst_t = max(worst_t, float(np.abs(a + b).max()))
        mv = mixed_weighted_ricci(spec, x, Y, Y, math.inf)
        wv = weighted_ricci(spec, x, Y, math.inf)
        if not isinstance(mv, MinusInfinityType):
            worst_m = max(worst_m, abs(mv - wv))
    yield "t_tensor_antisymmetry", worst_t <= 1e-10, f"max {worst_t:.2e}"
    yield "mixed_to_plain_reduction", worst_m <= 1e-9, f"max {worst_m:.2e}"

    # geodesic conservation
    x, y = sample_x(), sample_y()
    try:
        path = integrate_geodesic(spec, x, 0.3 * y, 1.0)
        F0 = eval_metric(spec, x, 0.3 * y)
        ok = path.drift <= 1e-6 * F0
        yield "geodesic_conservation", ok, f"drift {path.drift:.2e}"
    except FinslerError as exc:
        yield "geodesic_conservation", False, f"error: {exc}"

    # Riemannian reductions
    if spec.is_quadratic:
        worst_c = 0.0
        for _ in range(10):
            x, y = sample_x(), sample_y()
            worst_c = max(worst_c, float(np.abs(
                fundamental_tensor(spec, x, y).cartan).max()))
        yield "riemannian_cartan_zero", worst_c <= 1e-10, f"max {worst_c:.2e}"
        alpha = misalignment(spec, sample_x(), 16)
        yield "riemannian_misalignment_one", alpha == 1.0, f"alpha {alpha}"

    if expected_flag is not None:
        worst = 0.0
        for _ in range(20):
            x, y = sample_x(), sample_y()
            e = sample_y()
            if n == 2 and abs(e[0] * y[1] - e[1] * y[0]) < 1e-3:
                e = np.array([y[1], -y[0]])
            worst = max(worst, abs(flag_curvature(spec, x, y, e)
                                   - expected_flag))
        yield ("flag_curvature_oracle", worst <= 1e-6,
               f"max deviation {worst:.2e} from {expected_flag}")


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    spec = build_spec(cfg)
    expected = cfg.get("validate", {}).get("expected_flag_curvature")
    rng = np.random.default_rng(args.seed)
    failures = 0
    for name, ok, detail in _validation_checks(
            spec, rng, None if expected is None else float(expected)):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    print(f"{'OK' if failures == 0 else 'FAILED'}: "
          f"{failures} failing check(s)")
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="finslerlab",
        description="Finsler metric-measure tensors, exponentially harmonic "
                    "solves, and Liouville-decay experiments")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, needs_points=False):
        sp.add_argument("--config", required=True, help="TOML config path")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--strict", action="store_true",
                        help="promote hypothesis warnings to failures")
        if needs_points:
            sp.add_argument("--points", required=True,
                            help="CSV of rows x1..xn, Y1..Yn, W1..Wn")

    common(sub.add_parser("tensors", help="batch curvature reports"),
           needs_points=True)
    common(sub.add_parser("solve", help="Dirichlet exp-harmonic solve"))
    common(sub.add_parser("liouville", help="expanding-ball decay experiment"))
    common(sub.add_parser("validate", help="invariant battery on the spec"))
    common(sub.add_parser("geodesic", help="integrate one geodesic"))
    return p


_DISPATCH = {
    "tensors": cmd_tensors,
    "solve": cmd_solve,
    "liouville": cmd_liouville,
    "validate": cmd_validate,
    "geodesic": cmd_geodesic,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.subcommand](args)
    except (ConfigParseError, BadPointsRow) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FinslerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
