"""TOML configuration parsing into metric specs and run settings.

The config grammar (documented in the README) uses nested tables:

    schema_version = 1
    [metric]    family, dimension, a, b, phi, chart, [metric.base]
    [measure]   kind = lebesgue|density|riemannian_volume, sigma
    [domain]    bounds, resolution, boundary
    [solver]    tol, max_iter
    [tensors]   k_values, misalignment_resolution
    [liouville] radii, oscillation, center, resolution
    [geodesic]  x0, y0, t_max, step
    [validate]  expected_flag_curvature (optional)

All coefficient entries are expression strings in x1..xn.
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigParseError
from .expressions import Expression, parse_matrix, parse_vector
from .metrics import Box, Measure, MetricSpec
from .solver import GridDomain, SolverConfig


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigParseError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"invalid TOML in {path}: {exc}")
    if "metric" not in cfg:
        raise ConfigParseError("missing [metric] table")
    return cfg


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigParseError(f"missing key {key!r} in [{where}]")
    return table[key]


def build_measure(cfg: dict, dim: int) -> Measure:
    table = cfg.get("measure", {})
    kind = table.get("kind", "lebesgue")
    if kind == "lebesgue":
        return Measure()
    if kind == "riemannian_volume":
        return Measure("riemannian_volume")
    if kind == "density":
        sigma = _require(table, "sigma", "measure")
        return Measure("density", Expression(str(sigma), dim))
    raise ConfigParseError(f"unknown measure kind {kind!r}")


def _build_chart(table: dict, dim: int) -> Box | None:
    if "chart" in table:
        rows = table["chart"]
        if len(rows) != dim or any(len(r) != 2 for r in rows):
            raise ConfigParseError("[metric] chart must be a list of n [lo, hi] pairs")
        return Box(tuple(float(r[0]) for r in rows),
                   tuple(float(r[1]) for r in rows))
    if "chart_halfwidth" in table:
        return Box.cube(dim, float(table["chart_halfwidth"]))
    return None


def _build_family(table: dict, dim: int, measure, chart) -> MetricSpec:
    family = str(_require(table, "family", "metric")).lower()
    if family == "euclidean":
        return MetricSpec("euclidean", dim, measure=measure, chart=chart)
    if family == "riemannian":
        a = parse_matrix(_require(table, "a", "metric"), dim)
        return MetricSpec("riemannian", dim, a=a, measure=measure, chart=chart)
    if family == "randers":
        a = parse_matrix(_require(table, "a", "metric"), dim)
        b = parse_vector(_require(table, "b", "metric"), dim)
        return MetricSpec("randers", dim, a=a, b=b, measure=measure, chart=chart)
    if family == "conformal":
        phi = Expression(str(_require(table, "phi", "metric")), dim)
        base_table = _require(table, "base", "metric")
        base = _build_family(base_table, dim, None, chart)
        return MetricSpec("conformal", dim, phi=phi, base=base,
                          measure=measure, chart=chart)
    raise ConfigParseError(f"unknown metric family {family!r}")


def build_spec(cfg: dict) -> MetricSpec:
    table = cfg["metric"]
    dim = int(_require(table, "dimension", "metric"))
    measure = build_measure(cfg, dim)
    chart = _build_chart(table, dim)
    return _build_family(table, dim, measure, chart)


def build_domain(cfg: dict, dim: int) -> GridDomain:
    table = cfg.get("domain")
    if table is None:
        raise ConfigParseError("missing [domain] table")
    bounds = _require(table, "bounds", "domain")
    if len(bounds) != dim:
        raise ConfigParseError("[domain] bounds rank != metric dimension")
    resolution = int(_require(table, "resolution", "domain"))
    boundary = table.get("boundary", "0")
    expr = Expression(str(boundary), dim)

    def boundary_fn(x):
        return float(expr(np.asarray(x, dtype=float)))

    return GridDomain(bounds=bounds, resolution=resolution,
                      boundary_data=boundary_fn)


def build_solver_config(cfg: dict) -> SolverConfig:
    table = cfg.get("solver", {})
    return SolverConfig(
        tol=float(table.get("tol", 1e-9)),
        max_iter=int(table.get("max_iter", 60)),
        verbose=bool(table.get("verbose", False)),
    )


def liouville_settings(cfg: dict, dim: int) -> dict:
    table = cfg.get("liouville")
    if table is None:
        raise ConfigParseError("missing [liouville] table")
    radii = [float(r) for r in _require(table, "radii", "liouville")]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigParseError("[liouville] radii must be strictly increasing")
    center = [float(c) for c in table.get("center", [0.0] * dim)]
    if len(center) != dim:
        raise ConfigParseError("[liouville] center rank != metric dimension")
    return {
        "radii": radii,
        "M": float(table.get("oscillation", 1.0)),
        "center": center,
        "resolution": int(table.get("resolution", 129)),
        "reference_C": float(table.get("reference_C", 1.0)),
    }


def geodesic_settings(cfg: dict, dim: int) -> dict:
    table = cfg.get("geodesic")
    if table is None:
        raise ConfigParseError("missing [geodesic] table")
    x0 = [float(v) for v in _require(table, "x0", "geodesic")]
    y0 = [float(v) for v in _require(table, "y0", "geodesic")]
    if len(x0) != dim or len(y0) != dim:
        raise ConfigParseError("[geodesic] x0/y0 rank != metric dimension")
    return {
        "x0": x0,
        "y0": y0,
        "t_max": float(table.get("t_max", 1.0)),
        "step": float(table.get("step", 1e-3)),
    }


def tensors_settings(cfg: dict) -> dict:
    table = cfg.get("tensors", {})
    ks = [float(k) for k in table.get("k_values", [])]
    for k in ks:
        if not math.isfinite(k):
            raise ConfigParseError("[tensors] k_values must be finite floats")
    return {
        "k_values": ks,
        "misalignment_resolution": int(table.get("misalignment_resolution", 32)),
    }
