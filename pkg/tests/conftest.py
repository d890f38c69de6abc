"""Shared metric fixtures: the chart families exercised across the suite."""

import numpy as np
import pytest

from finslerlab.expressions import Expression
from finslerlab.metrics import (
    Box,
    Measure,
    MetricSpec,
    euclidean_spec,
    randers_spec,
    riemannian_spec,
)

SPHERE_CHART_A = [["4/(1 + x1**2 + x2**2)**2", "0"],
                  ["0", "4/(1 + x1**2 + x2**2)**2"]]
HYPERBOLIC_CHART_A = [["4/(1 - x1**2 - x2**2)**2", "0"],
                      ["0", "4/(1 - x1**2 - x2**2)**2"]]


@pytest.fixture(scope="session")
def eu2():
    return euclidean_spec(2)


@pytest.fixture(scope="session")
def eu3():
    return euclidean_spec(3)


@pytest.fixture(scope="session")
def randers_const():
    """Flat Randers: a = identity, b = (0.5, 0)."""
    return randers_spec(2, [["1", "0"], ["0", "1"]], ["0.5", "0"])


@pytest.fixture(scope="session")
def randers_var():
    """Randers with position-dependent drift (nonzero S-curvature, spray)."""
    return randers_spec(2, [["1", "0"], ["0", "1"]],
                        ["0.3*sin(x2)", "0.2*cos(x1)"],
                        chart=Box.cube(2, 3.0))


@pytest.fixture(scope="session")
def sphere2():
    """Stereographic round-sphere chart, curvature +1."""
    return riemannian_spec(2, SPHERE_CHART_A,
                           measure=Measure("riemannian_volume"),
                           chart=Box.cube(2, 4.0))


@pytest.fixture(scope="session")
def sphere2_lebesgue():
    return riemannian_spec(2, SPHERE_CHART_A, chart=Box.cube(2, 4.0))


@pytest.fixture(scope="session")
def hyper2():
    """Poincare-ball chart, curvature -1."""
    return riemannian_spec(2, HYPERBOLIC_CHART_A,
                           measure=Measure("riemannian_volume"),
                           chart=Box.cube(2, 0.6))


@pytest.fixture(scope="session")
def gauss2():
    """Flat metric with Gaussian weight exp(-|x|^2 / 2)."""
    dens = Expression("exp(-(x1**2 + x2**2)/2)", 2)
    return euclidean_spec(2, measure=Measure("density", dens))


@pytest.fixture(scope="session")
def conformal_sphere2():
    """The sphere chart written as a conformal rescaling of Euclidean."""
    base = euclidean_spec(2, chart=Box.cube(2, 4.0))
    phi = Expression("log(2/(1 + x1**2 + x2**2))", 2)
    return MetricSpec("conformal", 2, phi=phi, base=base,
                      chart=Box.cube(2, 4.0))


def rng(seed=0):
    return np.random.default_rng(seed)
