"""Forward-distance models on chart domains.

Three providers, selected automatically:
  * flat closed form for constant-coefficient families (straight-line
    forward distance r(x) = F(x - x0));
  * radial quadrature for isotropic conformal Riemannian charts centered at
    the origin (radial rays are geodesics);
  * geodesic shooting (Gauss-Newton on direction and time) elsewhere.

Each model returns (r, dr, d2r) at a probe point, which is what the
nonlinear Laplacian of r needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonSmoothDistance
from .jets import TaylorPoly, jet_space
from .metrics import MetricSpec


@dataclass(frozen=True)
class DistanceJet:
    r: float
    dr: np.ndarray
    d2r: np.ndarray


class FlatDistance:
    """Constant-coefficient families: geodesics are straight lines."""

    def __init__(self, spec: MetricSpec, x0):
        self.spec = spec
        self.x0 = np.asarray(x0, dtype=float)
        self.A, self.b = spec.quadratic_form(self.x0)

    def eval(self, x) -> DistanceJet:
        z = np.asarray(x, dtype=float) - self.x0
        q = float(z @ self.A @ z)
        if q <= 1e-28:
            raise NonSmoothDistance("distance jet requested at the center")
        s = math.sqrt(q)
        Az = self.A @ z
        dr = Az / s + self.b
        d2r = self.A / s - np.outer(Az, Az) / s**3
        return DistanceJet(s + float(self.b @ z), dr, d2r)


class RadialConformalDistance:
    """Isotropic quadratic charts a_ij(x) = c(|x|)^2 delta_ij from the origin."""

    def __init__(self, spec: MetricSpec, x0):
        self.spec = spec
        x0 = np.asarray(x0, dtype=float)
        if np.linalg.norm(x0) > 1e-12:
            raise NonSmoothDistance("radial model needs x0 at the origin")
        self.n = spec.dim

    def _factor(self, s: float) -> tuple[float, float]:
        """(c(s), c'(s)) from an order-1 jet of a_11 along the first axis."""
        sp = jet_space(self.n, 1)
        xs = [TaylorPoly.variable(sp, i, s if i == 0 else 0.0)
              for i in range(self.n)]
        A, _ = self.spec.quadratic_form_jets(xs)
        a11 = A[0, 0]
        c = math.sqrt(a11.value)
        return c, a11.partial(0).value / (2 * c)

    def eval(self, x) -> DistanceJet:
        x = np.asarray(x, dtype=float)
        s = float(np.linalg.norm(x))
        if s <= 1e-14:
            raise NonSmoothDistance("distance jet requested at the center")
        nodes, weights = np.polynomial.legendre.leggauss(48)
        ts = 0.5 * s * (nodes + 1.0)
        cs = np.array([self._factor(t)[0] for t in ts])
        r = float(0.5 * s * (weights @ cs))
        zhat = x / s
        c, cp = self._factor(s)
        dr = c * zhat
        d2r = cp * np.outer(zhat, zhat) + (c / s) * (np.eye(self.n)
                                                     - np.outer(zhat, zhat))
        return DistanceJet(r, dr, d2r)


class ShootingDistance:
    """Generic fallback: Gauss-Newton on (initial direction, time)."""

    def __init__(self, spec: MetricSpec, x0, step: float = 5e-3):
        self.spec = spec
        self.x0 = np.asarray(x0, dtype=float)
        self.step = step
        if spec.dim != 2:
            raise NonSmoothDistance("shooting distance implemented for n = 2")

    def distance(self, x) -> float:
        """Forward distance only (no derivative jets)."""
        return self._solve(x)[0]

    def _shoot(self, theta: float, T: float):
        from .connection import spray_coeffs
        d = np.array([math.cos(theta), math.sin(theta)])
        v = d / self.spec.F(self.x0, d)      # F-unit speed => r = T
        x = self.x0.copy()
        nsteps = max(1, math.ceil(T / self.step))
        h = T / nsteps                        # hits T exactly, smooth in T

        def acc(xx, vv):
            return -2.0 * spray_coeffs(self.spec, xx, vv)

        for _ in range(nsteps):
            k1x, k1v = v, acc(x, v)
            k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
            x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        return x, v

    def _solve(self, x):
        x = np.asarray(x, dtype=float)
        z = x - self.x0
        theta = math.atan2(z[1], z[0])
        d = np.array([math.cos(theta), math.sin(theta)])
        T = np.linalg.norm(z) * self.spec.F(self.x0, d)
        for _ in range(40):
            end, v_end = self._shoot(theta, T)
            miss = end - x
            if np.linalg.norm(miss) < 1e-10 * max(1.0, T):
                return T, v_end
            h = 1e-6
            e1, _ = self._shoot(theta + h, T)
            e2, _ = self._shoot(theta, T + h)
            J = np.column_stack([(e1 - end) / h, (e2 - end) / h])
            try:
                delta = np.linalg.solve(J, -miss)
            except np.linalg.LinAlgError:
                raise NonSmoothDistance("singular shooting Jacobian")
            theta += float(delta[0])
            T += float(delta[1])
            if T <= 0:
                raise NonSmoothDistance("shooting time collapsed")
        raise NonSmoothDistance(f"shooting did not converge to {x.tolist()}")

    def eval(self, x) -> DistanceJet:
        from .metrics import fundamental_tensor_batch
        T, v_end = self._solve(x)
        # dr is the Legendre covector of the arriving unit velocity
        g = fundamental_tensor_batch(self.spec, x, v_end[None])[0]
        dr = g @ v_end
        n = self.spec.dim
        d2r = np.empty((n, n))
        h = 1e-4
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            Tp, vp = self._solve(np.asarray(x) + e)
            Tm, vm = self._solve(np.asarray(x) - e)
            gp = fundamental_tensor_batch(self.spec, np.asarray(x) + e, vp[None])[0]
            gm = fundamental_tensor_batch(self.spec, np.asarray(x) - e, vm[None])[0]
            d2r[:, k] = (gp @ vp - gm @ vm) / (2 * h)
        d2r = 0.5 * (d2r + d2r.T)
        return DistanceJet(T, dr, d2r)


def _is_constant_spec(spec: MetricSpec) -> bool:
    exprs = []
    if spec.a is not None:
        exprs.extend(spec.a.flat)
    if spec.b is not None:
        exprs.extend(spec.b.flat)
    if spec.phi is not None:
        exprs.append(spec.phi)
    if spec.base is not None and not _is_constant_spec(spec.base):
        return False
    return all(e.is_constant for e in exprs)


def _is_radial_isotropic(spec: MetricSpec) -> bool:
    if not spec.is_quadratic:
        return False
    rng = np.random.default_rng(11)
    for _ in range(8):
        x = rng.uniform(-0.5, 0.5, spec.dim)
        A, _ = spec.quadratic_form(x)
        off = A - np.diag(np.diag(A))
        scale = float(np.abs(np.diag(A)).max())
        if np.abs(off).max() > 1e-10 * scale:
            return False
        if np.abs(np.diag(A) - A[0, 0]).max() > 1e-10 * scale:
            return False
        # radial symmetry: same value on the sphere of radius |x|
        s = np.linalg.norm(x)
        xe = np.zeros(spec.dim)
        xe[0] = s
        Ae, _ = spec.quadratic_form(xe)
        if abs(A[0, 0] - Ae[0, 0]) > 1e-10 * scale:
            return False
    return True


def make_distance_model(spec: MetricSpec, x0):
    """Pick the cheapest valid forward-distance model for (spec, x0)."""
    if _is_constant_spec(spec):
        return FlatDistance(spec, x0)
    if (_is_radial_isotropic(spec)
            and np.linalg.norm(np.asarray(x0, dtype=float)) <= 1e-12):
        return RadialConformalDistance(spec, x0)
    return ShootingDistance(spec, x0)
