"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A ``TaylorPoly`` stores the Taylor coefficients of a smooth function around a
base point, truncated at a total degree (the jet order).  All arithmetic is
exact on the retained coefficients, so derivatives extracted from a jet carry
no finite-difference noise.  The tensor pipeline expands the squared metric
F^2 in the 2n chart/fiber variables (x^1..x^n, y^1..y^n) to total order 4,
which is what third fiber derivatives plus one horizontal derivative require.

Coefficients are stored densely against a per-(nvars, order) monomial table;
multiplication uses a precomputed index-triple table and ``np.bincount``.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> "JetSpace":
    """Shared, cached coefficient layout for a given variable count and order."""
    return JetSpace(nvars, order)


class JetSpace:
    """Monomial table and multiplication/derivative index tables.

    Monomials (exponent tuples) are sorted by (total degree, lex), so the
    coefficients of degree <= k occupy a contiguous prefix of the array.
    """

    def __init__(self, nvars: int, order: int):
        if nvars < 1 or order < 0:
            raise ValueError("need nvars >= 1 and order >= 0")
        self.nvars = nvars
        self.order = order

        monos = []
        for deg in range(order + 1):
            block = sorted(
                tuple(sum(1 for c in combo if c == v) for v in range(nvars))
                for combo in itertools.combinations_with_replacement(range(nvars), deg)
            )
            monos.extend(block)
        self.monomials = tuple(monos)
        self.size = len(monos)
        self.position = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos], dtype=np.int64)
        # number of coefficients of degree <= k
        self.size_upto = tuple(int(np.sum(self.degree <= k)) for k in range(order + 1))

        # multiplication triples (out, a, b), sorted by out-degree so that a
        # truncated product can use a prefix slice
        out_idx, a_idx, b_idx = [], [], []
        for ia, ma in enumerate(monos):
            da = sum(ma)
            for ib, mb in enumerate(monos):
                if da + sum(mb) > order:
                    continue
                mo = tuple(ea + eb for ea, eb in zip(ma, mb))
                out_idx.append(self.position[mo])
                a_idx.append(ia)
                b_idx.append(ib)
        out_arr = np.array(out_idx, dtype=np.int64)
        a_arr = np.array(a_idx, dtype=np.int64)
        b_arr = np.array(b_idx, dtype=np.int64)
        srt = np.argsort(self.degree[out_arr], kind="stable")
        self._mul_out = out_arr[srt]
        self._mul_a = a_arr[srt]
        self._mul_b = b_arr[srt]
        out_deg = self.degree[self._mul_out]
        self._mul_end = tuple(int(np.searchsorted(out_deg, k, side="right"))
                              for k in range(order + 1))

        # derivative tables: dst coefficient of d/dx_v is src coeff * (alpha_v)
        self._deriv_src = []
        self._deriv_dst = []
        self._deriv_fac = []
        for v in range(nvars):
            src, dst, fac = [], [], []
            for i, m in enumerate(monos):
                if m[v] == 0:
                    continue
                lowered = list(m)
                lowered[v] -= 1
                src.append(i)
                dst.append(self.position[tuple(lowered)])
                fac.append(float(m[v]))
            self._deriv_src.append(np.array(src, dtype=np.int64))
            self._deriv_dst.append(np.array(dst, dtype=np.int64))
            self._deriv_fac.append(np.array(fac))

        self._factorials = np.array(
            [math.prod(math.factorial(e) for e in m) for m in monos])

    def mul_coeffs(self, a: np.ndarray, b: np.ndarray, out_order: int) -> np.ndarray:
        end = self._mul_end[out_order]
        o = self._mul_out[:end]
        prods = a[self._mul_a[:end]] * b[self._mul_b[:end]]
        return np.bincount(o, weights=prods, minlength=self.size)


class TaylorPoly:
    """A truncated Taylor expansion; coefficients valid up to ``self.order``.

    The order shrinks by one under each partial derivative and takes the
    minimum across binary operations, mirroring which truncated coefficients
    remain exact.
    """

    __slots__ = ("space", "order", "c")

    def __init__(self, space: JetSpace, order: int, coeffs: np.ndarray):
        self.space = space
        self.order = order
        self.c = coeffs

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, space: JetSpace, value: float, order: int | None = None):
        c = np.zeros(space.size)
        c[0] = float(value)
        return cls(space, space.order if order is None else order, c)

    @classmethod
    def variable(cls, space: JetSpace, index: int, center: float,
                 order: int | None = None):
        c = np.zeros(space.size)
        c[0] = float(center)
        e = [0] * space.nvars
        e[index] = 1
        c[space.position[tuple(e)]] = 1.0
        return cls(space, space.order if order is None else order, c)

    # -- accessors ---------------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.c[0])

    def coeff(self, exponents) -> float:
        """Taylor coefficient (derivative / alpha!)."""
        return float(self.c[self.space.position[tuple(exponents)]])

    def deriv(self, exponents) -> float:
        """Mixed partial derivative at the base point."""
        exponents = tuple(exponents)
        pos = self.space.position[exponents]
        return float(self.c[pos] * self.space._factorials[pos])

    def partial(self, v: int) -> "TaylorPoly":
        """d/dx_v, valid to one order less."""
        sp = self.space
        out = np.zeros(sp.size)
        out[sp._deriv_dst[v]] = self.c[sp._deriv_src[v]] * sp._deriv_fac[v]
        return TaylorPoly(sp, max(self.order - 1, 0), out)

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, TaylorPoly):
            return other
        return TaylorPoly.constant(self.space, other, self.order)

    def __add__(self, other):
        o = self._coerce(other)
        return TaylorPoly(self.space, min(self.order, o.order), self.c + o.c)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return TaylorPoly(self.space, min(self.order, o.order), self.c - o.c)

    def __rsub__(self, other):
        o = self._coerce(other)
        return TaylorPoly(self.space, min(self.order, o.order), o.c - self.c)

    def __neg__(self):
        return TaylorPoly(self.space, self.order, -self.c)

    def __mul__(self, other):
        if not isinstance(other, TaylorPoly):
            return TaylorPoly(self.space, self.order, self.c * float(other))
        k = min(self.order, other.order)
        return TaylorPoly(self.space, k, self.space.mul_coeffs(self.c, other.c, k))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, TaylorPoly):
            return TaylorPoly(self.space, self.order, self.c / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * float(other)

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = TaylorPoly.constant(self.space, 1.0, self.order)
            base = self
            k = p
            while k:
                if k & 1:
                    out = out * base
                base = base * base
                k >>= 1
            return out
        return self.power(float(p))

    # -- composition with univariate analytic functions ---------------------

    def compose(self, derivs) -> "TaylorPoly":
        """Compose f(self) where ``derivs[k]`` = f^(k) at ``self.value``."""
        k = self.order
        w = TaylorPoly(self.space, k, self.c.copy())
        w.c[0] = 0.0
        coeffs = [derivs[j] / math.factorial(j) for j in range(k + 1)]
        out = TaylorPoly.constant(self.space, coeffs[k], k)
        for j in range(k - 1, -1, -1):
            out = out * w + coeffs[j]
        return out

    def reciprocal(self) -> "TaylorPoly":
        u = self.value
        if u == 0.0:
            raise ZeroDivisionError("jet reciprocal at zero value")
        derivs = [((-1) ** j) * math.factorial(j) / u ** (j + 1)
                  for j in range(self.order + 1)]
        return self.compose(derivs)

    def sqrt(self) -> "TaylorPoly":
        u = self.value
        if u <= 0.0:
            raise ValueError("jet sqrt of non-positive value")
        derivs, d = [], math.sqrt(u)
        for j in range(self.order + 1):
            derivs.append(d)
            d *= (0.5 - j) / u
        return self.compose(derivs)

    def power(self, p: float) -> "TaylorPoly":
        u = self.value
        if u <= 0.0:
            raise ValueError("jet power of non-positive value")
        derivs, d = [], u ** p
        for j in range(self.order + 1):
            derivs.append(d)
            d *= (p - j) / u
        return self.compose(derivs)

    def exp(self) -> "TaylorPoly":
        e = math.exp(self.value)
        return self.compose([e] * (self.order + 1))

    def log(self) -> "TaylorPoly":
        u = self.value
        if u <= 0.0:
            raise ValueError("jet log of non-positive value")
        derivs = [math.log(u)]
        for j in range(1, self.order + 1):
            derivs.append(((-1) ** (j - 1)) * math.factorial(j - 1) / u ** j)
        return self.compose(derivs)

    def sin(self) -> "TaylorPoly":
        u = self.value
        cyc = [math.sin(u), math.cos(u), -math.sin(u), -math.cos(u)]
        return self.compose([cyc[j % 4] for j in range(self.order + 1)])

    def cos(self) -> "TaylorPoly":
        u = self.value
        cyc = [math.cos(u), -math.sin(u), -math.cos(u), math.sin(u)]
        return self.compose([cyc[j % 4] for j in range(self.order + 1)])

    def tanh(self) -> "TaylorPoly":
        # derivatives of tanh via the recurrence on polynomials in t = tanh(u)
        t = math.tanh(self.value)
        derivs = [t]
        # p_k(t) with tanh^(k) = p_k(t); p_{k+1} = p_k'(t)*(1 - t^2)
        poly = np.array([0.0, 1.0])  # p_0(t) = t
        for _ in range(self.order):
            dp = np.polynomial.polynomial.polyder(poly)
            poly = np.polynomial.polynomial.polymul(dp, np.array([1.0, 0.0, -1.0]))
            derivs.append(float(np.polynomial.polynomial.polyval(t, poly)))
        return self.compose(derivs)

    def __repr__(self):
        return (f"TaylorPoly(nvars={self.space.nvars}, order={self.order}, "
                f"value={self.value:.6g})")


# -- jet-valued linear algebra (object arrays of TaylorPoly) -----------------

def jet_matrix_inverse(M) -> np.ndarray:
    """Inverse of a square matrix of jets whose value part is invertible.

    Uses the terminating Neumann series around the value-part inverse: the
    correction D = M - M0 has no constant term, so powers beyond the jet
    order vanish.
    """
    M = np.asarray(M, dtype=object)
    n = M.shape[0]
    space = M[0, 0].space
    order = min(int(m.order) for m in M.flat)
    M0 = np.array([[M[i, j].value for j in range(n)] for i in range(n)])
    X0 = np.linalg.inv(M0)
    X0j = np.array([[TaylorPoly.constant(space, X0[i, j], order)
                     for j in range(n)] for i in range(n)], dtype=object)
    D = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            D[i, j] = M[i, j] - M[i, j].value
    X = X0j
    for _ in range(order):
        X = X0j - _jet_matmul(_jet_matmul(X0j, D), X)
    return X


def _jet_matmul(A, B):
    n, m = A.shape[0], B.shape[1]
    k = A.shape[1]
    out = np.empty((n, m), dtype=object)
    for i in range(n):
        for j in range(m):
            acc = A[i, 0] * B[0, j]
            for s in range(1, k):
                acc = acc + A[i, s] * B[s, j]
            out[i, j] = acc
    return out


def jet_det(M) -> TaylorPoly:
    """Determinant of a small jet matrix by cofactor expansion."""
    M = np.asarray(M, dtype=object)
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    if n == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    acc = None
    for j in range(n):
        minor = np.delete(np.delete(M, 0, axis=0), j, axis=1)
        term = M[0, j] * jet_det(minor)
        if j % 2 == 1:
            term = -term
        acc = term if acc is None else acc + term
    return acc
