"""Closed-form coefficient expressions in the chart variables x1..xn.

Metric families and measure densities are defined by expression strings
("4/(1 + x1**2 + x2**2)**2", "exp(-(x1**2 + x2**2)/2)", ...) parsed into a
small AST.  The same tree evaluates on plain floats, on numpy arrays
(vectorized), and on TaylorPoly jets, so every derivative the tensor
pipeline needs is analytic.  No user callbacks are accepted.

Grammar: Python expression syntax restricted to
  - names x1..xn and the constants pi, e
  - numeric literals
  - + - * / ** and unary minus
  - calls to sin, cos, exp, log, sqrt, tanh with one argument
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigParseError
from .jets import TaylorPoly

_CONSTANTS = {"pi": math.pi, "e": math.e}


def _fn_table(v):
    if isinstance(v, TaylorPoly):
        return {"sin": v.sin, "cos": v.cos, "exp": v.exp, "log": v.log,
                "sqrt": v.sqrt, "tanh": v.tanh}
    return {"sin": lambda: np.sin(v), "cos": lambda: np.cos(v),
            "exp": lambda: np.exp(v), "log": lambda: np.log(v),
            "sqrt": lambda: np.sqrt(v), "tanh": lambda: np.tanh(v)}


class Expression:
    """A parsed coefficient expression over x1..xn."""

    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ConfigParseError(f"bad expression {source!r}: {exc}") from None
        self._root = tree.body
        self.variables = set()
        self._validate(self._root)

    def _validate(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigParseError(
                    f"non-numeric literal in expression {self.source!r}")
            return
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return
            if node.id.startswith("x"):
                try:
                    k = int(node.id[1:])
                except ValueError:
                    k = -1
                if 1 <= k <= self.dim:
                    self.variables.add(k - 1)
                    return
            raise ConfigParseError(
                f"unknown name {node.id!r} in expression {self.source!r} "
                f"(allowed: x1..x{self.dim}, pi, e)")
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
                raise ConfigParseError(
                    f"unsupported operator in expression {self.source!r}")
            self._validate(node.left)
            self._validate(node.right)
            return
        if isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ConfigParseError(
                    f"unsupported unary operator in expression {self.source!r}")
            self._validate(node.operand)
            return
        if isinstance(node, ast.Call):
            if (not isinstance(node.func, ast.Name)
                    or node.func.id not in ("sin", "cos", "exp", "log", "sqrt", "tanh")
                    or len(node.args) != 1 or node.keywords):
                raise ConfigParseError(
                    f"unsupported call in expression {self.source!r}")
            self._validate(node.args[0])
            return
        raise ConfigParseError(
            f"unsupported syntax ({type(node).__name__}) in expression "
            f"{self.source!r}")

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            return env[int(node.id[1:]) - 1]
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left, env)
            b = self._eval(node.right, env)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            # Pow: jets need integer fast path to avoid log of negatives
            if isinstance(a, TaylorPoly):
                if isinstance(b, float) and b.is_integer() and b >= 0:
                    return a ** int(b)
                if isinstance(b, float):
                    return a.power(b)
                raise ConfigParseError(
                    f"jet exponent must be numeric in {self.source!r}")
            return a ** b
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            v = self._eval(node.args[0], env)
            if isinstance(v, (int, float, np.ndarray)) or not isinstance(v, TaylorPoly):
                return _fn_table(v)[node.func.id]()
            return _fn_table(v)[node.func.id]()
        raise AssertionError("unreachable: validated AST")

    def __call__(self, x):
        """Evaluate on a point (sequence of floats) or arrays (vectorized).

        For array input, ``x`` is a sequence of n arrays of common shape.
        """
        return self._eval(self._root, list(x))

    def eval_jet(self, xs) -> TaylorPoly:
        """Evaluate on a sequence of TaylorPoly chart variables."""
        out = self._eval(self._root, list(xs))
        if not isinstance(out, TaylorPoly):
            out = TaylorPoly.constant(xs[0].space, float(out), xs[0].order)
        return out

    def __repr__(self):
        return f"Expression({self.source!r})"


def const_expr(value: float, dim: int) -> Expression:
    return Expression(repr(float(value)), dim)


def parse_matrix(rows, dim: int):
    """Parse an n x n nested list of expression strings."""
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ConfigParseError(f"matrix must be {dim}x{dim}")
    return np.array([[Expression(str(e), dim) for e in row] for row in rows],
                    dtype=object)


def parse_vector(entries, dim: int):
    if len(entries) != dim:
        raise ConfigParseError(f"vector must have {dim} entries")
    return np.array([Expression(str(e), dim) for e in entries], dtype=object)
