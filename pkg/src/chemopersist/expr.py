"""Restricted arithmetic expressions for coefficient definitions.

Only numeric literals, a fixed set of variable names, the four arithmetic
operators, powers and a handful of elementary functions are accepted, so a
config file can describe ``1 + 0.2*sin(t)`` without executing user code.
"""
from __future__ import annotations

import ast
import math
import operator

import numpy as np

from .errors import InvalidSpec

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class Expression:
    """A compiled expression over a fixed set of variable names."""

    def __init__(self, source: str, variables=("t", "x", "y")):
        self.source = str(source)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise InvalidSpec(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        self._fn = self._build(tree.body)
        self.names = frozenset(
            n.id for n in ast.walk(tree) if isinstance(n, ast.Name) and n.id in self.variables
        )

    def _build(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(
            node.value, bool
        ):
            value = float(node.value)
            return lambda env: value
        if isinstance(node, ast.Name):
            name = node.id
            if name in self.variables:
                return lambda env: env[name]
            if name in _CONSTS:
                value = _CONSTS[name]
                return lambda env: value
            raise InvalidSpec(f"unknown name {name!r} in expression {self.source!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = self._build(node.left), self._build(node.right)
            return lambda env: op(left(env), right(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            op = _UNOPS[type(node.op)]
            arg = self._build(node.operand)
            return lambda env: op(arg(env))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            fn = _FUNCS[node.func.id]
            arg = self._build(node.args[0])
            return lambda env: fn(arg(env))
        raise InvalidSpec(f"unsupported construct in expression {self.source!r}")

    def __call__(self, **env):
        missing = self.names - env.keys()
        if missing:
            raise InvalidSpec(f"expression {self.source!r} needs values for {sorted(missing)}")
        return self._fn(env)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and (self.source, self.variables) == (
            other.source,
            other.variables,
        )

    def __hash__(self):
        return hash((self.source, self.variables))


def number(value) -> float:
    """Coerce a config scalar (number or constant expression such as ``"2*pi"``)."""
    if isinstance(value, bool):
        raise InvalidSpec(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(Expression(value, variables=())())
    raise InvalidSpec(f"expected a number, got {value!r}")
