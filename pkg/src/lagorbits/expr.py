"""Small arithmetic expression grammar used by scenario files.

Expressions such as ``"1 + r^2"`` or ``"-B/2*y"`` are parsed with the
standard-library ``ast`` module, validated against a whitelist, turned into
sympy expressions (so derivatives are exact) and compiled to numpy callables.
Nothing in a scenario string is ever executed as Python code.
"""
from __future__ import annotations

import ast
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
}
CONSTANTS = {"pi": sp.pi, "e": sp.E}


class ExpressionError(ValueError):
    """Raised when an expression string falls outside the grammar."""


def _convert(node, symbols: Mapping[str, sp.Symbol], params: Mapping[str, float]):
    if isinstance(node, ast.Expression):
        return _convert(node.body, symbols, params)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(
        node.value, bool
    ):
        return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
    if isinstance(node, ast.Name):
        if node.id in symbols:
            return symbols[node.id]
        if node.id in params:
            return sp.Float(params[node.id])
        if node.id in CONSTANTS:
            return CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        operand = _convert(node.operand, symbols, params)
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.BinOp):
        left = _convert(node.left, symbols, params)
        right = _convert(node.right, symbols, params)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            return left / right
        if isinstance(node.op, ast.Pow):
            return left**right
        raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only exp, log, sqrt, sin, cos, tan, sinh, cosh, tanh may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return FUNCTIONS[node.func.id](_convert(node.args[0], symbols, params))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse(text: str | float | int, variables: Sequence[str], params: Mapping[str, float] | None = None):
    """Parse ``text`` into a sympy expression in the given variable names."""
    params = dict(params or {})
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return sp.Float(text)
    if not isinstance(text, str):
        raise ExpressionError(f"expected a string expression, got {type(text).__name__}")
    symbols = {name: sp.Symbol(name, real=True) for name in variables}
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree, symbols, params)


class Compiled:
    """A sympy expression compiled to a vectorised function of ``x[..., d]``."""

    def __init__(self, expr, variables: Sequence[str]):
        self.expr = sp.sympify(expr)
        self.variables = tuple(variables)
        self._symbols = [sp.Symbol(v, real=True) for v in self.variables]
        self._fn = sp.lambdify(self._symbols, self.expr, modules="numpy")
        self.is_constant = not (self.expr.free_symbols & set(self._symbols))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.full(x.shape[:-1], float(self.expr))
        out = self._fn(*np.moveaxis(x, -1, 0))
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def diff(self, var: str) -> "Compiled":
        return Compiled(sp.diff(self.expr, sp.Symbol(var, real=True)), self.variables)

    def __repr__(self):
        return f"Compiled({self.expr})"


class CompiledArray:
    """Nested list of sympy expressions compiled into one vectorised function.

    Calling with ``x[..., d]`` returns ``out[..., *shape]``.
    """

    def __init__(self, exprs, variables: Sequence[str]):
        arr = np.array(exprs, dtype=object)
        self.shape = arr.shape
        self.exprs = [sp.sympify(e) for e in arr.reshape(-1)]
        self.variables = tuple(variables)
        syms = [sp.Symbol(v, real=True) for v in self.variables]
        self._const = np.array(
            [float(e) if not (e.free_symbols & set(syms)) else np.nan for e in self.exprs]
        )
        self._live = np.flatnonzero(np.isnan(self._const))
        self._fn = sp.lambdify(syms, [self.exprs[i] for i in self._live], modules="numpy") if self._live.size else None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        out = np.empty(lead + (len(self.exprs),))
        out[...] = np.nan_to_num(self._const)
        if self._fn is not None:
            vals = self._fn(*np.moveaxis(x, -1, 0))
            for j, v in zip(self._live, vals):
                out[..., j] = v
        return out.reshape(lead + self.shape)


def compile_expression(text, variables: Sequence[str], params: Mapping[str, float] | None = None) -> Compiled:
    return Compiled(parse(text, variables, params), variables)
