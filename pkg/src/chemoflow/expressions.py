"""Arithmetic expressions for model functions and initial data.

Grammar: numeric literals, the variables ``x y z t s``, the constant ``pi``,
binary ``+ - * / ^``, unary ``+ -``, parentheses and the functions
``sin cos exp log sqrt abs min max``. ``^`` is right associative and binds
tighter than unary minus, so ``-x^2 == -(x^2)``.

Expressions are parsed with :mod:`ast` after rewriting ``^`` to ``**``; only
the node types listed above are accepted. Evaluation is vectorized over numpy
arrays and raises :class:`EvaluationError` on division by zero or a domain
violation, and on any non-finite result, instead of producing inf/nan.
"""

from __future__ import annotations

import ast
import math
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from .errors import EvaluationError

VARIABLES = ("x", "y", "z", "t", "s")
CONSTANTS = {"pi": math.pi}


def _log(arg):
    if np.any(arg <= 0):
        raise ValueError("log of a non-positive value")
    return np.log(arg)


def _sqrt(arg):
    if np.any(arg < 0):
        raise ValueError("sqrt of a negative value")
    return np.sqrt(arg)


def _exp(arg):
    with np.errstate(over="raise"):
        try:
            return np.exp(arg)
        except FloatingPointError:
            raise ValueError("exp overflow") from None


def _reduce(fn):
    def apply(*args):
        if len(args) < 2:
            raise ValueError("min/max need at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out

    return apply


FUNCTIONS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "exp": (_exp, 1),
    "log": (_log, 1),
    "sqrt": (_sqrt, 1),
    "abs": (np.abs, 1),
    "min": (_reduce(np.minimum), None),
    "max": (_reduce(np.maximum), None),
}


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise ZeroDivisionError("division by zero")
    return a / b


def _power(a, b):
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = np.power(np.asarray(a, dtype=float), b)
    if not np.all(np.isfinite(out)):
        raise ValueError("power outside its domain")
    return out


_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: _divide,
    ast.Pow: _power,
}


class Expression:
    """A parsed expression; call with keyword variables to evaluate."""

    def __init__(self, source: str):
        self.source = source
        self._columns = _column_map(source)
        rewritten = source.replace("^", "**")
        try:
            self._text = rewritten.strip()
            tree = ast.parse(self._text, mode="eval")
        except SyntaxError as exc:
            col = self._position(exc.offset - 1 if exc.offset else None)
            raise EvaluationError(
                f"syntax error in {source!r} at column {col}", expression=source, position=col
            ) from None
        self._tree = tree.body
        self._check(self._tree)
        self.variables = frozenset(
            n.id for n in ast.walk(self._tree) if isinstance(n, ast.Name) and n.id in VARIABLES
        )

    def _position(self, offset):
        if offset is None:
            return None
        # the strip() in parsing removed leading blanks
        offset += len(self.source.replace("^", "**")) - len(self.source.replace("^", "**").lstrip())
        return self._columns.get(offset, offset)

    def _operator_offset(self, node):
        """Offset of a binary operator symbol: first non-blank, non-')' after the left operand."""
        i = node.left.end_col_offset
        while i < len(self._text) and self._text[i] in " )":
            i += 1
        return i

    def _fail(self, node, message):
        offset = self._operator_offset(node) if isinstance(node, ast.BinOp) else getattr(node, "col_offset", None)
        col = self._position(offset)
        raise EvaluationError(
            f"{message} in {self.source!r} at column {col}", expression=self.source, position=col
        )

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                self._fail(node, "unsupported operator")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                self._fail(node, "unsupported unary operator")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, "only numeric literals are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in CONSTANTS:
                self._fail(node, f"undefined variable {node.id!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                self._fail(node, "unknown function")
            if node.keywords:
                self._fail(node, "keyword arguments are not allowed")
            arity = FUNCTIONS[node.func.id][1]
            if arity is not None and len(node.args) != arity:
                self._fail(node, f"{node.func.id} takes {arity} argument(s)")
            for a in node.args:
                self._check(a)
        else:
            self._fail(node, f"unsupported syntax ({type(node).__name__})")

    def __call__(self, **env):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                out = self._eval(self._tree, env)
            if not np.all(np.isfinite(out)):
                raise EvaluationError(f"non-finite result from {self.source!r}", expression=self.source)
            return out
        except EvaluationError:
            raise
        except (ValueError, ZeroDivisionError, FloatingPointError, OverflowError) as exc:
            raise EvaluationError(
                f"cannot evaluate {self.source!r}: {exc}", expression=self.source
            ) from None

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            if node.id not in env:
                self._fail(node, f"variable {node.id!r} has no value here")
            return env[node.id]
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else +val
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, env)
            right = self._eval(node.right, env)
            try:
                return _BINOPS[type(node.op)](left, right)
            except (ValueError, ZeroDivisionError) as exc:
                self._fail(node, str(exc))
        if isinstance(node, ast.Call):
            fn = FUNCTIONS[node.func.id][0]
            args = [self._eval(a, env) for a in node.args]
            try:
                return fn(*args)
            except ValueError as exc:
                self._fail(node, f"{node.func.id}: {exc}")
        self._fail(node, "unsupported syntax")

    def __repr__(self):
        return f"Expression({self.source!r})"


def _column_map(source):
    """Map offsets in the ``**``-rewritten text back to 1-based source columns."""
    mapping = {}
    j = 0
    for i, ch in enumerate(source):
        mapping[j] = i + 1
        j += 2 if ch == "^" else 1
    mapping[j] = len(source) + 1
    return mapping


@lru_cache(maxsize=256)
def compile_expression(source: str) -> Expression:
    return Expression(source)


def eval_expression(expr: str, point: Mapping[str, float] | None = None, t: float = 0.0, **variables):
    """Evaluate ``expr`` at a point; ``point`` maps variable names to values."""
    env = dict(point or {})
    env.setdefault("t", t)
    env.update(variables)
    value = compile_expression(expr)(**env)
    if np.ndim(value) == 0:
        return float(value)
    return value


# ---------------------------------------------------------------------------
# adapters to the callables the model expects

def scalar_function(source: str) -> Callable:
    """f(s) from an expression in ``s``."""
    expr = compile_expression(source)

    def fn(s):
        out = expr(s=s)
        return out * np.ones_like(s) if np.ndim(s) else out

    fn.source = source
    return fn


def spatial_function(source: str) -> Callable:
    """phi(x, y[, z], t=0) from an expression in the coordinates."""
    expr = compile_expression(source)

    def fn(*coords, t=0.0):
        env = dict(zip(("x", "y", "z"), coords))
        env["t"] = t
        out = expr(**env)
        return out * np.ones_like(coords[0])

    fn.source = source
    return fn


def forcing_component(source: str) -> Callable:
    """g_d(t, x, y[, z]) from an expression."""
    expr = compile_expression(source)

    def fn(t, *coords):
        env = dict(zip(("x", "y", "z"), coords))
        env["t"] = t
        return expr(**env) * np.ones_like(coords[0])

    fn.source = source
    return fn
