"""Small arithmetic-expression evaluator for data and level-set definitions.

Supports ``+ - * / ^`` (``**`` too), parentheses, implicit multiplication
such as ``10(x+1)`` or ``2x``, the functions ``sin cos tan exp log sqrt abs
min max`` and the constant ``pi``. Expressions are compiled from the Python
AST after whitelisting every node, so no arbitrary code runs.

Region strings like ``"x^2 + y^2 < 0.04"`` or ``"-0.1 < x < 0.6, 0.1 < y < 0.4"``
become level-set functions that are negative inside the region.
"""

from __future__ import annotations

import ast
import functools
import re

import numpy as np

__all__ = ["compile_expression", "compile_region", "Expression"]

_NUM = r"(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"


def _nary(fn):
    def apply(*args):
        return functools.reduce(fn, args)
    return apply


_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "min": _nary(np.minimum), "max": _nary(np.maximum),
}
_CONSTS = {"pi": np.pi}
_VARS = ("x", "y")

_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _normalize(text: str) -> str:
    s = text.replace("^", "**").replace("−", "-")
    # implicit multiplication: "10(", "2x", ")(", ")x"
    s = re.sub(rf"(?<![A-Za-z_\d.])({_NUM})\s*(?=[A-Za-z_(])", r"\1*", s)
    s = re.sub(r"\)\s*(?=[A-Za-z_(\d])", ")*", s)
    return s


class Expression:
    """A compiled scalar expression in ``x`` and ``y``."""

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(_normalize(source).strip(), mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse {source!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"unsupported syntax {type(node).__name__} in {source!r}")
            if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                    and node.id not in _VARS:
                raise ValueError(f"unknown name {node.id!r} in {source!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise ValueError(f"unsupported call in {source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric constant in {source!r}")
        self._code = compile(tree, "<expr>", "eval")

    def __call__(self, x, y):
        env = {"__builtins__": {}, **_FUNCS, **_CONSTS, "x": np.asarray(x, float), "y": np.asarray(y, float)}
        out = eval(self._code, env)  # noqa: S307 - AST whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expression(source: str | float) -> Expression:
    if isinstance(source, (int, float)):
        source = repr(float(source))
    return Expression(source)


class _Region:
    def __init__(self, source: str, pieces):
        self.source = source
        self.pieces = pieces

    def __call__(self, x, y):
        vals = [p(x, y) for p in self.pieces]
        return functools.reduce(np.maximum, vals)

    def __repr__(self):
        return f"Region({self.source!r})"


def _split_comparison(text: str):
    parts = re.split(r"(<=|>=|<|>)", text)
    terms = [p.strip() for p in parts[0::2]]
    ops = parts[1::2]
    return terms, ops


def compile_region(source: str):
    """Level-set function negative inside the described region.

    A plain expression is returned as is. ``A < B`` maps to ``A - B``;
    chained comparisons and comma-separated conditions are intersected with
    a pointwise maximum.
    """
    pieces = []
    for cond in source.split(","):
        terms, ops = _split_comparison(cond)
        if not ops:
            pieces.append(Expression(terms[0]))
            continue
        exprs = [Expression(t) for t in terms]
        for (lhs, rhs), op in zip(zip(exprs, exprs[1:]), ops):
            if op in ("<", "<="):
                pieces.append(_Difference(lhs, rhs))
            else:
                pieces.append(_Difference(rhs, lhs))
    return pieces[0] if len(pieces) == 1 and isinstance(pieces[0], Expression) else _Region(source, pieces)


class _Difference:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def __call__(self, x, y):
        return self.a(x, y) - self.b(x, y)
