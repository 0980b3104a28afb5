"""Small arithmetic expression language for cost functions in model specs.

Grammar (a subset of Python expression syntax)::

    numbers, variable names, + - * / // % **, unary - + not,
    comparisons (< <= > >= == !=, chained), and / or,
    conditionals ``A if COND else B``, and the functions
    min max abs exp log sqrt floor ceil.

Booleans evaluate to 0.0 / 1.0, so ``x + 2 * (x >= 4)`` is valid.
"""

from __future__ import annotations

import ast
import math

from .errors import SpecError

FUNCTIONS = {
    "min": min, "max": max, "abs": abs, "exp": math.exp, "log": math.log,
    "sqrt": math.sqrt, "floor": math.floor, "ceil": math.ceil,
}

_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.IfExp, ast.Call,
    ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Mod, ast.Pow,
    ast.USub, ast.UAdd, ast.Not, ast.And, ast.Or,
    ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


class Expression:
    def __init__(self, text: str, variables, field: str = "expression"):
        self.text = text
        if not isinstance(text, str) or not text.strip():
            raise SpecError(field, "expression must be a non-empty string")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise SpecError(field, f"cannot parse {text!r}: {exc.msg}") from None
        allowed = set(variables)
        for node in ast.walk(tree):
            if not isinstance(node, _NODES):
                raise SpecError(field, f"unsupported syntax {type(node).__name__} in {text!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise SpecError(field, f"only numeric constants allowed in {text!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                    raise SpecError(field, f"unsupported call in {text!r}")
            if isinstance(node, ast.Name) and node.id not in allowed and node.id not in FUNCTIONS:
                raise SpecError(field, f"unknown name {node.id!r} in {text!r}")
        self.variables = sorted({n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} & allowed)
        self._code = compile(tree, f"<{field}>", "eval")
        self._globals = {"__builtins__": {}, **FUNCTIONS}

    def __call__(self, **env) -> float:
        return float(eval(self._code, self._globals, env))

    def __repr__(self):
        return f"Expression({self.text!r})"
