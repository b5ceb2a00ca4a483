"""Expression evaluation against a store snapshot and a block scope.

Typing is dynamic and strict: arithmetic wants numbers, NOT wants a boolean,
ordering comparisons want two values of the same orderable type. Equality is
defined across all types and values of different types are simply unequal.
AND/OR evaluate left to right and short-circuit, so an unavailable field
reference on the right is never touched once the left side decides.
"""

from __future__ import annotations

import math

from . import ast
from .errors import (
    DivisionByZeroError,
    EvalTypeError,
    HistoryUnavailableError,
    UnknownNameError,
    ScalarError,
)
from .store import Store
from .values import Value, type_name, values_equal

Scope = dict[str, Value]


class _Unavailable:
    """Condition result when the window lacks the history a rule needs."""

    def __repr__(self) -> str:
        return "UNAVAILABLE"


UNAVAILABLE = _Unavailable()


def _want_number(value: Value, op: str) -> float:
    if isinstance(value, float):
        return value
    raise EvalTypeError(f"{op} needs a number, got {type_name(value)}")


def _want_boolean(value: Value, op: str) -> bool:
    if isinstance(value, bool):
        return value
    raise EvalTypeError(f"{op} needs a boolean, got {type_name(value)}")


def _finite(result: float) -> float:
    if not math.isfinite(result):
        raise ScalarError("arithmetic produced a non-finite number")
    return result


def _order(a: Value, b: Value, op: str) -> int:
    ta, tb = type_name(a), type_name(b)
    if ta != tb or ta == "null":
        raise EvalTypeError(f"cannot compare {ta} {op} {tb}")
    if a < b:  # type: ignore[operator]
        return -1
    if a > b:  # type: ignore[operator]
        return 1
    return 0


def eval_expr(expr: ast.Expression, store: Store, scope: Scope) -> Value:
    # dispatch ordered by frequency in rule conditions
    if isinstance(expr, ast.FieldRef):
        return store.latest(expr.relation, expr.field, expr.offset)
    if isinstance(expr, ast.Literal):
        return expr.value
    if isinstance(expr, ast.ScopeRef):
        try:
            return scope[expr.name]
        except KeyError:
            raise UnknownNameError(f"unknown name {expr.name}") from None
    if isinstance(expr, ast.Unary):
        if expr.op == "NOT":
            return not _want_boolean(eval_expr(expr.operand, store, scope), "NOT")
        return _finite(-_want_number(eval_expr(expr.operand, store, scope), "unary -"))
    if isinstance(expr, ast.Binary):
        op = expr.op
        if op in ("AND", "OR"):
            left = _want_boolean(eval_expr(expr.left, store, scope), op)
            if op == "AND" and not left:
                return False
            if op == "OR" and left:
                return True
            return _want_boolean(eval_expr(expr.right, store, scope), op)
        left = eval_expr(expr.left, store, scope)
        right = eval_expr(expr.right, store, scope)
        if op == "==":
            return values_equal(left, right)
        if op == "!=":
            return not values_equal(left, right)
        if op in ("<", "<=", ">", ">="):
            cmp = _order(left, right, op)
            return {"<": cmp < 0, "<=": cmp <= 0, ">": cmp > 0, ">=": cmp >= 0}[op]
        a = _want_number(left, op)
        b = _want_number(right, op)
        if op == "+":
            return _finite(a + b)
        if op == "-":
            return _finite(a - b)
        if op == "*":
            return _finite(a * b)
        if op == "/":
            if b == 0.0:
                raise DivisionByZeroError("division by zero")
            return _finite(a / b)
    raise AssertionError(f"unhandled expression {expr!r}")


def eval_condition(expr: ast.Expression, store: Store, scope: Scope) -> bool | _Unavailable:
    """Rule-condition evaluation: missing history suppresses the rule.

    Returns True, False, or UNAVAILABLE. Type errors still raise; only the
    window-not-filled-yet case is silenced, so a freshly started program does
    not fail before its sensors have reported.
    """
    try:
        result = eval_expr(expr, store, scope)
    except HistoryUnavailableError:
        return UNAVAILABLE
    if not isinstance(result, bool):
        raise EvalTypeError(f"condition evaluated to {type_name(result)}, not boolean")
    return result
