import math

import numpy as np
import pytest

from symnet.expr import Expr, add, const, div, mul, pow_, sub, unary, var


def random_expr(rng: np.random.Generator, depth: int = 3, d: int = 2, allow_slots: bool = False) -> Expr:
    """Random AST over the full grammar; pow exponents are small constants."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.5:
            return var(int(rng.integers(d)))
        if allow_slots and r < 0.6:
            return Expr("symconst", index=int(rng.integers(4)))
        return const(round(float(rng.uniform(-4, 4)), 3))
    k = rng.random()
    if k < 0.45:
        op = ["add", "sub", "mul", "div"][int(rng.integers(4))]
        a = random_expr(rng, depth - 1, d, allow_slots)
        b = random_expr(rng, depth - 1, d, allow_slots)
        return Expr(op, (a, b))
    if k < 0.6:
        expo = const(float(rng.choice([2.0, 3.0, 0.5, -1.0, -2.0])))
        return pow_(random_expr(rng, depth - 1, d, allow_slots), expo)
    op = ["sin", "cos", "exp", "ln", "sqrt", "abs"][int(rng.integers(6))]
    return unary(op, random_expr(rng, depth - 1, d, allow_slots))


def trig_args_bounded(e: Expr, x: np.ndarray, bound: float = 1e8) -> bool:
    """False when some sin/cos argument is so large its value is meaningless."""
    ok = [True]

    def go(n: Expr) -> float:
        v = oracle_evaluate(n, x) if n.args or n.kind in ("var", "const") else 0.0
        if n.kind in ("sin", "cos"):
            a = oracle_evaluate(n.args[0], x)
            if math.isfinite(a) and abs(a) > bound:
                ok[0] = False
        for c in n.args:
            go(c)
        return v

    go(e)
    return ok[0]


def oracle_evaluate(e: Expr, x: np.ndarray) -> float:
    """Independent scalar tree-walk evaluator (math module, not numpy)."""
    k = e.kind
    try:
        if k == "const":
            return e.value
        if k == "var":
            return float(x[e.index])
        if k == "add":
            return oracle_evaluate(e.args[0], x) + oracle_evaluate(e.args[1], x)
        if k == "sub":
            return oracle_evaluate(e.args[0], x) - oracle_evaluate(e.args[1], x)
        if k == "mul":
            return oracle_evaluate(e.args[0], x) * oracle_evaluate(e.args[1], x)
        if k == "div":
            b = oracle_evaluate(e.args[1], x)
            if b == 0:
                return math.nan
            return oracle_evaluate(e.args[0], x) / b
        if k == "pow":
            a = oracle_evaluate(e.args[0], x)
            b = oracle_evaluate(e.args[1], x)
            return math.pow(a, b)
        a = oracle_evaluate(e.args[0], x)
        if k == "sin":
            return math.sin(a)
        if k == "cos":
            return math.cos(a)
        if k == "exp":
            return math.exp(a)
        if k == "ln":
            return math.log(a) if a > 0 else math.nan
        if k == "sqrt":
            return math.sqrt(a) if a >= 0 else math.nan
        if k == "abs":
            return abs(a)
        return a  # id
    except (ValueError, OverflowError, ZeroDivisionError):
        return math.nan


def random_positive_safe_expr(rng: np.random.Generator, depth: int = 3, d: int = 2) -> Expr:
    """Random expressions whose *, /, and pow arguments are symbolically
    positive (built from a positive subgrammar; variables count as positive,
    so evaluate on a positive box)."""

    def positive(depth: int) -> Expr:
        if depth == 0 or rng.random() < 0.3:
            if rng.random() < 0.6:
                return var(int(rng.integers(d)))
            return const(round(float(rng.uniform(0.2, 4.0)), 3))
        r = rng.random()
        if r < 0.2:
            return mul(positive(depth - 1), positive(depth - 1))
        if r < 0.35:
            return div(positive(depth - 1), positive(depth - 1))
        if r < 0.5:
            return add(positive(depth - 1), positive(depth - 1))
        if r < 0.65:
            return pow_(positive(depth - 1), const(float(rng.choice([2.0, 3.0, 0.5, -1.0, -2.0]))))
        if r < 0.8:
            return unary("exp", any_expr(depth - 1))
        if r < 0.9:
            return unary("sqrt", positive(depth - 1))
        # abs alone may be zero; shift it strictly positive
        return add(unary("abs", any_expr(depth - 1)), const(round(float(rng.uniform(0.1, 2.0)), 3)))

    def any_expr(depth: int) -> Expr:
        if depth == 0 or rng.random() < 0.25:
            if rng.random() < 0.5:
                return var(int(rng.integers(d)))
            return const(round(float(rng.uniform(-3, 3)), 3))
        r = rng.random()
        if r < 0.2:
            return add(any_expr(depth - 1), any_expr(depth - 1))
        if r < 0.35:
            return Expr("sub", (any_expr(depth - 1), any_expr(depth - 1)))
        if r < 0.55:
            return mul(positive(depth - 1), positive(depth - 1))
        if r < 0.65:
            return div(positive(depth - 1), positive(depth - 1))
        if r < 0.75:
            return pow_(positive(depth - 1), const(float(rng.choice([2.0, 3.0, 0.5, -1.0, -2.0]))))
        op = ["sin", "cos", "exp", "ln", "sqrt"][int(rng.integers(5))]
        inner = positive(depth - 1) if op in ("ln", "sqrt") else any_expr(depth - 1)
        return unary(op, inner)

    return any_expr(depth)


def canonical_equal(a: Expr, b: Expr, rel: float = 1e-9) -> bool:
    """Structural equality with tolerance on constant leaves.

    Constant folding along different rewrite paths may differ in the last
    ulp; that is evaluation-order noise, not a structural difference.
    """
    if a.kind != b.kind or a.index != b.index or len(a.args) != len(b.args):
        return False
    if a.kind == "const":
        return abs(a.value - b.value) <= rel * max(1.0, abs(a.value), abs(b.value))
    return all(canonical_equal(x, y, rel) for x, y in zip(a.args, b.args))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
