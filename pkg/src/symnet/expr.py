"""Expression trees: parsing, printing, evaluation, canonical forms, fit metrics.

An :class:`Expr` is an immutable tree over a small operator set. Expressions are
the common currency of the package: regression targets, fitted models, and
skeletons (expressions with free constant slots) are all ``Expr`` values.

Two printable forms exist. ``format_expr`` is the exact inverse of ``parse``
(round-trips any AST). ``pretty`` re-sugars canonical forms (negated terms print
with ``-``, reciprocal factors print as fractions) and is what reports show.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "Expr",
    "Dataset",
    "ParseError",
    "EvalError",
    "add",
    "sub",
    "mul",
    "div",
    "pow_",
    "neg",
    "var",
    "const",
    "symconst",
    "expslot",
    "param",
    "unary",
    "parse",
    "format_expr",
    "pretty",
    "evaluate",
    "evaluate_batch",
    "canonicalize",
    "complexity",
    "display_form",
    "r2_score",
    "is_symbolic_solution",
    "extrapolation_eval",
    "free_variables",
    "collect_slots",
    "substitute_slots",
]

# kind -> arity; leaves have arity 0, None means variadic is not allowed anywhere
_UNARY = ("sin", "cos", "exp", "ln", "sqrt", "abs", "id")
_BINARY = ("add", "sub", "mul", "div", "pow")
_LEAF = ("var", "const", "symconst", "expslot", "param")

_ARITY = {k: 1 for k in _UNARY} | {k: 2 for k in _BINARY} | {k: 0 for k in _LEAF}

# total order used by canonicalize when sorting chain children
_KIND_RANK = {
    "const": 0,
    "param": 1,
    "symconst": 2,
    "expslot": 3,
    "var": 4,
    "abs": 5,
    "sqrt": 6,
    "sin": 7,
    "cos": 8,
    "exp": 9,
    "ln": 10,
    "id": 11,
    "pow": 12,
    "mul": 13,
    "div": 14,
    "add": 15,
    "sub": 16,
}


class ParseError(ValueError):
    """Raised on malformed expression text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ValueError):
    """Raised when an expression cannot be evaluated at all (not per-point)."""


@dataclass(frozen=True)
class Expr:
    """Immutable expression node.

    ``value`` is set for ``const``; ``index`` is the variable index for ``var``,
    the slot id for ``symconst``/``expslot``, and an opaque id for ``param``
    (internal weight atoms used while deriving skeletons from networks).
    """

    kind: str
    args: tuple["Expr", ...] = ()
    value: float = 0.0
    index: int = -1

    def __post_init__(self) -> None:
        arity = _ARITY.get(self.kind)
        if arity is None:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if len(self.args) != arity:
            raise ValueError(f"{self.kind} expects {arity} children, got {len(self.args)}")

    def is_const(self) -> bool:
        return self.kind == "const"

    def walk(self) -> Iterator["Expr"]:
        yield self
        for a in self.args:
            yield from a.walk()

    def __str__(self) -> str:
        return format_expr(self)


def var(i: int) -> Expr:
    if i < 0:
        raise ValueError("variable index must be >= 0")
    return Expr("var", index=i)


def const(v: float) -> Expr:
    return Expr("const", value=float(v))


def symconst(slot: int) -> Expr:
    return Expr("symconst", index=slot)


def expslot(slot: int) -> Expr:
    return Expr("expslot", index=slot)


def param(pid: int) -> Expr:
    return Expr("param", index=pid)


def add(a: Expr, b: Expr) -> Expr:
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    return Expr("div", (a, b))


def pow_(a: Expr, b: Expr) -> Expr:
    return Expr("pow", (a, b))


def neg(a: Expr) -> Expr:
    if a.kind == "const":
        return const(-a.value)
    return mul(const(-1.0), a)


def unary(kind: str, a: Expr) -> Expr:
    if kind not in _UNARY:
        raise ValueError(f"not a unary operator: {kind}")
    return Expr(kind, (a,))


def free_variables(e: Expr) -> set[int]:
    return {n.index for n in e.walk() if n.kind == "var"}


def collect_slots(e: Expr) -> tuple[list[int], list[int]]:
    """Return sorted (symconst slot ids, expslot slot ids) present in ``e``."""
    sc = sorted({n.index for n in e.walk() if n.kind == "symconst"})
    es = sorted({n.index for n in e.walk() if n.kind == "expslot"})
    return sc, es


def substitute_slots(
    e: Expr,
    sym_values: dict[int, float] | None = None,
    exp_values: dict[int, float] | None = None,
) -> Expr:
    """Replace constant/exponent slots by numeric constants."""
    sym_values = sym_values or {}
    exp_values = exp_values or {}

    def go(n: Expr) -> Expr:
        if n.kind == "symconst" and n.index in sym_values:
            return const(sym_values[n.index])
        if n.kind == "expslot" and n.index in exp_values:
            return const(exp_values[n.index])
        if not n.args:
            return n
        return Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)

    return go(e)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------
#
# expr    := term (('+' | '-') term)*
# term    := factor (('*' | '/') factor)*
# factor  := '-' factor | power
# power   := atom ('^' factor)?          (right associative)
# atom    := NUMBER | 'pi' | VAR | 'c' INT | 'lam' INT | FUNC '(' expr ')' | '(' expr ')'
#
# Unary minus on a literal folds into the constant; otherwise it parses as
# mul(const(-1), operand). Full EBNF in docs/grammar.md.

_FUNCS = {"sin", "cos", "exp", "ln", "log", "sqrt", "abs", "id"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.pos)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("unexpected trailing input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek() in ("+", "-"):
            op = self.peek()
            self.pos += 1
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek() in ("*", "/"):
            op = self.peek()
            self.pos += 1
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self) -> Expr:
        if self.peek() == "-":
            self.pos += 1
            operand = self.factor()
            return neg(operand)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            expo = self.factor()
            return pow_(base, expo)
        return base

    def atom(self) -> Expr:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if ch.isdigit() or ch == ".":
            return const(self.number())
        if ch.isalpha():
            name = self.ident()
            if name in _FUNCS:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return unary("ln" if name == "log" else name, inner)
            if name == "pi":
                return const(math.pi)
            if name == "x":
                return var(self.integer("variable index"))
            if name == "c":
                return symconst(self.integer("constant slot id"))
            if name == "lam":
                return expslot(self.integer("exponent slot id"))
            raise self.error(f"unknown symbol {name!r}")
        raise self.error("expected a number, name, or '('")

    def ident(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        # a trailing digit run belongs to indexed names (x0, c12, lam3)
        name = self.text[start : self.pos]
        return name

    def integer(self, what: str) -> int:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise self.error(f"expected {what}")
        return int(self.text[start : self.pos])

    def number(self) -> float:
        start = self.pos
        seen_dot = False
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isdigit():
                self.pos += 1
            elif ch == "." and not seen_dot:
                seen_dot = True
                self.pos += 1
            elif ch in "eE" and self.pos + 1 < len(self.text):
                nxt = self.text[self.pos + 1]
                if nxt.isdigit() or (nxt in "+-" and self.pos + 2 < len(self.text) and self.text[self.pos + 2].isdigit()):
                    self.pos += 2 if nxt in "+-" else 1
                    while self.pos < len(self.text) and self.text[self.pos].isdigit():
                        self.pos += 1
                    break
                break
            else:
                break
        try:
            return float(self.text[start : self.pos])
        except ValueError:
            raise self.error("malformed number") from None


def parse(text: str) -> Expr:
    """Parse infix expression text into an AST. Raises :class:`ParseError`."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

# precedence levels used to decide parenthesization
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 4}


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def format_expr(e: Expr) -> str:
    """Serialize so that ``parse(format_expr(e))`` reproduces ``e`` exactly."""
    return _go_with_neg(e, 0)


def _go_with_neg(e: Expr, parent_prec: int) -> str:
    # mul(const(-1), u) <-> "-u": keep this bijective with the parser's factor rule
    if e.kind == "mul" and e.args[0] == const(-1.0) and e.args[1].kind != "const":
        inner = _go_with_neg(e.args[1], 3)
        s = f"-{inner}"
        return f"({s})" if parent_prec >= 2 else s
    if e.kind == "const":
        s = _fmt_const(e.value)
        return f"({s})" if e.value < 0 and parent_prec >= 2 else s
    if e.kind == "var":
        return f"x{e.index}"
    if e.kind == "symconst":
        return f"c{e.index}"
    if e.kind == "expslot":
        return f"lam{e.index}"
    if e.kind == "param":
        return f"<p{e.index}>"
    if e.kind in _UNARY:
        return f"{e.kind}({_go_with_neg(e.args[0], 0)})"
    a, b = e.args
    p = _PREC[e.kind]
    if e.kind == "pow":
        lhs = _go_with_neg(a, p + 1)
        if b.kind in ("add", "sub", "div", "pow") or (
            b.kind == "mul" and not (b.args[0] == const(-1.0) and b.args[1].kind != "const")
        ):
            rhs = f"({_go_with_neg(b, 0)})"
        else:
            rhs = _go_with_neg(b, p)
        s = f"{lhs}^{rhs}"
        return f"({s})" if p < parent_prec else s
    sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[e.kind]
    lhs = _go_with_neg(a, p)
    # all four are left associative: a right child at the same precedence
    # level must keep its parentheses or the tree re-associates on parse
    rhs = _go_with_neg(b, p + 1)
    s = f"{lhs}{sym}{rhs}"
    return f"({s})" if p < parent_prec else s


def pretty(e: Expr) -> str:
    """Human-facing rendering of a canonical form (re-sugars - and /)."""
    return format_expr(display_form(e))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate_batch(
    e: Expr,
    X: np.ndarray,
    params: dict[int, float] | None = None,
) -> np.ndarray:
    """Evaluate over an (N, d) matrix; rows hitting domain failures yield NaN.

    Domain failures (ln of a nonpositive value, division by zero, overflow,
    fractional powers of negatives) never raise; they mark the row with NaN so
    batch pipelines can drop or zero invalid rows.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise EvalError("expected an (N, d) input matrix")
    n, d = X.shape

    def go(node: Expr) -> np.ndarray:
        k = node.kind
        if k == "const":
            return np.full(n, node.value)
        if k == "var":
            if node.index >= d:
                raise EvalError(f"x{node.index} out of range for d={d}")
            return X[:, node.index].copy()
        if k == "param":
            if params is None or node.index not in params:
                raise EvalError(f"unbound parameter atom <p{node.index}>")
            return np.full(n, params[node.index])
        if k in ("symconst", "expslot"):
            raise EvalError("expression still contains free constant slots")
        with np.errstate(all="ignore"):
            if k in _BINARY:
                a, b = go(node.args[0]), go(node.args[1])
                if k == "add":
                    return a + b
                if k == "sub":
                    return a - b
                if k == "mul":
                    return a * b
                if k == "div":
                    out = a / b
                    out[b == 0.0] = np.nan
                    return out
                return np.power(a, b)
            a = go(node.args[0])
            if k == "sin":
                return np.sin(a)
            if k == "cos":
                return np.cos(a)
            if k == "exp":
                return np.exp(a)
            if k == "ln":
                out = np.log(a)
                out[a <= 0.0] = np.nan
                return out
            if k == "sqrt":
                return np.sqrt(a)
            if k == "abs":
                return np.abs(a)
            return a  # id

    out = go(e)
    out = np.asarray(out, dtype=np.float64)
    out[~np.isfinite(out)] = np.nan
    return out


def evaluate(e: Expr, x, params: dict[int, float] | None = None) -> float:
    """Evaluate at a single point (d-vector). NaN marks a domain failure."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(evaluate_batch(e, x.reshape(1, -1), params)[0])


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------
#
# Canonical expressions contain only add/mul/pow plus unary sin/cos/exp/ln/abs
# and leaves. sub folds to add of a (-1)-scaled term, div to a (-1)-power
# factor, sqrt to pow 0.5, id disappears. Chains are flattened, like terms and
# like factors combined, children sorted by a fixed total order, constants
# folded when the result is finite. exp/ln merges follow the positive-domain
# convention (exp(2*ln(x)) -> x^2), which the rest of the package relies on.


def _sort_key(e: Expr):
    return (
        _KIND_RANK[e.kind],
        e.index,
        e.value if e.kind == "const" else 0.0,
        tuple(_sort_key(a) for a in e.args),
    )


def _flatten(kind: str, e: Expr) -> list[Expr]:
    if e.kind == kind:
        return _flatten(kind, e.args[0]) + _flatten(kind, e.args[1])
    return [e]


def _fold_unary(kind: str, v: float) -> float | None:
    try:
        with np.errstate(all="ignore"):
            r = {
                "sin": math.sin,
                "cos": math.cos,
                "exp": lambda t: math.exp(t) if t < 700 else math.inf,
                "ln": lambda t: math.log(t) if t > 0 else math.nan,
                "sqrt": lambda t: math.sqrt(t) if t >= 0 else math.nan,
                "abs": abs,
                "id": lambda t: t,
            }[kind](v)
    except (OverflowError, ValueError):
        return None
    return r if math.isfinite(r) else None


def _is_constlike(e: Expr) -> bool:
    """True when the subtree has no variables (consts, params, slots only)."""
    return all(n.kind not in ("var",) for n in e.walk())


def _split_coeff(e: Expr) -> tuple[float, Expr | None]:
    """Split a canonical term into (numeric coefficient, residual factor)."""
    if e.kind == "const":
        return e.value, None
    if e.kind == "mul":
        factors = _flatten("mul", e)
        coeff = 1.0
        rest = []
        for f in factors:
            if f.kind == "const":
                coeff *= f.value
            else:
                rest.append(f)
        if not rest:
            return coeff, None
        return coeff, _rebuild("mul", rest)
    return 1.0, e


def _split_symbolic(e: Expr) -> tuple[list[Expr], Expr | None]:
    """Split a term into (constant-like factors, variable-bearing part)."""
    factors = _flatten("mul", e) if e.kind == "mul" else [e]
    consts = [f for f in factors if _is_constlike(f)]
    rest = [f for f in factors if not _is_constlike(f)]
    if not rest:
        return consts, None
    return consts, _rebuild("mul", rest)


def _rebuild(kind: str, items: list[Expr]) -> Expr:
    out = items[0]
    for it in items[1:]:
        out = Expr(kind, (out, it))
    return out


def _base_exponent(f: Expr) -> tuple[Expr, Expr]:
    if f.kind == "pow":
        return f.args[0], f.args[1]
    return f, const(1.0)


def _make_pow(base: Expr, expo: Expr) -> Expr:
    if expo.kind == "const":
        if expo.value == 1.0:
            return base
        if expo.value == 0.0:
            return const(1.0)
        if base.kind == "const":
            with np.errstate(all="ignore"):
                v = float(np.power(base.value, expo.value))
            if math.isfinite(v):
                return const(v)
    if base.kind == "const" and base.value == 1.0:
        return const(1.0)
    return Expr("pow", (base, expo))


def _norm_mul(factors: list[Expr], expand: bool = False) -> Expr:
    # entries may themselves be mul chains (pow distribution returns one)
    flat: list[Expr] = []
    for f in factors:
        if f.kind == "mul":
            flat.extend(_flatten("mul", f))
        else:
            flat.append(f)
    factors = flat
    # exp factors multiply by adding their arguments
    exps = [f for f in factors if f.kind == "exp"]
    if len(exps) >= 2:
        rest = [f for f in factors if f.kind != "exp"]
        combined = _norm_exp(_norm_add([f.args[0] for f in exps], expand), expand)
        return _norm_mul(rest + [combined], expand)
    # collect a numeric coefficient and one exponent per distinct base
    coeff = 1.0
    by_base: dict[Expr, list[Expr]] = {}
    order: list[Expr] = []
    for f in factors:
        if f.kind == "const":
            coeff *= f.value
            continue
        base, expo = _base_exponent(f)
        if base not in by_base:
            by_base[base] = []
            order.append(base)
        by_base[base].append(expo)
    if coeff == 0.0:
        return const(0.0)
    out_factors: list[Expr] = []
    for base in order:
        expos = by_base[base]
        if len(expos) == 1:
            total = expos[0]
        else:
            total = _norm_add([t for ex in expos for t in _flatten("add", ex)], expand)
        p = _make_pow(base, total)
        if p.kind == "const":
            coeff *= p.value
        else:
            out_factors.append(p)
    if not math.isfinite(coeff):
        coeff = 1.0  # keep the node rather than poisoning the tree
    if expand:
        adds = [f for f in out_factors if f.kind == "add"]
        others = [f for f in out_factors if f.kind != "add"]
        if len(adds) == 1 and all(_is_constlike(f) for f in others):
            # distribute a constant-like multiplier across the sum so that
            # weight products collapse into single constant slots
            multiplier = others + ([const(coeff)] if coeff != 1.0 else [])
            terms = [
                _norm_mul(multiplier + _flatten("mul", t), expand)
                for t in _flatten("add", adds[0])
            ]
            return _norm_add(terms, expand)
    if not out_factors:
        return const(coeff)
    if coeff != 1.0:
        out_factors.insert(0, const(coeff))
    out_factors.sort(key=_sort_key)
    if len(out_factors) == 1:
        return out_factors[0]
    return _rebuild("mul", out_factors)


def _norm_add(terms: list[Expr], expand: bool = False) -> Expr:
    # entries may themselves be add chains (a distributed negation returns
    # one); flatten first or like terms never meet
    flat: list[Expr] = []
    for t in terms:
        if t.kind == "add":
            flat.extend(_flatten("add", t))
        else:
            flat.append(t)
    terms = flat
    constant = 0.0
    by_rest: dict[Expr, list[Expr]] = {}  # variable part -> constant-like coefficient factors
    const_terms: list[Expr] = []  # constant-like but not numerically foldable
    order: list[Expr] = []
    for t in terms:
        if t.kind == "const":
            constant += t.value
            continue
        cfs, rest = _split_symbolic(t)
        if rest is None:
            if all(f.kind == "const" for f in cfs):
                constant += math.prod(f.value for f in cfs)
            else:
                const_terms.append(_norm_mul(cfs, expand))
            continue
        if rest not in by_rest:
            by_rest[rest] = []
            order.append(rest)
        by_rest[rest].append(_norm_mul(cfs, expand) if cfs else const(1.0))
    out_terms: list[Expr] = []
    for rest in order:
        coeffs = by_rest[rest]
        total = coeffs[0] if len(coeffs) == 1 else _norm_add(coeffs, expand)
        if total.kind == "const":
            if total.value == 0.0:
                continue
            if total.value == 1.0:
                out_terms.append(rest)
                continue
        out_terms.append(_norm_mul([total] + _flatten("mul", rest), expand))
    out_terms.extend(const_terms)
    out_terms.sort(key=_sort_key)
    if not math.isfinite(constant):
        constant = 0.0
    if constant != 0.0 or not out_terms:
        out_terms.append(const(constant))
    if len(out_terms) == 1:
        return out_terms[0]
    return _rebuild("add", out_terms)


def _expand_scalar_sums(e: Expr) -> Expr:
    """Distribute constant-like multipliers over sums (top level only)."""
    out: list[Expr] = []
    for t in _flatten("add", e):
        fs = _flatten("mul", t) if t.kind == "mul" else [t]
        adds = [f for f in fs if f.kind == "add"]
        rest = [f for f in fs if f.kind != "add"]
        if len(adds) == 1 and all(_is_constlike(f) for f in rest):
            for sub_t in _flatten("add", _expand_scalar_sums(adds[0])):
                out.append(_norm_mul(rest + [sub_t]))
        else:
            out.append(t)
    return _rebuild("add", out)


def _norm_exp(inner: Expr, expand: bool = False) -> Expr:
    # exp(sum) -> product of pow factors for lambda*ln(u) terms, exp(residue);
    # scalar multiples of parenthesized sums must open up first or the
    # lambda*ln(u) patterns stay hidden
    inner = _expand_scalar_sums(inner)
    terms = _flatten("add", inner)
    factors: list[Expr] = []
    residue: list[Expr] = []
    for t in terms:
        fs = _flatten("mul", t) if t.kind == "mul" else [t]
        lns = [f for f in fs if f.kind == "ln"]
        others = [f for f in fs if f.kind != "ln"]
        base_ok = len(lns) == 1 and not (lns[0].args[0].kind == "const" and lns[0].args[0].value <= 0)
        if base_ok:
            # exp(g * ln(u)) -> u^g, also for non-constant g (positive-domain)
            lam = _norm_mul(others, expand) if others else const(1.0)
            factors.append(_make_pow_norm(lns[0].args[0], lam, expand))
        else:
            residue.append(t)
    if not factors and not residue:
        return const(1.0)
    if residue:
        rsum = _norm_add(residue, expand)
        # exp(u + k) normalizes to e^k * exp(u) when e^k folds to a finite
        # constant (otherwise extraction would just be re-merged)
        kterm = 0.0
        remainder = rsum
        if rsum.kind == "const":
            kterm, remainder = rsum.value, None
        elif rsum.kind == "add":
            parts = _flatten("add", rsum)
            consts = [t for t in parts if t.kind == "const"]
            if consts:
                kterm = consts[0].value
                rest_parts = [t for t in parts if t.kind != "const"]
                remainder = rest_parts[0] if len(rest_parts) == 1 else _rebuild("add", rest_parts)
        folded = _fold_unary("exp", kterm)
        if remainder is None:
            # the whole argument is the constant k
            factors.append(const(folded) if folded is not None else Expr("exp", (rsum,)))
        elif kterm != 0.0 and folded is not None:
            factors.append(const(folded))
            factors.append(Expr("exp", (remainder,)))
        else:
            factors.append(Expr("exp", (rsum,)))
    if not factors:
        return const(1.0)
    return _norm_mul(factors, expand)


def canonicalize(e: Expr, expand: bool = False) -> Expr:
    """Deterministic normal form; idempotent.

    ``expand=True`` additionally distributes constant-like multipliers over
    sums (used when deriving skeletons, where weight products must collapse
    into single constant slots).
    """

    def go(n: Expr) -> Expr:
        if n.kind in _LEAF:
            return n
        args = tuple(go(a) for a in n.args)
        k = n.kind
        if k == "id":
            return args[0]
        if k == "sub":
            return _norm_add(_flatten("add", args[0]) + [_negate(args[1], expand)], expand)
        if k == "add":
            return _norm_add(_flatten("add", args[0]) + _flatten("add", args[1]), expand)
        if k == "div":
            return _norm_mul(
                _flatten("mul", args[0]) + [_make_pow_norm(args[1], const(-1.0), expand)], expand
            )
        if k == "mul":
            return _norm_mul(_flatten("mul", args[0]) + _flatten("mul", args[1]), expand)
        if k == "sqrt":
            return _make_pow_norm(args[0], const(0.5), expand)
        if k == "pow":
            return _make_pow_norm(args[0], args[1], expand)
        if k == "exp":
            return _norm_exp(args[0], expand)
        if k == "ln":
            return _norm_ln(args[0], expand)
        # sin / cos / abs
        if args[0].kind == "const":
            folded = _fold_unary(k, args[0].value)
            if folded is not None:
                return const(folded)
        return Expr(k, args)

    return go(e)


def _norm_ln(arg: Expr, expand: bool = False) -> Expr:
    """ln of a product of powers splits into a sum of scaled lns.

    ln(exp(u)) -> u; ln(u^g) -> g*ln(u); ln(u*v) -> ln(u) + ln(v). Splitting
    is skipped when a numeric factor is nonpositive (the split would be NaN
    where the original is defined).
    """
    if arg.kind == "exp":
        return arg.args[0]
    if arg.kind == "const":
        folded = _fold_unary("ln", arg.value)
        return const(folded) if folded is not None else Expr("ln", (arg,))
    factors = _flatten("mul", arg) if arg.kind == "mul" else [arg]
    if any(f.kind == "const" and f.value <= 0 for f in factors):
        return Expr("ln", (arg,))
    if len(factors) == 1 and arg.kind != "pow":
        return Expr("ln", (arg,))
    terms = []
    for f in factors:
        base, expo = _base_exponent(f)
        inner = _norm_ln(base, expand)
        if expo.kind == "const" and expo.value == 1.0:
            terms.append(inner)
        else:
            terms.append(_norm_mul([expo] + _flatten("mul", inner), expand))
    return _norm_add(terms, expand)


def _negate(t: Expr, expand: bool = False) -> Expr:
    return _norm_mul([const(-1.0)] + _flatten("mul", t), expand)


def _is_int(v: float) -> bool:
    return math.isfinite(v) and v == int(v)


def _make_pow_norm(base: Expr, expo: Expr, expand: bool = False) -> Expr:
    # positive-argument convention: pow distributes over products and nested
    # constant exponents multiply ((u^2)^0.5 -> u, which drops a |.| when u
    # can be negative, exactly like exp(2*ln(u)) -> u^2 extends the domain)
    if base.kind == "mul":
        factors = _flatten("mul", base)
        return _norm_mul([_make_pow_norm(f, expo, expand) for f in factors], expand)
    if base.kind == "pow" and expo.kind == "const" and base.args[1].kind == "const":
        return _make_pow(base.args[0], const(base.args[1].value * expo.value))
    if base.kind == "exp":
        # (e^u)^a = e^(a*u)
        return _norm_exp(_norm_mul([expo] + [base.args[0]], expand), expand)
    return _make_pow(base, expo)


# ---------------------------------------------------------------------------
# Display form and complexity
# ---------------------------------------------------------------------------


def display_form(e: Expr) -> Expr:
    """Re-sugar a canonical form for printing and complexity counting.

    Multiplicative chains with negative constant exponents become divisions;
    an additive term with a negative leading coefficient becomes a subtraction.
    The result is a plain AST that reparses to itself.
    """

    def go(n: Expr) -> Expr:
        if not n.args:
            return n
        if n.kind == "mul":
            factors = [go(f) for f in _flatten("mul", n)]
            num: list[Expr] = []
            den: list[Expr] = []
            for f in factors:
                base, expo = _base_exponent(f)
                if expo.kind == "const" and expo.value < 0 and not f.kind == "const":
                    den.append(_make_pow(base, const(-expo.value)))
                else:
                    num.append(f)
            if den and num:
                return Expr("div", (_rebuild("mul", num), _rebuild("mul", den)))
            return _rebuild("mul", factors)
        if n.kind == "add":
            terms = _flatten("add", n)
            out = go(terms[0])
            for t in terms[1:]:
                coeff, rest = _split_coeff(t)
                if coeff < 0:
                    flipped = const(-coeff) if rest is None else (
                        rest if coeff == -1.0 else _rebuild("mul", [const(-coeff)] + _flatten("mul", rest))
                    )
                    out = Expr("sub", (out, go(flipped)))
                else:
                    out = Expr("add", (out, go(t)))
            return out
        return Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)

    return go(e)


def complexity(e: Expr) -> int:
    """Node count of the displayed canonical tree.

    Counts one per operator from {+, -, *, /, sin, cos, exp, ln, pow, abs},
    one per variable leaf, one per constant leaf (sign included; slot leaves
    count as constants). n-ary chains count k-1 binary operators. The exponent
    literal of pow counts as a constant leaf.
    """
    d = display_form(e)

    def count(n: Expr) -> int:
        if n.kind in _LEAF:
            return 1
        if n.kind in ("add", "mul"):
            items = _flatten(n.kind, n)
            return (len(items) - 1) + sum(count(i) for i in items)
        if n.kind in ("sub", "div", "pow"):
            return 1 + count(n.args[0]) + count(n.args[1])
        return 1 + count(n.args[0])  # unary

    return count(d)


# ---------------------------------------------------------------------------
# Datasets and metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Inputs (N, d), outputs (N,), and the sampling interval per feature."""

    X: np.ndarray
    y: np.ndarray
    intervals: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (N, d) and y (N,) with matching N")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need N >= 1 and d >= 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.intervals:
            lo = X.min(axis=0)
            hi = X.max(axis=0)
            derived = []
            for a, b in zip(lo, hi):
                if not float(a) < float(b):  # constant column: pad so the box is usable
                    a, b = float(a) - 0.5, float(b) + 0.5
                derived.append((float(a), float(b)))
            object.__setattr__(self, "intervals", tuple(derived))
        for a, b in self.intervals:
            if not a < b:
                raise ValueError("each interval must satisfy lo < hi")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def sanitized(self) -> "Dataset":
        """Drop rows with non-finite entries."""
        ok = np.isfinite(self.X).all(axis=1) & np.isfinite(self.y)
        if ok.all():
            return self
        if not ok.any():
            raise ValueError("no finite rows left after sanitization")
        return Dataset(self.X[ok], self.y[ok], self.intervals)


def r2_score(yhat: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of determination; <= 1, unbounded below."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 2:
        raise ValueError("need matching 1-d arrays with N >= 2")
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0.0:
        raise ValueError("targets have zero variance")
    num = float(np.sum((y - yhat) ** 2))
    return 1.0 - num / denom


@dataclass(frozen=True)
class SolutionVerdict:
    """Outcome of the symbolic-solution check."""

    status: str  # "additive" | "multiplicative" | "no"
    constant: float = math.nan

    def __bool__(self) -> bool:
        return self.status != "no"


def _sample_domain(domain: Dataset, n: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([a for a, _ in domain.intervals])
    hi = np.array([b for _, b in domain.intervals])
    return rng.uniform(lo, hi, size=(n, len(domain.intervals)))


def _constant_value(e: Expr) -> float | None:
    c = canonicalize(e)
    return c.value if c.kind == "const" else None


def is_symbolic_solution(
    candidate: Expr,
    truth: Expr,
    domain: Dataset,
    rel_tol: float = 1e-8,
    n_points: int = 128,
    seed: int = 7,
) -> SolutionVerdict:
    """Check whether candidate differs from truth only by an additive constant
    or a nonzero multiplicative constant.

    The symbolic route canonicalizes candidate/truth and candidate - truth; the
    numeric fallback requires the ratio or difference to be constant to
    ``rel_tol`` over >= 100 domain samples. A candidate that itself reduces to
    a constant is never a solution.
    """
    n_points = max(n_points, 100)
    if _constant_value(candidate) is not None:
        return SolutionVerdict("no")

    # symbolic route
    ratio = _constant_value(div(candidate, truth))
    if ratio is not None and ratio != 0.0 and math.isfinite(ratio):
        return SolutionVerdict("multiplicative", ratio)
    diff = _constant_value(sub(candidate, truth))
    if diff is not None and math.isfinite(diff):
        return SolutionVerdict("additive", diff)

    # numeric fallback; when fresh uniform samples mostly leave the truth's
    # domain (log/root-bearing targets), fall back to the dataset's own rows
    rng = np.random.default_rng(seed)
    X = _sample_domain(domain, n_points, rng)
    ft = evaluate_batch(truth, X)
    fc = evaluate_batch(candidate, X)
    ok = np.isfinite(ft) & np.isfinite(fc)
    if ok.sum() < n_points // 2:
        X = np.vstack([X[ok], domain.X])
        ft = evaluate_batch(truth, X)
        fc = evaluate_batch(candidate, X)
        ok = np.isfinite(ft) & np.isfinite(fc)
        if ok.sum() < min(len(X) // 2, 50):
            return SolutionVerdict("no")
    ft, fc = ft[ok], fc[ok]
    scale = max(float(np.max(np.abs(ft))), float(np.max(np.abs(fc))), 1.0)
    if np.ptp(fc) <= rel_tol * scale:
        return SolutionVerdict("no")  # numerically constant candidate

    with np.errstate(all="ignore"):
        r = fc / ft
    finite_r = r[np.isfinite(r)]
    if finite_r.size >= ok.sum() * 0.9 and finite_r.size > 0:
        rmed = float(np.median(finite_r))
        if rmed != 0.0 and np.all(np.abs(finite_r - rmed) <= rel_tol * max(1.0, abs(rmed))):
            return SolutionVerdict("multiplicative", rmed)
    dvals = fc - ft
    dmed = float(np.median(dvals))
    if np.all(np.abs(dvals - dmed) <= rel_tol * max(1.0, abs(dmed), float(np.max(np.abs(ft))))):
        return SolutionVerdict("additive", dmed)
    return SolutionVerdict("no")


def extrapolation_eval(
    model: Expr,
    train_intervals: list[tuple[float, float]],
    margin: float,
    truth: Expr,
    n_test: int = 100,
    seed: int = 11,
) -> float:
    """R^2 of the model against truth on intervals widened by ``margin``."""
    rng = np.random.default_rng(seed)
    lo = np.array([a - margin for a, _ in train_intervals])
    hi = np.array([b + margin for _, b in train_intervals])
    X = rng.uniform(lo, hi, size=(n_test, len(train_intervals)))
    yt = evaluate_batch(truth, X)
    ok = np.isfinite(yt)
    if ok.sum() < 2:
        raise EvalError("truth has no valid domain inside the extended interval")
    ym = evaluate_batch(model, X[ok])
    ym[~np.isfinite(ym)] = 0.0
    return r2_score(ym, yt[ok])
