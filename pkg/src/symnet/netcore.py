"""Masked symbolic-network structures and their expression skeletons.

A structure is an architecture (layer count, per-layer unary operators) plus a
set of binary connection masks. Hidden layers hold the fixed operator sequence
[id, sin, cos, exp, ln], each replicated ``m`` times; the final layer is a
single id output node. Nonlinear binary operators never appear in the network:
products, quotients, and powers are rewritten into exp/ln compositions
(``unify``), and the reverse merge (``collapse_exp_ln``) recovers them.

``skeleton`` performs the symbolic forward pass: it pushes symbolic weight
atoms through the masked network, collapses exp/ln nests, merges constants
that play equivalent roles, and returns an expression whose free constants are
``symconst`` slots and whose structural exponents are ``expslot`` slots,
together with the algebraic binding of every slot to the underlying weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    Expr,
    add,
    canonicalize,
    const,
    evaluate_batch,
    expslot,
    mul,
    param,
    pow_,
    symconst,
    unary,
    var,
    _is_constlike,
)

__all__ = [
    "OP_ORDER",
    "OP_CODES",
    "Architecture",
    "MaskSet",
    "Params",
    "Structure",
    "StructureError",
    "forward",
    "unify",
    "collapse_exp_ln",
    "Skeleton",
    "skeleton",
    "simplify_structure",
    "RepresentationCounts",
    "representation_counts",
    "monomial_tree_node_sum",
    "random_structure",
    "random_params",
    "flatten_masks",
    "masks_from_flat",
    "structure_to_text",
    "structure_from_text",
]

OP_ORDER = ("id", "sin", "cos", "exp", "ln")
OP_CODES = {name: i for i, name in enumerate(OP_ORDER)}


class StructureError(ValueError):
    """Raised for inconsistent architectures, masks, or parameters."""


@dataclass(frozen=True)
class Architecture:
    """Layer layout: ``layer_ops[l]`` lists operator names of layer ``l+1``.

    The final layer is always a single id node. ``m`` is set for the canonical
    replicated layout (hidden width 5m, operators in the fixed OP_ORDER) and
    None for compact layouts produced by ``simplify_structure``.
    """

    d0: int
    layer_ops: tuple[tuple[str, ...], ...]
    m: int | None = None

    def __post_init__(self) -> None:
        if self.d0 < 1 or not self.layer_ops:
            raise StructureError("need d0 >= 1 and at least one layer")
        if self.layer_ops[-1] != ("id",):
            raise StructureError("final layer must be a single id node")
        for ops in self.layer_ops:
            for op in ops:
                if op not in OP_ORDER:
                    raise StructureError(f"unknown operator {op!r}")

    @property
    def depth(self) -> int:
        return len(self.layer_ops)

    @property
    def widths(self) -> tuple[int, ...]:
        """(d0, d1, ..., dL)."""
        return (self.d0,) + tuple(len(ops) for ops in self.layer_ops)

    @classmethod
    def canonical(cls, L: int, m: int, d0: int) -> "Architecture":
        if L < 1 or m < 1:
            raise StructureError("need L >= 1 and m >= 1")
        hidden = tuple(op for op in OP_ORDER for _ in range(m))
        layers = tuple(hidden for _ in range(L - 1)) + (("id",),)
        return cls(d0, layers, m=m)

    def is_canonical(self) -> bool:
        if self.m is None:
            return False
        ref = Architecture.canonical(self.depth, self.m, self.d0)
        return ref.layer_ops == self.layer_ops


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MaskSet:
    """Binary connection masks: w[l] is (d_{l+1}, d_l), b[l] is (d_{l+1},)."""

    w: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", tuple(_freeze(np.asarray(m, dtype=np.uint8)) for m in self.w))
        object.__setattr__(self, "b", tuple(_freeze(np.asarray(m, dtype=np.uint8)) for m in self.b))
        for m in self.w + self.b:
            bad = (m != 0) & (m != 1)
            if bad.any():
                raise StructureError("mask entries must be 0 or 1")

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskSet):
            return NotImplemented
        return (
            len(self.w) == len(other.w)
            and all(a.shape == b.shape and (a == b).all() for a, b in zip(self.w, other.w))
            and all(a.shape == b.shape and (a == b).all() for a, b in zip(self.b, other.b))
        )

    def __hash__(self) -> int:
        return hash(tuple(m.tobytes() for m in self.w) + tuple(m.tobytes() for m in self.b))

    @classmethod
    def zeros(cls, arch: Architecture) -> "MaskSet":
        widths = arch.widths
        return cls(
            tuple(np.zeros((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(arch.depth)),
            tuple(np.zeros(widths[l + 1], dtype=np.uint8) for l in range(arch.depth)),
        )

    @classmethod
    def ones(cls, arch: Architecture) -> "MaskSet":
        widths = arch.widths
        return cls(
            tuple(np.ones((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(arch.depth)),
            tuple(np.ones(widths[l + 1], dtype=np.uint8) for l in range(arch.depth)),
        )


@dataclass(frozen=True)
class Params:
    """Per-layer weight matrices and bias vectors (same shapes as the masks)."""

    w: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", tuple(_freeze(np.asarray(m, dtype=np.float64)) for m in self.w))
        object.__setattr__(self, "b", tuple(_freeze(np.asarray(m, dtype=np.float64)) for m in self.b))
        for m in self.w + self.b:
            if not np.isfinite(m).all():
                raise StructureError("parameters must be finite")

    def masked(self, masks: MaskSet) -> "Params":
        return Params(
            tuple(w * mw for w, mw in zip(self.w, masks.w)),
            tuple(b * mb for b, mb in zip(self.b, masks.b)),
        )


@dataclass(frozen=True)
class Structure:
    architecture: Architecture
    masks: MaskSet

    def __post_init__(self) -> None:
        widths = self.architecture.widths
        if len(self.masks.w) != self.architecture.depth:
            raise StructureError("mask layer count does not match architecture")
        for l in range(self.architecture.depth):
            if self.masks.w[l].shape != (widths[l + 1], widths[l]):
                raise StructureError(f"mask w[{l}] shape mismatch")
            if self.masks.b[l].shape != (widths[l + 1],):
                raise StructureError(f"mask b[{l}] shape mismatch")

    @property
    def depth(self) -> int:
        return self.architecture.depth

    def popcount(self) -> int:
        return int(sum(m.sum() for m in self.masks.w) + sum(m.sum() for m in self.masks.b))


def random_params(structure: Structure, rng: np.random.Generator, low: float = 0.2, high: float = 1.2) -> Params:
    widths = structure.architecture.widths
    return Params(
        tuple(rng.uniform(low, high, size=(widths[l + 1], widths[l])) for l in range(structure.depth)),
        tuple(rng.uniform(low, high, size=widths[l + 1]) for l in range(structure.depth)),
    )


# ---------------------------------------------------------------------------
# Forward pass (reference implementation; training uses the packed kernels)
# ---------------------------------------------------------------------------


def _apply_op(op: str, y: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        if op == "id":
            return y
        if op == "sin":
            return np.sin(y)
        if op == "cos":
            return np.cos(y)
        if op == "exp":
            return np.exp(y)
        out = np.log(y)
        out[y <= 0.0] = np.nan
        return out


def forward(
    structure: Structure,
    params: Params,
    x: np.ndarray,
    pruned: bool = True,
) -> np.ndarray:
    """Exact-mode network output for a batch of inputs.

    ``pruned`` multiplies weights and biases elementwise by the masks before
    the affine step. Domain failures (ln of a nonpositive value, overflow)
    yield NaN for the affected rows.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != structure.architecture.d0:
        raise StructureError(f"expected {structure.architecture.d0} input features")
    p = params.masked(structure.masks) if pruned else params
    z = X
    for l, ops in enumerate(structure.architecture.layer_ops):
        # zero-weight edges must not propagate NaN from dead upstream nodes
        finite = np.isfinite(z)
        zc = np.where(finite, z, 0.0)
        y = zc @ p.w[l].T + p.b[l]
        poisoned = (~finite) @ (p.w[l] != 0.0).T
        y[poisoned] = np.nan
        z = np.empty_like(y)
        for i, op in enumerate(ops):
            z[:, i] = _apply_op(op, y[:, i])
    out = z[:, 0]
    out = np.where(np.isfinite(out), out, np.nan)
    return out


# ---------------------------------------------------------------------------
# Operator unification and its inverse
# ---------------------------------------------------------------------------


def _log_term(e: Expr) -> Expr:
    """ln-contribution of a factor inside a unified product."""
    if e.kind == "exp":
        return e.args[0]
    return unary("ln", e)


def _scaled(coeff: float, e: Expr) -> Expr:
    if coeff == 1.0:
        return e
    if coeff == 0.0:
        return const(0.0)
    return mul(const(coeff), e)


def unify(e: Expr) -> Expr:
    """Rewrite x*y, x/y, and pow into nested exp/ln form.

    Scalar multiplication and +/- stay affine: 2*x is untouched, x*y becomes
    exp(ln(x) + ln(y)), x/y becomes exp(ln(x) - ln(y)), x^a becomes
    exp(a*ln(x)); non-constant exponents recurse, so x^y becomes
    exp(exp(ln(y) + ln(ln(x)))). The rewrite is syntactic.
    """
    k = e.kind
    if not e.args:
        return e
    if k in ("mul", "div"):
        num: list[Expr] = []
        den: list[Expr] = []

        def collect(n: Expr, into_den: bool) -> None:
            if n.kind == "mul":
                collect(n.args[0], into_den)
                collect(n.args[1], into_den)
            elif n.kind == "div":
                collect(n.args[0], into_den)
                collect(n.args[1], not into_den)
            else:
                (den if into_den else num).append(n)

        collect(e, False)
        coeff = 1.0
        terms: list[Expr] = []
        for f in num:
            if f.kind == "const":
                coeff *= f.value
            else:
                terms.append(_log_term(unify(f)))
        for f in den:
            if f.kind == "const":
                if f.value != 0.0:
                    coeff /= f.value
            else:
                terms.append(mul(const(-1.0), _log_term(unify(f))))
        if not terms:
            return const(coeff)
        if len(terms) == 1 and terms[0].kind == "ln":
            # a single non-constant factor is just a scalar multiple
            inner = terms[0].args[0]
            return _scaled(coeff, inner)
        body = terms[0]
        for t in terms[1:]:
            body = add(body, t)
        return _scaled(coeff, unary("exp", body))
    if k == "pow":
        base, expo = e.args
        if expo.kind == "const":
            lam = expo.value
            if lam == 0.0:
                return const(1.0)
            ub = unify(base)
            if lam == 1.0:
                return ub
            return unary("exp", _scaled(lam, _log_term(ub)))
        ub, ue = unify(base), unify(expo)
        # exponent * ln(base) is itself a nonlinear product: unify it too
        inner = unary("exp", add(_log_term(ue), _log_term(_log_term(ub))))
        return unary("exp", inner)
    if k == "sqrt":
        return unify(pow_(e.args[0], const(0.5)))
    return Expr(k, tuple(unify(a) for a in e.args), e.value, e.index)


def collapse_exp_ln(e: Expr) -> Expr:
    """Merge nested exp/ln back into products, quotients, and powers.

    Delegates to the canonical normal form, which applies exp(sum of
    g_i*ln(u_i)) -> product of u_i^g_i and ln(exp(u)) -> u to a fixed point.
    """
    return canonicalize(e)


# ---------------------------------------------------------------------------
# Skeleton: the symbolic forward pass
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamRef:
    layer: int
    row: int
    col: int
    is_bias: bool


class DegenerateStructureError(StructureError):
    """The structure computes a constant (no input reaches the output)."""


@dataclass(frozen=True)
class Skeleton:
    """Expression with constant/exponent slots plus their weight bindings.

    ``sym_bindings[i]`` (resp. ``exp_bindings[i]``) is an expression over
    ``param`` atoms giving the value of constant slot ``c_i`` (exponent slot
    ``lam_i``) in terms of the network weights; ``param_refs[pid]`` locates
    atom pid inside the weight tensors.
    """

    expr: Expr
    sym_bindings: tuple[Expr, ...]
    exp_bindings: tuple[Expr, ...]
    param_refs: tuple[ParamRef, ...]

    @property
    def n_sym(self) -> int:
        return len(self.sym_bindings)

    @property
    def n_exp(self) -> int:
        return len(self.exp_bindings)

    def bind(self, params: Params) -> tuple[dict[int, float], dict[int, float]]:
        """Numeric slot values implied by concrete network parameters."""
        env = {}
        for pid, ref in enumerate(self.param_refs):
            src = params.b[ref.layer][ref.row] if ref.is_bias else params.w[ref.layer][ref.row, ref.col]
            env[pid] = float(src)
        dummy = np.zeros((1, 1))
        sym = {i: float(evaluate_batch(bexpr, dummy, env)[0]) for i, bexpr in enumerate(self.sym_bindings)}
        exp = {i: float(evaluate_batch(bexpr, dummy, env)[0]) for i, bexpr in enumerate(self.exp_bindings)}
        return sym, exp


def _symbolic_forward(structure: Structure) -> tuple[Expr, list[ParamRef]]:
    refs: list[ParamRef] = []

    def fresh(layer: int, row: int, col: int, is_bias: bool) -> Expr:
        refs.append(ParamRef(layer, row, col, is_bias))
        return param(len(refs) - 1)

    arch = structure.architecture
    z: list[Expr] = [var(i) for i in range(arch.d0)]
    for l, ops in enumerate(arch.layer_ops):
        mw, mb = structure.masks.w[l], structure.masks.b[l]
        nxt: list[Expr] = []
        for i, op in enumerate(ops):
            terms = [mul(fresh(l, i, j, False), z[j]) for j in range(len(z)) if mw[i, j]]
            if mb[i]:
                terms.append(fresh(l, i, 0, True))
            if not terms:
                y: Expr = const(0.0)
            else:
                y = terms[0]
                for t in terms[1:]:
                    y = add(y, t)
            nxt.append(y if op == "id" else unary(op, y))
        z = nxt
    return z[0], refs


def skeleton(structure: Structure, allow_degenerate: bool = False) -> Skeleton:
    """Map a structure to its functional skeleton.

    Runs the forward pass with symbolic weight atoms placed where mask bits
    are set, collapses exp/ln nests, merges constants in equivalent roles
    (e.g. c0*(c1*x + c2) collapses to c0*x + c1), and replaces each maximal
    weight-only subexpression with a constant slot; weight products appearing
    as exponents become exponent slots.
    """
    raw, refs = _symbolic_forward(structure)
    merged = canonicalize(raw, expand=True)

    if not any(n.kind == "var" for n in merged.walk()):
        if not allow_degenerate:
            raise DegenerateStructureError("structure output does not depend on any input")

    sym_slots: dict[Expr, int] = {}
    exp_slots: dict[Expr, int] = {}

    def extract(n: Expr, in_exponent: bool) -> Expr:
        if _is_constlike(n):
            if not any(c.kind == "param" for c in n.walk()):
                return n  # plain numeric constant
            table = exp_slots if in_exponent else sym_slots
            if n not in table:
                table[n] = len(table)
            return (expslot if in_exponent else symconst)(table[n])
        if n.kind == "pow":
            return pow_(extract(n.args[0], False), extract(n.args[1], True))
        if not n.args:
            return n
        return Expr(n.kind, tuple(extract(a, False) for a in n.args), n.value, n.index)

    expr_slots = extract(merged, False)
    sym_bindings = tuple(e for e, _ in sorted(sym_slots.items(), key=lambda kv: kv[1]))
    exp_bindings = tuple(e for e, _ in sorted(exp_slots.items(), key=lambda kv: kv[1]))
    return Skeleton(expr_slots, sym_bindings, exp_bindings, tuple(refs))


# ---------------------------------------------------------------------------
# Structure simplification
# ---------------------------------------------------------------------------


def simplify_structure(structure: Structure) -> Structure:
    """Drop nodes with no path to the output and re-index the masks.

    The result usually has a compact (non-replicated) architecture; its
    skeleton equals the input's skeleton up to slot renaming.
    """
    arch = structure.architecture
    L = arch.depth
    alive: list[set[int]] = [set() for _ in range(L + 1)]
    alive[L] = {0}
    for l in range(L, 0, -1):
        mw = structure.masks.w[l - 1]
        for i in alive[l]:
            for j in np.nonzero(mw[i])[0]:
                alive[l - 1].add(int(j))
    kept = [sorted(alive[l]) for l in range(L + 1)]
    kept[0] = list(range(arch.d0))  # inputs always stay

    layer_ops = []
    new_w = []
    new_b = []
    for l in range(1, L + 1):
        ops = arch.layer_ops[l - 1]
        rows = kept[l] if l < L else [0]
        cols = kept[l - 1]
        layer_ops.append(tuple(ops[i] for i in rows))
        new_w.append(structure.masks.w[l - 1][np.ix_(rows, cols)])
        new_b.append(structure.masks.b[l - 1][rows])
    if not layer_ops[-1]:
        layer_ops[-1] = ("id",)
    new_arch = Architecture(arch.d0, tuple(layer_ops), m=None)
    return Structure(new_arch, MaskSet(tuple(new_w), tuple(new_b)))


# ---------------------------------------------------------------------------
# Depth/node counting for monomial sums (validator support)
# ---------------------------------------------------------------------------


def monomial_tree_node_sum(d: int) -> int:
    """sum_{i=1..ceil(log2 d)} ceil(d / 2^i): nodes of a binary product tree."""
    if d < 1:
        raise ValueError("d >= 1 required")
    return sum(math.ceil(d / 2**i) for i in range(1, max(1, math.ceil(math.log2(d))) + 1)) if d > 1 else 0


def _tree_sum_proof(d: int) -> int:
    # the d=2 base case used by the counting argument differs from the
    # displayed sum (which gives 1); both are exposed for the validator
    if d == 2:
        return 2
    return monomial_tree_node_sum(d)


@dataclass(frozen=True)
class RepresentationCounts:
    """Depth/node counts for representing sum_k c_k prod_i x_i^{m_ki}.

    (l1, n1): unified network (ln layer, exp layer, id combiner when K >= 2).
    (l2, n2): binary-product network lower bound, following the counting
    argument's case analysis. ``n2_displayed`` is the weaker bound as displayed
    (it omits the K factor on the product-tree nodes); the two differ only for
    K >= 2, and n2_displayed is too weak to support n1 <= n2 at small d.
    """

    l1: int
    n1: int
    l2: int
    n2: int
    n2_displayed: int


def representation_counts(exponents: list[list[float]]) -> RepresentationCounts:
    """Counts for a K-term monomial sum over d variables.

    Preconditions: all exponents nonzero, at least one differs from 1.
    """
    K = len(exponents)
    if K < 1 or not exponents[0]:
        raise ValueError("need K >= 1 terms and d >= 1 variables")
    d = len(exponents[0])
    if any(len(row) != d for row in exponents):
        raise ValueError("expected a K x d exponent matrix")
    if any(m == 0 for row in exponents for m in row):
        raise ValueError("all exponents must be nonzero")
    if all(m == 1 for row in exponents for m in row):
        raise ValueError("at least one exponent must differ from 1")

    if K == 1:
        l1, n1 = 2, d + 1
        l2 = math.ceil(math.log2(d)) + 1 if d > 1 else 2
        n2 = monomial_tree_node_sum(d) + d
        n2_disp = n2
    else:
        l1, n1 = 3, d + K + 1
        l2 = (math.ceil(math.log2(d)) if d > 1 else 1) + 2
        n2 = K * _tree_sum_proof(d) + 1
        n2_disp = monomial_tree_node_sum(d) + 1
    return RepresentationCounts(l1, n1, l2, n2, n2_disp)


# ---------------------------------------------------------------------------
# Random structures (tests, the random proposer)
# ---------------------------------------------------------------------------


def random_structure(
    L: int,
    m: int,
    d0: int,
    rng: np.random.Generator,
    extra_edge_prob: float = 0.15,
    bias_prob: float = 0.3,
) -> Structure:
    """Sample a valid canonical-layout structure.

    Every node with an outgoing connection has at least one incoming
    connection, and every set bit lies on a path to the output.
    """
    arch = Architecture.canonical(L, m, d0)
    widths = arch.widths
    active: list[list[int]] = [list(range(d0))]
    for l in range(1, L):
        k = int(rng.integers(1, widths[l] + 1))
        k = min(k, max(1, int(rng.integers(1, 4))))  # keep layers small-ish
        active.append(sorted(rng.choice(widths[l], size=k, replace=False).tolist()))
    active.append([0])

    w = [np.zeros((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(L)]
    b = [np.zeros(widths[l + 1], dtype=np.uint8) for l in range(L)]
    for l in range(1, L + 1):
        prev = active[l - 1]
        for i in active[l]:
            picks = {int(rng.choice(prev))}
            for j in prev:
                if rng.random() < extra_edge_prob:
                    picks.add(j)
            for j in picks:
                w[l - 1][i, j] = 1
            if rng.random() < bias_prob:
                b[l - 1][i] = 1

    s = Structure(arch, MaskSet(tuple(w), tuple(b)))
    return _drop_unreachable_bits(s)


def _drop_unreachable_bits(structure: Structure) -> Structure:
    arch = structure.architecture
    L = arch.depth
    alive: list[set[int]] = [set() for _ in range(L + 1)]
    alive[L] = {0}
    for l in range(L, 0, -1):
        mw = structure.masks.w[l - 1]
        for i in alive[l]:
            for j in np.nonzero(mw[i])[0]:
                alive[l - 1].add(int(j))
    w = [np.array(m) for m in structure.masks.w]
    b = [np.array(m) for m in structure.masks.b]
    for l in range(1, L + 1):
        keep = alive[l] if l < L else {0}
        for i in range(w[l - 1].shape[0]):
            if i not in keep:
                w[l - 1][i, :] = 0
                b[l - 1][i] = 0
    return Structure(arch, MaskSet(tuple(w), tuple(b)))


# ---------------------------------------------------------------------------
# Flattening and text serialization
# ---------------------------------------------------------------------------


def flatten_masks(structure: Structure) -> np.ndarray:
    """All weight masks row-major (layer 1..L), then all bias masks."""
    parts = [m.reshape(-1) for m in structure.masks.w] + [m.reshape(-1) for m in structure.masks.b]
    return np.concatenate(parts).astype(np.uint8)


def masks_from_flat(bits: np.ndarray, arch: Architecture) -> MaskSet:
    widths = arch.widths
    expected = sum(widths[l + 1] * widths[l] for l in range(arch.depth)) + sum(widths[1:])
    if bits.size != expected:
        raise StructureError(f"flat mask length {bits.size} does not match architecture ({expected})")
    w = []
    pos = 0
    for l in range(arch.depth):
        n = widths[l + 1] * widths[l]
        w.append(bits[pos : pos + n].reshape(widths[l + 1], widths[l]))
        pos += n
    b = []
    for l in range(arch.depth):
        n = widths[l + 1]
        b.append(bits[pos : pos + n])
        pos += n
    return MaskSet(tuple(w), tuple(b))


def structure_to_text(structure: Structure) -> str:
    """Canonical byte-stable text form: 'L m d0 <run-length-encoded bits>'."""
    arch = structure.architecture
    if not arch.is_canonical():
        raise StructureError("text form requires the canonical replicated layout")
    bits = flatten_masks(structure)
    runs = []
    i = 0
    while i < bits.size:
        j = i
        while j < bits.size and bits[j] == bits[i]:
            j += 1
        runs.append(f"{j - i}x{int(bits[i])}")
        i = j
    return f"{arch.depth} {arch.m} {arch.d0} " + ",".join(runs)


def structure_from_text(text: str) -> Structure:
    try:
        l_s, m_s, d_s, rle = text.strip().split(" ", 3)
        L, m, d0 = int(l_s), int(m_s), int(d_s)
        bits: list[int] = []
        for run in rle.split(","):
            count_s, val_s = run.split("x")
            bits.extend([int(val_s)] * int(count_s))
    except (ValueError, IndexError) as exc:
        raise StructureError(f"malformed structure text: {exc}") from exc
    arch = Architecture.canonical(L, m, d0)
    return Structure(arch, masks_from_flat(np.array(bits, dtype=np.uint8), arch))
