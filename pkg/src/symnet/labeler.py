"""Map expressions to network structures and merge equivalent labels.

``identify_structure`` decomposes an expression layer by layer, outside in:
the expression is first rewritten so that products/quotients/powers become
exp/ln nests (division never reaches the network), then every unary-operator
application becomes a node whose input is an affine combination of the nodes
one layer below; variables consumed above the input layer ride id-node chains.
Replica slots are assigned first-free within each operator's block, scanning
left to right.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import SequenceLabel, encode
from .expr import Expr, canonicalize, evaluate_batch, free_variables
from .netcore import (
    OP_ORDER,
    Architecture,
    MaskSet,
    Params,
    Structure,
    StructureError,
    unify,
)

__all__ = [
    "LabelingError",
    "UnsupportedOperatorError",
    "DepthExceededError",
    "ReplicaOverflowError",
    "identify_structure",
    "merge_equivalent_labels",
    "write_corpus_file",
    "read_corpus_file",
]


class LabelingError(StructureError):
    """Expression cannot be mapped onto a structure with the given limits."""


class UnsupportedOperatorError(LabelingError):
    pass


class DepthExceededError(LabelingError):
    pass


class ReplicaOverflowError(LabelingError):
    pass


_NETWORK_UNARIES = {"sin", "cos", "exp", "ln"}


def _affine_terms(e: Expr) -> tuple[list[tuple[float, Expr]], float]:
    """Split into ([(coefficient, atom)], constant); atoms are vars or unary ops."""
    terms: list[tuple[float, Expr]] = []
    constant = 0.0

    def walk(sign: float, n: Expr) -> None:
        nonlocal constant
        if n.kind == "add":
            walk(sign, n.args[0])
            walk(sign, n.args[1])
        elif n.kind == "sub":
            walk(sign, n.args[0])
            walk(-sign, n.args[1])
        elif n.kind == "const":
            constant += sign * n.value
        elif n.kind == "mul":
            coeff = sign
            rest: list[Expr] = []
            stack = [n]
            while stack:
                cur = stack.pop()
                if cur.kind == "mul":
                    stack.extend(cur.args)
                elif cur.kind == "const":
                    coeff *= cur.value
                else:
                    rest.append(cur)
            if not rest:
                constant += coeff
            elif len(rest) == 1:
                if rest[0].kind in ("add", "sub"):
                    walk(coeff, rest[0])
                else:
                    terms.append((coeff, rest[0]))
            else:
                # unify() leaves only scalar products; anything else is a bug
                raise LabelingError(f"non-affine product survived unification: {n}")
        else:
            terms.append((sign, n))

    walk(1.0, e)
    # duplicate atoms would otherwise claim the same connection twice
    merged: dict[Expr, float] = {}
    order: list[Expr] = []
    for coeff, atom in terms:
        if atom not in merged:
            merged[atom] = 0.0
            order.append(atom)
        merged[atom] += coeff
    return [(merged[a], a) for a in order if merged[a] != 0.0], constant


@dataclass
class _Slots:
    """First-free-slot bookkeeping for one layer of the replicated layout."""

    m: int
    used: dict[str, int] = field(default_factory=dict)

    def take(self, op: str) -> int:
        k = self.used.get(op, 0)
        if k >= self.m:
            raise ReplicaOverflowError(f"more than m={self.m} simultaneous {op} nodes in one layer")
        self.used[op] = k + 1
        return OP_ORDER.index(op) * self.m + k


def identify_structure(
    e: Expr,
    m: int,
    d0: int,
    l_max: int = 6,
    with_params: bool = False,
) -> Structure | tuple[Structure, Params]:
    """Build the canonical-layout structure whose skeleton matches ``e``.

    ``with_params=True`` also returns the weight/bias values read off the
    expression's affine coefficients during placement: the skeleton bound to
    these parameters reproduces ``e`` exactly, which is what the round-trip
    checks verify. Raises :class:`UnsupportedOperatorError` for operators
    outside the network library (abs cannot be represented),
    :class:`DepthExceededError` when more than ``l_max`` layers would be
    needed, and :class:`ReplicaOverflowError` when one layer needs more than
    ``m`` copies of an operator.
    """
    for n in e.walk():
        if n.kind in ("symconst", "expslot", "param"):
            raise LabelingError("expression must be fully instantiated")
        if n.kind == "var" and n.index >= d0:
            raise LabelingError(f"x{n.index} out of range for d0={d0}")

    u = unify(canonicalize(e, expand=True))
    for n in u.walk():
        if n.kind in ("abs", "sqrt"):
            raise UnsupportedOperatorError(f"{n.kind} is outside the network operator library")
        if n.kind in ("mul", "div") and not any(a.kind == "const" for a in n.args):
            raise LabelingError(f"non-affine {n.kind} survived unification")

    top_terms, top_const = _affine_terms(u)

    depth_memo: dict[Expr, int] = {}

    def depth(atom: Expr) -> int:
        if atom in depth_memo:
            return depth_memo[atom]
        if atom.kind == "var":
            d = 0
        elif atom.kind in _NETWORK_UNARIES:
            inner_terms, _ = _affine_terms(atom.args[0])
            d = 1 + max((depth(a) for _, a in inner_terms), default=0)
        else:
            raise UnsupportedOperatorError(f"cannot place node of kind {atom.kind!r}")
        depth_memo[atom] = d
        return d

    L = 1 + max((depth(a) for _, a in top_terms), default=0)
    if L > l_max:
        raise DepthExceededError(f"needs {L} layers, limit is {l_max}")

    arch = Architecture.canonical(L, m, d0)
    widths = arch.widths
    w = [np.zeros((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(L)]
    b = [np.zeros(widths[l + 1], dtype=np.uint8) for l in range(L)]
    wv = [np.zeros((widths[l + 1], widths[l])) for l in range(L)]
    bv = [np.zeros(widths[l + 1]) for l in range(L)]
    slots = [_Slots(m) for _ in range(L)]  # hidden layers 1..L-1 use slots[l-1]

    placed: dict[tuple[Expr, int], int] = {}

    def realize(atom: Expr, layer: int) -> int:
        """Ensure ``atom`` is available as a node index at ``layer``; return it."""
        if layer == 0:
            if atom.kind != "var":
                raise LabelingError("only variables live at the input layer")
            return atom.index
        key = (atom, layer)
        if key in placed:
            return placed[key]
        natural = depth(atom) if atom.kind != "var" else 0
        if layer > natural:
            below = realize(atom, layer - 1)
            idx = slots[layer - 1].take("id")
            w[layer - 1][idx, below] = 1
            wv[layer - 1][idx, below] = 1.0
            placed[key] = idx
            return idx
        # layer == natural: place the operator node itself
        inner_terms, inner_const = _affine_terms(atom.args[0])
        idx = slots[layer - 1].take(atom.kind)
        for coeff, sub_atom in inner_terms:
            j = realize(sub_atom, layer - 1)
            w[layer - 1][idx, j] = 1
            wv[layer - 1][idx, j] = coeff
        if inner_const != 0.0:
            b[layer - 1][idx] = 1
            bv[layer - 1][idx] = inner_const
        placed[key] = idx
        return idx

    for coeff, atom in top_terms:
        j = realize(atom, L - 1)
        w[L - 1][0, j] = 1
        wv[L - 1][0, j] = coeff
    if top_const != 0.0 or not top_terms:
        b[L - 1][0] = 1
        bv[L - 1][0] = top_const

    structure = Structure(arch, MaskSet(tuple(w), tuple(b)))
    if with_params:
        return structure, Params(tuple(wv), tuple(bv))
    return structure


def recover(
    structure: Structure,
    data,
    true_params: Params | None = None,
    values: tuple[float, ...] = (1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 3.0, -3.0),
    budget: int = 300,
    deadline: float | None = None,
    seed: int = 0,
):
    """Fit the structure's skeleton to data; the structure round trip check.

    When ``true_params`` is given (the coefficients recorded while identifying
    the structure from an expression), exponent slots snap to the nearest
    allowed value and the constant fit starts from the recorded values: a
    faithful structure then reproduces its source expression, while a
    structurally wrong one cannot fit no matter the start. Falls back to the
    blind exponent search when the informed fit is poor or absent.
    """
    import numpy as np

    from . import skopt
    from .expr import Expr, substitute_slots
    from .netcore import skeleton

    sk = skeleton(structure)
    informed = None
    if true_params is not None:
        # exponent slots become ordinary constants here, fitted jointly from
        # the recorded values; exactness then does not depend on the discrete
        # exponent value set
        sym0, exp0 = sk.bind(true_params)
        base = (max(sym0) + 1) if sym0 else 0

        def promote(n: Expr) -> Expr:
            if n.kind == "expslot":
                return Expr("symconst", index=base + n.index)
            if not n.args:
                return n
            return Expr(n.kind, tuple(promote(a) for a in n.args), n.value, n.index)

        relaxed = promote(sk.expr)
        slots_sorted = sorted({n.index for n in relaxed.walk() if n.kind == "symconst"})
        full0 = {**sym0, **{base + k: v for k, v in exp0.items()}}
        x0 = np.array([full0[s] for s in slots_sorted])
        informed = skopt.fit_constants(
            relaxed, data, warm_starts=[x0], rng=np.random.default_rng(seed), nan_rows="ignore"
        )
    stop = 1e-12 * max(1.0, float(np.var(data.y)))
    if informed is not None and informed.mse <= stop:
        return informed
    blind = skopt.optimize_skeleton(
        sk.expr, data, skopt.PolicyConfig(values=values, seed=seed), budget=budget, deadline=deadline
    ).best
    if informed is not None and informed.mse <= blind.mse:
        return informed
    return blind


# ---------------------------------------------------------------------------
# Equivalent-label merging
# ---------------------------------------------------------------------------


def _probe_matrix(d: int, n: int = 64, seed: int = 1234) -> np.ndarray:
    # positive probe points keep ln/sqrt-bearing expressions comparable
    return np.random.default_rng(seed).uniform(0.5, 2.5, size=(n, d))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        self.parent[self.find(i)] = self.find(j)


def _numerically_equal(a: np.ndarray, b: np.ndarray, rel_tol: float = 1e-9) -> bool:
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < a.size // 2:
        return False
    scale = np.maximum(1.0, np.maximum(np.abs(a[ok]), np.abs(b[ok])))
    return bool(np.all(np.abs(a[ok] - b[ok]) <= rel_tol * scale))


def merge_equivalent_labels(
    pairs: list[tuple[Expr, SequenceLabel]],
) -> dict[Expr, SequenceLabel]:
    """Give equivalent expressions the shorter of their labels.

    Equivalence is canonical-form equality or numerical agreement on 64 shared
    probe points to relative 1e-9; equal-length labels tie-break to the
    lexicographically smaller token tuple.
    """
    if not pairs:
        return {}
    d = max((max(free_variables(e), default=0) for e, _ in pairs), default=0) + 1
    X = _probe_matrix(d)
    canon = [canonicalize(e) for e, _ in pairs]
    values = [evaluate_batch(c, X) for c in canon]

    uf = _UnionFind(len(pairs))
    by_canon: dict[Expr, int] = {}
    for i, c in enumerate(canon):
        if c in by_canon:
            uf.union(i, by_canon[c])
        else:
            by_canon[c] = i

    # coarse bucket on compressed values, exact pairwise check inside buckets
    buckets: dict[tuple, list[int]] = {}
    for i, v in enumerate(values):
        finite = np.isfinite(v)
        key = (int(finite.sum()),) + tuple(np.round(np.arctan(v[finite][:8]), 4).tolist())
        buckets.setdefault(key, []).append(i)
    for members in buckets.values():
        for a in range(len(members)):
            for bidx in range(a + 1, len(members)):
                i, j = members[a], members[bidx]
                if uf.find(i) != uf.find(j) and _numerically_equal(values[i], values[j]):
                    uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(len(pairs)):
        groups.setdefault(uf.find(i), []).append(i)
    out: dict[Expr, SequenceLabel] = {}
    for members in groups.values():
        best = min(members, key=lambda i: (len(pairs[i][1]), pairs[i][1].tokens))
        for i in members:
            out[pairs[i][0]] = pairs[best][1]
    return out


# ---------------------------------------------------------------------------
# Corpus text files: "expression<TAB>space-separated label tokens"
# ---------------------------------------------------------------------------


def write_corpus_file(path, pairs: list[tuple[Expr, SequenceLabel]]) -> None:
    from .expr import format_expr

    with open(path, "w") as fh:
        for e, label in pairs:
            fh.write(f"{format_expr(e)}\t{label.to_text()}\n")


def read_corpus_file(path) -> list[tuple[Expr, SequenceLabel]]:
    from .expr import parse

    out = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            text, toks = line.split("\t")
            out.append((parse(text), SequenceLabel.from_text(toks)))
    return out
