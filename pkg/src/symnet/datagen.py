"""Synthetic (function, dataset, label) generation and corpus export.

Functions are sampled as random binary trees (operators at internal nodes,
variables/constants at leaves), unary operators are inserted at random nodes,
and affine transforms w*u + b wrap a random subset of variables and unary
nodes. Inputs are drawn uniformly from per-feature intervals inside (-10, 10);
rows whose output is NaN/Inf are zeroed wholesale. Exported values use the
IEEE-754 binary32 bit pattern as a 32-bit multi-hot vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec, labeler
from .expr import Expr, add, canonicalize, const, evaluate_batch, free_variables, mul, pow_, unary, var
from .netcore import Params, Structure

__all__ = [
    "GenConfig",
    "SamplingError",
    "GeneratedInstance",
    "sample_function",
    "sample_inputs",
    "sample_instance",
    "float_to_multihot",
    "multihot_to_float",
    "encode_xy_block",
    "decode_xy_block",
    "export_corpus",
    "read_corpus",
    "CORPUS_VERSION",
]

CORPUS_VERSION = 1

_UNARY_FREQ = {
    "ln": 0.3,
    "exp": 1.1,
    "sin": 1.1,
    "cos": 1.1,
    "sqrt": 3.0,
    "inv": 5.0,
    "abs": 1.0,
    "pow2": 2.0,
}
_BINARY_FREQ = {"add": 1.0, "sub": 1.0, "mul": 1.0, "pow": 1.0}


@dataclass(frozen=True)
class GenConfig:
    d_max: int = 4
    b_max_offset: int = 5  # b_max = d + offset
    l_max: int = 6
    m: int = 5
    n_points: int = 200
    dim_weights: tuple[tuple[int, float], ...] = ((1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4))
    unary_freq: tuple[tuple[str, float], ...] = tuple(_UNARY_FREQ.items())
    binary_freq: tuple[tuple[str, float], ...] = tuple(_BINARY_FREQ.items())
    pow_exponents: tuple[float, ...] = (2.0, 3.0, 0.5, -1.0, -2.0)
    leaf_const_prob: float = 0.2
    affine_prob: float = 0.5
    label_pad_length: int = 64
    max_interval_retries: int = 8
    seed: int = 0

    @classmethod
    def small(cls, **kw) -> "GenConfig":
        """Preset for d <= 4 corpora."""
        return cls(**kw)

    @classmethod
    def large(cls, **kw) -> "GenConfig":
        """Preset for d up to 10: wider nets, tighter binary-op budget."""
        defaults = dict(
            d_max=10,
            b_max_offset=1,
            l_max=7,
            m=7,
            dim_weights=((5, 0.2), (6, 0.2), (7, 0.15), (8, 0.15), (9, 0.15), (10, 0.15)),
        )
        defaults.update(kw)
        return cls(**defaults)

    def u_max(self, d: int) -> int:
        return min(5, d + 1)

    def b_max(self, d: int) -> int:
        return d + self.b_max_offset


class SamplingError(RuntimeError):
    pass


def _weighted_choice(rng: np.random.Generator, items: tuple[tuple[str, float], ...]) -> str:
    names = [n for n, _ in items]
    w = np.array([f for _, f in items])
    return names[rng.choice(len(names), p=w / w.sum())]


def _draw_affine(rng: np.random.Generator) -> tuple[float, float]:
    # sign ~ U(-1,1) thresholded at 0, mantissa ~ U(0,1), exponent ~ U(-1,1)
    def one() -> float:
        sign = 1.0 if rng.uniform(-1, 1) >= 0 else -1.0
        return sign * rng.uniform(0, 1) * 10.0 ** rng.uniform(-1, 1)

    return one(), one()


@dataclass
class _TreeNode:
    op: str | None = None  # None marks a leaf
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    leaf: Expr | None = None


def _random_tree_shape(b_op: int, rng: np.random.Generator) -> _TreeNode:
    root = _TreeNode()
    leaves = [root]
    for _ in range(b_op):
        i = int(rng.integers(len(leaves)))
        node = leaves.pop(i)
        node.op = "?"
        node.left = _TreeNode()
        node.right = _TreeNode()
        leaves.extend([node.left, node.right])
    return root


def _collect(node: _TreeNode, out_internal: list[_TreeNode], out_leaves: list[_TreeNode]) -> None:
    if node.op is None:
        out_leaves.append(node)
        return
    out_internal.append(node)
    _collect(node.left, out_internal, out_leaves)
    _collect(node.right, out_internal, out_leaves)


def sample_function(
    cfg: GenConfig,
    rng: np.random.Generator,
    stats: dict[str, int] | None = None,
    force_dim: int | None = None,
) -> Expr:
    """Draw a random expression; resamples internally on degenerate draws.

    ``stats`` (when given) counts the raw operator/dimension draws so tests
    can check the configured sampling frequencies directly.
    """
    names = [n for n, _ in cfg.dim_weights]
    weights = np.array([w for _, w in cfg.dim_weights])
    for _ in range(200):
        d = force_dim if force_dim is not None else int(names[rng.choice(len(names), p=weights / weights.sum())])
        b_op = int(rng.integers(max(0, d - 1), cfg.b_max(d) + 1))
        root = _random_tree_shape(b_op, rng)
        internal: list[_TreeNode] = []
        leaves: list[_TreeNode] = []
        _collect(root, internal, leaves)

        exponent_leaves: set[int] = set()
        ops_drawn: list[str] = []
        for node in internal:
            op = _weighted_choice(rng, cfg.binary_freq)
            if op == "pow" and node.right.op is not None:
                op = _weighted_choice(rng, tuple((n, f) for n, f in cfg.binary_freq if n != "pow"))
            node.op = op
            ops_drawn.append(op)
            if op == "pow":
                node.right.leaf = const(float(rng.choice(cfg.pow_exponents)))
                exponent_leaves.add(id(node.right))

        plain = [lf for lf in leaves if id(lf) not in exponent_leaves]
        if len(plain) < d:
            continue
        for i, lf in enumerate(plain):
            if i < d:
                lf.leaf = var(i)
            elif rng.random() < cfg.leaf_const_prob:
                lf.leaf = const(float(rng.integers(1, 6)))
            else:
                lf.leaf = var(int(rng.integers(d)))

        def build(node: _TreeNode) -> Expr:
            if node.op is None:
                return node.leaf
            l, r = build(node.left), build(node.right)
            if node.op == "add":
                return add(l, r)
            if node.op == "sub":
                return Expr("sub", (l, r))
            if node.op == "mul":
                return mul(l, r)
            return pow_(l, r)

        e = build(root)

        u_op = int(rng.integers(0, cfg.u_max(d) + 1))
        unary_nodes: list[Expr] = []
        for _ in range(u_op):
            op = _weighted_choice(rng, cfg.unary_freq)
            if stats is not None:
                stats[f"unary:{op}"] = stats.get(f"unary:{op}", 0) + 1
            e, wrapped = _wrap_random_node(e, op, rng)
            if wrapped is not None:
                unary_nodes.append(wrapped)

        e = _apply_affine(e, cfg, rng)
        c = canonicalize(e)
        if c.kind == "const" or not free_variables(c):
            continue
        if stats is not None:
            stats[f"dim:{d}"] = stats.get(f"dim:{d}", 0) + 1
            for op in ops_drawn:
                stats[f"binary:{op}"] = stats.get(f"binary:{op}", 0) + 1
        return e
    raise SamplingError("could not sample a non-degenerate function")


def _wrap_random_node(e: Expr, op: str, rng: np.random.Generator) -> tuple[Expr, Expr | None]:
    """Wrap a uniformly chosen subtree with a unary operator."""
    nodes = list(e.walk())
    target = nodes[int(rng.integers(len(nodes)))]
    wrapped_holder: list[Expr] = []

    def make(u: Expr) -> Expr:
        if op == "inv":
            w = pow_(u, const(-1.0))
        elif op == "pow2":
            w = pow_(u, const(2.0))
        else:
            w = unary(op, u)
        wrapped_holder.append(w)
        return w

    done = [False]

    def go(n: Expr) -> Expr:
        if done[0]:
            return n
        if n is target:
            done[0] = True
            return make(n)
        if not n.args:
            return n
        return Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)

    out = go(e)
    return out, (wrapped_holder[0] if wrapped_holder else None)


def _apply_affine(e: Expr, cfg: GenConfig, rng: np.random.Generator) -> Expr:
    """Wrap variable occurrences and unary nodes with w*u + b."""

    def go(n: Expr) -> Expr:
        if n.kind == "var":
            if rng.random() < cfg.affine_prob:
                w, b = _draw_affine(rng)
                return add(mul(const(w), n), const(b))
            return n
        if not n.args:
            return n
        rebuilt = Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)
        if n.kind in ("sin", "cos", "exp", "ln", "sqrt", "abs") and rng.random() < cfg.affine_prob:
            w, b = _draw_affine(rng)
            return add(mul(const(w), rebuilt), const(b))
        return rebuilt

    return go(e)


# ---------------------------------------------------------------------------
# Input sampling
# ---------------------------------------------------------------------------


def sample_inputs(
    f: Expr,
    cfg: GenConfig,
    rng: np.random.Generator,
    d: int | None = None,
) -> tuple[np.ndarray, np.ndarray, list[tuple[float, float]]]:
    """Sample (X padded to d_max, y, per-feature intervals) for ``f``.

    Invalid rows (NaN/Inf outputs) are zeroed; more than 50% invalid retries
    with fresh intervals, then raises :class:`SamplingError`.
    """
    d = d if d is not None else max(free_variables(f), default=0) + 1
    for _ in range(cfg.max_interval_retries):
        intervals = []
        for _ in range(d):
            while True:
                lo, hi = sorted(rng.uniform(-10, 10, size=2).tolist())
                if hi - lo >= 0.5:
                    intervals.append((lo, hi))
                    break
        X = np.column_stack([rng.uniform(lo, hi, size=cfg.n_points) for lo, hi in intervals])
        y = evaluate_batch(f, X)
        bad = ~np.isfinite(y)
        if bad.mean() > 0.5:
            continue
        X[bad] = 0.0
        y = np.where(bad, 0.0, y)
        if cfg.d_max > d:
            X = np.column_stack([X, np.zeros((cfg.n_points, cfg.d_max - d))])
        return X, y, intervals
    raise SamplingError("inputs kept hitting domain failures")


# ---------------------------------------------------------------------------
# Multi-hot bit encoding (IEEE-754 binary32)
# ---------------------------------------------------------------------------


def float_to_multihot(v: float) -> np.ndarray:
    """32-bit pattern of float32(v): sign, 8 exponent bits, 23 fraction bits."""
    raw = np.array([v], dtype=">f4").view(np.uint8)
    return np.unpackbits(raw)


def multihot_to_float(bits: np.ndarray) -> float:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (32,):
        raise ValueError("expected 32 bits")
    return float(np.packbits(bits).view(">f4")[0])


def encode_xy_block(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bit block of shape (N, (d+1)*32): per row, all features then the target."""
    rows = np.column_stack([X, y]).astype(">f4")
    raw = rows.tobytes()
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    return bits.reshape(X.shape[0], -1)


def decode_xy_block(bits: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    n = bits.shape[0]
    raw = np.packbits(bits.reshape(-1)).tobytes()
    rows = np.frombuffer(raw, dtype=">f4").reshape(n, d + 1).astype(np.float64)
    return rows[:, :d], rows[:, d]


# ---------------------------------------------------------------------------
# Corpus export
# ---------------------------------------------------------------------------


@dataclass
class GeneratedInstance:
    expr: Expr
    d: int
    X: np.ndarray  # (N, d_max)
    y: np.ndarray
    intervals: list[tuple[float, float]]
    structure: Structure
    label: codec.SequenceLabel
    true_params: Params | None = None  # affine coefficients read off the expression

    def valid_rows(self) -> np.ndarray:
        return ~((np.abs(self.X).sum(axis=1) == 0) & (self.y == 0))


def sample_instance(
    cfg: GenConfig,
    rng: np.random.Generator,
    rejections: dict[str, int] | None = None,
    force_dim: int | None = None,
    l_cap: int | None = None,
) -> GeneratedInstance:
    """Sample until a function labels successfully and its inputs are valid."""
    for _ in range(500):
        f = sample_function(cfg, rng, force_dim=force_dim)
        d = max(free_variables(f), default=0) + 1
        try:
            st, true_params = labeler.identify_structure(
                f, m=cfg.m, d0=d, l_max=min(cfg.l_max, l_cap or cfg.l_max), with_params=True
            )
        except labeler.LabelingError as exc:
            if rejections is not None:
                key = type(exc).__name__
                rejections[key] = rejections.get(key, 0) + 1
            continue
        label = codec.encode(st)
        if len(label) > cfg.label_pad_length:
            if rejections is not None:
                rejections["LabelTooLong"] = rejections.get("LabelTooLong", 0) + 1
            continue
        try:
            X, y, intervals = sample_inputs(f, cfg, rng, d=d)
        except SamplingError:
            if rejections is not None:
                rejections["InputSampling"] = rejections.get("InputSampling", 0) + 1
            continue
        return GeneratedInstance(f, d, X, y, intervals, st, label, true_params)
    raise SamplingError("rejection loop did not produce an instance")


def _write_record(fh, inst: GeneratedInstance, cfg: GenConfig) -> None:
    label = codec.pad(inst.label, cfg.label_pad_length)
    toks = np.array(label.tokens, dtype="<i4")
    bits = encode_xy_block(inst.X, inst.y)
    packed = np.packbits(bits.reshape(-1)).tobytes()
    head = np.array([inst.d, inst.X.shape[0], inst.X.shape[1], len(toks)], dtype="<u4").tobytes()
    payload = head + toks.tobytes() + packed
    fh.write(np.array([len(payload)], dtype="<u4").tobytes())
    fh.write(payload)


def _read_records(path: Path, cfg_label_len: int | None = None):
    with open(path, "rb") as fh:
        while True:
            lenb = fh.read(4)
            if not lenb:
                return
            (n,) = np.frombuffer(lenb, dtype="<u4")
            payload = fh.read(int(n))
            d, npts, dmax, ntok = np.frombuffer(payload[:16], dtype="<u4")
            toks = np.frombuffer(payload[16 : 16 + 4 * int(ntok)], dtype="<i4")
            packed = np.frombuffer(payload[16 + 4 * int(ntok) :], dtype=np.uint8)
            bits = np.unpackbits(packed)[: int(npts) * (int(dmax) + 1) * 32].reshape(int(npts), -1)
            X, y = decode_xy_block(bits, int(dmax))
            yield int(d), X, y, codec.SequenceLabel(tuple(int(t) for t in toks))


def export_corpus(count: int, cfg: GenConfig, out_dir, shard_size: int = 1000) -> dict:
    """Write length-prefixed binary shards plus a manifest and a text corpus.

    Deterministic for a fixed (cfg.seed, count); each shard derives its own
    RNG stream from (seed, shard index), so shards are independent and the
    export is resumable shard by shard.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_shards = math.ceil(count / shard_size) if count else 0
    rejections: dict[str, int] = {}
    text_pairs = []
    written = 0
    for shard in range(n_shards):
        rng = np.random.default_rng([cfg.seed, shard])
        take = min(shard_size, count - written)
        pairs = []
        insts = []
        for _ in range(take):
            inst = sample_instance(cfg, rng, rejections)
            insts.append(inst)
            pairs.append((inst.expr, inst.label))
        merged = labeler.merge_equivalent_labels(pairs)
        shard_path = out / f"corpus-{shard:05d}.bin"
        with open(shard_path, "wb") as fh:
            for inst in insts:
                inst.label = merged[inst.expr]
                _write_record(fh, inst, cfg)
        text_pairs.extend((inst.expr, inst.label) for inst in insts)
        written += take

    labeler.write_corpus_file(out / "functions.tsv", text_pairs)
    manifest = {
        "version": CORPUS_VERSION,
        "seed": cfg.seed,
        "count": written,
        "shards": n_shards,
        "shard_size": shard_size,
        "d_max": cfg.d_max,
        "m": cfg.m,
        "l_max": cfg.l_max,
        "n_points": cfg.n_points,
        "label_pad_length": cfg.label_pad_length,
        "pad_token": codec.PAD_TOKEN,
    }
    for k, v in sorted(rejections.items()):
        manifest[f"rejected.{k}"] = v
    with open(out / "manifest.txt", "w") as fh:
        for k, v in manifest.items():
            fh.write(f"{k}={v}\n")
    return manifest


def read_corpus(corpus_dir):
    """Yield (d, X, y, padded label) records across all shards, in order."""
    out = Path(corpus_dir)
    for shard_path in sorted(out.glob("corpus-*.bin")):
        yield from _read_records(shard_path)


def read_manifest(corpus_dir) -> dict:
    manifest = {}
    with open(Path(corpus_dir) / "manifest.txt") as fh:
        for line in fh:
            k, v = line.strip().split("=", 1)
            manifest[k] = int(v) if v.lstrip("-").isdigit() else v
    return manifest
