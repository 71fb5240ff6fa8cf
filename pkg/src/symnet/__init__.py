"""Symbolic regression with a unified-operator symbolic network.

The network uses only unary activations; products, quotients, and powers are
expressed as exp/ln compositions, so a sparse connection mask fully determines
a functional skeleton. The package covers the expression layer, the network
structure and its sequence codec, synthetic corpus generation, two parameter
optimization strategies, pluggable structure proposers (with a wire protocol
for external services), and a benchmark harness.
"""

from .expr import (
    Dataset,
    Expr,
    canonicalize,
    complexity,
    evaluate,
    evaluate_batch,
    extrapolation_eval,
    format_expr,
    is_symbolic_solution,
    parse,
    pretty,
    r2_score,
)
from .netcore import (
    Architecture,
    MaskSet,
    Params,
    Structure,
    collapse_exp_ln,
    forward,
    representation_counts,
    simplify_structure,
    skeleton,
    unify,
)
from .codec import SequenceLabel, decode, encode

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Expr",
    "parse",
    "format_expr",
    "pretty",
    "evaluate",
    "evaluate_batch",
    "canonicalize",
    "complexity",
    "r2_score",
    "is_symbolic_solution",
    "extrapolation_eval",
    "Architecture",
    "MaskSet",
    "Params",
    "Structure",
    "forward",
    "unify",
    "collapse_exp_ln",
    "skeleton",
    "simplify_structure",
    "representation_counts",
    "SequenceLabel",
    "encode",
    "decode",
]
