"""Structure proposers: which structures should the inner optimizers try.

A proposer answers ``propose(data, k) -> CandidateSet``. Three ship here:
enumerative (streams valid structures in increasing size), random (seeded),
and remote (asks a service over the wire protocol in ``protocol``). The
engine always re-ranks candidates by fitted quality; proposer scores only
order the queue.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import protocol
from .codec import DecodeError, SequenceLabel, decode, encode
from .expr import Dataset
from .netcore import (
    OP_ORDER,
    Architecture,
    DegenerateStructureError,
    MaskSet,
    Structure,
    random_structure,
    skeleton,
)

__all__ = [
    "Candidate",
    "CandidateSet",
    "ProposerError",
    "EnumerativeProposer",
    "RandomProposer",
    "RemoteProposer",
    "StaticProposer",
    "enumerate_structures",
    "make_server_handler",
]

log = logging.getLogger(__name__)


class ProposerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Candidate:
    label: SequenceLabel
    score: float
    provenance: str


@dataclass(frozen=True)
class CandidateSet:
    entries: tuple[Candidate, ...]

    @classmethod
    def build(cls, entries: list[Candidate], m: int, d0: int) -> "CandidateSet":
        """Validate (decode + non-degenerate skeleton), dedupe, sort by score."""
        seen = set()
        kept = []
        for c in entries:
            if c.label.tokens in seen:
                continue
            try:
                s = decode(c.label, m, d0)
                skeleton(s)
            except (DecodeError, DegenerateStructureError) as exc:
                log.info("dropping candidate from %s: %s", c.provenance, exc)
                continue
            seen.add(c.label.tokens)
            kept.append(c)
        kept.sort(key=lambda c: -c.score)
        return cls(tuple(kept))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


# ---------------------------------------------------------------------------
# Structure enumeration
# ---------------------------------------------------------------------------


def _dense_structure(d0: int, m: int, shape: tuple[tuple[int, ...], ...], biases: bool) -> Structure:
    """Dense wiring for per-layer operator counts; the fit zeroes what it
    does not need."""
    L = len(shape) + 1
    arch = Architecture.canonical(L, m, d0)
    widths = arch.widths
    w = [np.zeros((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(L)]
    b = [np.zeros(widths[l + 1], dtype=np.uint8) for l in range(L)]

    def active_nodes(counts: tuple[int, ...]) -> list[int]:
        idx = []
        for op_i, count in enumerate(counts):
            idx.extend(range(op_i * m, op_i * m + count))
        return idx

    prev = list(range(d0))
    for l, counts in enumerate(shape):
        nodes = active_nodes(counts)
        for i in nodes:
            for j in prev:
                w[l][i, j] = 1
            if biases:
                b[l][i] = 1
        prev = nodes
    for j in prev:
        w[L - 1][0, j] = 1
    if biases:
        b[L - 1][0] = 1
    return Structure(arch, MaskSet(tuple(w), tuple(b)))


def _power_structure(d0: int, m: int, subset: tuple[int, ...], b: int, biases: bool) -> Structure:
    """ln nodes wired one-per-input (diagonal), a dense exp layer, id output."""
    arch = Architecture.canonical(3, m, d0)
    widths = arch.widths
    w = [np.zeros((widths[l + 1], widths[l]), dtype=np.uint8) for l in range(3)]
    bm = [np.zeros(widths[l + 1], dtype=np.uint8) for l in range(3)]
    ln_base = OP_ORDER.index("ln") * m
    exp_base = OP_ORDER.index("exp") * m
    ln_nodes = []
    for slot, feature in enumerate(subset):
        w[0][ln_base + slot, feature] = 1
        ln_nodes.append(ln_base + slot)
    exp_nodes = list(range(exp_base, exp_base + b))
    for i in exp_nodes:
        for j in ln_nodes:
            w[1][i, j] = 1
        if biases:
            bm[1][i] = 1
    for j in exp_nodes:
        w[2][0, j] = 1
    if biases:
        bm[2][0] = 1
    return Structure(arch, MaskSet(tuple(w), tuple(bm)))


def _layer_shapes(max_nodes: int, m: int) -> list[tuple[int, ...]]:
    """All per-operator count vectors with 1 <= total <= max_nodes."""
    out = []
    cap = min(max_nodes, m)
    for counts in itertools.product(range(cap + 1), repeat=len(OP_ORDER)):
        total = sum(counts)
        if 1 <= total <= max_nodes:
            out.append(counts)
    out.sort(key=lambda c: (sum(c), c))
    return out


def enumerate_structures(
    l_max: int,
    m: int,
    d0: int,
    max_layer_nodes: int = 3,
    max_total_nodes: int = 8,
    ordering: str = "canonical",
) -> Iterator[Structure]:
    """Stream valid structures, each once.

    'canonical' yields by increasing (depth, mask popcount); 'guided' front
    loads the shapes that matter most in practice (single-operator layers,
    then ln->exp power blocks, then the general sweep).
    """
    seen: set[bytes] = set()

    def emit(s: Structure):
        key = b"".join(mm.tobytes() for mm in s.masks.w) + b"".join(mm.tobytes() for mm in s.masks.b)
        if key in seen:
            return None
        seen.add(key)
        return s

    def all_for_depth(L: int) -> list[Structure]:
        out = []
        if L == 1:
            for biases in (False, True):
                out.append(_dense_structure(d0, m, (), biases))
            return out
        shapes = _layer_shapes(max_layer_nodes, m)
        for combo in itertools.product(shapes, repeat=L - 1):
            if sum(sum(c) for c in combo) > max_total_nodes:
                continue
            for biases in (False, True):
                out.append(_dense_structure(d0, m, combo, biases))
        out.sort(key=lambda s: s.popcount())
        return out

    if ordering == "canonical":
        for L in range(1, l_max + 1):
            for s in all_for_depth(L):
                got = emit(s)
                if got is not None:
                    yield got
        return

    if ordering != "guided":
        raise ValueError("ordering must be 'canonical' or 'guided'")

    # wave 0: affine
    for biases in (False, True):
        got = emit(_dense_structure(d0, m, (), biases))
        if got is not None:
            yield got
    # wave 1: power blocks ln -> exp^b (sums of products of input powers, the
    # family the unified operators exist for). Each ln node reads exactly one
    # input, so the skeletons are sums of c * prod x_i^lam_i and fit in
    # closed form per exponent assignment. Bias-free variants come first.
    if l_max >= 3:
        subsets: list[tuple[int, ...]] = []
        for a in range(1, min(d0, 3) + 1):
            level = [c for c in itertools.combinations(range(d0), a)]
            subsets.extend(level[:20])
        for biases in (False, True):
            for bcount in range(1, m + 1):
                for subset in subsets:
                    if len(subset) > m:
                        continue
                    got = emit(_power_structure(d0, m, subset, bcount, biases))
                    if got is not None:
                        yield got
    # wave 2: one hidden layer, a single operator type, 1..2 copies
    if l_max >= 2:
        for count in (1, 2):
            for op_i in range(len(OP_ORDER)):
                if count > m:
                    continue
                counts = tuple(count if i == op_i else 0 for i in range(len(OP_ORDER)))
                for biases in (False, True):
                    got = emit(_dense_structure(d0, m, (counts,), biases))
                    if got is not None:
                        yield got
    # wave 3: the full canonical sweep for anything not yet seen
    for L in range(2, l_max + 1):
        for s in all_for_depth(L):
            got = emit(s)
            if got is not None:
                yield got


# ---------------------------------------------------------------------------
# Proposers
# ---------------------------------------------------------------------------


@dataclass
class EnumerativeProposer:
    m: int
    l_max: int = 4
    max_layer_nodes: int = 3
    max_total_nodes: int = 8
    ordering: str = "guided"

    name: str = field(default="enum", init=False)

    def iter_candidates(self, data: Dataset) -> Iterator[Candidate]:
        for rank, s in enumerate(
            enumerate_structures(
                self.l_max, self.m, data.d, self.max_layer_nodes, self.max_total_nodes, self.ordering
            )
        ):
            try:
                skeleton(s)
            except DegenerateStructureError:
                continue
            yield Candidate(encode(s), score=-float(rank), provenance=self.name)

    def propose(self, data: Dataset, k: int) -> CandidateSet:
        if k < 1:
            raise ProposerError("k must be >= 1")
        picked = list(itertools.islice(self.iter_candidates(data), k))
        return CandidateSet.build(picked, self.m, data.d)


@dataclass
class RandomProposer:
    m: int
    l_max: int = 4
    seed: int = 0

    name: str = field(default="random", init=False)

    def iter_candidates(self, data: Dataset) -> Iterator[Candidate]:
        rng = np.random.default_rng(self.seed)
        rank = 0
        while True:
            L = int(rng.integers(1, self.l_max + 1))
            s = random_structure(L, self.m, data.d, rng)
            try:
                skeleton(s)
            except DegenerateStructureError:
                continue
            yield Candidate(encode(s), score=-float(rank), provenance=self.name)
            rank += 1

    def propose(self, data: Dataset, k: int) -> CandidateSet:
        if k < 1:
            raise ProposerError("k must be >= 1")
        picked = list(itertools.islice(self.iter_candidates(data), k))
        return CandidateSet.build(picked, self.m, data.d)


@dataclass
class RemoteProposer:
    host: str
    port: int
    m: int
    d_max: int
    timeout: float = 30.0

    name: str = field(default="remote", init=False)

    def propose(self, data: Dataset, k: int) -> CandidateSet:
        if k < 1:
            raise ProposerError("k must be >= 1")
        payload = protocol.encode_request(data.X, data.y, data.d, k, self.d_max)
        try:
            resp = protocol.request_over_socket(self.host, self.port, payload, self.timeout)
        except OSError as exc:
            raise ProposerError(f"proposer service unreachable: {exc}") from exc
        pairs = protocol.decode_response(resp)  # raises ProtocolError with cause
        entries = [Candidate(label, score, self.name) for label, score in pairs]
        out = CandidateSet.build(entries, self.m, data.d)
        if not out.entries and pairs:
            raise ProposerError("service returned candidates but none decoded")
        return out

    def iter_candidates(self, data: Dataset, k: int = 16) -> Iterator[Candidate]:
        yield from self.propose(data, k)


@dataclass
class StaticProposer:
    """Fixed candidate list; the unit-test and mock-server workhorse."""

    labels: list[SequenceLabel]
    m: int

    name: str = field(default="static", init=False)

    def propose(self, data: Dataset, k: int) -> CandidateSet:
        entries = [
            Candidate(lab, score=-float(i), provenance=self.name) for i, lab in enumerate(self.labels[:k])
        ]
        return CandidateSet.build(entries, self.m, data.d)

    def iter_candidates(self, data: Dataset) -> Iterator[Candidate]:
        yield from self.propose(data, len(self.labels))


def make_server_handler(proposer) -> callable:
    """Wrap any proposer as a protocol handler (the reference service loop)."""

    def handle(payload: bytes) -> bytes:
        X, y, d, k = protocol.decode_request(payload)
        data = Dataset(X[:, :d], y)
        cs = proposer.propose(data, k)
        return protocol.encode_response([(c.label, c.score) for c in cs])

    return handle
