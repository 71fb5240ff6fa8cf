"""Structure <-> integer-sequence encoding.

A structure's masks are flattened (all weight masks row-major, layer 1..L,
then all bias masks) into a bit vector E prefixed by [L, 0]. The sequence
form keeps only the positions of the set bits: token i (1-based within the
bit vector) appears when bit i is 1, so [1, 0, 1, 0, 0, 1, 0] encodes to
[1, 0, 1, 4]. Decoding needs the global (m, d0) the masks were laid out for.

Text form: space-separated integers; the padding token is -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcore import Architecture, MaskSet, Structure, flatten_masks, masks_from_flat

__all__ = ["PAD_TOKEN", "SequenceLabel", "DecodeError", "encode", "decode", "pad", "unpad", "mask_bit_count"]

PAD_TOKEN = -1


class DecodeError(ValueError):
    """A token sequence violates the label invariants; names the broken rule."""


@dataclass(frozen=True)
class SequenceLabel:
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def to_text(self) -> str:
        return " ".join(str(t) for t in self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "SequenceLabel":
        return cls(tuple(int(t) for t in text.split()))


def mask_bit_count(L: int, m: int, d0: int) -> int:
    """Length of the flattened mask vector for a canonical (L, m, d0) layout."""
    widths = Architecture.canonical(L, m, d0).widths
    return sum(widths[l + 1] * widths[l] for l in range(L)) + sum(widths[1:])


def encode(structure: Structure) -> SequenceLabel:
    """Encode a canonical-layout structure as [L, 0, set-bit positions...]."""
    arch = structure.architecture
    if not arch.is_canonical():
        raise ValueError("encoding requires the canonical replicated layout")
    bits = flatten_masks(structure)
    positions = (np.flatnonzero(bits) + 1).tolist()  # 1-based within the bit vector
    return SequenceLabel((arch.depth, 0, *positions))


def decode(label: SequenceLabel, m: int, d0: int) -> Structure:
    """Inverse of :func:`encode`; raises :class:`DecodeError` naming the rule."""
    toks = unpad(label).tokens
    if len(toks) < 2:
        raise DecodeError("label needs at least [L, 0]")
    L = toks[0]
    if L < 1:
        raise DecodeError(f"depth token must be >= 1, got {L}")
    if toks[1] != 0:
        raise DecodeError(f"second token must be the separator 0, got {toks[1]}")
    nbits = mask_bit_count(L, m, d0)
    bits = np.zeros(nbits, dtype=np.uint8)
    prev = 0
    for t in toks[2:]:
        if t <= prev:
            raise DecodeError(f"offsets must be strictly increasing, got {t} after {prev}")
        if t > nbits:
            raise DecodeError(f"offset {t} exceeds flattened mask length {nbits}")
        bits[t - 1] = 1
        prev = t
    arch = Architecture.canonical(L, m, d0)
    return Structure(arch, masks_from_flat(bits, arch))


def pad(label: SequenceLabel, target_length: int) -> SequenceLabel:
    if target_length < len(label):
        raise ValueError("target length below current length")
    return SequenceLabel(label.tokens + (PAD_TOKEN,) * (target_length - len(label)))


def unpad(label: SequenceLabel) -> SequenceLabel:
    toks = list(label.tokens)
    while toks and toks[-1] == PAD_TOKEN:
        toks.pop()
    return SequenceLabel(tuple(toks))
