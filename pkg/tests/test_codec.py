import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symnet.codec import PAD_TOKEN, DecodeError, SequenceLabel, decode, encode, mask_bit_count, pad, unpad
from symnet.netcore import Architecture, MaskSet, Structure, masks_from_flat, random_structure


def test_encode_bit_positions():
    # one hidden... the smallest layout: L=1, m=1, d0=1 has 2 mask bits (w, b)
    arch = Architecture.canonical(1, 1, 1)
    s = Structure(arch, MaskSet.ones(arch))
    assert encode(s).tokens == (1, 0, 1, 2)


def test_encode_matches_flattening_order():
    arch = Architecture.canonical(1, 1, 3)
    bits = np.array([0, 1, 0, 1], dtype=np.uint8)  # w row [0,1,0], bias [1]
    s = Structure(arch, masks_from_flat(bits, arch))
    assert encode(s).tokens == (1, 0, 2, 4)


def test_decode_examples():
    s = decode(SequenceLabel((1, 0)), m=1, d0=1)
    assert s.popcount() == 0
    s2 = decode(SequenceLabel((1, 0, 1, 2)), m=1, d0=1)
    assert s2.masks.w[0][0, 0] == 1 and s2.masks.b[0][0] == 1


def test_decode_errors_name_the_rule():
    with pytest.raises(DecodeError, match="depth token"):
        decode(SequenceLabel((0, 0, 3)), m=1, d0=1)
    with pytest.raises(DecodeError, match="separator"):
        decode(SequenceLabel((1, 5)), m=1, d0=1)
    with pytest.raises(DecodeError, match="strictly increasing"):
        decode(SequenceLabel((1, 0, 2, 2)), m=1, d0=1)
    with pytest.raises(DecodeError, match="exceeds"):
        decode(SequenceLabel((1, 0, 99)), m=1, d0=1)


def test_pad_unpad():
    lab = SequenceLabel((1, 0, 1))
    assert pad(lab, 6).tokens == (1, 0, 1, PAD_TOKEN, PAD_TOKEN, PAD_TOKEN)
    assert unpad(pad(lab, 6)) == lab
    assert pad(lab, 3) == lab
    with pytest.raises(ValueError):
        pad(lab, 2)


def test_text_form():
    lab = SequenceLabel((2, 0, 3, 7, PAD_TOKEN))
    assert lab.to_text() == "2 0 3 7 -1"
    assert SequenceLabel.from_text(lab.to_text()) == lab


@settings(max_examples=200, deadline=None)
@given(
    L=st.integers(1, 4),
    m=st.sampled_from([2, 5]),
    d0=st.integers(1, 3),
    seed=st.integers(0, 10_000),
)
def test_round_trip_property(L, m, d0, seed):
    rng = np.random.default_rng(seed)
    s = random_structure(L, m, d0, rng)
    assert decode(encode(s), m, d0) == s


def test_injective_over_random_corpus(rng):
    seen = {}
    for _ in range(500):
        L = int(rng.integers(1, 4))
        s = random_structure(L, 2, 2, rng)
        toks = encode(s).tokens
        if toks in seen:
            assert seen[toks] == s
        seen[toks] = s


def test_max_offset_matches_bit_count():
    for L, m, d0 in [(1, 1, 1), (3, 2, 2), (4, 5, 4)]:
        arch = Architecture.canonical(L, m, d0)
        s = Structure(arch, MaskSet.ones(arch))
        assert max(encode(s).tokens[2:]) == mask_bit_count(L, m, d0)
