import numpy as np
import pytest

from symnet.codec import SequenceLabel, encode
from symnet.datagen import GenConfig, sample_instance
from symnet.expr import Dataset, canonicalize, evaluate_batch, is_symbolic_solution, parse, substitute_slots
from symnet.labeler import (
    DepthExceededError,
    ReplicaOverflowError,
    UnsupportedOperatorError,
    identify_structure,
    merge_equivalent_labels,
    read_corpus_file,
    recover,
    write_corpus_file,
)
from symnet.netcore import forward, simplify_structure, skeleton


class TestIdentify:
    def test_two_layer_example(self):
        s = identify_structure(parse("sin(x0 + x1) + cos(x1)"), m=2, d0=2)
        assert s.depth == 2
        assert simplify_structure(s).architecture.layer_ops == (("sin", "cos"), ("id",))

    def test_single_variable(self):
        s = identify_structure(parse("x0"), m=2, d0=1)
        assert s.depth == 1 and s.popcount() == 1

    def test_monomial_uses_ln_exp(self):
        s = identify_structure(parse("x0^2*x1"), m=2, d0=2)
        assert s.depth == 3
        assert simplify_structure(s).architecture.layer_ops == (("ln", "ln"), ("exp",), ("id",))

    def test_division_never_a_network_op(self):
        s = identify_structure(parse("x0/x1"), m=2, d0=2)
        ops = {op for layer in simplify_structure(s).architecture.layer_ops for op in layer}
        assert ops <= {"id", "sin", "cos", "exp", "ln"}

    def test_deterministic(self):
        e = parse("sin(x0)*x1 + exp(x0 - x1)")
        a = identify_structure(e, m=3, d0=2)
        b = identify_structure(e, m=3, d0=2)
        assert a == b

    def test_depth_limit(self):
        with pytest.raises(DepthExceededError):
            identify_structure(parse("sin(sin(sin(sin(sin(x0)))))"), m=2, d0=1, l_max=4)

    def test_replica_overflow(self):
        e = parse("sin(x0) + sin(2*x0) + sin(3*x0)")
        with pytest.raises(ReplicaOverflowError):
            identify_structure(e, m=2, d0=1)

    def test_abs_unsupported(self):
        with pytest.raises(UnsupportedOperatorError):
            identify_structure(parse("abs(x0) + x0"), m=2, d0=1)

    def test_out_of_range_variable(self):
        with pytest.raises(Exception):
            identify_structure(parse("x3"), m=2, d0=2)

    def test_masks_have_no_dangling_nodes(self, rng):
        cfg = GenConfig(seed=5)
        g = np.random.default_rng(5)
        for _ in range(40):
            inst = sample_instance(cfg, g)
            s = inst.structure
            for l in range(s.depth):
                outgoing = (
                    s.masks.w[l + 1].sum(axis=0) if l + 1 < s.depth else np.ones(s.masks.w[l].shape[0])
                )
                incoming = s.masks.w[l].sum(axis=1) + s.masks.b[l]
                used = np.nonzero(outgoing)[0] if l + 1 < s.depth else [0]
                for i in used:
                    if outgoing[i] if l + 1 < s.depth else True:
                        # a node that feeds anything must read something
                        if incoming[i] == 0 and (s.masks.w[l][i].sum() + s.masks.b[l][i]) == 0:
                            if l + 1 < s.depth and s.masks.w[l + 1][:, i].sum() > 0:
                                pytest.fail(f"dangling node at layer {l+1}, index {i}")

    def test_true_params_reproduce_expression(self):
        # the skeleton bound to the recorded coefficients equals the source
        for text in ["3*x0^2 - 1", "sin(2*x0 + 1)*x1", "exp(-0.5*x0^2)", "x0*x1/(x0 + x1)"]:
            e = parse(text)
            d = 2
            s, params = identify_structure(e, m=3, d0=d, with_params=True)
            sk = skeleton(s)
            sym, exp = sk.bind(params)
            inst = substitute_slots(sk.expr, sym, exp)
            X = np.random.default_rng(0).uniform(0.4, 1.8, size=(32, d))
            a = evaluate_batch(e, X)
            b = evaluate_batch(inst, X)
            ok = np.isfinite(a) & np.isfinite(b)
            assert ok.sum() >= 16
            np.testing.assert_allclose(a[ok], b[ok], rtol=1e-10)


class TestRecover:
    def test_structure_round_trip(self):
        rng = np.random.default_rng(3)
        e = parse("2.5*x0^2 + sin(1.5*x0)")
        s, params = identify_structure(e, m=3, d0=1, with_params=True)
        X = rng.uniform(-2, 2, size=(64, 1))
        y = evaluate_batch(e, X)
        data = Dataset(X, y)
        res = recover(s, data, params)
        assert res.mse < 1e-18
        assert is_symbolic_solution(res.expr, e, data)


class TestMerging:
    def test_equivalent_expressions_share_shorter_label(self):
        e1 = parse("x0 + sin(2*x1)")
        e2 = parse("x0 + 2*sin(x1)*cos(x1)")
        pairs = [
            (e1, encode(identify_structure(e1, 2, 2))),
            (e2, encode(identify_structure(e2, 2, 2))),
        ]
        merged = merge_equivalent_labels(pairs)
        assert merged[e1] == merged[e2]
        assert len(merged[e1]) == min(len(p[1]) for p in pairs)

    def test_singleton_unchanged(self):
        e = parse("x0^2")
        lab = SequenceLabel((1, 0, 1))
        assert merge_equivalent_labels([(e, lab)]) == {e: lab}

    def test_inequivalent_not_merged(self):
        pairs = [
            (parse("x0^2"), SequenceLabel((1, 0, 1))),
            (parse("x0^3"), SequenceLabel((2, 0, 1))),
        ]
        merged = merge_equivalent_labels(pairs)
        assert merged[pairs[0][0]] != merged[pairs[1][0]]

    def test_tie_breaks_lexicographically(self):
        e1 = parse("x0*x1")
        e2 = parse("x1*x0")
        la, lb = SequenceLabel((1, 0, 7)), SequenceLabel((1, 0, 3))
        merged = merge_equivalent_labels([(e1, la), (e2, lb)])
        assert merged[e1] == merged[e2] == lb

    def test_deterministic(self):
        exprs = [parse(t) for t in ["x0", "2*x0", "x0 + 0*x1", "sin(x0)"]]
        pairs = [(e, SequenceLabel((1, 0, i + 1))) for i, e in enumerate(exprs)]
        assert merge_equivalent_labels(pairs) == merge_equivalent_labels(list(pairs))


def test_corpus_file_round_trip(tmp_path):
    pairs = [
        (parse("x0 + 1"), SequenceLabel((1, 0, 1, 2))),
        (parse("sin(x0)*x1"), SequenceLabel((2, 0, 3, 5, 9))),
    ]
    path = tmp_path / "corpus.tsv"
    write_corpus_file(path, pairs)
    assert read_corpus_file(path) == pairs
