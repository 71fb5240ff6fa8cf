import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symnet.datagen import (
    GenConfig,
    decode_xy_block,
    encode_xy_block,
    export_corpus,
    float_to_multihot,
    multihot_to_float,
    read_corpus,
    read_manifest,
    sample_function,
    sample_inputs,
    sample_instance,
)
from symnet.expr import evaluate_batch, format_expr, free_variables, parse


class TestSampling:
    def test_deterministic_under_seed(self):
        cfg = GenConfig(seed=1)
        a = sample_function(cfg, np.random.default_rng(9))
        b = sample_function(cfg, np.random.default_rng(9))
        assert format_expr(a) == format_expr(b)

    def test_first_d_variables_present(self):
        cfg = GenConfig(seed=2)
        rng = np.random.default_rng(2)
        for _ in range(60):
            e = sample_function(cfg, rng)
            fv = free_variables(e)
            assert fv == set(range(max(fv) + 1))  # no gaps

    def test_dimension_never_exceeds_dmax(self):
        cfg = GenConfig(seed=3)
        rng = np.random.default_rng(3)
        for _ in range(60):
            assert max(free_variables(sample_function(cfg, rng))) < cfg.d_max

    def test_unary_frequencies_within_3_sigma(self):
        cfg = GenConfig(seed=4)
        rng = np.random.default_rng(4)
        stats = {}
        for _ in range(4000):
            sample_function(cfg, rng, stats=stats)
        freqs = dict(cfg.unary_freq)
        total_w = sum(freqs.values())
        n = sum(v for k, v in stats.items() if k.startswith("unary:"))
        for name, w in freqs.items():
            p = w / total_w
            observed = stats.get(f"unary:{name}", 0)
            sigma = (n * p * (1 - p)) ** 0.5
            assert abs(observed - n * p) <= 3.5 * sigma, (name, observed, n * p, sigma)

    def test_dimension_distribution_within_3_sigma(self):
        cfg = GenConfig(seed=5)
        rng = np.random.default_rng(5)
        stats = {}
        for _ in range(4000):
            sample_function(cfg, rng, stats=stats)
        n = sum(v for k, v in stats.items() if k.startswith("dim:"))
        for dim, p in cfg.dim_weights:
            observed = stats.get(f"dim:{dim}", 0)
            sigma = (n * p * (1 - p)) ** 0.5
            assert abs(observed - n * p) <= 3.5 * sigma, (dim, observed, n * p)


class TestInputs:
    def test_identity_function(self):
        cfg = GenConfig(seed=6, n_points=50)
        X, y, intervals = sample_inputs(parse("x0"), cfg, np.random.default_rng(0), d=1)
        assert X.shape == (50, cfg.d_max)
        np.testing.assert_array_equal(X[:, 0], y)
        assert all(-10 < lo < hi < 10 for lo, hi in intervals)

    def test_invalid_rows_zeroed(self):
        cfg = GenConfig(seed=7, n_points=200)
        rng = np.random.default_rng(1)
        X, y, _ = sample_inputs(parse("ln(x0)"), cfg, rng, d=1)
        bad = ~np.isfinite(evaluate_batch(parse("ln(x0)"), X[:, :1])) | (X[:, 0] == 0)
        assert np.isfinite(y).all()
        zeroed = (X[:, 0] == 0) & (y == 0)
        assert zeroed.sum() > 0 or (X[:, 0] > 0).all()

    def test_padding_to_dmax(self):
        cfg = GenConfig(seed=8, n_points=20)
        X, _, _ = sample_inputs(parse("x0 + x1"), cfg, np.random.default_rng(2), d=2)
        assert X.shape[1] == 4
        np.testing.assert_array_equal(X[:, 2:], 0.0)


class TestMultihot:
    def test_zero_and_one(self):
        assert (float_to_multihot(0.0) == 0).all()
        bits = float_to_multihot(1.0)
        assert bits[0] == 0
        assert "".join(map(str, bits[1:9])) == "01111111"
        assert (bits[9:] == 0).all()

    @settings(max_examples=300, deadline=None)
    @given(st.floats(min_value=-1e12, max_value=1e12, allow_nan=False))
    def test_round_trip_single_precision(self, v):
        w = multihot_to_float(float_to_multihot(v))
        assert w == float(np.float32(v))

    def test_block_round_trip(self, rng):
        X = rng.uniform(-5, 5, size=(16, 3))
        y = rng.uniform(-5, 5, size=16)
        bits = encode_xy_block(X, y)
        assert bits.shape == (16, 4 * 32)
        X2, y2 = decode_xy_block(bits, 3)
        np.testing.assert_allclose(X2, X.astype(np.float32), rtol=0)
        np.testing.assert_allclose(y2, y.astype(np.float32), rtol=0)


class TestExport:
    def test_empty_corpus_manifest_only(self, tmp_path):
        manifest = export_corpus(0, GenConfig(seed=0), tmp_path)
        assert manifest["count"] == 0
        assert (tmp_path / "manifest.txt").exists()
        assert list(read_corpus(tmp_path)) == []

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        export_corpus(20, GenConfig(seed=9, n_points=40), a, shard_size=10)
        export_corpus(20, GenConfig(seed=9, n_points=40), b, shard_size=10)
        for name in ["corpus-00000.bin", "corpus-00001.bin", "functions.tsv"]:
            ha = hashlib.sha256((a / name).read_bytes()).hexdigest()
            hb = hashlib.sha256((b / name).read_bytes()).hexdigest()
            assert ha == hb, name

    def test_read_back_and_labels_decode(self, tmp_path):
        from symnet.codec import decode, unpad

        cfg = GenConfig(seed=10, n_points=30)
        export_corpus(15, cfg, tmp_path, shard_size=15)
        manifest = read_manifest(tmp_path)
        assert manifest["count"] == 15
        records = list(read_corpus(tmp_path))
        assert len(records) == 15
        for d, X, y, label in records:
            assert X.shape == (30, cfg.d_max)
            structure = decode(unpad(label), cfg.m, d)
            assert structure.depth >= 1

    def test_instance_labels_reproduce_skeleton(self):
        # spot check: the label decodes to a structure whose skeleton fits
        from symnet.codec import decode
        from symnet.labeler import recover
        from symnet.expr import Dataset, is_symbolic_solution

        cfg = GenConfig(seed=11)
        rng = np.random.default_rng(11)
        hits = 0
        for i in range(10):
            inst = sample_instance(cfg, rng, l_cap=4)
            assert decode(inst.label, cfg.m, inst.d) == inst.structure
            valid = inst.valid_rows()
            data = Dataset(inst.X[valid][:, : inst.d], inst.y[valid], tuple(inst.intervals))
            res = recover(inst.structure, data, inst.true_params, seed=i)
            if is_symbolic_solution(res.expr, inst.expr, data):
                hits += 1
        assert hits >= 8
