import numpy as np
import pytest

import symnet.kernels as kernels
from symnet.expr import Dataset, r2_score
from symnet.netcore import Architecture, MaskSet, Params, Structure, forward, random_params, random_structure
from symnet.train import (
    TrainConfig,
    backward,
    export_history_csv,
    fit_network,
    init_params,
    loss,
    pack_structure,
    reg_ln,
    reg_exp,
)


def affine_structure() -> Structure:
    arch = Architecture.canonical(1, 1, 1)
    return Structure(arch, MaskSet.ones(arch))


def product_structure() -> Structure:
    arch = Architecture.canonical(3, 2, 2)
    zero = MaskSet.zeros(arch)
    w = [np.array(m) for m in zero.w]
    b = [np.array(m) for m in zero.b]
    w[0][8, 0] = 1
    w[0][9, 1] = 1
    w[1][6, 8] = 1
    w[1][6, 9] = 1
    w[2][0, 6] = 1
    return Structure(arch, MaskSet(tuple(w), tuple(b)))


class TestRegularizedOps:
    def test_reg_ln_branches(self):
        assert reg_ln(-5.0) == 0.0
        assert reg_ln(1.0) == pytest.approx(np.log(1 + 1e-8))
        assert reg_ln(5e-5, theta_ln=1e-4) == 0.0

    def test_reg_exp_branches(self):
        assert reg_exp(200.0) == pytest.approx(np.exp(100.0))
        assert reg_exp(1.0) == pytest.approx(np.e)

    def test_bounded_everywhere(self):
        xs = np.array([-1e308, -1e5, -1.0, 0.0, 1.0, 1e5, 1e308])
        assert np.isfinite(reg_ln(xs)).all()
        assert np.isfinite(reg_exp(xs)).all()


class TestLoss:
    def test_pure_mse_without_penalized_ops(self, rng):
        s = affine_structure()
        p = Params((np.array([[2.0]]),), (np.array([0.0]),))
        X = rng.uniform(-1, 1, (16, 1))
        y = 2 * X[:, 0]
        parts = loss(s, p, Dataset(X, y))
        assert parts["penalty"] == 0.0
        assert parts["mse"] == pytest.approx(0.0, abs=1e-18)

    def test_ln_penalty_contribution(self):
        # one ln node with pre-activation -1: |min(0, -1 - theta)| = 1 + theta
        arch = Architecture.canonical(2, 1, 1)
        zero = MaskSet.zeros(arch)
        w = [np.array(m) for m in zero.w]
        b = [np.array(m) for m in zero.b]
        w[0][4, 0] = 1  # ln node reads x
        w[1][0, 4] = 1
        s = Structure(arch, MaskSet(tuple(w), tuple(b)))
        pw = [np.zeros_like(m, dtype=float) for m in w]
        pb = [np.zeros_like(m, dtype=float) for m in b]
        pw[0][4, 0] = 1.0
        pw[1][0, 4] = 1.0
        p = Params(tuple(pw), tuple(pb))
        data = Dataset(np.array([[-1.0]]), np.array([0.0]))
        cfg = TrainConfig(theta_ln=1e-4)
        parts = loss(s, p, data, cfg)
        assert parts["penalty"] == pytest.approx(1.0 + 1e-4)

    def test_perfect_fit_in_range_is_zero(self, rng):
        s = product_structure()
        p = Params(
            tuple(np.ones_like(np.asarray(m), dtype=float) for m in s.masks.w),
            tuple(np.zeros(m.shape, dtype=float) for m in s.masks.b),
        )
        X = rng.uniform(0.5, 2.0, (32, 2))
        y = X[:, 0] * X[:, 1]
        parts = loss(s, p, Dataset(X, y))
        # the ln(|x|+eps) safety term keeps this from being exactly zero
        assert parts["penalty"] == 0.0
        assert parts["total"] == pytest.approx(0.0, abs=1e-12)


class TestGradients:
    def test_closed_form_single_id(self):
        s = affine_structure()
        w0, x0, y0 = 1.5, 2.0, 0.5
        p = Params((np.array([[w0]]),), (np.array([0.0]),))
        masks_off = Structure(s.architecture, MaskSet((np.ones((1, 1), np.uint8),), (np.zeros(1, np.uint8),)))
        g, parts = backward(masks_off, p, Dataset(np.array([[x0]]), np.array([y0])))
        assert g.w[0][0, 0] == pytest.approx(2 * x0 * (w0 * x0 - y0))

    def test_matches_finite_differences(self, rng):
        cfg = TrainConfig()
        worst = 0.0
        for trial in range(12):
            L = int(rng.integers(1, 4))
            m = int(rng.integers(1, 4))
            d0 = int(rng.integers(1, 3))
            s = random_structure(L, m, d0, rng)
            p = init_params(s, rng)
            X = rng.uniform(-2, 2, (8, d0))
            y = rng.uniform(-1, 1, 8)
            data = Dataset(X, y)
            g, _ = backward(s, p, data, cfg)
            h = 1e-6
            for l in range(s.depth):
                idx = list(zip(*np.nonzero(s.masks.w[l])))
                for (i, j) in idx[:4]:
                    wp = [np.array(a) for a in p.w]
                    wm = [np.array(a) for a in p.w]
                    wp[l][i, j] += h
                    wm[l][i, j] -= h
                    lp = loss(s, Params(tuple(wp), p.b), data, cfg)["total"]
                    lm = loss(s, Params(tuple(wm), p.b), data, cfg)["total"]
                    fd = (lp - lm) / (2 * h)
                    rel = abs(fd - g.w[l][i, j]) / max(1.0, abs(fd), abs(g.w[l][i, j]))
                    worst = max(worst, rel)
        assert worst < 1e-5

    def test_masked_entries_get_zero_gradient(self, rng):
        s = product_structure()
        p = random_params(s, rng)
        data = Dataset(rng.uniform(0.5, 1.5, (8, 2)), rng.uniform(0, 2, 8))
        g, _ = backward(s, p, data)
        for l in range(s.depth):
            assert (np.asarray(g.w[l])[s.masks.w[l] == 0] == 0).all()
            assert (np.asarray(g.b[l])[s.masks.b[l] == 0] == 0).all()

    def test_masked_entries_never_read(self, rng):
        # metamorphic: randomizing masked weights changes nothing with pruning
        s = product_structure()
        p = random_params(s, rng)
        data = Dataset(rng.uniform(0.5, 1.5, (8, 2)), rng.uniform(0, 2, 8))
        base = loss(s, p, data)
        noise_w = tuple(
            np.where(s.masks.w[l] == 0, rng.normal(size=p.w[l].shape), p.w[l]) for l in range(s.depth)
        )
        noise_b = tuple(
            np.where(s.masks.b[l] == 0, rng.normal(size=p.b[l].shape), p.b[l]) for l in range(s.depth)
        )
        jittered = loss(s, Params(noise_w, noise_b), data)
        assert jittered == base


class TestBackends:
    def test_numpy_and_selected_backend_agree(self, rng):
        s = random_structure(3, 2, 2, rng)
        p = random_params(s, rng)
        net = pack_structure(s)
        from symnet.train import _pack_params

        W, B = _pack_params(net, p)
        X = rng.uniform(-1, 1, (16, 2))
        y = rng.uniform(-1, 1, 16)
        args = (net.widths, net.ops, W, B, net.Mw, net.Mb, X, y, 1e-4, 100.0, 1e-8, True, True)
        m1, p1, gw1, gb1 = kernels.loss_and_grad(*args)
        m2, p2, gw2, gb2 = kernels.loss_and_grad_numpy(*args)
        assert m1 == pytest.approx(m2, rel=1e-12)
        assert p1 == pytest.approx(p2, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(gw1, gw2, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(gb1, gb2, rtol=1e-9, atol=1e-12)


class TestFitNetwork:
    def test_linear_regression_oracle(self, rng):
        s = affine_structure()
        X = rng.uniform(-1, 1, (128, 1))
        y = 3 * X[:, 0] + 1
        p, hist = fit_network(s, Dataset(X, y), TrainConfig(epochs=200, batch_size=32, learning_rate=0.05), rng)
        # closed-form least squares is the oracle here
        A = np.column_stack([X[:, 0], np.ones(len(y))])
        ref, *_ = np.linalg.lstsq(A, y, rcond=None)
        assert p.w[0][0, 0] == pytest.approx(ref[0], abs=1e-3)
        assert p.b[0][0] == pytest.approx(ref[1], abs=1e-3)
        assert min(hist.mse) < 1e-6

    def test_product_structure_fit(self, rng):
        s = product_structure()
        X = rng.uniform(0.5, 2.0, (256, 2))
        y = X[:, 0] * X[:, 1]
        best = -np.inf
        for seed in (1, 2, 3):
            p, _ = fit_network(s, Dataset(X, y), TrainConfig(epochs=300, seed=seed), np.random.default_rng(seed))
            yhat = forward(s, p, X)
            ok = np.isfinite(yhat)
            if ok.sum() > 200:
                best = max(best, r2_score(yhat[ok], y[ok]))
        assert best > 0.999

    def test_zero_epochs_returns_init(self, rng):
        s = affine_structure()
        p0 = init_params(s, np.random.default_rng(7))
        data = Dataset(rng.uniform(-1, 1, (16, 1)), rng.uniform(-1, 1, 16))
        p, hist = fit_network(s, data, TrainConfig(epochs=0), rng, init=p0)
        np.testing.assert_array_equal(p.w[0], p0.w[0])
        assert len(hist.epochs) == 1

    def test_best_not_worse_than_init_and_history_saved(self, rng, tmp_path):
        s = affine_structure()
        data = Dataset(rng.uniform(-1, 1, (64, 1)), rng.uniform(-1, 1, 64))
        _, hist = fit_network(s, data, TrainConfig(epochs=30), rng)
        assert min(hist.mse) <= hist.mse[0]
        assert all(np.isfinite(v) for v in hist.total)
        out = tmp_path / "hist.csv"
        export_history_csv(hist, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "epoch,mse,penalty,total"
        assert len(lines) == len(hist.epochs) + 1
