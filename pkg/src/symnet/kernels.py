"""Packed network kernels: masked forward pass and reverse-mode gradients.

The minibatch loops here dominate network-training runtime, so they are
JIT-compiled with numba when available. Setting SYMNET_NO_NUMBA=1 (or a
failed numba import) selects the identical pure-numpy implementations; both
paths run the same code, numba only compiles it. benchmarks/kernel_benchmark.py
compares the two.

Layer data is padded to the widest layer: weights (L, wmax, wmax), biases
(L, wmax), opcodes (L, wmax) with -1 padding, widths (L+1,). Activations are
the regularized forms used during training: ln clamps to 0 below theta_ln and
reads ln(|x| + eps) elsewhere; exp saturates at exp(theta_exp). Subgradients
on clamped branches are 0.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "OP_ID",
    "OP_SIN",
    "OP_COS",
    "OP_EXP",
    "OP_LN",
    "forward_batch",
    "loss_and_grad",
    "forward_batch_numpy",
    "loss_and_grad_numpy",
]

OP_ID, OP_SIN, OP_COS, OP_EXP, OP_LN = 0, 1, 2, 3, 4


def _forward_batch(widths, ops, W, B, X, theta_ln, theta_exp, eps):
    """Returns (Y pre-activations (L, n, wmax), Z activations (L+1, n, wmax))."""
    L = W.shape[0]
    wmax = W.shape[1]
    n = X.shape[0]
    Z = np.zeros((L + 1, n, wmax))
    Y = np.zeros((L, n, wmax))
    Z[0, :, : X.shape[1]] = X
    for l in range(L):
        din = widths[l]
        dout = widths[l + 1]
        Zc = np.ascontiguousarray(Z[l, :, :din])
        Wc = np.ascontiguousarray(W[l, :dout, :din])
        Y[l, :, :dout] = Zc @ Wc.T + B[l, :dout]
        for i in range(dout):
            op = ops[l, i]
            y = Y[l, :, i]
            if op == OP_ID:
                Z[l + 1, :, i] = y
            elif op == OP_SIN:
                Z[l + 1, :, i] = np.sin(y)
            elif op == OP_COS:
                Z[l + 1, :, i] = np.cos(y)
            elif op == OP_EXP:
                Z[l + 1, :, i] = np.where(y >= theta_exp, np.exp(theta_exp), np.exp(np.minimum(y, theta_exp)))
            else:
                Z[l + 1, :, i] = np.where(y < theta_ln, 0.0, np.log(np.abs(y) + eps))
    return Y, Z


def _make_loss_and_grad(forward_impl):
    def _loss_and_grad(widths, ops, W, B, Mw, Mb, X, y, theta_ln, theta_exp, eps, penalty_on, pruning):
        # Loss = mean (out - y)^2 + penalty; penalty is the batch mean of
        # |min(0, a - theta_ln)| over ln-node pre-activations plus
        # max(0, |a| - theta_exp) over exp-node pre-activations.
        L = W.shape[0]
        n = X.shape[0]
        Wm = W * Mw if pruning else W
        Bm = B * Mb if pruning else B
        Y, Z = forward_impl(widths, ops, Wm, Bm, X, theta_ln, theta_exp, eps)
        out = Z[L, :, 0]
        resid = out - y
        mse = float(np.mean(resid**2))

        penalty = 0.0
        if penalty_on:
            for l in range(L):
                for i in range(widths[l + 1]):
                    if pruning and Mw[l, i, :].sum() + Mb[l, i] == 0.0:
                        continue  # the node is not part of the pruned network
                    a = Y[l, :, i]
                    if ops[l, i] == OP_LN:
                        penalty += float(np.sum(np.abs(np.minimum(0.0, a - theta_ln))))
                    elif ops[l, i] == OP_EXP:
                        penalty += float(np.sum(np.maximum(0.0, np.abs(a) - theta_exp)))
            penalty /= n

        gradW = np.zeros_like(W)
        gradB = np.zeros_like(B)
        dZ = np.zeros((n, W.shape[1]))
        dZ[:, 0] = 2.0 * resid / n
        for l in range(L - 1, -1, -1):
            dout = widths[l + 1]
            din = widths[l]
            dY = np.zeros((n, W.shape[1]))
            for i in range(dout):
                op = ops[l, i]
                a = Y[l, :, i]
                if op == OP_ID:
                    d = np.ones_like(a)
                elif op == OP_SIN:
                    d = np.cos(a)
                elif op == OP_COS:
                    d = -np.sin(a)
                elif op == OP_EXP:
                    d = np.where(a >= theta_exp, 0.0, np.exp(np.minimum(a, theta_exp)))
                else:
                    d = np.where(a < theta_ln, 0.0, np.sign(a) / (np.abs(a) + eps))
                dY[:, i] = dZ[:, i] * d
                if penalty_on and not (pruning and Mw[l, i, :].sum() + Mb[l, i] == 0.0):
                    if op == OP_LN:
                        dY[:, i] += np.where(a < theta_ln, -1.0, 0.0) / n
                    elif op == OP_EXP:
                        dY[:, i] += np.where(np.abs(a) > theta_exp, np.sign(a), 0.0) / n
            dYc = np.ascontiguousarray(dY[:, :dout])
            gradW[l, :dout, :din] = dYc.T @ np.ascontiguousarray(Z[l, :, :din])
            gradB[l, :dout] = np.sum(dYc, axis=0)
            dZ = np.zeros((n, W.shape[1]))
            dZ[:, :din] = dYc @ np.ascontiguousarray(Wm[l, :dout, :din])
        if pruning:
            gradW = gradW * Mw
            gradB = gradB * Mb
        return mse, penalty, gradW, gradB

    return _loss_and_grad


forward_batch_numpy = _forward_batch
loss_and_grad_numpy = _make_loss_and_grad(_forward_batch)

BACKEND = "numpy"
forward_batch = forward_batch_numpy
loss_and_grad = loss_and_grad_numpy
if os.environ.get("SYMNET_NO_NUMBA", "") != "1":
    try:
        from numba import njit

        forward_batch = njit(cache=True)(_forward_batch)
        loss_and_grad = njit(cache=True)(_make_loss_and_grad(forward_batch))
        BACKEND = "numba"
    except ImportError:
        pass
