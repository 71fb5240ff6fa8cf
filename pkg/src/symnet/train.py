"""Differentiable network optimization: minibatch gradient descent on the
masked network with regularized ln/exp activations and an activation penalty.

The penalty |min(0, a - theta_ln)| (ln nodes) + max(0, |a| - theta_exp)
(exp nodes) discourages pre-activations from entering the clamped regions; by
default it is switched on for the final ``penalty_epochs`` epochs of training
(config-switchable to the first epochs instead).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .expr import Dataset
from .netcore import OP_CODES, Params, Structure

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "reg_ln",
    "reg_exp",
    "pack_structure",
    "init_params",
    "loss",
    "backward",
    "fit_network",
    "export_history_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int | None = None  # defaults to 10 * depth
    theta_ln: float = 1e-4
    theta_exp: float = 100.0
    eps: float = 1e-8
    penalty_epochs: int = 10
    penalty_placement: str = "last"  # or "first"
    weight_init: float = 2.0
    momentum: float = 0.0
    pruning: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.theta_exp <= 0 or self.eps <= 0:
            raise ValueError("learning_rate, theta_exp, and eps must be positive")
        if self.penalty_placement not in ("last", "first"):
            raise ValueError("penalty_placement must be 'last' or 'first'")


def reg_ln(x, theta_ln: float = 1e-4, eps: float = 1e-8):
    """0 below the threshold, ln(|x| + eps) elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < theta_ln, 0.0, np.log(np.abs(x) + eps))


def reg_exp(x, theta_exp: float = 100.0):
    """exp clamped to exp(theta_exp) from above."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= theta_exp, np.exp(theta_exp), np.exp(np.minimum(x, theta_exp)))


@dataclass
class PackedNet:
    widths: np.ndarray  # (L+1,)
    ops: np.ndarray  # (L, wmax) opcode, -1 padding
    Mw: np.ndarray  # (L, wmax, wmax) float masks
    Mb: np.ndarray  # (L, wmax)


def pack_structure(structure: Structure) -> PackedNet:
    widths = np.array(structure.architecture.widths, dtype=np.int64)
    L = structure.depth
    wmax = int(widths.max())
    ops = np.full((L, wmax), -1, dtype=np.int64)
    Mw = np.zeros((L, wmax, wmax))
    Mb = np.zeros((L, wmax))
    for l, layer_ops in enumerate(structure.architecture.layer_ops):
        for i, op in enumerate(layer_ops):
            ops[l, i] = OP_CODES[op]
        Mw[l, : widths[l + 1], : widths[l]] = structure.masks.w[l]
        Mb[l, : widths[l + 1]] = structure.masks.b[l]
    return PackedNet(widths, ops, Mw, Mb)


def _pack_params(net: PackedNet, params: Params) -> tuple[np.ndarray, np.ndarray]:
    L = len(net.widths) - 1
    wmax = net.Mw.shape[1]
    W = np.zeros((L, wmax, wmax))
    B = np.zeros((L, wmax))
    for l in range(L):
        W[l, : net.widths[l + 1], : net.widths[l]] = params.w[l]
        B[l, : net.widths[l + 1]] = params.b[l]
    return W, B


def _unpack_params(net: PackedNet, W: np.ndarray, B: np.ndarray) -> Params:
    L = len(net.widths) - 1
    return Params(
        tuple(W[l, : net.widths[l + 1], : net.widths[l]].copy() for l in range(L)),
        tuple(B[l, : net.widths[l + 1]].copy() for l in range(L)),
    )


def init_params(structure: Structure, rng: np.random.Generator, scale: float = 2.0, pruning: bool = True) -> Params:
    """Uniform init in [-a, a] with a = scale / sqrt(fan-in).

    Fan-in counts unmasked incoming connections when pruning is on (keeps exp
    nodes out of saturation), the full previous width otherwise. Rows feeding
    ln nodes draw from (0, a]: the regularized ln is clamped to 0 for
    non-positive inputs with zero subgradient, so a negative start would leave
    those units permanently dead.
    """
    widths = structure.architecture.widths
    ops = structure.architecture.layer_ops
    w = []
    b = []
    for l in range(structure.depth):
        if pruning:
            fan = np.maximum(1, structure.masks.w[l].sum(axis=1) + structure.masks.b[l])
        else:
            fan = np.full(widths[l + 1], max(1, widths[l]))
        a = scale / np.sqrt(fan.astype(np.float64))
        wl = rng.uniform(-1, 1, size=(widths[l + 1], widths[l])) * a[:, None]
        bl = rng.uniform(-1, 1, size=widths[l + 1]) * a
        for i, op in enumerate(ops[l]):
            if op == "ln":
                wl[i] = np.abs(wl[i]) + 1e-3
                bl[i] = abs(bl[i])
        w.append(wl)
        b.append(bl)
    return Params(tuple(w), tuple(b))


def loss(
    structure: Structure,
    params: Params,
    data: Dataset,
    cfg: TrainConfig = TrainConfig(),
    penalty_on: bool = True,
) -> dict[str, float]:
    """{'mse', 'penalty', 'total'} on the given batch."""
    net = pack_structure(structure)
    W, B = _pack_params(net, params)
    mse, pen, _, _ = kernels.loss_and_grad(
        net.widths, net.ops, W, B, net.Mw, net.Mb, data.X, data.y,
        cfg.theta_ln, cfg.theta_exp, cfg.eps, penalty_on, cfg.pruning,
    )
    return {"mse": mse, "penalty": pen, "total": mse + pen}


def backward(
    structure: Structure,
    params: Params,
    data: Dataset,
    cfg: TrainConfig = TrainConfig(),
    penalty_on: bool = True,
) -> tuple[Params, dict[str, float]]:
    """Exact reverse-mode gradients of the loss for every unmasked entry.

    Returns (gradients shaped like Params, loss parts). Masked entries get
    zero gradient when pruning is enabled.
    """
    net = pack_structure(structure)
    W, B = _pack_params(net, params)
    mse, pen, gW, gB = kernels.loss_and_grad(
        net.widths, net.ops, W, B, net.Mw, net.Mb, data.X, data.y,
        cfg.theta_ln, cfg.theta_exp, cfg.eps, penalty_on, cfg.pruning,
    )
    return _unpack_params(net, gW, gB), {"mse": mse, "penalty": pen, "total": mse + pen}


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def append(self, epoch: int, mse: float, penalty: float) -> None:
        self.epochs.append(epoch)
        self.mse.append(mse)
        self.penalty.append(penalty)
        self.total.append(mse + penalty)


def export_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse", "penalty", "total"])
        for row in zip(history.epochs, history.mse, history.penalty, history.total):
            writer.writerow(row)


def fit_network(
    structure: Structure,
    data: Dataset,
    cfg: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
    init: Params | None = None,
) -> tuple[Params, TrainHistory]:
    """Minibatch gradient descent for 10*L epochs (unless overridden).

    Returns the parameters with the best full-data MSE seen and the per-epoch
    loss history. Stops early when a full epoch produces non-finite loss
    (divergence), returning the best parameters so far.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    net = pack_structure(structure)
    params = init if init is not None else init_params(structure, rng, cfg.weight_init, cfg.pruning)
    W, B = _pack_params(net, params)
    vW, vB = np.zeros_like(W), np.zeros_like(B)

    n_epochs = cfg.epochs if cfg.epochs is not None else 10 * structure.depth
    history = TrainHistory()

    def full_loss(penalty_on: bool) -> tuple[float, float]:
        mse, pen, _, _ = kernels.loss_and_grad(
            net.widths, net.ops, W, B, net.Mw, net.Mb, data.X, data.y,
            cfg.theta_ln, cfg.theta_exp, cfg.eps, penalty_on, cfg.pruning,
        )
        return mse, pen

    best_mse, best_pen = full_loss(True)
    bestW, bestB = W.copy(), B.copy()
    history.append(0, best_mse, best_pen)

    n = data.n
    for epoch in range(1, n_epochs + 1):
        if cfg.penalty_placement == "last":
            penalty_on = epoch > n_epochs - cfg.penalty_epochs
        else:
            penalty_on = epoch <= cfg.penalty_epochs
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            mse, pen, gW, gB = kernels.loss_and_grad(
                net.widths, net.ops, W, B, net.Mw, net.Mb, data.X[idx], data.y[idx],
                cfg.theta_ln, cfg.theta_exp, cfg.eps, penalty_on, cfg.pruning,
            )
            if not (math.isfinite(mse) and math.isfinite(pen)):
                continue  # skip the batch, keep parameters
            if not (np.isfinite(gW).all() and np.isfinite(gB).all()):
                continue
            if cfg.momentum > 0:
                vW = cfg.momentum * vW - cfg.learning_rate * gW
                vB = cfg.momentum * vB - cfg.learning_rate * gB
                W = W + vW
                B = B + vB
            else:
                W = W - cfg.learning_rate * gW
                B = B - cfg.learning_rate * gB
        mse, pen = full_loss(penalty_on)
        history.append(epoch, mse, pen)
        if not math.isfinite(mse):
            break
        if mse < best_mse:
            best_mse, best_pen = mse, pen
            bestW, bestB = W.copy(), B.copy()

    return _unpack_params(net, bestW, bestB), history
