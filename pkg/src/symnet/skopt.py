"""Skeleton fitting: exponent-slot search plus constant optimization.

Exponent slots take values from a finite set; a learnable categorical
distribution per slot is sampled with the Gumbel-Softmax trick and updated
with a risk-seeking policy gradient (only episodes above the (1-eps) reward
quantile contribute, plus an entropy bonus). Constants are fitted per episode
by restarted BFGS, or by linear least squares when the skeleton is linear in
its constant slots (same minimizer, much faster).

For small search spaces the episode budget is spent exhaustively, and a
coordinate-descent sweep refines the incumbent; both are config-gated so the
pure sampling loop remains available.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize as sciopt

from .expr import (
    Expr,
    Dataset,
    canonicalize,
    collect_slots,
    const,
    evaluate_batch,
    substitute_slots,
    _flatten,
)

__all__ = [
    "PolicyConfig",
    "ExponentPolicy",
    "Episode",
    "FitResult",
    "OptimizeResult",
    "gumbel_softmax_sample",
    "fit_constants",
    "risk_seeking_update",
    "optimize_skeleton",
    "write_episode_log",
]

DEFAULT_VALUES = (1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 3.0, -3.0)
APPENDIX_VALUES = (-1.0, -2.0, 1.0, 2.0, 3.0, 0.5)


@dataclass(frozen=True)
class PolicyConfig:
    values: tuple[float, ...] = DEFAULT_VALUES
    tau0: float = 1.0
    tau_final: float = 0.1
    eps_risk: float = 0.05
    entropy_coeff: float = 0.005
    learning_rate: float = 0.05
    batch_size: int = 32
    restarts: int = 10
    exhaustive_cap: int = 512
    exhaustive_cap_linear: int = 1500
    coordinate_refine: bool = True
    sweep_every: int = 3
    continuous_warm: bool = True
    stop_mse_rel: float = 1e-12
    stop_on_perfect: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("exponent value set must be nonempty")
        if not 0 < self.eps_risk < 1:
            raise ValueError("eps_risk must lie in (0, 1)")

    @classmethod
    def pure(cls, **kw) -> "PolicyConfig":
        """Sampling loop only: no exhaustive phase, no sweeps, no early stop."""
        kw.setdefault("exhaustive_cap", 0)
        kw.setdefault("exhaustive_cap_linear", 0)
        kw.setdefault("coordinate_refine", False)
        kw.setdefault("continuous_warm", False)
        kw.setdefault("stop_on_perfect", False)
        return cls(**kw)


@dataclass
class ExponentPolicy:
    """Per-slot logits over the exponent value set and the sampling schedule."""

    n_slots: int
    cfg: PolicyConfig
    logits: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.logits = np.zeros((self.n_slots, len(self.cfg.values)))

    def tau(self, t: int, horizon: int) -> float:
        if horizon <= 0:
            return self.cfg.tau0
        k = math.log(self.cfg.tau0 / self.cfg.tau_final)
        return self.cfg.tau0 * math.exp(-k * t / horizon)

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def sample(self, tau: float, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, ...]]:
        softs = []
        hards = []
        for s in range(self.n_slots):
            soft, hard = gumbel_softmax_sample(self.logits[s], tau, rng)
            softs.append(soft)
            hards.append(hard)
        return np.array(softs), tuple(hards)


def gumbel_softmax_sample(logits: np.ndarray, tau: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """(soft weights, hard argmax choice) for one categorical distribution."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    logp = logits - _logsumexp(logits)
    g = rng.gumbel(size=logits.shape)
    scores = (logp + g) / tau
    soft = np.exp(scores - _logsumexp(scores))
    return soft, int(np.argmax(scores))


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


# ---------------------------------------------------------------------------
# Constant fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    expr: Expr  # fully instantiated
    constants: np.ndarray
    mse: float
    reward: float
    wall_time: float
    diagnostic: str = ""

    @classmethod
    def from_mse(cls, expr: Expr, constants: np.ndarray, mse: float, wall: float, diag: str = "") -> "FitResult":
        mse = float(mse) if math.isfinite(mse) else float("inf")
        reward = 1.0 / (1.0 + mse) if math.isfinite(mse) else 0.0
        return cls(expr, constants, mse, reward, wall, diag)


def _eval_with_consts(e: Expr, X: np.ndarray, c: np.ndarray) -> np.ndarray:
    env = {int(i): float(v) for i, v in enumerate(c)}
    inst = substitute_slots(e, sym_values=env)
    return evaluate_batch(inst, X)


def _linear_decompose(skel: Expr) -> tuple[list[Expr], dict[int, Expr]] | None:
    """Write skel as g0 + sum_i c_i * g_i when possible.

    Returns (symconst-free terms, {slot: basis expr}) or None when some slot
    appears nonlinearly (inside a unary op, an exponent, or more than once as
    a product of slots).
    """
    e = canonicalize(skel)
    sc, _ = collect_slots(e)
    if not sc:
        return None
    terms = _flatten("add", e) if e.kind == "add" else [e]
    free: list[Expr] = []
    basis: dict[int, list[Expr]] = {}
    for t in terms:
        factors = _flatten("mul", t) if t.kind == "mul" else [t]
        slot_factors = [f for f in factors if f.kind == "symconst"]
        rest = [f for f in factors if f.kind != "symconst"]
        if any(_contains_symconst(f) for f in rest):
            return None  # a slot sits deeper than a top-level coefficient
        if len(slot_factors) == 0:
            free.append(t)
        elif len(slot_factors) == 1:
            g = rest[0] if len(rest) == 1 else (const(1.0) if not rest else _remul(rest))
            basis.setdefault(slot_factors[0].index, []).append(g if rest else const(1.0))
        else:
            return None
    out: dict[int, Expr] = {}
    for slot, gs in basis.items():
        acc = gs[0]
        for g in gs[1:]:
            acc = Expr("add", (acc, g))
        out[slot] = acc
    if set(out) != set(sc):
        return None
    return free, out


def _remul(factors: list[Expr]) -> Expr:
    acc = factors[0]
    for f in factors[1:]:
        acc = Expr("mul", (acc, f))
    return acc


def _contains_symconst(e: Expr) -> bool:
    return any(n.kind == "symconst" for n in e.walk())


def _is_constlike_term(e: Expr) -> bool:
    return all(n.kind != "var" for n in e.walk())


def _try_linear_fit(skel: Expr, n_c: int, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Closed-form solve when the skeleton is numerically linear in its slots.

    Linearity is established by evaluating at c = 0 and the unit vectors and
    verifying superposition on two random probes; this also catches
    parameterizations like (c0 + c1) * g(x) that defeat syntactic checks.
    """
    base = _eval_with_consts(skel, X, np.zeros(n_c))
    cols = []
    for i in range(n_c):
        e = np.zeros(n_c)
        e[i] = 1.0
        cols.append(_eval_with_consts(skel, X, e) - base)
    A = np.column_stack(cols)
    rows = np.isfinite(A).all(axis=1) & np.isfinite(base) & np.isfinite(y)
    if rows.sum() < max(n_c + 1, 2) or rows.sum() < len(y) // 2:
        return None
    probe_rng = np.random.default_rng(12345)
    for _ in range(2):
        r = probe_rng.uniform(-1.5, 1.5, size=n_c)
        actual = _eval_with_consts(skel, X, r)
        pred = base + A @ r
        both = rows & np.isfinite(actual)
        if both.sum() < rows.sum() * 0.9:
            return None
        scale = np.maximum(1.0, np.abs(pred[both]))
        if not np.all(np.abs(actual[both] - pred[both]) <= 1e-7 * scale):
            return None
    c, *_ = np.linalg.lstsq(A[rows], (y - base)[rows], rcond=None)
    yhat = base + A @ c
    ok = np.isfinite(yhat)
    if ok.sum() < len(y) // 2:
        return None
    mse = float(np.mean((yhat[ok] - y[ok]) ** 2))
    return c, mse


def fit_constants(
    skeleton: Expr,
    data: Dataset,
    restarts: int = 10,
    rng: np.random.Generator | None = None,
    linear_solver: bool = True,
    max_iter: int = 200,
    engine: str = "auto",
    warm_starts: list[np.ndarray] | None = None,
    nan_rows: str = "penalize",
) -> FitResult:
    """Fit the constant slots of an exponent-free skeleton to the data.

    Linear-in-constants skeletons are solved in closed form (the minimizer
    coincides with the quasi-Newton one); everything else starts from any
    ``warm_starts`` given, then an all-ones vector, then ``restarts - 1``
    scaled-normal draws. ``engine``: 'bfgs' is pure restarted BFGS; 'lm' runs
    Levenberg-Marquardt on the residuals; 'auto' (default) uses LM per start
    with one BFGS polish of the winner (LM converges far more reliably on
    these least-squares landscapes).
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(0)
    _, exp_slots = collect_slots(skeleton)
    if exp_slots:
        raise ValueError("exponent slots must be instantiated before constant fitting")
    sym_slots, _ = collect_slots(skeleton)
    X, y = data.X, data.y

    if not sym_slots:
        yhat = evaluate_batch(skeleton, X)
        ok = np.isfinite(yhat)
        mse = float(np.mean((yhat[ok] - y[ok]) ** 2)) if ok.sum() >= max(2, len(y) // 2) else float("inf")
        return FitResult.from_mse(skeleton, np.empty(0), mse, time.perf_counter() - t0,
                                  "" if math.isfinite(mse) else "domain failures on most rows")

    n_c = len(sym_slots)
    remap = {slot: i for i, slot in enumerate(sym_slots)}
    skel = _renumber_symconsts(skeleton, remap)

    if linear_solver:
        solved = _try_linear_fit(skel, n_c, X, y)
        if solved is not None:
            c, mse = solved
            inst = substitute_slots(skel, {i: float(v) for i, v in enumerate(c)})
            return FitResult.from_mse(_restore_numbering(inst), c, mse, time.perf_counter() - t0)

    # 'penalize' charges for rows the candidate cannot evaluate (blind search
    # must not shrink its own domain); 'ignore' scores only jointly-finite
    # rows, matching how the symbolic-solution check compares expressions
    ignore_nan = nan_rows == "ignore"

    def objective(c: np.ndarray) -> float:
        with np.errstate(all="ignore"):
            yhat = _eval_with_consts(skel, X, c)
            ok = np.isfinite(yhat)
            if ok.sum() < max(2, len(y) // 2):
                return 1e12
            resid = np.clip(yhat[ok] - y[ok], -1e90, 1e90)
            bad = 0 if ignore_nan else (~ok).sum()
            val = float(np.mean(resid**2)) + 1e6 * bad / len(y)
        return val if math.isfinite(val) else 1e12

    scale = max(1.0, float(np.max(np.abs(y))))

    def residuals(c: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            yhat = _eval_with_consts(skel, X, c)
            fill = 0.0 if ignore_nan else 10.0 * scale
            r = np.where(np.isfinite(yhat), yhat - y, fill)
        return np.clip(r, -1e45, 1e45)

    starts = [np.asarray(x, dtype=np.float64) for x in (warm_starts or []) if len(x) == n_c]
    starts.append(np.ones(n_c))
    for j in range(max(0, restarts - 1)):
        width = 1.0 if j % 2 == 0 else 3.0  # D_aff constants span roughly +-10
        starts.append(rng.standard_normal(n_c) * width)
    best_c = None
    best_val = float("inf")
    # a start that already reproduces the data (up to evaluation-order noise)
    # needs no iteration, and a garbage finite-difference Jacobian there could
    # even walk away from it
    perfect = 1e-22 * max(1.0, float(np.mean(y**2)))
    for x0 in starts:
        v0 = objective(x0)
        if v0 <= perfect:
            inst = substitute_slots(skel, {i: float(vv) for i, vv in enumerate(x0)})
            return FitResult.from_mse(_restore_numbering(inst), np.asarray(x0), v0, time.perf_counter() - t0)
    for x0 in starts:
        try:
            if engine in ("lm", "auto"):
                res = sciopt.least_squares(residuals, x0, method="lm", max_nfev=60 * (n_c + 1))
                val = objective(np.asarray(res.x))
                cvec = np.asarray(res.x, dtype=np.float64)
            else:
                res = sciopt.minimize(objective, x0, method="BFGS", options={"maxiter": max_iter})
                val, cvec = float(res.fun), np.asarray(res.x, dtype=np.float64)
        except (ValueError, OverflowError):
            continue
        if val < best_val:
            best_val = val
            best_c = cvec
    # polish the incumbent: tight-tolerance LM, then one quasi-Newton pass
    if engine == "auto" and best_c is not None and best_val > 0:
        try:
            res = sciopt.least_squares(
                residuals, best_c, method="lm",
                ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=300 * (n_c + 1),
            )
            val = objective(np.asarray(res.x))
            if val < best_val:
                best_val, best_c = val, np.asarray(res.x, dtype=np.float64)
        except (ValueError, OverflowError):
            pass
        try:
            res = sciopt.minimize(objective, best_c, method="BFGS", options={"maxiter": max_iter})
            if res.fun < best_val:
                best_val, best_c = float(res.fun), np.asarray(res.x, dtype=np.float64)
        except (ValueError, OverflowError):
            pass
    wall = time.perf_counter() - t0
    if best_c is None or not math.isfinite(best_val) or best_val >= 1e12:
        c = np.ones(n_c)
        inst = substitute_slots(skel, {i: 1.0 for i in range(n_c)})
        return FitResult(_restore_numbering(inst), c, float("inf"), 0.0, wall, "all restarts diverged")
    yhat = _eval_with_consts(skel, X, best_c)
    ok = np.isfinite(yhat)
    mse = float(np.mean((yhat[ok] - y[ok]) ** 2)) if ok.any() else float("inf")
    inst = substitute_slots(skel, {i: float(v) for i, v in enumerate(best_c)})
    return FitResult.from_mse(_restore_numbering(inst), best_c, mse, wall)


def _renumber_symconsts(e: Expr, remap: dict[int, int]) -> Expr:
    def go(n: Expr) -> Expr:
        if n.kind == "symconst":
            return Expr("symconst", index=remap[n.index])
        if not n.args:
            return n
        return Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)

    return go(e)


def _restore_numbering(e: Expr) -> Expr:
    return e  # instantiated expressions carry no slots to renumber


# ---------------------------------------------------------------------------
# Risk-seeking policy gradient
# ---------------------------------------------------------------------------


@dataclass
class Episode:
    choices: tuple[int, ...]
    reward: float
    mse: float


def risk_seeking_update(policy: ExponentPolicy, episodes: list[Episode]) -> float:
    """One ascent step; returns the reward quantile R_eps used as threshold.

    Only episodes with reward >= R_eps contribute R * grad log P; identical
    rewards across the batch degenerate to an entropy-only update.
    """
    if not episodes:
        raise ValueError("need at least one episode")
    cfg = policy.cfg
    rewards = np.array([ep.reward for ep in episodes])
    r_eps = float(np.quantile(rewards, 1.0 - cfg.eps_risk))
    p = policy.probs()
    grad = np.zeros_like(policy.logits)

    if not np.allclose(rewards, rewards[0]):
        top = [ep for ep in episodes if ep.reward >= r_eps]
        for ep in top:
            for s, choice in enumerate(ep.choices):
                onehot = np.zeros(p.shape[1])
                onehot[choice] = 1.0
                grad[s] += ep.reward * (onehot - p[s])
        grad /= max(1, len(top))

    if cfg.entropy_coeff > 0:
        logp = np.log(np.clip(p, 1e-12, None))
        ent = -(p * logp).sum(axis=1, keepdims=True)
        grad += cfg.entropy_coeff * (-p * (logp + ent))

    policy.logits = policy.logits + cfg.learning_rate * grad
    return r_eps


# ---------------------------------------------------------------------------
# The outer loop over exponent assignments
# ---------------------------------------------------------------------------


@dataclass
class OptimizeResult:
    best: FitResult
    policy: ExponentPolicy
    episodes_used: int
    log: list[tuple[int, tuple[float, ...], float, float, float]]  # episode, exponents, mse, R, R_eps


def write_episode_log(result: OptimizeResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "exponents", "mse", "reward", "r_eps"])
        for row in result.log:
            w.writerow([row[0], " ".join(str(v) for v in row[1]), row[2], row[3], row[4]])


def optimize_skeleton(
    skeleton: Expr,
    data: Dataset,
    cfg: PolicyConfig = PolicyConfig(),
    budget: int = 2048,
    deadline: float | None = None,
    search_restarts: int = 3,
) -> OptimizeResult:
    """Search exponent-slot assignments and fit constants for each.

    Runs the sample -> instantiate -> fit -> reward -> update loop, with
    config-gated accelerations: exhaustive enumeration when the combination
    count fits the cap, a union-basis warm start for per-term slots, and
    periodic coordinate sweeps of the incumbent. Every considered combination
    counts against ``budget``; ``deadline`` (a time.perf_counter value) cuts
    the search off mid-phase. Nonlinear fits use ``search_restarts`` BFGS
    starts during the search and the configured count for the final polish.
    Never returns a result worse than the best episode observed.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(cfg.seed)
    _, exp_slots = collect_slots(skeleton)
    n_slots = len(exp_slots)
    values = cfg.values
    var_y = float(np.var(data.y)) or 1.0
    stop_mse = cfg.stop_mse_rel * max(1.0, var_y)

    policy = ExponentPolicy(n_slots, cfg)
    log: list[tuple[int, tuple[float, ...], float, float, float]] = []
    cache: dict[tuple[int, ...], FitResult] = {}
    used = 0  # episodes: every considered combination, cached fits included

    def out_of_time() -> bool:
        return deadline is not None and time.perf_counter() > deadline

    def fit_combo(combo: tuple[int, ...], restarts: int) -> FitResult:
        if combo in cache:
            return cache[combo]
        exp_env = {slot: values[choice] for slot, choice in zip(exp_slots, combo)}
        inst = substitute_slots(skeleton, exp_values=exp_env)
        res = fit_constants(inst, data, restarts=restarts, rng=rng)
        cache[combo] = res
        return res

    if n_slots == 0:
        res = fit_constants(skeleton, data, restarts=cfg.restarts, rng=rng)
        return OptimizeResult(res, policy, 1, [(0, (), res.mse, res.reward, res.reward)])

    best: FitResult | None = None
    best_combo: tuple[int, ...] | None = None

    def consider(combo: tuple[int, ...], restarts: int | None = None) -> FitResult:
        nonlocal best, best_combo, used
        used += 1
        res = fit_combo(combo, restarts if restarts is not None else search_restarts)
        if best is None or res.reward > best.reward:
            best = res
            best_combo = combo
        return res

    def solved() -> bool:
        return cfg.stop_on_perfect and best is not None and best.mse <= stop_mse

    def finalize() -> OptimizeResult:
        nonlocal best
        # polish the winning combination with the full restart count
        if best_combo is not None and search_restarts < cfg.restarts and not solved():
            exp_env = {slot: values[choice] for slot, choice in zip(exp_slots, best_combo)}
            inst = substitute_slots(skeleton, exp_values=exp_env)
            res = fit_constants(inst, data, restarts=cfg.restarts, rng=rng)
            if best is None or res.reward > best.reward:
                best = res
        assert best is not None
        return OptimizeResult(best, policy, used, log)

    def sweep(start: tuple[int, ...]) -> None:
        improved = True
        while improved and used < budget and not solved() and not out_of_time():
            improved = False
            for s in range(n_slots):
                for v in range(len(values)):
                    if used >= budget or out_of_time():
                        return
                    cand = tuple(v if i == s else best_combo[i] for i in range(n_slots))
                    if cand == best_combo or cand in cache:
                        continue
                    prev = best.reward if best is not None else -1.0
                    consider(cand)
                    if best is not None and best.reward > prev:
                        improved = True

    # union-basis warm start: one least-squares fit over all candidate bases.
    # Its residual also lower-bounds every assignment's mse: no subset of the
    # full basis fits better, so a poor bound rules the whole skeleton out of
    # a perfect fit and one coordinate sweep is all it deserves.
    warm = _union_basis_combo(skeleton, exp_slots, values, data)
    if warm is not None and used < budget:
        combo, bound = warm
        consider(combo)
        if bound > stop_mse and cfg.stop_on_perfect:
            if cfg.coordinate_refine:
                sweep(combo)
            return finalize()

    # continuous relaxation: fit the exponents as free parameters once, snap
    # each to the nearest allowed value, and verify that assignment
    if cfg.continuous_warm and used < budget and not solved() and not out_of_time():
        relaxed = _relax_combo(skeleton, exp_slots, values, data, cfg.restarts, rng)
        if relaxed is not None:
            consider(relaxed)
            if solved():
                return finalize()

    n_combos = len(values) ** n_slots
    cap = cfg.exhaustive_cap_linear if _is_linear_eligible(skeleton) else cfg.exhaustive_cap
    if 0 < n_combos <= min(cap, budget - used):
        for combo in itertools.product(range(len(values)), repeat=n_slots):
            consider(combo)
            if solved() or out_of_time():
                break
        return finalize()

    horizon = max(1, (budget - used) // max(1, cfg.batch_size))
    batch_idx = 0
    episode_idx = 0
    while used < budget and not solved() and not out_of_time():
        tau = policy.tau(batch_idx, horizon)
        episodes = []
        for _ in range(cfg.batch_size):
            if used >= budget or out_of_time():
                break
            _, combo = policy.sample(tau, rng)
            res = consider(combo)
            episodes.append(Episode(combo, res.reward, res.mse))
        if not episodes:
            break
        r_eps = risk_seeking_update(policy, episodes)
        for ep in episodes:
            log.append((episode_idx, tuple(values[c] for c in ep.choices), ep.mse, ep.reward, r_eps))
            episode_idx += 1
        batch_idx += 1
        if cfg.coordinate_refine and batch_idx % cfg.sweep_every == 0 and best_combo is not None:
            sweep(best_combo)
    return finalize()


def _relax_combo(
    skeleton: Expr,
    exp_slots: list[int],
    values: tuple[float, ...],
    data: Dataset,
    restarts: int,
    rng: np.random.Generator,
) -> tuple[int, ...] | None:
    """Continuous-exponent fit, snapped to the nearest allowed values."""
    sym_ids, _ = collect_slots(skeleton)
    base = (max(sym_ids) + 1) if sym_ids else 0
    as_consts = {slot: base + i for i, slot in enumerate(exp_slots)}

    def promote(n: Expr) -> Expr:
        if n.kind == "expslot":
            return Expr("symconst", index=as_consts[n.index])
        if not n.args:
            return n
        return Expr(n.kind, tuple(promote(a) for a in n.args), n.value, n.index)

    relaxed = promote(skeleton)
    res = fit_constants(relaxed, data, restarts=max(2, restarts // 2), rng=rng, linear_solver=False)
    if not math.isfinite(res.mse) or res.constants.size == 0:
        return None
    order = sorted(collect_slots(relaxed)[0])
    pos = {slot: i for i, slot in enumerate(order)}
    combo = []
    arr = np.asarray(values)
    for slot in exp_slots:
        fitted = float(res.constants[pos[as_consts[slot]]])
        combo.append(int(np.argmin(np.abs(arr - fitted))))
    return tuple(combo)


def _is_linear_eligible(skeleton: Expr, data: Dataset | None = None) -> bool:
    probe = substitute_slots(
        skeleton, exp_values={s: 1.0 for s in collect_slots(skeleton)[1]}
    )
    return _linear_decompose(probe) is not None


def _union_basis_combo(
    skeleton: Expr,
    exp_slots: list[int],
    values: tuple[float, ...],
    data: Dataset,
) -> tuple[tuple[int, ...], float] | None:
    """Pick an exponent combination from one joint least-squares fit.

    Eligible when the skeleton is a sum of terms, each exponent slot living in
    exactly one term that is linear in its constant coefficient. Slots whose
    terms share a shape are assigned the top values of the shared column
    group; the caller verifies the pick with a real fit. Returns the combo and
    the full-basis residual mse, a lower bound on any assignment's mse.
    """
    if not exp_slots:
        return None
    e = canonicalize(skeleton)
    terms = _flatten("add", e) if e.kind == "add" else [e]
    slot_term: dict[int, Expr] = {}
    bound_valid = True  # the residual bounds combos only if A covers every term
    for t in terms:
        slots_here = sorted({n.index for n in t.walk() if n.kind == "expslot"})
        if len(slots_here) > 1:
            return None
        if len(slots_here) == 1:
            s = slots_here[0]
            if s in slot_term:
                return None
            slot_term[s] = t
        elif not _is_constlike_term(t):
            bound_valid = False
    if set(slot_term) != set(exp_slots):
        return None

    # shape key: term with its slot id erased, so identical terms group
    def shape_key(t: Expr) -> Expr:
        def go(n: Expr) -> Expr:
            if n.kind == "expslot":
                return Expr("expslot", index=0)
            if n.kind == "symconst":
                return Expr("symconst", index=0)
            if not n.args:
                return n
            return Expr(n.kind, tuple(go(a) for a in n.args), n.value, n.index)

        return go(t)

    groups: dict[Expr, list[int]] = {}
    for s, t in slot_term.items():
        groups.setdefault(shape_key(t), []).append(s)

    cols = []
    col_meta = []  # (group key, value index)
    for key, slots in groups.items():
        t = slot_term[slots[0]]
        for vi, v in enumerate(values):
            inst = substitute_slots(t, exp_values={slots[0]: v})
            inst = substitute_slots(inst, sym_values={i: 1.0 for i in {n.index for n in inst.walk() if n.kind == "symconst"}})
            col = evaluate_batch(inst, data.X)
            if not np.isfinite(col).all():
                col = np.where(np.isfinite(col), col, 0.0)
                if np.abs(col).sum() == 0:
                    continue
            cols.append(col)
            col_meta.append((key, vi))
    if not cols:
        return None
    A = np.column_stack(cols + [np.ones(len(data.y))])
    try:
        c, *_ = np.linalg.lstsq(A, data.y, rcond=None)
    except np.linalg.LinAlgError:
        return None
    resid = A @ c - data.y
    bound = float(np.mean(resid**2)) if bound_valid else 0.0
    contrib = np.abs(c[:-1]) * np.array([np.std(col) + 1e-12 for col in cols])
    combo: dict[int, int] = {}
    for key, slots in groups.items():
        scored = sorted(
            ((contrib[i], col_meta[i][1]) for i in range(len(cols)) if col_meta[i][0] == key),
            reverse=True,
        )
        for s, (_, vi) in zip(slots, scored):
            combo[s] = vi
        for s in slots[len(scored):]:
            combo[s] = 0
    return tuple(combo[s] for s in exp_slots), bound
