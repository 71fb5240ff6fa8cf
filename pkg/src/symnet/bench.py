"""End-to-end fitting pipeline, benchmark harness, and theory validators.

The pipeline streams candidate structures from a proposer, runs exactly one
inner strategy per candidate (1 = skeleton fitting with exponent search,
2 = network training with pruning masks, 3 = network training on the dense
simplified architecture), and keeps the best candidate by fitted R^2. Server
or enumeration scores never decide the winner; the data does.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import skopt, train
from .codec import decode
from .expr import (
    Dataset,
    Expr,
    canonicalize,
    complexity,
    evaluate_batch,
    extrapolation_eval,
    format_expr,
    is_symbolic_solution,
    pretty,
    r2_score,
    substitute_slots,
)
from .netcore import (
    DegenerateStructureError,
    MaskSet,
    Structure,
    monomial_tree_node_sum,
    representation_counts,
    simplify_structure,
    skeleton,
)
from .problems import BenchmarkProblem, get_suite
from .proposer import Candidate, EnumerativeProposer, RandomProposer, RemoteProposer

__all__ = [
    "PipelineConfig",
    "FitReport",
    "BENCH_VALUES",
    "make_proposer",
    "fit_dataset",
    "run_problem",
    "run_suite",
    "SuiteSummary",
    "theory_check",
    "TheoryReport",
    "complexity_experiment",
]

# the default exponent value set plus the small integers needed by degree-4..6
# power sums; printed into every report
BENCH_VALUES = (1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 3.0, -3.0, 4.0, 5.0, 6.0)


@dataclass(frozen=True)
class PipelineConfig:
    method: int = 1  # 1 skeleton fitting, 2 network+pruning, 3 network dense
    proposer: str = "enum"  # enum | random | remote:HOST:PORT
    m: int = 7
    l_max: int = 4
    k: int = 5  # candidates per proposer request (remote)
    values: tuple[float, ...] = BENCH_VALUES
    episode_budget: int = 1024
    budget_s: float = 60.0
    r2_stop: float = 1.0  # only a literally perfect R^2 stops via this knob
    mse_stop_rel: float = 1e-15  # stop when mse <= rel * max(1, var(y))
    max_candidates: int = 200
    restarts: int = 10
    seed: int = 0
    prune_terms: bool = True
    train_epochs: int | None = None  # None = 10 * depth

    def describe(self) -> dict:
        return {
            "method": self.method,
            "proposer": self.proposer,
            "m": self.m,
            "l_max": self.l_max,
            "values": " ".join(str(v) for v in self.values),
            "episode_budget": self.episode_budget,
            "budget_s": self.budget_s,
            "seed": self.seed,
        }


@dataclass
class FitReport:
    problem: str
    expression: str
    r2_test: float
    complexity: int
    solution: str  # additive | multiplicative | no
    solution_constant: float
    r2_extrapolation: float
    wall_time: float
    proposer: str
    method: int
    seed: int
    candidates_tried: int
    incomplete: bool = False
    config: dict = field(default_factory=dict)
    chosen_intervals: tuple = ()

    def row(self) -> dict:
        return {
            "problem": self.problem,
            "expression": self.expression,
            "r2_test": self.r2_test,
            "complexity": self.complexity,
            "solution": self.solution,
            "r2_extrapolation": self.r2_extrapolation,
            "wall_time": round(self.wall_time, 3),
            "candidates": self.candidates_tried,
            "incomplete": self.incomplete,
        }


def make_proposer(cfg: PipelineConfig, d_max: int = 10):
    if cfg.proposer == "enum":
        return EnumerativeProposer(m=cfg.m, l_max=cfg.l_max)
    if cfg.proposer == "random":
        return RandomProposer(m=cfg.m, l_max=cfg.l_max, seed=cfg.seed)
    if cfg.proposer.startswith("remote:"):
        _, host, port = cfg.proposer.split(":")
        return RemoteProposer(host, int(port), m=cfg.m, d_max=d_max)
    raise ValueError(f"unknown proposer {cfg.proposer!r}")


@dataclass
class _CandidateFit:
    expr: Expr
    r2_train: float
    mse: float


def _fit_candidate_skeleton(
    structure: Structure, data: Dataset, cfg: PipelineConfig, deadline: float | None = None
) -> _CandidateFit | None:
    sk = skeleton(structure)
    pol = skopt.PolicyConfig(values=cfg.values, restarts=cfg.restarts, seed=cfg.seed)
    result = skopt.optimize_skeleton(sk.expr, data, pol, budget=cfg.episode_budget, deadline=deadline)
    best = result.best
    if not math.isfinite(best.mse):
        return None
    yhat = evaluate_batch(best.expr, data.X)
    ok = np.isfinite(yhat)
    if ok.sum() < max(2, data.n // 2):
        return None
    r2 = r2_score(yhat[ok], data.y[ok])
    return _CandidateFit(best.expr, r2, best.mse)


def _fit_candidate_network(structure: Structure, data: Dataset, cfg: PipelineConfig) -> _CandidateFit | None:
    compact = simplify_structure(structure)
    if cfg.method == 3:
        compact = Structure(compact.architecture, MaskSet.ones(compact.architecture))
    tc = train.TrainConfig(
        pruning=True, seed=cfg.seed, epochs=cfg.train_epochs, learning_rate=0.02, momentum=0.9
    )
    rng = np.random.default_rng(cfg.seed)
    params, _ = train.fit_network(compact, data, tc, rng)
    sk = skeleton(compact, allow_degenerate=True)
    sym, exp = sk.bind(params)
    inst = substitute_slots(sk.expr, sym, exp)
    yhat = evaluate_batch(inst, data.X)
    ok = np.isfinite(yhat)
    if ok.sum() < max(2, data.n // 2):
        return None
    r2 = r2_score(yhat[ok], data.y[ok])
    mse = float(np.mean((yhat[ok] - data.y[ok]) ** 2))
    return _CandidateFit(inst, r2, mse)


def _prune_fitted_terms(fit: _CandidateFit, data: Dataset) -> _CandidateFit:
    """Drop additive terms whose removal does not hurt the fit."""
    from .expr import _flatten  # canonical chain helper

    e = canonicalize(fit.expr)
    if e.kind != "add":
        return fit
    terms = _flatten("add", e)
    keep = list(terms)
    changed = False
    for t in list(terms):
        if len(keep) <= 1:
            break
        trial = [u for u in keep if u is not t]
        acc = trial[0]
        for u in trial[1:]:
            acc = Expr("add", (acc, u))
        yhat = evaluate_batch(acc, data.X)
        ok = np.isfinite(yhat)
        if ok.sum() < max(2, data.n // 2):
            continue
        mse = float(np.mean((yhat[ok] - data.y[ok]) ** 2))
        if mse <= fit.mse * 1.000001 + 1e-14:
            keep = trial
            changed = True
    if not changed:
        return fit
    acc = keep[0]
    for u in keep[1:]:
        acc = Expr("add", (acc, u))
    yhat = evaluate_batch(acc, data.X)
    ok = np.isfinite(yhat)
    r2 = r2_score(yhat[ok], data.y[ok])
    mse = float(np.mean((yhat[ok] - data.y[ok]) ** 2))
    return _CandidateFit(canonicalize(acc), r2, mse)


def fit_dataset(
    data: Dataset,
    cfg: PipelineConfig = PipelineConfig(),
) -> tuple[_CandidateFit | None, int, bool]:
    """Run the pipeline on a dataset.

    Returns (best fit, candidates tried, budget exhausted before the stop
    threshold). Candidate evaluation order follows the proposer stream; the
    final selection is by training R^2.
    """
    if cfg.method not in (1, 2, 3):
        raise ValueError("method must be 1, 2, or 3")
    data = data.sanitized()
    proposer = make_proposer(cfg, d_max=max(data.d, 4))
    t0 = time.perf_counter()
    mse_stop = cfg.mse_stop_rel * max(1.0, float(np.var(data.y)))
    # gradient training cannot reach the closed-form precision of method 1;
    # stop the candidate scan at its realistic accuracy ceiling
    r2_stop = cfg.r2_stop if cfg.method == 1 else min(cfg.r2_stop, 1.0 - 1e-5)
    best: _CandidateFit | None = None
    tried = 0
    incomplete = False
    if hasattr(proposer, "iter_candidates"):
        stream = proposer.iter_candidates(data)
    else:
        stream = iter(proposer.propose(data, cfg.k))
    for cand in stream:
        if tried >= cfg.max_candidates:
            incomplete = True
            break
        if time.perf_counter() - t0 > cfg.budget_s:
            incomplete = True
            break
        tried += 1
        try:
            structure = decode(cand.label, cfg.m, data.d)
        except Exception:
            continue
        try:
            fit = (
                _fit_candidate_skeleton(structure, data, cfg, deadline=t0 + cfg.budget_s)
                if cfg.method == 1
                else _fit_candidate_network(structure, data, cfg)
            )
        except DegenerateStructureError:
            continue
        if fit is None:
            continue
        if best is None or fit.r2_train > best.r2_train:
            best = fit
        if best is not None and (best.r2_train >= r2_stop or best.mse <= mse_stop):
            break
    if best is not None and cfg.prune_terms:
        best = _prune_fitted_terms(best, data)
    return best, tried, incomplete


def _sample_problem_data(problem: BenchmarkProblem, n: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in problem.intervals])
    hi = np.array([b for _, b in problem.intervals])
    X = rng.uniform(lo, hi, size=(n, problem.d))
    y = evaluate_batch(problem.truth, X)
    ok = np.isfinite(y)
    X, y = X[ok], y[ok]
    if problem.noise > 0:
        y = y + problem.noise * float(np.std(y)) * rng.standard_normal(len(y))
    return Dataset(X, y, problem.intervals)


def run_problem(problem: BenchmarkProblem, cfg: PipelineConfig = PipelineConfig()) -> FitReport:
    """Full pipeline on one benchmark problem; the test split uses a distinct
    seed, and extrapolation widens each interval by half its length."""
    t0 = time.perf_counter()
    data = _sample_problem_data(problem, problem.n_train, cfg.seed)
    best, tried, incomplete = fit_dataset(data, cfg)
    wall = time.perf_counter() - t0

    if best is None:
        return FitReport(
            problem.name, "<none>", float("-inf"), 0, "no", math.nan, float("-inf"),
            wall, cfg.proposer, cfg.method, cfg.seed, tried, incomplete=True,
            config=cfg.describe(), chosen_intervals=problem.intervals,
        )

    test = _sample_problem_data(problem.with_noise(0.0), problem.n_test, cfg.seed + 1)
    yhat = evaluate_batch(best.expr, test.X)
    okk = np.isfinite(yhat)
    r2_test = r2_score(yhat[okk], test.y[okk]) if okk.sum() >= 2 else float("-inf")

    truth = problem.truth
    verdict = is_symbolic_solution(best.expr, truth, data)
    margins = [(b - a) / 2 for a, b in problem.intervals]
    try:
        r2_ex = extrapolation_eval(best.expr, list(problem.intervals), max(margins), truth, seed=cfg.seed + 2)
    except Exception:
        r2_ex = float("-inf")

    canon = canonicalize(best.expr)
    return FitReport(
        problem.name,
        pretty(canon),
        r2_test,
        complexity(canon),
        verdict.status,
        verdict.constant,
        r2_ex,
        wall,
        cfg.proposer,
        cfg.method,
        cfg.seed,
        tried,
        incomplete=incomplete,
        config=cfg.describe(),
        chosen_intervals=problem.intervals,
    )


@dataclass
class SuiteSummary:
    reports: list[FitReport]

    @property
    def mean_r2(self) -> float:
        return float(np.mean([max(r.r2_test, 0.0) for r in self.reports]))

    @property
    def accuracy_rate(self) -> float:
        return float(np.mean([r.r2_test > 0.99 for r in self.reports]))

    @property
    def mean_complexity(self) -> float:
        return float(np.mean([r.complexity for r in self.reports]))

    @property
    def solution_rate(self) -> float:
        return float(np.mean([r.solution != "no" for r in self.reports]))

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            rows = [r.row() for r in self.reports]
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)

    def to_markdown(self) -> str:
        lines = [
            "| problem | R2 (test) | complexity | solution | time (s) |",
            "|---|---|---|---|---|",
        ]
        for r in self.reports:
            lines.append(
                f"| {r.problem} | {r.r2_test:.6f} | {r.complexity} | {r.solution} | {r.wall_time:.1f} |"
            )
        lines.append("")
        lines.append(
            f"mean R2 {self.mean_r2:.4f}; accuracy (R2>0.99) {self.accuracy_rate:.4f}; "
            f"mean complexity {self.mean_complexity:.2f}; solution rate {self.solution_rate:.4f}"
        )
        return "\n".join(lines)


def run_suite(
    problems: list[BenchmarkProblem] | str,
    cfg: PipelineConfig = PipelineConfig(),
    noise: float = 0.0,
) -> SuiteSummary:
    if isinstance(problems, str):
        problems = get_suite(problems)
    if not problems:
        raise ValueError("empty suite")
    reports = []
    for p in problems:
        reports.append(run_problem(p.with_noise(noise), cfg))
    return SuiteSummary(reports)


# ---------------------------------------------------------------------------
# Theory validators
# ---------------------------------------------------------------------------


@dataclass
class TheoryCell:
    d: int
    K: int
    l1: int
    n1: int
    l2: int
    n2: int
    ok: bool


@dataclass
class TheoryReport:
    cells: list[TheoryCell]
    lemma_branches: dict[str, bool]
    notes: list[str]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells) and all(self.lemma_branches.values())

    def failures(self) -> list[TheoryCell]:
        return [c for c in self.cells if not c.ok]


def theory_check(d_range=range(2, 11), k_range=range(1, 6), rng_seed: int = 0) -> TheoryReport:
    """Sweep the depth/node-count inequalities and the lemma's case analysis.

    Exponents are random nonunit values (the counts depend only on the
    preconditions). The lemma check follows the proof's branches: d = 2 uses
    the proof's base value S(2) = 2 (the displayed sum gives 1; noted), d = 3
    checks 3K > 2K >= 2+K, d >= 4 checks the geometric-sum bound chain.
    """
    rng = np.random.default_rng(rng_seed)
    cells = []
    for d in d_range:
        for K in k_range:
            expo = rng.choice([2.0, 3.0, -1.0, 0.5], size=(K, d)).tolist()
            expo[0][0] = 2.0  # guarantee a nonunit exponent
            c = representation_counts(expo)
            cells.append(TheoryCell(d, K, c.l1, c.n1, c.l2, c.n2, c.l1 <= c.l2 and c.n1 <= c.n2))

    branches = {}
    notes = []
    # d = 2: proof base case S(2) = 2; 2K = K + K >= 2 + K for K >= 2
    branches["d=2"] = all(2 * K >= 2 + K for K in range(2, 6))
    if monomial_tree_node_sum(2) != 2:
        notes.append(
            "displayed sum gives S(2) = "
            f"{monomial_tree_node_sum(2)} while the proof's base case uses S(2) = 2; "
            "the validator follows the proof"
        )
    # d = 3: S(3) = 3 and 3K > 2K >= 2 + K
    branches["d=3"] = monomial_tree_node_sum(3) == 3 and all(3 * K > 2 * K >= 2 + K for K in range(2, 6))
    # d >= 4: S(d) >= d - 1 and d >= 2K/(K-1)
    ok4 = True
    for d in range(4, 11):
        if monomial_tree_node_sum(d) < d - 1:
            ok4 = False
        for K in range(2, 6):
            if d < 2 * K / (K - 1):
                ok4 = False
    branches["d>=4"] = ok4
    return TheoryReport(cells, branches, notes)


# ---------------------------------------------------------------------------
# Complexity comparison: expression trees vs identified networks
# ---------------------------------------------------------------------------


def _tree_depth_nodes(e: Expr) -> tuple[int, int]:
    """(max root-to-leaf edge count, total node count) of the raw tree."""
    if not e.args:
        return 0, 1
    depths, nodes = zip(*(_tree_depth_nodes(a) for a in e.args))
    return 1 + max(depths), 1 + sum(nodes)


def _network_depth_nodes(structure: Structure) -> tuple[int, int]:
    compact = simplify_structure(structure)
    n = sum(len(ops) for ops in compact.architecture.layer_ops)
    return compact.depth, n


@dataclass
class ComplexityRow:
    d: int
    count: int
    mean_tree: float
    mean_net: float

    @property
    def gap(self) -> float:
        return self.mean_tree - self.mean_net


def complexity_experiment(
    dims: list[int],
    count_per_dim: int,
    seed: int = 0,
    m: int = 7,
    l_max: int = 7,
) -> list[ComplexityRow]:
    """Mean tree complexity (depth x nodes) vs network complexity per dim.

    Expressions come from the generator restricted to each dimension; draws
    the labeler cannot place (abs, overflow of depth or replicas) are skipped
    and resampled, mirroring corpus generation.
    """
    from . import datagen, labeler

    rows = []
    for d in dims:
        cfg = datagen.GenConfig(d_max=d, b_max_offset=1, m=m, l_max=l_max, seed=seed)
        rng = np.random.default_rng([seed, d])
        trees = np.empty(count_per_dim)
        nets = np.empty(count_per_dim)
        got = 0
        attempts = 0
        while got < count_per_dim and attempts < count_per_dim * 50:
            attempts += 1
            f = datagen.sample_function(cfg, rng, force_dim=d)
            try:
                st = labeler.identify_structure(f, m=m, d0=d, l_max=l_max)
            except labeler.LabelingError:
                continue
            td, tn = _tree_depth_nodes(f)
            nd, nn = _network_depth_nodes(st)
            trees[got] = td * tn
            nets[got] = nd * nn
            got += 1
        rows.append(ComplexityRow(d, got, float(trees[:got].mean()), float(nets[:got].mean())))
    return rows
