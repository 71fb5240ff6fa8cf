"""Command-line interface.

Subcommands: fit, bench, theory-check, complexity-compare, gen-data, encode,
serve-stdio. Dataset CSV files carry a header x0..x{d-1},y.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np


def _load_csv(path: str):
    from .expr import Dataset

    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "y" or not all(h == f"x{i}" for i, h in enumerate(header[:-1])):
            raise SystemExit(f"{path}: expected header x0..x{{d-1}},y, got {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.array(rows)
    return Dataset(arr[:, :-1], arr[:, -1])


def _cmd_fit(args) -> int:
    from .bench import PipelineConfig, fit_dataset
    from .expr import canonicalize, complexity, pretty

    data = _load_csv(args.data)
    proposer = args.proposer
    if proposer not in ("enum", "random") and not proposer.startswith("remote:"):
        proposer = f"remote:{proposer}"
    cfg = PipelineConfig(
        method=args.method, proposer=proposer, seed=args.seed,
        budget_s=args.budget, m=args.m, l_max=args.l_max,
    )
    best, tried, incomplete = fit_dataset(data, cfg)
    if best is None:
        print("no candidate produced a usable fit", file=sys.stderr)
        return 1
    canon = canonicalize(best.expr)
    print(f"expression: {pretty(canon)}")
    print(f"r2_train: {best.r2_train:.10f}")
    print(f"mse: {best.mse:.6e}")
    print(f"complexity: {complexity(canon)}")
    print(f"candidates_tried: {tried}{'  (budget exhausted)' if incomplete else ''}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import PipelineConfig, run_suite
    from .problems import get_suite

    cfg = PipelineConfig(method=args.method, proposer=args.proposer, seed=args.seed, budget_s=args.budget)
    summary = run_suite(get_suite(args.suite), cfg, noise=args.noise)
    print(summary.to_markdown())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary.to_csv(out / f"{args.suite}-noise{args.noise}.csv")
        (out / f"{args.suite}-noise{args.noise}.md").write_text(summary.to_markdown())
        (out / "config.json").write_text(json.dumps(cfg.describe(), indent=2))
        print(f"\nwrote {out}")
    return 0


def _cmd_theory_check(args) -> int:
    from .bench import theory_check

    rep = theory_check()
    for cell in rep.cells:
        status = "pass" if cell.ok else "FAIL"
        print(f"d={cell.d} K={cell.K}: L1={cell.l1} L2={cell.l2} N1={cell.n1} N2={cell.n2} {status}")
    for name, ok in rep.lemma_branches.items():
        print(f"lemma branch {name}: {'pass' if ok else 'FAIL'}")
    for note in rep.notes:
        print(f"note: {note}")
    if not rep.ok:
        for cell in rep.failures():
            print(f"counterexample: d={cell.d} K={cell.K} -> ({cell.l1},{cell.n1}) vs ({cell.l2},{cell.n2})")
        return 1
    print("all checks passed")
    return 0


def _cmd_complexity(args) -> int:
    from .bench import complexity_experiment

    lo, hi = args.dims.split("..")
    dims = list(range(int(lo), int(hi) + 1))
    rows = complexity_experiment(dims, args.count, seed=args.seed)
    print("| d | mean tree LN | mean net LN | gap |")
    print("|---|---|---|---|")
    for r in rows:
        print(f"| {r.d} | {r.mean_tree:.2f} | {r.mean_net:.2f} | {r.gap:.2f} |")
    return 0


def _cmd_gen_data(args) -> int:
    from .datagen import GenConfig, export_corpus

    kw = {"seed": args.seed}
    if args.l_max:
        kw["l_max"] = args.l_max
    if args.d_max:
        kw["d_max"] = args.d_max
        base = GenConfig.small().dim_weights if args.dim_preset == "small" else GenConfig.large().dim_weights
        kept = [(d, w) for d, w in base if d <= args.d_max] or [(args.d_max, 1.0)]
        kw["dim_weights"] = tuple(kept)
    cfg = GenConfig.small(**kw) if args.dim_preset == "small" else GenConfig.large(**kw)
    manifest = export_corpus(args.count, cfg, args.out, shard_size=args.shard_size)
    for k, v in manifest.items():
        print(f"{k}={v}")
    return 0


def _cmd_encode(args) -> int:
    from .codec import encode
    from .expr import free_variables, parse
    from .labeler import identify_structure

    e = parse(args.expr)
    d0 = args.d if args.d else max(free_variables(e), default=0) + 1
    structure = identify_structure(e, m=args.m, d0=d0, l_max=args.l_max)
    label = encode(structure)
    print(label.to_text())
    return 0


def _cmd_serve_stdio(args) -> int:
    from .protocol import serve_stdio
    from .proposer import EnumerativeProposer, RandomProposer, make_server_handler

    if args.proposer == "enum":
        proposer = EnumerativeProposer(m=args.m, l_max=args.l_max)
    elif args.proposer == "random":
        proposer = RandomProposer(m=args.m, l_max=args.l_max)
    else:
        raise SystemExit("serve-stdio supports the enum and random proposers")
    serve_stdio(make_server_handler(proposer))
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="symnet", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fit", help="fit one dataset from a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--method", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--proposer", default="enum", help="enum | random | remote:HOST:PORT")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=60.0)
    p.add_argument("--m", type=int, default=7)
    p.add_argument("--l-max", type=int, default=4)
    p.set_defaults(fn=_cmd_fit)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--method", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--proposer", default="enum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=60.0)
    p.add_argument("--out", default="")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("theory-check", help="validate the depth/node-count claims")
    p.set_defaults(fn=_cmd_theory_check)

    p = sub.add_parser("complexity-compare", help="tree vs network complexity experiment")
    p.add_argument("--dims", default="2..6")
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_complexity)

    p = sub.add_parser("gen-data", help="export a synthetic training corpus")
    p.add_argument("--dim-preset", choices=("small", "large"), default="small")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--shard-size", type=int, default=1000)
    p.add_argument("--l-max", type=int, default=0, help="override the layer cap")
    p.add_argument("--d-max", type=int, default=0, help="override the feature cap")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("encode", help="expression -> structure sequence label")
    p.add_argument("--expr", required=True)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--l-max", type=int, default=6)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("serve-stdio", help="answer one proposal request on stdin")
    p.add_argument("--proposer", default="enum")
    p.add_argument("--m", type=int, default=7)
    p.add_argument("--l-max", type=int, default=4)
    p.set_defaults(fn=_cmd_serve_stdio)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
