"""Command line front end: ``kdematrix {sum,eig,align,kde-bench,gen}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .datasets import FORMATS, DatasetSource, gen_clique_instance, gen_clustered, gen_duplicate_instance, \
    gen_mixture, load_dataset
from .experiments import METHODS, RunRecord, Schedule, SumRecord, emit, run_eig_experiment, run_sum_experiment
from .kde import KdeConfig, available_backends, kde_build
from .kernels import FAMILIES, Kernel, KernelSpec, exact_sum
from .sums import SamplerConfig, kernel_alignment

SEED_ENV = "KDEMATRIX_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _common(p: argparse.ArgumentParser, data=True):
    if data:
        p.add_argument("data", help="input point file")
        p.add_argument("--input-format", choices=FORMATS, default="csv")
        p.add_argument("--class-filter", type=int, default=None)
        p.add_argument("--normalize", action="store_true", help="rescale each column to [0, 1]")
        p.add_argument("--labels", action="store_true", help="last csv/whitespace column is a label")
    p.add_argument("--kernel", choices=FAMILIES, default="gaussian")
    p.add_argument("--bandwidth", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0, help="rational quadratic exponent")
    p.add_argument("--seed", type=int, default=_default_seed(), help=f"default from ${SEED_ENV}")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdematrix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sum", help="estimate the kernel matrix sum")
    _common(p)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--backend", choices=available_backends(), default="uniform")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--ground-truth", type=float, default=None, help="exact kernel sum, if known")

    p = sub.add_parser("eig", help="power method accuracy traces")
    _common(p)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--rate0", type=float, default=0.01)
    p.add_argument("--growth", type=float, default=1.1)
    p.add_argument("--eps", type=float, default=0.5, help="relative error of each knpm product")
    p.add_argument("--backend", choices=("uniform", "exact"), default="uniform")
    p.add_argument("--target", type=float, default=None, help="stop a method at this relative error")
    p.add_argument("--ground-truth", type=float, default=None, help="top eigenvalue, if known")

    p = sub.add_parser("align", help="kernel alignment of two point sets")
    _common(p, data=False)
    p.add_argument("data", help="first point file")
    p.add_argument("other", help="second point file, row-aligned with the first")
    p.add_argument("--input-format", choices=FORMATS, default="csv")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--backend", choices=available_backends(), default="uniform")
    p.add_argument("--exact", action="store_true", help="use exact kernel sums")

    p = sub.add_parser("kde-bench", help="accuracy and cost of a KDE backend")
    _common(p)
    p.add_argument("--backend", choices=available_backends(), default="uniform")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=1 / 3, help="per-query failure probability")
    p.add_argument("--queries", type=int, default=100)

    p = sub.add_parser("gen", help="write a synthetic point set")
    p.add_argument("kind", choices=("mixture", "clustered", "duplicate", "clique"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--C", type=float, default=2.0, help="duplicate instance constant")
    p.add_argument("--copies", type=int, default=10, help="clique instance size")
    p.add_argument("--bandwidth", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", default=None)
    return parser


def _spec(args) -> KernelSpec:
    return KernelSpec(args.kernel, args.bandwidth, args.beta)


def _load(args, path=None):
    src = DatasetSource(path or args.data, args.input_format, getattr(args, "class_filter", None),
                        getattr(args, "normalize", False), getattr(args, "labels", False))
    return load_dataset(src)


def _write_records(records, args, record_type):
    emit(records, sys.stdout if args.out is None else args.out, args.format, record_type)


def _print(obj, args):
    text = json.dumps(obj)
    if args.out is None:
        print(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")


def cmd_sum(args):
    pts = _load(args)
    cfg = SamplerConfig(backend=args.backend)
    records = run_sum_experiment(pts, _spec(args), args.eps, args.delta, args.trials, args.seed,
                                 exact=args.ground_truth, cfg=cfg)
    _write_records(records, args, SumRecord)


def cmd_eig(args):
    pts = _load(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    schedule = Schedule(rate0=args.rate0, growth=args.growth, eps_mvm=args.eps, backend=args.backend)
    records = run_eig_experiment(pts, _spec(args), methods, args.iterations, schedule, args.seed,
                                 ground_truth=args.ground_truth, target=args.target)
    _write_records(records, args, RunRecord)


def cmd_align(args):
    X, Xp = _load(args), _load(args, args.other)
    kernel = Kernel(_spec(args))
    rng = np.random.default_rng(args.seed)
    sum_fn = (lambda P: exact_sum(P, kernel)) if args.exact else None
    value = kernel_alignment(X, Xp, kernel, args.eps, args.delta, SamplerConfig(backend=args.backend), rng, sum_fn)
    _print({"alignment": value, "evals": kernel.evals}, args)


def cmd_kde_bench(args):
    pts = _load(args).points
    rng = np.random.default_rng(args.seed)
    kernel = Kernel(_spec(args))
    cfg = KdeConfig(mu=args.mu, eps=args.eps, fail_prob=args.delta)
    t0 = time.perf_counter()
    est = kde_build(args.backend, pts, kernel, cfg, rng)
    built = kernel.evals
    queries = pts[rng.choice(len(pts), size=min(args.queries, len(pts)), replace=False)]
    approx = est.query_many(queries)
    elapsed = time.perf_counter() - t0
    truth = Kernel(_spec(args)).pairwise(queries, pts).mean(axis=1)
    err = np.abs(approx - truth)
    rel = err / np.maximum(truth, args.mu)
    _print({
        "backend": args.backend, "queries": int(len(queries)), "build_evals": built,
        "query_evals": kernel.evals - built, "max_abs_err": float(err.max()), "max_rel_err": float(rel.max()),
        "seconds": elapsed,
    }, args)


def cmd_gen(args):
    rng = np.random.default_rng(args.seed)
    if args.kind == "mixture":
        pts = gen_mixture(args.n, args.d, rng)
    elif args.kind == "clustered":
        pts = gen_clustered(args.n, args.d, rng)
    elif args.kind == "duplicate":
        pts = gen_duplicate_instance(args.n, args.d, args.C, rng, args.bandwidth)
    else:
        pts = gen_clique_instance(args.n, args.d, args.copies, rng, args.bandwidth)
    lines = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in pts.points)
    if args.out is None:
        sys.stdout.write(lines)
    else:
        with open(args.out, "w") as fh:
            fh.write(lines)


COMMANDS = {"sum": cmd_sum, "eig": cmd_eig, "align": cmd_align, "kde-bench": cmd_kde_bench, "gen": cmd_gen}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"kdematrix: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
