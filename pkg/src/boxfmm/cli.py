"""Command-line harness.

Two subcommands:

* ``evaluate`` runs one potential evaluation from point/weight files (or
  a seeded synthetic cloud) and writes the potentials, printing the
  precomputation/evaluation timing split and the operator-table memory.
* ``bench`` runs one of four benchmark sweeps (convergence, nscaling,
  threads, randsvd) and emits a CSV where every row echoes the full run
  configuration, plus an aligned table on stdout.

Exit codes: 0 on success, 1 for runtime failures (bad file contents,
out-of-domain points, guard violations), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import io as fmio
from .engine import FmmEvaluator, direct_evaluate
from .errors import (ConfigurationError, DomainError, FileFormatError,
                     KernelEvaluationError)
from .interpolation import SchemeKind, scheme_by_name
from .kernel import BUILTIN_KERNELS, kernel_by_name
from .linops import direct_matvec, evaluator_matvec, randomized_eig
from .octree import BoxDomain, suggest_levels
from .plan import FmmPlan

#: Largest N the quadratic reference paths will accept.
ORACLE_LIMIT = 100_000
#: Largest N for a dense eigendecomposition reference (O(N^3)).
DENSE_EIG_LIMIT = 4_000


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxfmm",
        description="Fast multipole summation of kernel potentials in 3D.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="run one evaluation")
    _add_common(p_eval)
    p_eval.add_argument("--sources", help="points+weights file (csv or bin)")
    p_eval.add_argument("--targets", help="target points file; default: sources")
    p_eval.add_argument("--weights", help="separate weights matrix file")
    p_eval.add_argument("--synthetic", type=int, metavar="N",
                        help="generate N seeded uniform points instead of reading files")
    p_eval.add_argument("--length", type=float, help="domain cube edge length")
    p_eval.add_argument("--center", help="domain center as 'x,y,z'")
    p_eval.add_argument("--precompute-only", action="store_true",
                        help="build/load the operator table, report, and exit")
    p_eval.set_defaults(func=cmd_evaluate, parser=p_eval)

    p_bench = sub.add_parser("bench", help="run a benchmark sweep")
    _add_common(p_bench)
    p_bench.add_argument("--mode", required=True,
                         choices=["convergence", "nscaling", "threads", "randsvd"])
    p_bench.add_argument("--n", type=int, default=None,
                         help="point count (convergence/threads/randsvd)")
    p_bench.add_argument("--orders", default="2,3,4,5,6",
                         help="comma list of interpolation orders (convergence)")
    p_bench.add_argument("--sizes", default="10000,80000,640000",
                         help="comma list of point counts (nscaling)")
    p_bench.add_argument("--thread-counts", default="1,2,4",
                         help="comma list of thread counts (threads)")
    p_bench.add_argument("--rank", type=int, default=100,
                         help="requested eigenpair count (randsvd)")
    p_bench.add_argument("--oversample", type=int, default=20,
                         help="extra random columns (randsvd)")
    p_bench.add_argument("--power-iters", type=int, default=1,
                         help="subspace power passes (randsvd)")
    p_bench.add_argument("--eigs-out",
                         help="write eigenvalues+vectors matrix (randsvd)")
    p_bench.set_defaults(func=cmd_bench, parser=p_bench)
    return parser


def _add_common(parser):
    parser.add_argument("--kernel", required=True,
                        help=f"kernel name: {', '.join(sorted(BUILTIN_KERNELS))}")
    parser.add_argument("--scheme", default=None,
                        choices=["chebyshev", "uniform"],
                        help="interpolation node family (default chebyshev; "
                             "bench convergence runs both when omitted)")
    parser.add_argument("--order", type=int, default=4,
                        help="interpolation order p (nodes per axis)")
    parser.add_argument("--levels", type=int, default=None,
                        help="octree depth; default targets ~60 points per leaf")
    parser.add_argument("--eps", type=float, default=1e-5,
                        help="compression tolerance for the far-field table")
    parser.add_argument("--ncols", type=int, default=1,
                        help="weight columns for synthetic inputs")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cache-dir", default=None,
                        help="operator table cache (default $BOXFMM_CACHE_DIR "
                             "or ~/.cache/boxfmm)")
    parser.add_argument("--out", default=None, help="output file path")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, KernelEvaluationError,
            FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _parse_center(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ConfigurationError(f"--center needs three numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"--center needs three numbers, got {text!r}") from None


def _parse_int_list(text, flag):
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigurationError(f"{flag} needs a comma list of integers, got {text!r}") from None
    if not values:
        raise ConfigurationError(f"{flag} is empty")
    return values


def _make_plan(args, n_points, domain, ncols):
    levels = args.levels if args.levels is not None else suggest_levels(n_points)
    scheme = scheme_by_name(args.scheme or "chebyshev")
    return FmmPlan(levels=levels, order=args.order, scheme=scheme,
                   eps=args.eps, domain_length=domain.length,
                   domain_center=domain.center, n_cols=ncols)


def _synthetic_cloud(n, ncols, seed, domain):
    rng = np.random.default_rng(seed)
    low = np.asarray(domain.low)
    points = low + domain.length * rng.random((n, 3))
    weights = rng.standard_normal((n, ncols))
    return points, weights


# -- evaluate -------------------------------------------------------------

def cmd_evaluate(args) -> int:
    kernel = kernel_by_name(args.kernel)
    if args.synthetic is not None and args.sources:
        args.parser.error("--synthetic and --sources are mutually exclusive")
    if args.synthetic is None and not args.sources:
        args.parser.error("one of --sources or --synthetic is required")

    targets = None
    if args.synthetic is not None:
        if args.synthetic < 1:
            raise ConfigurationError("--synthetic needs a positive count")
        center = _parse_center(args.center) if args.center else (0.5, 0.5, 0.5)
        domain = BoxDomain(center, args.length if args.length else 1.0)
        points, weights = _synthetic_cloud(args.synthetic, args.ncols,
                                           args.seed, domain)
    else:
        points, weights = fmio.read_points_file(args.sources)
        if args.weights:
            weights = fmio.read_matrix(args.weights)
        if weights is None:
            raise ConfigurationError(
                f"{args.sources} has no weight columns; append w1.. columns "
                "or pass --weights")
        if args.targets:
            targets, _ = fmio.read_points_file(args.targets)
        domain = _resolve_domain(args, points, targets)

    plan = _make_plan(args, len(points), domain, weights.shape[1])
    evaluator = FmmEvaluator(kernel, plan, cache_dir=args.cache_dir,
                             threads=args.threads)
    print(f"kernel={kernel.name} scheme={plan.scheme.value} order={plan.order} "
          f"levels={plan.levels} eps={plan.eps:g} n={len(points)} "
          f"ncols={weights.shape[1]} threads={args.threads}")
    print(f"tree build        {evaluator.tree_seconds:10.4f} s")
    print(f"operator table    {evaluator.table_seconds:10.4f} s "
          f"({evaluator.table.nbytes():,} bytes)")
    if args.precompute_only:
        return 0

    phi = evaluator.evaluate(points, targets=targets, weights=weights)
    for stage in ("distribute", "upward", "far_field", "downward", "near_field"):
        print(f"{stage:<18}{evaluator.timings[stage]:10.4f} s")
    print(f"{'evaluate total':<18}{evaluator.timings['total']:10.4f} s "
          f"({evaluator.timings['near_pairs']:,} near pairs)")
    if args.out:
        fmio.write_matrix(args.out, phi)
        print(f"wrote {phi.shape[0]}x{phi.shape[1]} potentials to {args.out}")
    else:
        head = ", ".join(f"{v:.6g}" for v in np.asarray(phi)[:4, 0])
        print(f"first potentials: {head}")
    return 0


def _resolve_domain(args, points, targets):
    if args.length:
        center = _parse_center(args.center) if args.center else (0.0, 0.0, 0.0)
        return BoxDomain(center, args.length)
    stack = points if targets is None else np.vstack([points, targets])
    domain = BoxDomain.from_points(stack)
    if args.center:
        raise ConfigurationError("--center requires --length")
    return domain


# -- bench ----------------------------------------------------------------

def cmd_bench(args) -> int:
    kernel = kernel_by_name(args.kernel)
    mode = args.mode
    if mode == "convergence":
        rows = _bench_convergence(args, kernel)
    elif mode == "nscaling":
        rows = _bench_nscaling(args, kernel)
    elif mode == "threads":
        rows = _bench_threads(args, kernel)
    else:
        rows = _bench_randsvd(args, kernel)
    _emit_rows(rows, args.out)
    return 0


def _config_columns(args, kernel, scheme, order, levels, n, ncols):
    return {
        "mode": args.mode,
        "kernel": kernel.name,
        "scheme": scheme.value if isinstance(scheme, SchemeKind) else scheme,
        "order": order,
        "levels": levels,
        "eps": args.eps,
        "ncols": ncols,
        "n": n,
        "seed": args.seed,
        "threads": args.threads,
        "domain_length": 1.0,
        "domain_center": "0.5 0.5 0.5",
    }


def _bench_convergence(args, kernel):
    n = args.n if args.n is not None else 2000
    if n > ORACLE_LIMIT:
        raise ConfigurationError(
            f"convergence mode compares against the quadratic oracle; "
            f"n={n} exceeds the {ORACLE_LIMIT} guard")
    orders = _parse_int_list(args.orders, "--orders")
    domain = BoxDomain((0.5, 0.5, 0.5), 1.0)
    points, weights = _synthetic_cloud(n, args.ncols, args.seed, domain)
    reference = direct_evaluate(kernel, points, weights=weights)
    schemes = ([scheme_by_name(args.scheme)] if args.scheme
               else [SchemeKind.CHEBYSHEV, SchemeKind.UNIFORM])
    rows = []
    for scheme in schemes:
        for p in orders:
            levels = args.levels if args.levels is not None else suggest_levels(n)
            plan = FmmPlan(levels=levels, order=p, scheme=scheme, eps=args.eps,
                           domain_length=domain.length, domain_center=domain.center,
                           n_cols=args.ncols)
            ev = FmmEvaluator(kernel, plan, cache_dir=args.cache_dir,
                              threads=args.threads)
            t0 = time.perf_counter()
            phi = ev.evaluate(points, weights=weights)
            seconds = time.perf_counter() - t0
            err = _rel_err(phi, reference)
            row = _config_columns(args, kernel, scheme, p, levels, n, args.ncols)
            row.update(error=err, seconds=seconds,
                       table_bytes=ev.table.nbytes())
            rows.append(row)
    return rows


def _bench_nscaling(args, kernel):
    sizes = _parse_int_list(args.sizes, "--sizes")
    scheme = scheme_by_name(args.scheme or "chebyshev")
    domain = BoxDomain((0.5, 0.5, 0.5), 1.0)
    rows = []
    times = []
    for n in sizes:
        levels = args.levels if args.levels is not None else suggest_levels(n)
        points, weights = _synthetic_cloud(n, args.ncols, args.seed, domain)
        plan = FmmPlan(levels=levels, order=args.order, scheme=scheme,
                       eps=args.eps, domain_length=domain.length,
                       domain_center=domain.center, n_cols=args.ncols)
        ev = FmmEvaluator(kernel, plan, cache_dir=args.cache_dir,
                          threads=args.threads)
        t0 = time.perf_counter()
        ev.evaluate(points, weights=weights)
        seconds = time.perf_counter() - t0
        direct_seconds = float("nan")
        if n <= ORACLE_LIMIT:
            t0 = time.perf_counter()
            direct_evaluate(kernel, points, weights=weights)
            direct_seconds = time.perf_counter() - t0
        times.append(seconds)
        row = _config_columns(args, kernel, scheme, args.order, levels, n,
                              args.ncols)
        row.update(seconds=seconds, direct_seconds=direct_seconds,
                   precompute_seconds=ev.precompute_seconds)
        rows.append(row)
    slope = float("nan")
    if len(sizes) > 1:
        slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    for row in rows:
        row["slope"] = slope
    print(f"fitted log-log slope: {slope:.3f}")
    return rows


def _bench_threads(args, kernel):
    n = args.n if args.n is not None else 100_000
    counts = _parse_int_list(args.thread_counts, "--thread-counts")
    scheme = scheme_by_name(args.scheme or "chebyshev")
    domain = BoxDomain((0.5, 0.5, 0.5), 1.0)
    levels = args.levels if args.levels is not None else suggest_levels(n)
    points, weights = _synthetic_cloud(n, args.ncols, args.seed, domain)
    plan = FmmPlan(levels=levels, order=args.order, scheme=scheme, eps=args.eps,
                   domain_length=domain.length, domain_center=domain.center,
                   n_cols=args.ncols)
    try:
        import psutil
        physical = psutil.cpu_count(logical=False)
    except ImportError:
        physical = None
    print(f"physical cores: {physical if physical else 'unknown'}")
    rows = []
    base = None
    for c in counts:
        ev = FmmEvaluator(kernel, plan, cache_dir=args.cache_dir, threads=c)
        t0 = time.perf_counter()
        ev.evaluate(points, weights=weights)
        seconds = time.perf_counter() - t0
        if base is None:
            base = seconds
        row = _config_columns(args, kernel, scheme, args.order, levels, n,
                              args.ncols)
        row.update(threads=c, seconds=seconds, speedup=base / seconds,
                   upward_seconds=ev.timings["upward"],
                   far_field_seconds=ev.timings["far_field"],
                   downward_seconds=ev.timings["downward"],
                   near_field_seconds=ev.timings["near_field"])
        rows.append(row)
    return rows


def _bench_randsvd(args, kernel):
    n = args.n if args.n is not None else 2000
    k, q = args.rank, args.oversample
    scheme = scheme_by_name(args.scheme or "chebyshev")
    domain = BoxDomain((0.5, 0.5, 0.5), 1.0)
    levels = args.levels if args.levels is not None else suggest_levels(n)
    points, _ = _synthetic_cloud(n, 1, args.seed, domain)
    plan = FmmPlan(levels=levels, order=args.order, scheme=scheme, eps=args.eps,
                   domain_length=domain.length, domain_center=domain.center,
                   n_cols=k + q)
    ev = FmmEvaluator(kernel, plan, cache_dir=args.cache_dir,
                      threads=args.threads)
    t0 = time.perf_counter()
    result = randomized_eig(evaluator_matvec(ev, points), n, k, oversample=q,
                            seed=args.seed, power_iters=args.power_iters)
    fmm_seconds = time.perf_counter() - t0

    direct_seconds = float("nan")
    if n <= ORACLE_LIMIT:
        t0 = time.perf_counter()
        randomized_eig(direct_matvec(kernel, points), n, k, oversample=q,
                       seed=args.seed, power_iters=args.power_iters)
        direct_seconds = time.perf_counter() - t0

    error = float("nan")
    if n <= DENSE_EIG_LIMIT:
        dense = kernel.block(points, points)
        dense_vals = np.linalg.eigvalsh(dense)[::-1][:k]
        error = float(np.linalg.norm(result.eigenvalues - dense_vals)
                      / np.linalg.norm(dense_vals))

    if args.eigs_out:
        stacked = np.vstack([result.eigenvalues[None, :], result.eigenvectors])
        fmio.write_matrix(args.eigs_out, stacked, prefix="eig")
        print(f"wrote eigenvalues+vectors ({stacked.shape[0]}x{stacked.shape[1]}) "
              f"to {args.eigs_out}")

    row = _config_columns(args, kernel, scheme, args.order, levels, n, k + q)
    row.update(rank=k, oversample=q, power_iters=args.power_iters,
               error=error, seconds=fmm_seconds,
               direct_seconds=direct_seconds,
               matvec_columns=result.matvec_columns)
    return [row]


# -- output ---------------------------------------------------------------

def _rel_err(a, b):
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale else float("nan")


def _fmt_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _emit_rows(rows, out_path):
    if not rows:
        return
    cols = list(rows[0].keys())
    widths = {c: max(len(c), max(len(_short(r[c])) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(_short(r[c]).ljust(widths[c]) for c in cols))
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_fmt_cell(r[c]) for c in cols) + "\n")
        print(f"wrote {len(rows)} rows to {out_path}")


def _short(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.4g}"
    return str(value)


if __name__ == "__main__":
    sys.exit(main())
