"""Run the method x size retrieval benchmark and print an aligned table.

Same grid as ``emorag bench`` but with the summary table, per-size speedups,
and the exhaustive-scan scaling ratio printed at the end:

    python3 scripts/run_retrieval_bench.py --sizes 3000 8000 --queries 1000
"""

import argparse
from pathlib import Path

from emorag import RetrievalMethod, emit_report, run_benchmark


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[3000, 8000])
    parser.add_argument("--queries", type=int, default=1000)
    parser.add_argument("--emotions", type=int, default=8)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--sigma", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=None, help="also write a CSV here")
    args = parser.parse_args()

    cells = [
        (m, s)
        for m in (RetrievalMethod.EMBEDDING, RetrievalMethod.CLUSTERING)
        for s in args.sizes
    ]
    results = run_benchmark(
        cells,
        n_queries=args.queries,
        seed=args.seed,
        num_emotions=args.emotions,
        dim=args.dim,
        cluster_sigma=args.sigma,
    )
    by_cell = {(r.method.value, r.db_size): r for r in results}

    header = f"{'method':<12}{'db size':>8}{'accuracy':>10}{'mean (us)':>12}{'p95 (us)':>11}"
    print(header)
    print("-" * len(header))
    for r in results:
        print(
            f"{r.method.value:<12}{r.db_size:>8}{r.accuracy:>10.4f}"
            f"{r.mean_latency_ns / 1000:>12.1f}{r.p95_latency_ns / 1000:>11.1f}"
        )

    print()
    for size in args.sizes:
        emb = by_cell[("embedding", size)].mean_latency_ns
        clu = by_cell[("clustering", size)].mean_latency_ns
        print(f"clustering speedup at n={size}: {emb / clu:.2f}x")
    if len(args.sizes) >= 2:
        lo, hi = min(args.sizes), max(args.sizes)
        ratio = by_cell[("embedding", hi)].mean_latency_ns / by_cell[("embedding", lo)].mean_latency_ns
        print(f"exhaustive-scan latency scaling {hi}/{lo}: {ratio:.2f} (size ratio {hi / lo:.2f})")

    if args.out is not None:
        emit_report(results, args.out, args.out.suffix.lstrip(".") or "csv")
        print(f"report written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
