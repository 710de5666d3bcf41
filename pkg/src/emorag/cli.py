"""Command-line surface: one subcommand per capability.

Exit codes, used consistently by every subcommand:

* 0 — success
* 1 — unexpected failure
* 2 — usage error (bad flags, bad flag combinations)
* 3 — an intensity gate or retrieval target selected zero records
* 4 — a referenced file or index is missing
* 5 — validation or format error in inputs or configuration

Verbosity is controlled by the ``EMORAG_LOG`` environment variable
(DEBUG/INFO/...).  All stochastic commands take ``--seed`` (default 0) so
documented invocations reproduce byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import (
    EmoragError,
    EmptyDatabaseError,
    EmptySubsetError,
    MissingAssetError,
    MissingIndexError,
    StageError,
)
from .flow import (
    FlowTrainConfig,
    init_vector_field,
    linear_map_task,
    load_checkpoint,
    save_checkpoint,
    train_vector_field,
)
from .pipeline import (
    SynthesisRequest,
    load_embedding_file,
    load_token_map,
    run_inference,
    write_report,
)
from .retrieval import (
    RetrievalMethod,
    build_index_bundle,
    load_index_bundle,
    retrieve,
    save_index_bundle,
)
from .store import IntensityLevel, load_db, load_manifest, save_db
from .synthbench import (
    SyntheticDatasetConfig,
    emit_report,
    generate_synthetic_db,
    run_benchmark,
)
from .util import atomic_write_text, configure_logging

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_MISSING = 4
EXIT_INVALID = 5


def _int_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


def _mix(text: str):
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("intensity mix needs exactly three fractions")
    return parts


def _usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _need_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingAssetError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    config = SyntheticDatasetConfig(
        num_emotions=args.emotions,
        dim=args.dim,
        records_per_emotion=args.per_emotion,
        cluster_sigma=args.sigma,
        center_spread=args.spread,
        intensity_mix=args.mix,
        seed=args.seed,
    )
    db = generate_synthetic_db(config)
    save_db(db, args.out)
    print(f"wrote {len(db)} records ({config.num_emotions} emotions, dim {config.dim}) to {args.out}")
    return EXIT_OK


def cmd_import_db(args) -> int:
    db = load_manifest(_need_file(args.manifest, "manifest"), dim=args.dim)
    save_db(db, args.out)
    print(f"imported {len(db)} records (dim {db.dim}) to {args.out}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    db = load_db(_need_file(args.db, "database"))
    bundle = build_index_bundle(db, args.k, max_iters=args.max_iters, seed=args.seed)
    for level in IntensityLevel:
        if level not in bundle.by_level:
            print(
                f"warning: no records at intensity {level.value}; skipping that index",
                file=sys.stderr,
            )
    written = save_index_bundle(bundle, args.out)
    print(
        f"wrote full index (k={bundle.full.k}) and {len(bundle.by_level)} "
        f"per-intensity indexes: {', '.join(str(p) for p in written)}"
    )
    return EXIT_OK


def cmd_retrieve(args) -> int:
    method = RetrievalMethod.parse(args.method)
    if method is RetrievalMethod.CLUSTERING and not args.index:
        return _usage("--index is required with --method clustering")
    db = load_db(_need_file(args.db, "database"))
    query = load_embedding_file(_need_file(args.query, "query embedding"), dim=db.dim)
    index = None
    if method is RetrievalMethod.CLUSTERING:
        index = load_index_bundle(_need_file(args.index, "cluster index"))
    intensity = IntensityLevel.parse(args.intensity) if args.intensity else None
    result = retrieve(db, query, method, index=index, intensity=intensity)
    print(json.dumps(result.to_json_dict(), indent=2))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.queries < 1:
        return _usage("--queries must be a positive integer")
    if not args.sizes or not args.methods:
        return _usage("--sizes and --methods must be non-empty")
    methods = [RetrievalMethod.parse(m) for m in args.methods]
    cells = [(m, s) for m in methods for s in args.sizes]
    results = run_benchmark(
        cells,
        n_queries=args.queries,
        seed=args.seed,
        num_emotions=args.emotions,
        dim=args.dim,
        cluster_sigma=args.sigma,
        center_spread=args.spread,
    )
    emit_report(results, args.out, args.format)
    for r in results:
        print(
            f"{r.method.value:<10} n={r.db_size:<6} accuracy={r.accuracy:.4f} "
            f"mean={r.mean_latency_ns}ns p95={r.p95_latency_ns}ns queries={r.queries}"
        )
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_train_fm(args) -> int:
    config = FlowTrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        total_steps=args.steps,
        seed=args.seed,
    )
    hidden = tuple(args.hidden)
    model = init_vector_field(
        args.state_dim, args.token_dim, args.spk_dim, hidden, seed=args.seed
    )
    sampler = linear_map_task(
        args.state_dim, args.token_dim, args.spk_dim, scale=args.scale, seed=args.seed
    )
    losses = train_vector_field(model, sampler, config, decay=not args.no_decay)
    save_checkpoint(model, args.out)
    loss_log = args.loss_log or Path(args.out).with_suffix(".loss.csv")
    lines = ["step,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(losses)]
    atomic_write_text(loss_log, "\n".join(lines) + "\n")
    if losses:
        print(
            f"trained {len(losses)} steps: loss {losses[0]:.6f} -> {losses[-1]:.6f} "
            f"(ratio {losses[-1] / losses[0]:.4f})"
        )
    else:
        print("trained 0 steps: checkpoint is the fresh initialization")
    print(f"checkpoint written to {args.out}, loss log to {loss_log}")
    return EXIT_OK


def cmd_synth(args) -> int:
    method = RetrievalMethod.parse(args.method)
    if method is RetrievalMethod.CLUSTERING and not args.index:
        return _usage("--index is required with --method clustering")
    db = load_db(_need_file(args.db, "database"))
    model = load_checkpoint(_need_file(args.checkpoint, "checkpoint"))
    query = load_embedding_file(_need_file(args.query, "query embedding"), dim=db.dim)
    token_map = load_token_map(_need_file(args.tokens, "token map"))
    index = None
    if method is RetrievalMethod.CLUSTERING:
        index = load_index_bundle(_need_file(args.index, "cluster index"))
    request = SynthesisRequest(
        reference=query,
        target_text=args.text,
        method=method,
        intensity=IntensityLevel.parse(args.intensity) if args.intensity else None,
        seed=args.seed,
    )
    report = run_inference(
        db,
        model,
        request,
        args.out,
        index=index,
        token_map=token_map,
        ode_steps=args.ode_steps,
    )
    if args.report:
        write_report(report, args.report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emorag",
        description="Emotion-prompt retrieval, flow-matching synthesis, and benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"emorag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic emotion database")
    p.add_argument("--emotions", type=int, default=4)
    p.add_argument("--per-emotion", type=int, default=750)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--spread", type=float, default=10.0)
    p.add_argument("--mix", type=_mix, default=(0.25, 0.5, 0.25))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("import-db", help="build a database file from a JSON manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_db)

    p = sub.add_parser("build-index", help="fit cluster indexes (full + per intensity)")
    p.add_argument("--db", required=True)
    p.add_argument("--k", type=int, default=None, help="clusters; default = distinct labels")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="retrieve the best prompt for a query embedding")
    p.add_argument("--db", required=True)
    p.add_argument("--query", required=True, help="JSON embedding file")
    p.add_argument("--method", choices=["embedding", "clustering"], default="embedding")
    p.add_argument("--index", default=None)
    p.add_argument("--intensity", choices=["weak", "normal", "strong"], default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("bench", help="run the method x size retrieval benchmark")
    p.add_argument("--sizes", type=_int_list, default=[3000, 8000])
    p.add_argument("--methods", type=_str_list, default=["embedding", "clustering"])
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--emotions", type=int, default=8)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--spread", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-fm", help="train the vector field on a synthetic token-to-mel task")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--state-dim", type=int, default=80, help="output (mel) dimension")
    p.add_argument("--token-dim", type=int, default=8)
    p.add_argument("--spk-dim", type=int, default=8)
    p.add_argument("--hidden", type=_int_list, default=[64, 64])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--no-decay", action="store_true", help="disable the linear lr decay")
    p.add_argument("--loss-log", default=None, help="CSV path; default <out>.loss.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_fm)

    p = sub.add_parser("synth", help="full inference: retrieve, assemble, generate, write mel")
    p.add_argument("--db", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True, help="JSON reference-embedding file")
    p.add_argument("--tokens", required=True, help="JSON token map: record id -> frames file")
    p.add_argument("--text", required=True)
    p.add_argument("--method", choices=["embedding", "clustering"], default="embedding")
    p.add_argument("--index", default=None)
    p.add_argument("--intensity", choices=["weak", "normal", "strong"], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ode-steps", type=int, default=32)
    p.add_argument("--report", default=None, help="also write the JSON report here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code_for(exc.__cause__) if exc.__cause__ is not None else EXIT_UNEXPECTED
    if isinstance(exc, (EmptySubsetError, EmptyDatabaseError)):
        return EXIT_EMPTY
    if isinstance(exc, (MissingAssetError, MissingIndexError, FileNotFoundError, IsADirectoryError)):
        return EXIT_MISSING
    if isinstance(exc, EmoragError):
        return EXIT_INVALID
    return EXIT_UNEXPECTED


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (EmoragError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except Exception as exc:  # pragma: no cover - safety net
        print(f"unexpected error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
