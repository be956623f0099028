"""Command-line surface: generate data, run joins, sweep benchmarks.

Every run is reproducible from its flags plus the seed (defaulting to
the SKEWJOIN_SEED environment variable).  The simulation is
configuration-complete: executor count, lam and memory are explicit
flags, never inferred from hardware.

Exit codes: 0 success (and, with --verify, oracle-equal), 1 verify
mismatch, 2 usage error, 3 broadcast capacity exceeded with no
fallback.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .amjoin import am_join, am_self_join, shuffle_join
from .datagen import DatasetSpec, generate
from .engine import BroadcastCapacityError, Cluster, ClusterConfig, PartitionedDataset
from .model import (
    JoinMode,
    Relation,
    oracle_join,
    read_relation_tsv,
    rows_counter,
    write_join_rows,
    write_metrics,
    write_relation_tsv,
)
from .sljoin import (
    ddr_full_outer_join,
    der_full_outer_join,
    index_broadcast_full_outer_join,
    index_broadcast_join,
    index_broadcast_left_outer_join,
    index_broadcast_right_outer_join,
)
from .treejoin import self_tree_join, tree_join, tree_join_basic

ALGO_MODES = {
    "tree-basic": {"inner"},
    "tree": {"inner"},
    "self-tree": {"self"},
    "am": {"inner", "left", "right", "full", "self"},
    "shuffle": {"inner", "left", "right", "full"},
    "ib": {"inner"},
    "ib-left": {"left"},
    "ib-right": {"right"},
    "ib-full": {"full"},
    "der": {"full"},
    "ddr": {"full"},
}

DEFAULT_MODE = {
    "tree-basic": "inner",
    "tree": "inner",
    "self-tree": "self",
    "am": "inner",
    "shuffle": "inner",
    "ib": "inner",
    "ib-left": "left",
    "ib-right": "right",
    "ib-full": "full",
    "der": "full",
    "ddr": "full",
}

BENCH_COLUMNS = [
    "algorithm", "mode", "alpha", "n", "lambda", "stages", "shuffled_bytes",
    "broadcast_bytes", "max_executor_records", "total_rows", "status",
]


def _default_seed() -> int:
    return int(os.environ.get("SKEWJOIN_SEED", "0"))


def _add_cluster_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--executors", type=int, default=4, help="simulated executor count n")
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0,
                        help="network-to-disk cost ratio")
    parser.add_argument("--memory", type=int, default=1 << 28,
                        help="memory per executor in bytes")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: SKEWJOIN_SEED env var or 0)")


def _add_hotkey_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k-max", type=int, default=1000,
                        help="maximum hot keys collected per relation")
    parser.add_argument("--min-freq", type=float, default=100.0,
                        help="minimum estimated frequency for a hot key")


def _cluster(args) -> Cluster:
    seed = args.seed if args.seed is not None else _default_seed()
    return Cluster(ClusterConfig(n=args.executors, lam=args.lam, memory=args.memory, seed=seed))


def _run_algorithm(cluster: Cluster, algo: str, mode: JoinMode, left: Relation,
                   right: Relation | None, k_max: int, min_freq: float) -> PartitionedDataset:
    if algo == "tree-basic":
        return tree_join_basic(cluster, left, right)
    if algo == "tree":
        return tree_join(cluster, left, right, k_max_r=k_max, k_max_s=k_max, min_freq=min_freq)
    if algo == "self-tree":
        return self_tree_join(cluster, left, k_max=k_max, min_freq=min_freq)
    if algo == "am":
        if mode is JoinMode.SELF_SAME_ATTRIBUTE:
            return am_self_join(cluster, left, k_max=k_max, min_freq=min_freq)
        return am_join(cluster, left, right, mode, k_max_r=k_max, k_max_s=k_max,
                       min_freq=min_freq)
    if algo == "shuffle":
        return shuffle_join(cluster, left, right, mode)
    if algo == "ib":
        return index_broadcast_join(cluster, left, right)
    if algo == "ib-left":
        return index_broadcast_left_outer_join(cluster, left, right)
    if algo == "ib-right":
        return index_broadcast_right_outer_join(cluster, left, right)
    if algo == "ib-full":
        return index_broadcast_full_outer_join(cluster, left, right)
    if algo == "der":
        return der_full_outer_join(cluster, left, right)
    if algo == "ddr":
        return ddr_full_outer_join(cluster, left, right)
    raise ValueError(f"unknown algorithm {algo!r}")


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    spec = DatasetSpec(
        alpha=args.alpha,
        record_bytes=args.record_bytes,
        n_uniform=args.n_uniform,
        n_zipf=args.n_zipf,
        zipf_domain=args.zipf_domain,
        uniform_key_space=args.uniform_key_space,
        key_multiplier=args.key_multiplier,
        seed=seed,
    )
    relation = generate(spec, args.partitions)
    write_relation_tsv(relation.data.elements(), args.output)
    print(f"wrote {relation.cardinality} records to {args.output} "
          f"(alpha={args.alpha:g}, payload={args.record_bytes}B, seed={seed})")
    return 0


def cmd_join(args) -> int:
    mode_name = args.mode or DEFAULT_MODE[args.algo]
    if mode_name not in ALGO_MODES[args.algo]:
        print(f"error: algorithm {args.algo!r} does not support mode {mode_name!r}", file=sys.stderr)
        return 2
    mode = JoinMode(mode_name)

    self_mode = mode is JoinMode.SELF_SAME_ATTRIBUTE
    if self_mode:
        if not args.input:
            print("error: self joins need --input", file=sys.stderr)
            return 2
        left = read_relation_tsv(args.input, args.executors)
        right = None
    else:
        if not (args.left and args.right):
            print("error: binary joins need --left and --right", file=sys.stderr)
            return 2
        left = read_relation_tsv(args.left, args.executors)
        right = read_relation_tsv(args.right, args.executors)

    cluster = _cluster(args)
    try:
        rows = _run_algorithm(cluster, args.algo, mode, left, right, args.k_max, args.min_freq)
    except BroadcastCapacityError as exc:
        print(f"error: broadcast capacity exceeded: {exc}", file=sys.stderr)
        return 3

    if args.output:
        write_join_rows(rows.elements(), args.output)
    if args.metrics:
        # the seed is stamped in so the run is reproducible from its outputs
        write_metrics(cluster.metrics, args.metrics, extra_fields={"seed": cluster.config.seed})

    if args.verify:
        expected = oracle_join(left, left if self_mode else right, mode)
        if rows_counter(rows) != rows_counter(expected):
            print("verify: result differs from oracle", file=sys.stderr)
            return 1
        print("verify: ok")
    return 0


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    alphas = [float(a) for a in args.alphas.split(",")]
    executor_counts = [int(x) for x in args.executors_list.split(",")]
    for algo in algos:
        if algo not in ALGO_MODES:
            print(f"error: unknown algorithm {algo!r}", file=sys.stderr)
            return 2

    rows_out = []
    run_index = 0
    for algo in algos:
        mode_name = args.mode or DEFAULT_MODE[algo]
        if mode_name not in ALGO_MODES[algo]:
            mode_name = DEFAULT_MODE[algo]
        mode = JoinMode(mode_name)
        for alpha in alphas:
            for n in executor_counts:
                run_index += 1
                cluster = Cluster(ClusterConfig(n=n, lam=args.lam, memory=args.memory, seed=seed))
                spec_l = DatasetSpec(alpha=alpha, record_bytes=args.record_bytes,
                                     n_uniform=args.n_uniform, n_zipf=args.n_zipf,
                                     zipf_domain=args.zipf_domain, seed=seed * 1_000_003 + 2 * run_index)
                left = generate(spec_l, n)
                if mode is JoinMode.SELF_SAME_ATTRIBUTE:
                    right = None
                else:
                    spec_r = DatasetSpec(alpha=alpha, record_bytes=args.record_bytes,
                                         n_uniform=args.n_uniform, n_zipf=args.n_zipf,
                                         zipf_domain=args.zipf_domain, seed=seed * 1_000_003 + 2 * run_index + 1)
                    right = generate(spec_r, n)
                status = "ok"
                total_rows = 0
                try:
                    result = _run_algorithm(cluster, algo, mode, left, right, args.k_max, args.min_freq)
                    total_rows = result.count()
                except BroadcastCapacityError:
                    status = "error:broadcast-capacity"
                except Exception as exc:  # sweep must continue past per-run failures
                    status = f"error:{type(exc).__name__}"
                m = cluster.metrics
                rows_out.append({
                    "algorithm": algo,
                    "mode": mode.value,
                    "alpha": f"{alpha:g}",
                    "n": n,
                    "lambda": f"{args.lam:g}",
                    "stages": m.stages,
                    "shuffled_bytes": m.shuffled_bytes,
                    "broadcast_bytes": m.broadcast_bytes,
                    "max_executor_records": max(m.emitted_records) if m.emitted_records else 0,
                    "total_rows": total_rows,
                    "status": status,
                })

    with open(args.output, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows_out)
    print(f"wrote {len(rows_out)} benchmark rows to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewjoin",
                                     description="Skew-aware equi-joins on a simulated cluster")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic relation TSV")
    gen.add_argument("--alpha", type=float, required=True, help="Zipf skew parameter")
    gen.add_argument("--record-bytes", type=int, default=100, help="payload bytes per record")
    gen.add_argument("--n-uniform", type=int, default=1_000_000)
    gen.add_argument("--n-zipf", type=int, default=100_000)
    gen.add_argument("--zipf-domain", type=int, default=1_000)
    gen.add_argument("--uniform-key-space", type=int, default=2**31 - 1)
    gen.add_argument("--key-multiplier", type=int, default=1)
    gen.add_argument("--partitions", type=int, default=4)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--output", required=True)
    gen.set_defaults(func=cmd_gen)

    join = sub.add_parser("join", help="run one join and write rows + metrics")
    join.add_argument("--algo", required=True, choices=sorted(ALGO_MODES))
    join.add_argument("--mode", choices=["inner", "left", "right", "full", "self"])
    join.add_argument("--left", help="left relation TSV (binary joins)")
    join.add_argument("--right", help="right relation TSV (binary joins)")
    join.add_argument("--input", help="relation TSV (self joins)")
    join.add_argument("--output", help="join rows TSV path")
    join.add_argument("--metrics", help="metrics JSON path")
    join.add_argument("--verify", action="store_true",
                      help="exit nonzero unless the result equals the oracle")
    _add_cluster_flags(join)
    _add_hotkey_flags(join)
    join.set_defaults(func=cmd_join)

    bench = sub.add_parser("bench", help="run an algorithm x alpha x executors sweep to CSV")
    bench.add_argument("--algos", required=True, help="comma-separated algorithm list")
    bench.add_argument("--alphas", default="0.0,0.25,0.5,0.75,1.0")
    bench.add_argument("--executors-list", default="4")
    bench.add_argument("--mode", choices=["inner", "left", "right", "full", "self"])
    bench.add_argument("--n-uniform", type=int, default=2_000)
    bench.add_argument("--n-zipf", type=int, default=2_000)
    bench.add_argument("--zipf-domain", type=int, default=200)
    bench.add_argument("--record-bytes", type=int, default=16)
    bench.add_argument("--lambda", dest="lam", type=float, default=1.0)
    bench.add_argument("--memory", type=int, default=1 << 28)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--k-max", type=int, default=1000)
    bench.add_argument("--min-freq", type=float, default=100.0)
    bench.add_argument("--output", required=True)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
