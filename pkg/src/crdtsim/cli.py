"""Command-line front door: run, bench, replay, merge-demo.

All output is machine parseable. Runs print the transaction report in CSV or
JSON-lines form followed by a final world-state digest line; replay prints
the digest of the reconstructed state, which must match the live run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import emit_tables, load_experiment_file, named_experiments, run_experiment, run_single
from .config import load_config_detail
from .jsoncrdt import canonical_json_bytes, check_document_shape, init_empty_crdt
from .txpipeline import PipelineConfig, load_block_log, replay_block_log, save_block_log
from .workload import WorkloadConfig

SEED_ENV = "CRDTSIM_SEED"
DEFAULT_SEED = 42


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def _resolve_seed(flag_seed, config_had_seed: bool, config_seed: int) -> int:
    """Precedence: flag, then config file, then environment, then default."""
    if flag_seed is not None:
        return flag_seed
    if config_had_seed:
        return config_seed
    env = _env_seed()
    if env is not None:
        return env
    return config_seed


def _print_digest(digest: str, fmt: str, fh) -> None:
    if fmt == "json-lines":
        fh.write(json.dumps({"digest": digest}) + "\n")
    else:
        fh.write(f"digest,{digest}\n")


# ----------------------------------------------------------------------
# subcommands


def _cmd_run(args) -> int:
    if args.config:
        pipeline, workload, provided = load_config_detail(args.config)
    else:
        pipeline, workload, provided = PipelineConfig(), WorkloadConfig(), set()
    if args.mode:
        pipeline.mode = args.mode
    if args.block_size is not None:
        pipeline.max_tx_count = args.block_size
    if args.block_timeout_ms is not None:
        pipeline.block_timeout_ms = args.block_timeout_ms
    if args.snapshot_policy:
        pipeline.snapshot_policy = args.snapshot_policy
    if args.txs is not None:
        workload.total_txs = args.txs
    if args.conflict_pct is not None:
        workload.conflict_pct = args.conflict_pct
    if args.arrival_rate is not None:
        workload.arrival_rate_tps = args.arrival_rate
    workload.seed = _resolve_seed(args.seed, "workload.seed" in provided, workload.seed)
    pipeline.validate()
    workload.validate()

    outcome = run_single(pipeline, workload)
    report = outcome.report
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            _write_report(report, args.format, fh)
    else:
        _write_report(report, args.format, sys.stdout)
    if args.save_blocklog:
        save_block_log(outcome.log, args.save_blocklog)
    _print_digest(outcome.ws.digest(), args.format, sys.stdout)
    return 0


def _write_report(report, fmt: str, fh) -> None:
    if fmt == "json-lines":
        report.write_json_lines(fh)
    else:
        report.write_csv(fh)


def _cmd_bench(args) -> int:
    explicit_seed = args.seed if args.seed is not None else _env_seed()
    modes = ["crdt", "fabric"] if args.mode == "both" else [args.mode]
    written = []
    for mode in modes:
        named = named_experiments(seed=DEFAULT_SEED if explicit_seed is None else explicit_seed,
                                  mode=mode)
        if args.experiment in named:
            spec = named[args.experiment]
        elif Path(args.experiment).is_file():
            spec = load_experiment_file(args.experiment)
            spec.pipeline.mode = mode
            if explicit_seed is not None:
                spec.workload.seed = explicit_seed
        else:
            names = ", ".join(sorted(named))
            raise ValueError(f"unknown experiment {args.experiment!r}; names: {names}")
        spec.workload.total_txs = max(1, round(spec.workload.total_txs * args.scale))
        report = run_experiment(spec)
        written.extend(emit_tables(report, args.out))
    for path in written:
        print(path)
    return 0


def _cmd_replay(args) -> int:
    blocks = load_block_log(args.blocklog)
    ws, _ = replay_block_log(blocks)
    _print_digest(ws.digest(), args.format, sys.stdout)
    return 0


def _cmd_merge_demo(args) -> int:
    docs = []
    for path in args.files:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        check_document_shape(doc)
        docs.append(doc)
    if not docs:
        raise ValueError("no documents given")
    crdt = init_empty_crdt(args.key, docs[0], dedup_list_leaves=args.dedup)
    for doc in docs:
        crdt.merge_json(doc)
    sys.stdout.write(canonical_json_bytes(crdt.to_json()).decode("utf-8") + "\n")
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crdtsim",
        description="Execute-order-validate pipeline simulator with MVCC and CRDT-merge validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one pipeline over a generated workload")
    run.add_argument("--config", help="INI file with [pipeline] and [workload] sections")
    run.add_argument("--mode", choices=["fabric", "crdt"])
    run.add_argument("--txs", type=int, help="total transactions")
    run.add_argument("--conflict-pct", type=float, dest="conflict_pct")
    run.add_argument("--arrival-rate", type=float, dest="arrival_rate")
    run.add_argument("--block-size", type=int, dest="block_size", help="max transactions per block")
    run.add_argument("--block-timeout-ms", type=float, dest="block_timeout_ms")
    run.add_argument("--snapshot-policy", choices=["batch", "fresh"], dest="snapshot_policy")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--save-blocklog", dest="save_blocklog", help="write the block log to this file")
    run.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    run.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench", help="run a named or file-defined experiment sweep")
    bench.add_argument("--experiment", required=True, help="experiment name or JSON spec file")
    bench.add_argument("--scale", type=float, default=1.0, help="multiply transaction counts")
    bench.add_argument("--out", default="bench_out", help="directory for metric tables")
    bench.add_argument("--seed", type=int)
    bench.add_argument("--mode", choices=["fabric", "crdt", "both"], default="crdt")
    bench.set_defaults(func=_cmd_bench)

    rep = sub.add_parser("replay", help="rebuild world state from a block log file")
    rep.add_argument("blocklog")
    rep.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    rep.set_defaults(func=_cmd_replay)

    demo = sub.add_parser("merge-demo", help="merge JSON documents into one CRDT and print the result")
    demo.add_argument("files", nargs="+", help="JSON document files, merged in order")
    demo.add_argument("--key", default="demo", help="ledger key for the CRDT")
    demo.add_argument("--dedup", action="store_true", help="skip list elements already present")
    demo.set_defaults(func=_cmd_merge_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
