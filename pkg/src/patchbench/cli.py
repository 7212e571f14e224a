"""Command-line entry point for the benchmark harness."""

from __future__ import annotations

import argparse
import os
import sys
from itertools import product
from typing import Sequence

from .bench import BenchConfig, VerifyError, emit_csv, run_sweep
from .executors import Realization, ReductionStrategy, WorkgroupLimitError
from .memory import TransferMode
from .patchdata import Layout

_REALIZATIONS = {r.value: r for r in Realization}
_LAYOUTS = {l.value: l for l in Layout}
_MODES = {m.value: m for m in TransferMode}
_STRATEGIES = {s.value: s for s in ReductionStrategy}


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty patch list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchbench",
        description=(
            "Benchmark the finite-volume patch-update kernel across execution "
            "realizations, data layouts, reduction strategies and memory-transfer "
            "modes, with optional bitwise verification against the sequential run."
        ),
    )
    parser.add_argument("--dim", type=int, choices=(2, 3), default=2)
    parser.add_argument("--patch-size", type=int, default=4, metavar="INT",
                        help="volumes per axis per patch (p)")
    parser.add_argument("--patches", type=int, default=4, metavar="INT",
                        help="patch count (T)")
    parser.add_argument("--patches-list", type=_int_list, default=None, metavar="CSV",
                        help="comma-separated T values; overrides --patches")
    parser.add_argument("--realization", default="patch-wise",
                        choices=sorted(_REALIZATIONS) + ["all"])
    parser.add_argument("--layout", default="aos", choices=sorted(_LAYOUTS) + ["all"])
    parser.add_argument("--memory", default="pooled", choices=sorted(_MODES) + ["all"])
    parser.add_argument("--reduction", default="on", choices=("on", "off", "both"))
    parser.add_argument("--reduction-strategy", default="tree", choices=sorted(_STRATEGIES))
    parser.add_argument("--samples", type=int, default=16, metavar="INT")
    parser.add_argument("--workers", type=int, default=min(8, os.cpu_count() or 1),
                        metavar="INT")
    parser.add_argument("--seed", type=int, default=0, metavar="INT")
    parser.add_argument("--gamma", type=float, default=1.4, metavar="REAL")
    parser.add_argument("--dt", type=float, default=1e-3, metavar="REAL")
    parser.add_argument("--h", type=float, default=1e-1, metavar="REAL")
    parser.add_argument("--workgroup-limit", type=int, default=1024, metavar="INT")
    parser.add_argument("--verify", action="store_true",
                        help="check each configuration bitwise against the sequential run")
    parser.add_argument("--extended", action="store_true",
                        help="append a min_total_s column to the CSV")
    parser.add_argument("--output", default="bench.csv", metavar="PATH")
    return parser


def expand_configs(args: argparse.Namespace) -> list[BenchConfig]:
    realizations = (
        list(Realization) if args.realization == "all" else [_REALIZATIONS[args.realization]]
    )
    layouts = list(Layout) if args.layout == "all" else [_LAYOUTS[args.layout]]
    modes = list(TransferMode) if args.memory == "all" else [_MODES[args.memory]]
    reductions = {"on": [True], "off": [False], "both": [True, False]}[args.reduction]
    patches = args.patches_list if args.patches_list is not None else [args.patches]
    return [
        BenchConfig(
            dim=args.dim,
            patch_size=args.patch_size,
            patch_count=t,
            layout=layout,
            realization=realization,
            transfer_mode=mode,
            reduction_strategy=_STRATEGIES[args.reduction_strategy],
            with_reduction=with_reduction,
            samples=args.samples,
            workers=args.workers,
            gamma=args.gamma,
            dt=args.dt,
            h=args.h,
            seed=args.seed,
            workgroup_limit=args.workgroup_limit,
        )
        for t, layout, realization, mode, with_reduction in product(
            patches, layouts, realizations, modes, reductions
        )
    ]


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configs = expand_configs(args)
    log = lambda line: print(line, file=sys.stderr)
    try:
        records = run_sweep(configs, verify=args.verify, log=log)
        emit_csv(records, args.output, extended=args.extended)
    except VerifyError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    except (WorkgroupLimitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(records)} records to {args.output}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
