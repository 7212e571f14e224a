#!/usr/bin/env python3
"""Render benchmark CSVs as log-log scaling figures.

Reads the harness CSV schema and draws normalized cost against the patch
count T, one curve per patch size p, one panel (figure) per facet
combination such as (realization, transfer_mode). Rows with the reduction
enabled are drawn dashed, rows without it solid. Values are plotted exactly
as they appear in the CSV; --ymax only clamps the axis, never the data.

Usage:
    python plot.py --files bench.csv [more.csv ...] --dim 2 \
        --metric time_per_volume_update_s --facet realization,transfer_mode \
        --out figure.png [--ymax 1e-4]
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

DEFAULT_METRIC = "time_per_volume_update_s"
DEFAULT_FACETS = ("realization", "transfer_mode")


class MissingColumnError(KeyError):
    """A requested column does not exist in the CSV header."""


class NoDataError(ValueError):
    """The selection matches no CSV rows."""


@dataclass
class PlotSpec:
    files: list[str]
    dim: int | None = None
    metric: str = DEFAULT_METRIC
    facets: tuple[str, ...] = DEFAULT_FACETS
    out: str = "plot.png"
    ymax: float | None = None
    logx: bool = True
    logy: bool = True


def read_rows(files: list[str], required: set[str]) -> list[dict]:
    rows: list[dict] = []
    for path in files:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            for column in sorted(required):
                if column not in header:
                    raise MissingColumnError(f"column {column!r} missing from {path}")
            rows.extend(reader)
    return rows


def facet_key(row: dict, facets: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(row[f] for f in facets)


def build_figures(spec: PlotSpec) -> list[tuple[tuple[str, ...], plt.Figure]]:
    """One (facet-combination, figure) pair per facet value combination.

    Series are sorted by p; within a series the rows are sorted by T. The
    plotted y values are the CSV values verbatim.
    """
    required = {"dim", "p", "T", "with_reduction", spec.metric, *spec.facets}
    rows = read_rows(spec.files, required)
    if spec.dim is not None:
        rows = [r for r in rows if int(r["dim"]) == spec.dim]
    if not rows:
        raise NoDataError("no data rows after the dim filter")

    groups: dict[tuple[str, ...], list[dict]] = {}
    for row in rows:
        groups.setdefault(facet_key(row, spec.facets), []).append(row)

    figures = []
    for key in sorted(groups):
        subset = groups[key]
        if not subset:
            raise NoDataError(f"no data for facet {key}")
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        p_values = sorted({int(r["p"]) for r in subset})
        for p in p_values:
            for with_reduction, style in ((False, "-"), (True, "--")):
                wanted = "true" if with_reduction else "false"
                series = [
                    r
                    for r in subset
                    if int(r["p"]) == p and r["with_reduction"].lower() == wanted
                ]
                if not series:
                    continue
                series.sort(key=lambda r: int(r["T"]))
                xs = [int(r["T"]) for r in series]
                ys = [float(r[spec.metric]) for r in series]
                ax.plot(
                    xs,
                    ys,
                    style,
                    marker="o",
                    markersize=3,
                    label=f"p={p}" if not with_reduction else None,
                )
        if spec.logx:
            ax.set_xscale("log", base=2)
        if spec.logy:
            ax.set_yscale("log")
        if spec.ymax is not None:
            ax.set_ylim(top=spec.ymax)
        ax.set_xlabel("patches T")
        ax.set_ylabel(spec.metric)
        ax.set_title(", ".join(f"{f}={v}" for f, v in zip(spec.facets, key)))
        ax.legend(loc="best")
        ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
        fig.tight_layout()
        figures.append((key, fig))
    return figures


def _facet_slug(key: tuple[str, ...]) -> str:
    return "-".join(v.replace("/", "_").replace(" ", "_") for v in key)


def render(spec: PlotSpec) -> list[Path]:
    """Write one image per facet combination; returns the written paths.

    A single combination lands exactly at ``spec.out``; multiple
    combinations get the combination appended to the stem.
    """
    figures = build_figures(spec)
    out = Path(spec.out)
    written = []
    for key, fig in figures:
        if len(figures) == 1:
            path = out
        else:
            path = out.with_name(f"{out.stem}__{_facet_slug(key)}{out.suffix}")
        metadata = {"Date": None} if path.suffix.lower() == ".svg" else None
        fig.savefig(path, metadata=metadata)
        plt.close(fig)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot.py", description="Benchmark CSV to log-log scaling figures."
    )
    parser.add_argument("--files", nargs="+", required=True, metavar="CSV")
    parser.add_argument("--dim", type=int, default=None, metavar="INT")
    parser.add_argument("--metric", default=DEFAULT_METRIC, metavar="NAME")
    parser.add_argument(
        "--facet",
        default=",".join(DEFAULT_FACETS),
        metavar="COLS",
        help="comma-separated facet columns (one figure per value combination)",
    )
    parser.add_argument("--out", default="plot.png", metavar="PATH")
    parser.add_argument("--ymax", type=float, default=None, metavar="REAL",
                        help="clamp the y axis (never the data)")
    parser.add_argument("--linear-x", action="store_true")
    parser.add_argument("--linear-y", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        files=args.files,
        dim=args.dim,
        metric=args.metric,
        facets=tuple(f.strip() for f in args.facet.split(",") if f.strip()),
        out=args.out,
        ymax=args.ymax,
        logx=not args.linear_x,
        logy=not args.linear_y,
    )
    try:
        written = render(spec)
    except MissingColumnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoDataError as exc:
        print(f"error: no data ({exc})", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
