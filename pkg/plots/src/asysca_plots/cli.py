"""Command-line entry points: plot_timeseries and plot_sweep.

Both exit 0 on success and 2 on a schema violation, naming the offending
column on stderr.
"""

import argparse
import sys

from .render import FigureSpec, MissingColumnError, render_sweep, render_timeseries


def _series_tuple(arg):
    return tuple(s.strip() for s in arg.split(",") if s.strip()) if arg else ()


def _run(render, csv_path, spec):
    try:
        render(csv_path, spec)
    except MissingColumnError as exc:
        print(f"error: missing column {exc.column!r} in {csv_path}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main_timeseries(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot_timeseries",
        description="Render an aggregate time-series CSV (mean +/- SE bands)",
    )
    parser.add_argument("csv", help="aggregate CSV (t, <series>_mean, <series>_se)")
    parser.add_argument("out", help="output image (.svg or .png)")
    parser.add_argument("--series", default="",
                        help="comma-separated series names (default: all)")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    spec = FigureSpec(out_path=args.out, series=_series_tuple(args.series),
                      title=args.title)
    return _run(render_timeseries, args.csv, spec)


def main_sweep(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot_sweep",
        description="Render a long-format CSV, one marked line per group",
    )
    parser.add_argument("csv", help="long-format CSV (e.g. sweep.csv)")
    parser.add_argument("out", help="output image (.svg or .png)")
    parser.add_argument("--series", default="",
                        help="comma-separated group names (default: all)")
    parser.add_argument("--title", default="")
    parser.add_argument("--x", default="sigma_c", help="x column name")
    parser.add_argument("--y", default="mse_mean", help="y column name")
    parser.add_argument("--se", default="mse_se", help="standard-error column")
    parser.add_argument("--group", default="variant",
                        help="grouping column ('' for ungrouped data)")
    parser.add_argument("--loglog", action="store_true",
                        help="log-log axes with fitted slope annotation")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        out_path=args.out, series=_series_tuple(args.series), title=args.title,
        x_column=args.x, y_column=args.y, se_column=args.se,
        group_column=args.group, loglog=args.loglog,
    )
    return _run(render_sweep, args.csv, spec)


if __name__ == "__main__":
    sys.exit(main_timeseries())
