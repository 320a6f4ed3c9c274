"""Figure rendering from asysca CSV outputs.

Two renderers cover the result files:

* ``render_timeseries`` -- aggregate time-series CSV with header
  ``t, <series>_mean, <series>_se, ...``; draws one line per series with a
  mean +/- standard-error band.
* ``render_sweep`` -- long-format CSV (one row per x/group combination,
  e.g. the perturbation sweep ``sigma_c, variant, mse_mean, mse_se``);
  draws one marked line per group. In log-log mode a least-squares slope
  of the group means is annotated, which suits the quadratic rate
  benchmark.

Every plotted line carries an SVG group id ``series:<name>`` so the
rendered data can be re-extracted and verified.
"""

import csv
from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg")
# deterministic output: stable SVG element ids across processes
matplotlib.rcParams["svg.hashsalt"] = "asysca-plots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


class MissingColumnError(ValueError):
    """A required column is absent from the CSV header."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column {column!r}")


@dataclass
class FigureSpec:
    out_path: str
    series: tuple = ()          # empty tuple = all series found in the file
    title: str = ""
    x_label: str = ""
    y_label: str = "MSE"
    # column names for long-format (sweep-style) inputs
    x_column: str = "sigma_c"
    y_column: str = "mse_mean"
    se_column: str = "mse_se"
    group_column: str = "variant"
    loglog: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.series = tuple(self.series)
        fmt = self.out_path.rsplit(".", 1)
        if len(fmt) != 2 or fmt[1].lower() not in ("svg", "png"):
            raise ValueError("out_path must end in .svg or .png")


def read_csv_columns(path):
    """CSV as {column: list of strings}; empty cells stay empty strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV")
        cols = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(cell)
    return cols


def _floats(cells):
    return np.array([float(c) if c != "" else np.nan for c in cells])


def _finish(fig, ax, spec):
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    if spec.out_path.lower().endswith(".svg"):
        # omit the timestamp so identical inputs give identical bytes
        fig.savefig(spec.out_path, metadata={"Date": None})
    else:
        fig.savefig(spec.out_path)
    plt.close(fig)


def render_timeseries(csv_path, spec):
    """Mean line plus standard-error band per series; writes spec.out_path."""
    cols = read_csv_columns(csv_path)
    if "t" not in cols:
        raise MissingColumnError("t")
    names = spec.series or tuple(
        c[: -len("_mean")] for c in cols if c.endswith("_mean")
    )
    if not names:
        raise ValueError(f"{csv_path}: no series selected and none found")
    t = _floats(cols["t"])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in names:
        mean_col, se_col = f"{name}_mean", f"{name}_se"
        for col in (mean_col, se_col):
            if col not in cols:
                raise MissingColumnError(col)
        mean, se = _floats(cols[mean_col]), _floats(cols[se_col])
        (line,) = ax.plot(t, mean, label=name)
        line.set_gid(f"series:{name}")
        band = ax.fill_between(t, mean - se, mean + se, alpha=0.2,
                               color=line.get_color())
        band.set_gid(f"band:{name}")
    ax.set_xlabel(spec.x_label or "time slot t")
    ax.set_ylabel(spec.y_label)
    _finish(fig, ax, spec)
    return spec.out_path


def render_sweep(csv_path, spec):
    """One marked line per group from a long-format CSV; writes spec.out_path."""
    cols = read_csv_columns(csv_path)
    for col in (spec.x_column, spec.y_column):
        if col not in cols:
            raise MissingColumnError(col)
    has_group = bool(spec.group_column)
    if has_group and spec.group_column not in cols:
        raise MissingColumnError(spec.group_column)
    x = _floats(cols[spec.x_column])
    y = _floats(cols[spec.y_column])
    se = _floats(cols[spec.se_column]) if spec.se_column in cols else None

    if has_group:
        groups = np.asarray(cols[spec.group_column])
        names = spec.series or tuple(dict.fromkeys(groups))
        missing = [n for n in names if n not in set(groups)]
        if missing:
            raise ValueError(f"{csv_path}: unknown series {missing}")
    else:
        names = ("all",)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in names:
        mask = groups == name if has_group else np.ones(len(x), bool)
        order = np.argsort(x[mask], kind="stable")
        xs, ys = x[mask][order], y[mask][order]
        (line,) = ax.plot(xs, ys, marker="o", label=name)
        line.set_gid(f"series:{name}")
        if se is not None and not np.all(np.isnan(se[mask])):
            ax.errorbar(xs, ys, yerr=se[mask][order], fmt="none",
                        ecolor=line.get_color(), alpha=0.6)
    if spec.loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
        valid = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
        if valid.sum() >= 2:
            slope = float(np.polyfit(np.log10(x[valid]), np.log10(y[valid]), 1)[0])
            ax.annotate(f"fitted slope {slope:.3f}", xy=(0.05, 0.05),
                        xycoords="axes fraction")
    ax.set_xlabel(spec.x_label or spec.x_column)
    ax.set_ylabel(spec.y_label)
    _finish(fig, ax, spec)
    return spec.out_path
