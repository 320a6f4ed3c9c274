"""Tests for the CSV-to-figure renderers, including SVG data round trips."""

import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from asysca_plots import FigureSpec, MissingColumnError, render_sweep, render_timeseries
from asysca_plots.cli import main_sweep, main_timeseries

AGGREGATE = """t,alpha_mean,alpha_se,beta_mean,beta_se
1,1.0,0.1,2.0,0.2
2,0.8,0.1,1.9,0.2
3,0.5,0.05,1.7,0.1
4,0.4,0.05,1.6,0.1
5,0.35,0.02,1.55,0.05
"""

SWEEP = """sigma_c,variant,mse_mean,mse_se
0.01,inst,0.004,0.001
0.05,inst,0.0041,0.001
0.1,inst,0.0042,0.001
0.01,hyb,0.005,0.001
0.05,hyb,0.007,0.001
0.1,hyb,0.015,0.002
"""

QUADRATIC = """T,seed,min_pi
100,0,0.08
100,1,0.07
1000,0,0.035
1000,1,0.036
10000,0,0.024
10000,1,0.025
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def svg_series_vertices(svg_path, name):
    """Vertex coordinates of the polyline tagged series:<name>."""
    root = ET.parse(svg_path).getroot()
    ns = {"svg": "http://www.w3.org/2000/svg"}
    group = root.find(f".//svg:g[@id='series:{name}']", ns)
    assert group is not None, f"series:{name} not found in {svg_path}"
    path = group.find(".//svg:path", ns)
    nums = [float(v) for v in re.findall(r"-?\d+\.?\d*(?:[eE][+-]?\d+)?",
                                         path.get("d"))]
    pts = np.array(nums).reshape(-1, 2)
    return pts


def assert_affine_round_trip(svg_path, name, x, y, log=False):
    """The SVG polyline must be an affine image of the data points."""
    pts = svg_series_vertices(svg_path, name)
    dx = np.log10(np.asarray(x, float)) if log else np.asarray(x, float)
    dy = np.log10(np.asarray(y, float)) if log else np.asarray(y, float)
    assert len(pts) == len(dx)
    # calibrate the data->canvas affine map on the end points, then verify
    # every interior vertex
    ax = (pts[-1, 0] - pts[0, 0]) / (dx[-1] - dx[0])
    bx = pts[0, 0] - ax * dx[0]
    ay = (pts[-1, 1] - pts[0, 1]) / (dy[-1] - dy[0])
    by = pts[0, 1] - ay * dy[0]
    assert np.allclose(ax * dx + bx, pts[:, 0], atol=0.05)
    assert np.allclose(ay * dy + by, pts[:, 1], atol=0.05)


class TestTimeseries:
    def test_golden_round_trip(self, tmp_path):
        csv_path = write(tmp_path, "agg.csv", AGGREGATE)
        out = str(tmp_path / "fig.svg")
        render_timeseries(csv_path, FigureSpec(out_path=out))
        t = [1, 2, 3, 4, 5]
        assert_affine_round_trip(out, "alpha", t, [1.0, 0.8, 0.5, 0.4, 0.35])
        assert_affine_round_trip(out, "beta", t, [2.0, 1.9, 1.7, 1.6, 1.55])

    def test_series_selection(self, tmp_path):
        csv_path = write(tmp_path, "agg.csv", AGGREGATE)
        out = str(tmp_path / "fig.svg")
        render_timeseries(csv_path, FigureSpec(out_path=out, series=("beta",)))
        root = ET.parse(out).getroot()
        ns = {"svg": "http://www.w3.org/2000/svg"}
        assert root.find(".//svg:g[@id='series:beta']", ns) is not None
        assert root.find(".//svg:g[@id='series:alpha']", ns) is None

    def test_missing_column(self, tmp_path):
        csv_path = write(tmp_path, "agg.csv", AGGREGATE)
        out = str(tmp_path / "fig.svg")
        with pytest.raises(MissingColumnError) as err:
            render_timeseries(csv_path, FigureSpec(out_path=out, series=("gamma",)))
        assert err.value.column == "gamma_mean"

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            FigureSpec(out_path="fig.pdf")

    def test_png_output(self, tmp_path):
        csv_path = write(tmp_path, "agg.csv", AGGREGATE)
        out = tmp_path / "fig.png"
        render_timeseries(csv_path, FigureSpec(out_path=str(out)))
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestSweep:
    def test_golden_round_trip(self, tmp_path):
        csv_path = write(tmp_path, "sweep.csv", SWEEP)
        out = str(tmp_path / "fig.svg")
        render_sweep(csv_path, FigureSpec(out_path=out))
        assert_affine_round_trip(out, "hyb", [0.01, 0.05, 0.1],
                                 [0.005, 0.007, 0.015])

    def test_unknown_series(self, tmp_path):
        csv_path = write(tmp_path, "sweep.csv", SWEEP)
        out = str(tmp_path / "fig.svg")
        with pytest.raises(ValueError):
            render_sweep(csv_path, FigureSpec(out_path=out, series=("nope",)))

    def test_missing_group_column(self, tmp_path):
        csv_path = write(tmp_path, "quad.csv", QUADRATIC)
        out = str(tmp_path / "fig.svg")
        with pytest.raises(MissingColumnError) as err:
            render_sweep(csv_path, FigureSpec(out_path=out, x_column="T",
                                              y_column="min_pi"))
        assert err.value.column == "variant"

    def test_loglog_quadratic_with_slope(self, tmp_path):
        csv_path = write(tmp_path, "quad.csv", QUADRATIC)
        out = str(tmp_path / "fig.svg")
        render_sweep(csv_path, FigureSpec(
            out_path=out, x_column="T", y_column="min_pi", se_column="",
            group_column="", loglog=True,
        ))
        text = (tmp_path / "fig.svg").read_text()
        assert "fitted slope" in text


class TestCli:
    def test_timeseries_ok(self, tmp_path, capsys):
        csv_path = write(tmp_path, "agg.csv", AGGREGATE)
        out = str(tmp_path / "fig.svg")
        assert main_timeseries([csv_path, out]) == 0

    def test_timeseries_missing_column_exit(self, tmp_path, capsys):
        csv_path = write(tmp_path, "bad.csv", "x,alpha_mean\n1,1\n")
        assert main_timeseries([csv_path, str(tmp_path / "f.svg")]) == 2
        assert "'t'" in capsys.readouterr().err

    def test_timeseries_empty_selection(self, tmp_path, capsys):
        csv_path = write(tmp_path, "none.csv", "t,alpha\n1,1\n")
        assert main_timeseries([csv_path, str(tmp_path / "f.svg")]) == 2

    def test_sweep_ok_and_deterministic(self, tmp_path):
        csv_path = write(tmp_path, "sweep.csv", SWEEP)
        a, b = str(tmp_path / "a.svg"), str(tmp_path / "b.svg")
        assert main_sweep([csv_path, a]) == 0
        assert main_sweep([csv_path, b]) == 0
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_sweep_missing_column_named(self, tmp_path, capsys):
        csv_path = write(tmp_path, "sweep.csv", SWEEP)
        code = main_sweep([csv_path, str(tmp_path / "f.svg"), "--y", "absent"])
        assert code == 2
        assert "'absent'" in capsys.readouterr().err
