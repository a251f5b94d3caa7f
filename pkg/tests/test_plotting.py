import re
import xml.etree.ElementTree as ET

import pytest

from bellmanops.plotting import PlotDataError, emit_plot, line_chart_svg, read_series_csv

SVG = "{http://www.w3.org/2000/svg}"


def polylines(svg):
    return ET.fromstring(svg).findall(f"{SVG}polyline")


class TestLineChart:
    def test_single_series_vertices(self):
        svg = line_chart_svg([1, 2, 3], {"bellman": [0.0, 1.0, 0.5]})
        lines = polylines(svg)
        assert len(lines) == 1
        assert len(lines[0].get("points").split()) == 3

    def test_legend_names(self):
        series = {name: [1.0, 2.0] for name in ("bellman", "consistent", "advantage")}
        root = ET.fromstring(line_chart_svg([1, 2], series))
        legend = [t.text for t in root.iter(f"{SVG}text") if t.get("class") == "legend"]
        assert legend == ["bellman", "consistent", "advantage"]
        assert len(root.findall(f"{SVG}polyline")) == 3

    def test_axis_labels_and_title_escaped(self):
        svg = line_chart_svg([0, 1], {"a": [1.0, 1.0]}, title="x < y")
        assert "x &lt; y" in svg and "smoothed average reward" in svg and "episode" in svg

    def test_points_inside_canvas(self):
        svg = line_chart_svg(list(range(50)), {"a": [(-1) ** i * i for i in range(50)]})
        root = ET.fromstring(svg)
        w, h = float(root.get("width")), float(root.get("height"))
        for pair in polylines(svg)[0].get("points").split():
            x, y = map(float, pair.split(","))
            assert 0 <= x <= w and 0 <= y <= h

    def test_non_finite_points_skipped(self):
        svg = line_chart_svg([1, 2, 3], {"a": [1.0, float("nan"), 2.0]})
        assert len(polylines(svg)[0].get("points").split()) == 2

    @pytest.mark.parametrize(
        "x,series",
        [([], {"a": []}), ([1], {}), ([1, 2], {"a": [1.0]}), ([1], {"a": [float("inf")]})],
    )
    def test_bad_data(self, x, series):
        with pytest.raises(PlotDataError):
            line_chart_svg(x, series)


class TestFiles:
    def test_round_trip(self, tmp_path):
        src = tmp_path / "aggregate.csv"
        src.write_text("episode,bellman,advantage\n1,-200.0,-199.0\n2,-198.5,-197.0\n")
        x, cols = read_series_csv(src)
        assert x == [1.0, 2.0] and cols["advantage"] == [-199.0, -197.0]
        out = emit_plot(src, tmp_path / "plot.svg", title="run")
        assert len(polylines(out.read_text())) == 2

    def test_empty_csv_writes_nothing(self, tmp_path):
        src = tmp_path / "aggregate.csv"
        src.write_text("episode,bellman\n")
        with pytest.raises(PlotDataError, match="no data rows"):
            emit_plot(src, tmp_path / "plot.svg")
        assert not (tmp_path / "plot.svg").exists()

    def test_bad_row_names_line(self, tmp_path):
        src = tmp_path / "aggregate.csv"
        src.write_text("episode,bellman\n1,2.0\n2,oops\n")
        with pytest.raises(PlotDataError, match=re.escape(":3:")):
            read_series_csv(src)
