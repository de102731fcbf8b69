"""SVG emission determinism tests."""

import numpy as np
import pytest

from spherescope.plots import heatmap, line_plot


@pytest.fixture
def curve():
    x = np.linspace(0.0, 10.0, 200)
    return x, np.sin(x) * np.exp(-0.1 * x)


class TestLinePlot:
    def test_byte_identical_output(self, tmp_path, curve):
        x, y = curve
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        line_plot(a, [(x, y, "decay")], "time", "signal", title="demo")
        line_plot(b, [(x, y, "decay")], "time", "signal", title="demo")
        blob = a.read_bytes()
        assert blob == b.read_bytes()
        assert blob.lstrip().startswith(b"<?xml")

    def test_no_date_metadata(self, tmp_path, curve):
        x, y = curve
        path = tmp_path / "a.svg"
        line_plot(path, [(x, y, "")], "time", "signal")
        text = path.read_text()
        assert "dc:date" not in text

    def test_log_scale_and_multiple_series(self, tmp_path, curve):
        x, y = curve
        path = tmp_path / "a.svg"
        line_plot(path, [(x, np.abs(y) + 1e-3, "abs"), (x, x + 1.0, "ramp")],
                  "time", "signal", logy=True)
        assert path.stat().st_size > 0


class TestHeatmap:
    def test_byte_identical_output(self, tmp_path):
        values = np.outer(np.arange(8.0), np.arange(10.0))
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        for path in (a, b):
            heatmap(path, values, (0, 10, 0, 8), "x", "y", cbar_label="counts")
        assert a.read_bytes() == b.read_bytes()

    def test_log_scale_clips_to_positive_floor(self, tmp_path):
        values = np.array([[0.0, 1.0], [10.0, 100.0]])
        path = tmp_path / "a.svg"
        heatmap(path, values, (0, 2, 0, 2), "x", "y", log=True)
        assert path.stat().st_size > 0

    def test_log_scale_needs_a_positive_value(self, tmp_path):
        values = np.zeros((4, 4))
        with pytest.raises(ValueError, match="positive value"):
            heatmap(tmp_path / "a.svg", values, (0, 4, 0, 4), "x", "y", log=True)
