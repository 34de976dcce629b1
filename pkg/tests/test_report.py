import pytest

from catpremium.evaluation import FrontierRow
from catpremium.report import render_frontier


def rows():
    out = []
    for g in (0.5, 1.0, 1.5):
        out.append(FrontierRow("ro1", g, int(4 - 2 * g), 100.0 * g, 10.0))
    out.append(FrontierRow("ro1", 2.0, None, None, None, error="boom"))
    for g in (0.5, 1.0, 1.5, 2.0):
        out.append(FrontierRow("cma", g, 5, -40.0, 80.0))
    return out


class TestRenderFrontier:
    def test_writes_both_figures(self, tmp_path):
        paths = render_frontier(rows(), tmp_path / "figs")
        assert [p.name for p in paths] == ["frontier.png", "sweep_curves.png"]
        for p in paths:
            assert p.exists()
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_all_failed_rows_rejected(self, tmp_path):
        bad = [FrontierRow("ro1", 0.5, None, None, None, error="x")]
        with pytest.raises(ValueError, match="no successful"):
            render_frontier(bad, tmp_path)

    def test_rerun_same_bytes(self, tmp_path):
        first = render_frontier(rows(), tmp_path / "a")
        second = render_frontier(rows(), tmp_path / "b")
        for p1, p2 in zip(first, second):
            assert p1.read_bytes() == p2.read_bytes()
