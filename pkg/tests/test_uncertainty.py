import math

import numpy as np
import pytest

from catpremium.uncertainty import (
    CltSet,
    MlSet,
    clt_bound,
    export_bounds,
    ml_bound,
    sample_clt_scenarios,
)


class TestCltBound:
    def test_closed_form(self):
        s = clt_bound("LA", mean=100.0, std=50.0, horizon=4, gamma2=2.0)
        assert s.bound == pytest.approx(4 * 100 + 2 * 50 * 2.0)
        assert s.total_lower == pytest.approx(400 - 200)

    def test_table_scale_inputs(self):
        # annual mean 45,084 and std 58,467 over a 10 year horizon
        s = clt_bound("LA", mean=45084.0, std=58467.0, horizon=10, gamma2=1.0)
        exact = 10 * 45084.0 + 58467.0 * math.sqrt(10)
        assert s.bound == pytest.approx(exact, rel=1e-12)
        assert s.bound == pytest.approx(635727.0, abs=3.0)

    def test_zero_gamma_collapses_to_mean(self):
        s = clt_bound("TX", mean=10.0, std=99.0, horizon=5, gamma2=0.0)
        assert s.bound == 50.0
        assert s.total_lower == 50.0

    def test_clamped_at_zero(self):
        s = clt_bound("WY", mean=0.0, std=0.0, horizon=3, gamma2=1.5)
        assert s.bound == 0.0

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            CltSet("XX", 3, -1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            CltSet("XX", 3, 1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            CltSet("XX", 0, 1.0, 1.0, 1.0)

    def test_monotone_in_gamma2(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            mean = float(rng.uniform(0, 1000))
            std = float(rng.uniform(0, 300))
            T = int(rng.integers(1, 12))
            g_lo, g_hi = sorted(rng.uniform(0, 3, size=2))
            lo = clt_bound("S", mean, std, T, g_lo)
            hi = clt_bound("S", mean, std, T, g_hi)
            assert hi.bound >= lo.bound - 1e-12


class TestMlBound:
    def test_plain_product(self):
        s = ml_bound(theta=1000.0, probability=0.25, margin=0.1)
        assert s.bound == pytest.approx(1000.0 * 0.35)

    def test_saturates_at_theta(self):
        s = ml_bound(theta=500.0, probability=0.95, margin=0.1)
        assert s.bound == 500.0

    def test_zero_probability_keeps_margin(self):
        s = ml_bound(theta=200.0, probability=0.0, margin=0.1)
        assert s.bound == pytest.approx(20.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ml_bound(theta=0.0, probability=0.5, margin=0.1)
        with pytest.raises(ValueError):
            ml_bound(theta=10.0, probability=1.5, margin=0.1)
        with pytest.raises(ValueError):
            ml_bound(theta=10.0, probability=0.5, margin=-0.1)

    def test_bound_never_exceeds_theta(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            s = ml_bound(theta=float(rng.uniform(1, 1e6)),
                         probability=float(rng.uniform(0, 1)),
                         margin=float(rng.uniform(0, 1)))
            assert 0.0 <= s.bound <= s.theta + 1e-12


class TestScenarioSampling:
    def test_first_row_is_worst_vertex(self):
        s = clt_bound("FL", mean=40.0, std=10.0, horizon=5, gamma2=1.0)
        paths = sample_clt_scenarios(s, 100, seed=0)
        assert paths.shape == (100, 5)
        assert paths[0] == pytest.approx(np.full(5, s.bound / 5))

    def test_paths_stay_inside_band(self):
        rng = np.random.default_rng(77)
        for trial in range(20):
            s = clt_bound("S", float(rng.uniform(0, 500)),
                          float(rng.uniform(0, 200)),
                          int(rng.integers(1, 10)),
                          float(rng.uniform(0, 2.5)))
            paths = sample_clt_scenarios(s, 50, seed=trial)
            assert np.all(paths >= 0.0)
            totals = paths.sum(axis=1)
            tol = 1e-9 * max(1.0, s.bound)
            assert np.all(totals <= s.bound + tol)
            assert np.all(totals >= max(0.0, s.total_lower) - tol)
            for row in paths:
                assert s.contains(row)

    def test_deterministic_for_seed(self):
        s = clt_bound("FL", 40.0, 10.0, 5, 1.0)
        a = sample_clt_scenarios(s, 30, seed=4)
        b = sample_clt_scenarios(s, 30, seed=4)
        assert np.array_equal(a, b)

    def test_membership_checker_rejects_outliers(self):
        s = clt_bound("FL", 40.0, 10.0, 4, 1.0)
        assert not s.contains([1e9, 0, 0, 0])
        assert not s.contains([-1.0, 50, 50, 50])
        assert not s.contains([1.0, 1.0])  # wrong horizon


class TestExport:
    def test_csv_round_readable(self, tmp_path):
        clt = [clt_bound("LA", 10.0, 5.0, 3, 0.5)]
        ml = [ml_bound(100.0, 0.2, 0.1, horizon=5, state="LA")]
        out = tmp_path / "bounds.csv"
        export_bounds(clt, ml, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("state,family,horizon")
        assert len(lines) == 3
        assert lines[1].split(",")[1] == "clt"
        assert lines[2].split(",")[1] == "ml"
        assert float(lines[2].split(",")[-1]) == pytest.approx(100 * 0.3)
