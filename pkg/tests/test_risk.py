import numpy as np
import pytest

from catpremium.ingest import LossPanel
from catpremium.risk import (
    ClassifierMetrics,
    DatasetError,
    LogisticModel,
    MetricsError,
    RiskForecast,
    auc_score,
    build_dataset,
    cross_validate,
    default_thresholds,
    evaluate_classifier,
    forecast_from_model,
    load_model,
    predict_proba,
    read_forecasts,
    save_model,
    stratified_folds,
    train_logistic,
    write_forecasts,
)
from catpremium.risk import _gradient, _objective, _sigmoid


def single_state_panel():
    years = np.arange(1990, 2006)
    losses = np.array([[float(10 * (i % 7)) for i in range(years.size)]])
    return LossPanel(["LA"], years, losses)


def auc_pair_oracle(y, p):
    pos = p[y == 1]
    neg = p[y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestDataset:
    def test_row_layout_and_label(self):
        panel = single_state_panel()
        train, test = build_dataset(panel, theta=50.0, horizon=3,
                                    split_year=2000)
        # base years 1995..2002 in total, split at 2000
        assert [k[1] for k in train.keys] == list(range(1995, 2001))
        assert [k[1] for k in test.keys] == [2001, 2002]
        assert train.feature_names == [
            "state=LA", "loss_t", "loss_lag1", "loss_lag2", "loss_lag3",
            "loss_lag4", "loss_lag5"]
        # base 1995: current is losses[5]=50, lag1=40 ... lag5=0
        row = train.X[0]
        assert row.tolist() == [1.0, 50.0, 40.0, 30.0, 20.0, 10.0, 0.0]
        # years 1996..1998 hold 60, 0, 10 -> max 60 >= 50
        assert train.y[0] == 1.0

    def test_label_monotone_in_theta_and_horizon(self):
        rng = np.random.default_rng(2)
        losses = rng.uniform(0, 100, size=(3, 18))
        panel = LossPanel(["A", "B", "C"], np.arange(2000, 2018), losses)
        lo, _ = build_dataset(panel, theta=20.0, horizon=3, split_year=2012)
        hi, _ = build_dataset(panel, theta=60.0, horizon=3, split_year=2012)
        assert np.all(hi.y <= lo.y)
        near, _ = build_dataset(panel, theta=40.0, horizon=2, split_year=2012)
        far, _ = build_dataset(panel, theta=40.0, horizon=4, split_year=2012)
        # compare on common keys
        common = set(near.keys) & set(far.keys)
        near_map = dict(zip(near.keys, near.y))
        far_map = dict(zip(far.keys, far.y))
        for key in common:
            assert far_map[key] >= near_map[key]

    def test_insufficient_history(self):
        panel = LossPanel(["LA"], np.arange(2000, 2006),
                          np.ones((1, 6)))
        with pytest.raises(DatasetError):
            build_dataset(panel, theta=1.0, horizon=3, split_year=2003)

    def test_bad_split_years(self):
        panel = single_state_panel()
        with pytest.raises(DatasetError):
            build_dataset(panel, 50.0, 3, split_year=1990)
        with pytest.raises(DatasetError):
            build_dataset(panel, 50.0, 3, split_year=2004)

    def test_thresholds_are_percentiles(self):
        panel = LossPanel(["A", "B"], np.arange(2000, 2005),
                          np.array([[1.0, 2.0, 3.0, 4.0, 5.0],
                                    [6.0, 7.0, 8.0, 9.0, 10.0]]))
        got = default_thresholds(panel, 2000, 2004, levels=(50.0, 90.0))
        flat = np.arange(1.0, 11.0)
        assert got[0] == pytest.approx(np.percentile(flat, 50))
        assert got[1] == pytest.approx(np.percentile(flat, 90))


class TestTraining:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 4))
        y = (rng.uniform(size=40) < 0.4).astype(float)
        w = rng.normal(size=4) * 0.5
        b = 0.3
        lam = 0.7
        gw, gb = _gradient(X, y, w, b, lam)
        eps = 1e-6
        for j in range(4):
            up = w.copy()
            up[j] += eps
            dn = w.copy()
            dn[j] -= eps
            fd = (_objective(X, y, up, b, lam)
                  - _objective(X, y, dn, b, lam)) / (2 * eps)
            assert gw[j] == pytest.approx(fd, abs=1e-6)
        fd_b = (_objective(X, y, w, b + eps, lam)
                - _objective(X, y, w, b - eps, lam)) / (2 * eps)
        assert gb == pytest.approx(fd_b, abs=1e-6)

    def test_separable_data_perfect_auc(self):
        rng = np.random.default_rng(9)
        X = np.vstack([rng.normal(-3, 0.5, size=(30, 2)),
                       rng.normal(3, 0.5, size=(30, 2))])
        y = np.concatenate([np.zeros(30), np.ones(30)])
        model = train_logistic(X, y, C=1.0)
        probs = predict_proba(model, X)
        assert auc_score(y, probs) == 1.0

    def test_objective_trace_monotone(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(80, 5))
        y = (X[:, 0] + 0.5 * rng.normal(size=80) > 0).astype(float)
        model = train_logistic(X, y, C=0.5)
        trace = np.array(model.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert model.converged

    def test_stronger_penalty_shrinks_weights(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(60, 3))
        y = (X @ np.array([2.0, -1.0, 0.5]) > 0).astype(float)
        tight = train_logistic(X, y, C=0.01)
        loose = train_logistic(X, y, C=100.0)
        assert np.linalg.norm(tight.weights) < np.linalg.norm(loose.weights)

    def test_c_zero_means_no_penalty(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(50, 2))
        y = (rng.uniform(size=50) < 0.5).astype(float)
        unpen = train_logistic(X, y, C=0.0)
        # objective at the fit must equal the bare log-loss
        Xs = (X - unpen.feature_mean) / unpen.feature_std
        assert _objective(Xs, y, unpen.weights, unpen.intercept, 0.0) == \
            pytest.approx(unpen.objective_trace[-1])

    def test_constant_column_tolerated(self):
        X = np.column_stack([np.ones(20), np.arange(20.0)])
        y = (np.arange(20) > 9).astype(float)
        model = train_logistic(X, y, C=1.0)
        assert np.isfinite(model.weights).all()
        assert model.feature_std[0] == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(DatasetError):
            train_logistic(np.ones((3, 2)), np.ones(4))


class TestPrediction:
    def test_probabilities_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(50, 3))
        y = (rng.uniform(size=50) < 0.5).astype(float)
        model = train_logistic(X, y, C=1.0)
        probs = predict_proba(model, rng.normal(size=(200, 3)) * 3)
        assert np.all(probs > 0.0)
        assert np.all(probs < 1.0)

    def test_extreme_intercept_saturates(self):
        model = LogisticModel(weights=np.zeros(1), intercept=1e3, C=1.0,
                              feature_mean=np.zeros(1),
                              feature_std=np.ones(1),
                              feature_names=["f0"], converged=True, n_iter=0)
        assert predict_proba(model, np.array([[0.0]]))[0] == 1.0

    def test_sigmoid_symmetry(self):
        z = np.linspace(-30, 30, 101)
        s = _sigmoid(z)
        assert s[50] == 0.5
        assert np.allclose(s + s[::-1], 1.0, atol=1e-12)


class TestAuc:
    def test_matches_pair_oracle_with_ties(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            n = int(rng.integers(5, 40))
            y = (rng.uniform(size=n) < 0.5).astype(float)
            if y.sum() in (0, n):
                y[0] = 1.0 - y[0]
            # quantized probabilities force ties
            p = np.round(rng.uniform(size=n), 1)
            assert auc_score(y, p) == pytest.approx(auc_pair_oracle(y, p))

    def test_single_class_rejected(self):
        with pytest.raises(MetricsError):
            auc_score(np.ones(5), np.linspace(0, 1, 5))


class TestMetrics:
    def test_known_confusion(self):
        y = np.array([1, 1, 0, 0, 1, 0])
        p = np.array([0.9, 0.4, 0.1, 0.7, 0.8, 0.2])
        m = evaluate_classifier(y, p, cutoff=0.5)
        # predictions: 1,0,0,1,1,0 -> tp=2 fn=1 fp=1 tn=2
        assert m.accuracy == pytest.approx(4 / 6)
        assert m.recall == pytest.approx(2 / 3)
        assert m.precision == pytest.approx(2 / 3)
        assert m.balanced_accuracy == pytest.approx(0.5 * (2 / 3 + 2 / 3))
        assert not m.no_positive_predictions

    def test_no_positive_predictions_flagged(self):
        y = np.array([1, 0, 1, 0])
        p = np.array([0.1, 0.2, 0.3, 0.4])
        m = evaluate_classifier(y, p, cutoff=0.9)
        assert m.no_positive_predictions
        assert m.precision == 0.0
        assert m.f1 == 0.0


class TestCrossValidation:
    def test_folds_are_stratified_partition(self):
        y = np.concatenate([np.ones(9), np.zeros(21)])
        folds = stratified_folds(y, 3, seed=0)
        all_idx = np.sort(np.concatenate(folds))
        assert np.array_equal(all_idx, np.arange(30))
        for fold in folds:
            assert y[fold].sum() == 3

    def test_tie_prefers_smaller_c(self):
        rng = np.random.default_rng(27)
        X = np.vstack([rng.normal(-4, 0.3, size=(24, 2)),
                       rng.normal(4, 0.3, size=(24, 2))])
        y = np.concatenate([np.zeros(24), np.ones(24)])
        result = cross_validate(X, y, c_grid=[0.2, 1.0, 5.0], seed=1)
        # separable: every C scores AUC 1.0
        assert set(result.mean_auc.values()) == {1.0}
        assert result.best_C == 0.2

    def test_all_single_class_folds_rejected(self):
        X = np.arange(8.0).reshape(-1, 1)
        y = np.zeros(8)
        with pytest.raises(MetricsError):
            cross_validate(X, y, c_grid=[1.0], n_folds=2, seed=0)

    def test_degenerate_folds_excluded_but_run_continues(self):
        X = np.arange(8.0).reshape(-1, 1)
        # a single positive lands in one fold; the all-negative fold is
        # excluded and scoring proceeds on the remaining one
        y = np.array([1, 0, 0, 0, 0, 0, 0, 0.0])
        result = cross_validate(X, y, c_grid=[1.0], n_folds=2, seed=0)
        assert result.n_folds_used == 1

    def test_deterministic(self):
        rng = np.random.default_rng(31)
        X = rng.normal(size=(40, 3))
        y = (X[:, 0] > 0).astype(float)
        a = cross_validate(X, y, [0.5, 2.0], seed=7)
        b = cross_validate(X, y, [0.5, 2.0], seed=7)
        assert a == b


class TestForecastIO:
    def test_round_trip(self, tmp_path):
        fcs = [RiskForecast("LA", 2012, 5, 1.5e7, 0.42),
               RiskForecast("TX", 2012, 5, 1.5e7, 0.03)]
        path = tmp_path / "forecasts.csv"
        write_forecasts(fcs, path)
        back = read_forecasts(path)
        assert back == fcs

    def test_probability_validated(self):
        with pytest.raises(ValueError):
            RiskForecast("LA", 2012, 5, 1.0, 1.7)

    def test_model_round_trip(self, tmp_path):
        rng = np.random.default_rng(33)
        X = rng.normal(size=(30, 3))
        y = (X[:, 1] > 0).astype(float)
        model = train_logistic(X, y, C=2.0,
                               feature_names=["a", "b", "c"])
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(back.weights, model.weights)
        assert back.intercept == model.intercept
        assert back.feature_names == ["a", "b", "c"]
        probe = rng.normal(size=(5, 3))
        assert np.array_equal(predict_proba(back, probe),
                              predict_proba(model, probe))

    def test_forecast_from_model_keys(self):
        panel = single_state_panel()
        train, test = build_dataset(panel, theta=50.0, horizon=3,
                                    split_year=2000)
        model = train_logistic(train.X, train.y, C=1.0)
        fcs = forecast_from_model(model, test)
        assert [(f.state, f.base_year) for f in fcs] == test.keys
        assert all(0.0 <= f.probability <= 1.0 for f in fcs)
        assert all(f.theta == 50.0 and f.horizon == 3 for f in fcs)
