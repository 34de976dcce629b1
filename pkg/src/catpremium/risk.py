"""Severe-flood probability models from state loss histories.

A "severe flood within k years" indicator is learned from lagged
state-year losses with L2-regularized logistic regression, fit by
damped Newton iterations.  The resulting probability feeds the
forecast-driven loss bound in the pricing stage.  Externally produced
probabilities (for example from a gradient-boosted model trained
elsewhere) can be loaded from CSV through the same forecast container.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .ingest import LossPanel

logger = logging.getLogger(__name__)

N_LAGS = 5


class DatasetError(ValueError):
    """The panel cannot support the requested dataset."""


class MetricsError(ValueError):
    """A metric is undefined for the given labels or predictions."""


@dataclass
class RiskDataset:
    """Design matrix plus labels for one (theta, horizon) task."""

    X: np.ndarray
    y: np.ndarray
    keys: list[tuple[str, int]]  # (state, base_year) per row
    feature_names: list[str]
    theta: float
    horizon: int

    @property
    def n_rows(self) -> int:
        return self.y.size


def build_dataset(panel: LossPanel, theta: float, horizon: int,
                  split_year: int) -> tuple[RiskDataset, RiskDataset]:
    """Assemble train/test datasets from a gap-free loss panel.

    Each row describes one state and base year: a state one-hot block,
    the base year's loss, and the five preceding annual losses.  The
    label is 1 when any of the `horizon` following years reaches the
    severity threshold `theta`.  Rows with base year <= split_year form
    the training set; later base years form the test set.
    """
    if theta <= 0:
        raise DatasetError("severity threshold must be positive")
    if horizon < 1:
        raise DatasetError("forecast horizon must be at least 1 year")
    if np.isnan(panel.losses).any():
        raise DatasetError("panel has missing cells; interpolate first")
    years = panel.years
    first_base = int(years[0]) + N_LAGS
    last_base = int(years[-1]) - horizon
    if first_base > last_base:
        raise DatasetError(
            f"panel years {years[0]}..{years[-1]} cannot support"
            f" {N_LAGS} lags plus a {horizon}-year lookahead")

    n_states = len(panel.states)
    feature_names = ([f"state={s}" for s in panel.states]
                     + ["loss_t"] + [f"loss_lag{k}" for k in range(1, N_LAGS + 1)])
    rows, labels, keys = [], [], []
    for i, state in enumerate(panel.states):
        series = panel.losses[i]
        for base in range(first_base, last_base + 1):
            j = base - int(years[0])
            onehot = np.zeros(n_states)
            onehot[i] = 1.0
            lags = series[j - N_LAGS:j + 1][::-1]  # current first, then lags
            rows.append(np.concatenate([onehot, lags]))
            future = series[j + 1:j + 1 + horizon]
            labels.append(1.0 if future.max() >= theta else 0.0)
            keys.append((state, base))
    X = np.array(rows)
    y = np.array(labels)
    keys_arr = keys
    base_years = np.array([k[1] for k in keys_arr])
    train_mask = base_years <= split_year
    if not train_mask.any():
        raise DatasetError(f"no training rows at or before {split_year}")
    if train_mask.all():
        raise DatasetError(f"no test rows after {split_year}")

    def subset(mask):
        idx = np.flatnonzero(mask)
        return RiskDataset(X[idx], y[idx], [keys_arr[k] for k in idx],
                           feature_names, theta, horizon)

    return subset(train_mask), subset(~train_mask)


def default_thresholds(panel: LossPanel, start_year: int, end_year: int,
                       levels=(90.0, 95.0, 99.0)) -> list[float]:
    """Loss percentiles over all state-years in the window, used as
    severity thresholds (linear interpolation between order stats)."""
    j0 = panel.year_index(start_year)
    j1 = panel.year_index(end_year)
    window = panel.losses[:, j0:j1 + 1]
    if np.isnan(window).any():
        raise DatasetError("threshold window contains missing cells")
    flat = window.ravel()
    return [float(np.percentile(flat, lv)) for lv in levels]


# ---------------------------------------------------------------------------
# logistic regression


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    C: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    feature_names: list[str]
    converged: bool
    n_iter: int
    objective_trace: list[float] = field(default_factory=list)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _objective(Xs, y, w, b, lam):
    z = Xs @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss + 0.5 * lam * float(w @ w)


def _gradient(Xs, y, w, b, lam):
    z = Xs @ w + b
    resid = _sigmoid(z) - y
    gw = Xs.T @ resid / y.size + lam * w
    gb = float(resid.mean())
    return gw, gb


def train_logistic(X: np.ndarray, y: np.ndarray, C: float = 1.0,
                   max_iter: int = 500, tol: float = 1e-8,
                   feature_names: list[str] | None = None) -> LogisticModel:
    """Fit by Newton's method with backtracking.

    Features are standardized internally (constant columns get unit
    scale).  The penalty is ||w||^2 / (2*C*n) on the standardized
    weights, intercept exempt; C = 0 disables it.  Iterations stop when
    the gradient's max norm falls below `tol`.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DatasetError("X and y shapes do not align")
    if C < 0:
        raise ValueError("C must be nonnegative")
    n, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    Xs = (X - mu) / sd
    lam = 0.0 if C == 0.0 else 1.0 / (C * n)

    w = np.zeros(d)
    b = 0.0
    trace = [_objective(Xs, y, w, b, lam)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gw, gb = _gradient(Xs, y, w, b, lam)
        gnorm = max(float(np.abs(gw).max(initial=0.0)), abs(gb))
        if gnorm <= tol:
            converged = True
            break
        z = Xs @ w + b
        s = _sigmoid(z)
        weights = s * (1.0 - s)
        Xa = np.hstack([Xs, np.ones((n, 1))])
        H = (Xa * weights[:, None]).T @ Xa / n
        H[np.diag_indices(d)] += lam
        H[np.diag_indices(d + 1)] += 1e-12  # keep the solve well posed
        g = np.append(gw, gb)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = -g
        if g @ step > 0:  # not a descent direction, fall back
            step = -g
        t = 1.0
        base = trace[-1]
        slope = float(g @ step)
        while t >= 1e-12:
            cand = _objective(Xs, y, w + t * step[:d], b + t * step[d], lam)
            if cand <= base + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            logger.debug("line search exhausted at iteration %d", it)
            break
        w = w + t * step[:d]
        b = b + t * step[d]
        trace.append(cand)
    return LogisticModel(weights=w, intercept=b, C=C, feature_mean=mu,
                         feature_std=sd,
                         feature_names=feature_names or [f"f{j}" for j in
                                                         range(d)],
                         converged=converged, n_iter=it,
                         objective_trace=trace)


def predict_proba(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xs = (X - model.feature_mean) / model.feature_std
    return _sigmoid(Xs @ model.weights + model.intercept)


# ---------------------------------------------------------------------------
# evaluation


def auc_score(y: np.ndarray, probs: np.ndarray) -> float:
    """Area under the ROC curve via midranks (ties handled exactly)."""
    y = np.asarray(y, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricsError("AUC is undefined for single-class labels")
    order = np.argsort(probs, kind="mergesort")
    ranks = np.empty(y.size)
    sorted_p = probs[order]
    i = 0
    while i < y.size:
        j = i
        while j + 1 < y.size and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_ranks = ranks[y == 1].sum()
    return float((pos_ranks - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass
class ClassifierMetrics:
    auc: float
    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    no_positive_predictions: bool = False


def evaluate_classifier(y: np.ndarray, probs: np.ndarray,
                        cutoff: float = 0.5) -> ClassifierMetrics:
    """Threshold probabilities at `cutoff` and summarize performance.

    When nothing is predicted positive, precision is reported as 0 and
    flagged rather than raised; AUC still requires both classes to be
    present in the labels.
    """
    y = np.asarray(y, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    auc = auc_score(y, probs)
    pred = (probs >= cutoff).astype(float)
    tp = float(((pred == 1) & (y == 1)).sum())
    tn = float(((pred == 0) & (y == 0)).sum())
    fp = float(((pred == 1) & (y == 0)).sum())
    fn = float(((pred == 0) & (y == 1)).sum())
    accuracy = (tp + tn) / y.size
    tpr = tp / (tp + fn)
    tnr = tn / (tn + fp)
    recall = tpr
    no_pos = (tp + fp) == 0
    precision = 0.0 if no_pos else tp / (tp + fp)
    f1 = 0.0 if precision + recall == 0 else (
        2.0 * precision * recall / (precision + recall))
    return ClassifierMetrics(auc=auc, accuracy=accuracy,
                             balanced_accuracy=0.5 * (tpr + tnr),
                             precision=precision, recall=recall, f1=f1,
                             no_positive_predictions=bool(no_pos))


def stratified_folds(y: np.ndarray, n_folds: int, seed: int) -> list[np.ndarray]:
    """Shuffle each class and deal indices round-robin into folds."""
    y = np.asarray(y).ravel()
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for pos, row in enumerate(idx):
            folds[pos % n_folds].append(int(row))
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass
class CvResult:
    best_C: float
    mean_auc: dict[float, float]
    n_folds_used: int


def cross_validate(X: np.ndarray, y: np.ndarray, c_grid,
                   n_folds: int = 3, seed: int = 0,
                   max_iter: int = 500, tol: float = 1e-8) -> CvResult:
    """Pick the penalty level with the best mean validation AUC.

    Folds whose validation labels are single-class are excluded for
    every candidate.  Exact ties go to the smaller C.
    """
    c_values = sorted(set(float(c) for c in c_grid))
    if not c_values:
        raise ValueError("empty C grid")
    folds = stratified_folds(y, n_folds, seed)
    usable = [f for f in folds if 0 < y[f].sum() < f.size]
    if not usable:
        raise MetricsError("every fold has single-class validation labels")
    if len(usable) < len(folds):
        logger.warning("excluding %d of %d folds with single-class labels",
                       len(folds) - len(usable), len(folds))
    scores: dict[float, float] = {}
    for c in c_values:
        fold_scores = []
        for fold in usable:
            mask = np.ones(y.size, dtype=bool)
            mask[fold] = False
            model = train_logistic(X[mask], y[mask], C=c,
                                   max_iter=max_iter, tol=tol)
            fold_scores.append(auc_score(y[fold],
                                         predict_proba(model, X[fold])))
        scores[c] = float(np.mean(fold_scores))
    best = c_values[0]
    for c in c_values[1:]:
        if scores[c] > scores[best]:
            best = c
    return CvResult(best_C=best, mean_auc=scores, n_folds_used=len(usable))


# ---------------------------------------------------------------------------
# forecasts and persistence


@dataclass(frozen=True)
class RiskForecast:
    """Probability of a severe flood within `horizon` years of
    `base_year` for one state."""

    state: str
    base_year: int
    horizon: int
    theta: float
    probability: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


def forecast_from_model(model: LogisticModel,
                        dataset: RiskDataset) -> list[RiskForecast]:
    probs = predict_proba(model, dataset.X)
    return [RiskForecast(state=state, base_year=base,
                         horizon=dataset.horizon, theta=dataset.theta,
                         probability=float(p))
            for (state, base), p in zip(dataset.keys, probs)]


def write_forecasts(forecasts: list[RiskForecast], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "base_year", "horizon", "theta",
                         "probability"])
        for fc in forecasts:
            writer.writerow([fc.state, fc.base_year, fc.horizon,
                             repr(fc.theta), repr(fc.probability)])


def read_forecasts(path) -> list[RiskForecast]:
    """Load probabilities written by :func:`write_forecasts` or by an
    external model with the same columns."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"state", "base_year", "horizon", "theta", "probability"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(needed)}")
        for row in reader:
            out.append(RiskForecast(state=row["state"],
                                    base_year=int(row["base_year"]),
                                    horizon=int(row["horizon"]),
                                    theta=float(row["theta"]),
                                    probability=float(row["probability"])))
    return out


def save_model(model: LogisticModel, path) -> None:
    payload = {
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
        "C": model.C,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "feature_names": model.feature_names,
        "converged": model.converged,
        "n_iter": model.n_iter,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> LogisticModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return LogisticModel(weights=np.array(payload["weights"], dtype=float),
                         intercept=float(payload["intercept"]),
                         C=float(payload["C"]),
                         feature_mean=np.array(payload["feature_mean"],
                                               dtype=float),
                         feature_std=np.array(payload["feature_std"],
                                              dtype=float),
                         feature_names=list(payload["feature_names"]),
                         converged=bool(payload["converged"]),
                         n_iter=int(payload["n_iter"]))
