"""Uncertainty sets for cumulative catastrophe losses.

Two set families are supported.  The statistical band constrains the
total loss over a pricing horizon of T years to stay within gamma2
standard deviations (scaled by sqrt(T)) of the historical annual mean
times T, never dipping below zero.  The model-driven bound caps the
loss over the next k years at a fixed severity Theta weighted by the
forecast flood probability plus a safety margin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CltSet:
    """Band of admissible loss paths over a T-year horizon.

    A path l in R^T belongs to the set when every l_t >= 0 and the
    total sum(l) lies within `gamma2 * std * sqrt(T)` of `T * mean`.
    """

    state: str
    horizon: int
    mean: float
    std: float
    gamma2: float

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1 year")
        if self.mean < 0 or self.std < 0 or self.gamma2 < 0:
            raise ValueError("mean, std and gamma2 must be nonnegative")

    @property
    def half_width(self) -> float:
        return self.gamma2 * self.std * math.sqrt(self.horizon)

    @property
    def total_upper(self) -> float:
        """Unclamped upper end of the band, T*mean + gamma2*std*sqrt(T)."""
        return self.horizon * self.mean + self.half_width

    @property
    def total_lower(self) -> float:
        """Unclamped lower end of the band (may be negative)."""
        return self.horizon * self.mean - self.half_width

    @property
    def bound(self) -> float:
        """Worst-case total loss, clamped at zero."""
        return max(0.0, self.total_upper)

    def contains(self, path, tol: float = 1e-9) -> bool:
        path = np.asarray(path, dtype=float)
        if path.size != self.horizon or np.any(path < -tol):
            return False
        total = float(path.sum())
        slack = tol * max(1.0, abs(self.total_upper))
        return (total <= self.total_upper + slack
                and total >= max(self.total_lower, 0.0) - slack)


@dataclass(frozen=True)
class MlSet:
    """Loss cap over the next k years implied by a flood forecast.

    `probability` is the predicted chance of at least one severe flood
    (annual loss >= theta) during the horizon; `margin` hedges against
    classifier error.  The cap is theta * min(1, probability + margin).
    """

    theta: float
    probability: float
    margin: float
    horizon: int = 1
    state: str = ""

    def __post_init__(self) -> None:
        if self.theta <= 0:
            raise ValueError("severity threshold theta must be positive")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1 year")

    @property
    def bound(self) -> float:
        return self.theta * min(1.0, self.probability + self.margin)


def clt_bound(state: str, mean: float, std: float, horizon: int,
              gamma2: float) -> CltSet:
    """Build the statistical loss band for one state."""
    return CltSet(state=state, horizon=horizon, mean=float(mean),
                  std=float(std), gamma2=float(gamma2))


def ml_bound(theta: float, probability: float, margin: float,
             horizon: int = 1, state: str = "") -> MlSet:
    """Build the forecast-driven loss cap."""
    return MlSet(theta=float(theta), probability=float(probability),
                 margin=float(margin), horizon=horizon, state=state)


def sample_clt_scenarios(cset: CltSet, n: int, seed: int) -> np.ndarray:
    """Draw n loss paths from the band, worst vertex first.

    Row 0 splits the upper bound evenly across years.  The remaining
    rows draw a total uniformly inside the (clamped) band and spread it
    over years with Dirichlet proportions, so per-year masses vary from
    nearly concentrated to nearly uniform.
    """
    if n < 1:
        raise ValueError("need at least one scenario")
    T = cset.horizon
    upper = cset.bound
    lower = max(0.0, cset.total_lower)
    out = np.empty((n, T))
    out[0] = upper / T
    if n > 1:
        rng = np.random.default_rng(seed)
        totals = rng.uniform(lower, upper, size=n - 1)
        props = rng.dirichlet(np.ones(T), size=n - 1)
        props /= props.sum(axis=1, keepdims=True)
        out[1:] = np.maximum(props * totals[:, None], 0.0)
    return out


def export_bounds(clt_sets, ml_sets, path) -> None:
    """Write both set families to one CSV for inspection.

    Columns not applicable to a row's family are left empty.
    """
    header = ["state", "family", "horizon", "gamma2", "mean", "std",
              "theta", "probability", "margin", "bound"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in clt_sets:
            writer.writerow([s.state, "clt", s.horizon, repr(s.gamma2),
                             repr(s.mean), repr(s.std), "", "", "",
                             repr(s.bound)])
        for s in ml_sets:
            writer.writerow([s.state, "ml", s.horizon, "", "", "",
                             repr(s.theta), repr(s.probability),
                             repr(s.margin), repr(s.bound)])
