"""Premium schedules that stay solvent against worst-case losses.

The insurer chooses per-year premiums p_t minimizing collected revenue
subject to an end-of-horizon surplus requirement

    sum_t f(p_t) * p_t  -  sum_t f(p_t) * l_t  >=  delta

for every loss path l in the uncertainty set, where f is a price
response ("damping") curve: raising premiums past an onset level sheds
policyholders until only a floor fraction remains.  Because the surplus
constraint depends only on totals, a flat schedule is always among the
optima, which reduces each robust program to a one-dimensional root
search in the flat premium.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, solve_lp
from .uncertainty import CltSet, MlSet, clt_bound

logger = logging.getLogger(__name__)

SCHEME_NOMINAL = "nominal"
SCHEME_RO1 = "ro1"
SCHEME_RO2 = "ro2"


class PricingInfeasibleError(RuntimeError):
    """No admissible premium schedule meets the surplus requirement."""


@dataclass(frozen=True)
class DampingCurve:
    """Piecewise-linear retained fraction of policyholders.

    value(p) is 1 up to `onset`, then falls with slope `rate` until it
    reaches `floor`, where it stays.
    """

    onset: float
    rate: float
    floor: float = 0.2

    def __post_init__(self) -> None:
        if self.onset < 0 or self.rate < 0:
            raise ValueError("onset and rate must be nonnegative")
        if not 0.0 < self.floor <= 1.0:
            raise ValueError("floor must lie in (0, 1]")

    def value(self, premium: float) -> float:
        if premium <= self.onset:
            return 1.0
        return max(self.floor, 1.0 - self.rate * (premium - self.onset))

    @property
    def floor_start(self) -> float:
        """Premium at which the curve reaches its floor."""
        if self.rate == 0:
            return np.inf
        return self.onset + (1.0 - self.floor) / self.rate


def damping_value(curve: DampingCurve | None, premium: float) -> float:
    """Retained fraction at a premium; no curve means full retention."""
    if premium < 0:
        raise ValueError("premium must be nonnegative")
    if curve is None:
        return 1.0
    return curve.value(premium)


def make_damping_curve(max_hist_premium: float, onset_frac: float = 0.1,
                       rate: float | None = None,
                       floor: float = 0.2) -> DampingCurve:
    """Calibrate a curve from the largest historically observed premium.

    Default shape: damping starts at 10% of the historical maximum and
    loses all price-sensitive demand at roughly the maximum itself
    (slope 1 / max).
    """
    if max_hist_premium <= 0:
        raise ValueError("historical maximum premium must be positive")
    if rate is None:
        rate = 1.0 / max_hist_premium
    return DampingCurve(onset=onset_frac * max_hist_premium, rate=rate,
                        floor=floor)


@dataclass
class PremiumSchedule:
    """Per-year premiums for one state plus the retained-demand profile."""

    state: str
    years: list[int]
    premiums: np.ndarray
    scheme: str
    damped_fraction: np.ndarray | None = None
    binding_constraint: str = ""
    gamma2: float | None = None
    coverage_residual: float | None = None

    def __post_init__(self) -> None:
        self.premiums = np.asarray(self.premiums, dtype=float).ravel()
        self.years = [int(y) for y in self.years]
        if len(self.years) != self.premiums.size:
            raise ValueError("years and premiums must have equal length")
        if np.any(self.premiums < 0):
            raise ValueError("premiums must be nonnegative")
        if self.damped_fraction is None:
            self.damped_fraction = np.ones(self.premiums.size)
        else:
            self.damped_fraction = np.asarray(self.damped_fraction,
                                              dtype=float).ravel()
        if self.damped_fraction.size != self.premiums.size:
            raise ValueError("damped_fraction length mismatch")

    @property
    def horizon(self) -> int:
        return self.premiums.size

    @property
    def damped_revenue(self) -> np.ndarray:
        return self.premiums * self.damped_fraction

    @property
    def total_revenue(self) -> float:
        return float(self.damped_revenue.sum())


def _default_years(horizon: int) -> list[int]:
    return list(range(1, horizon + 1))


def _flat_surplus(premium: float, horizon: int, worst_loss: float,
                  curve: DampingCurve | None) -> float:
    f = damping_value(curve, premium)
    return f * (horizon * premium - worst_loss)


def _bisect_crossing(func, lo: float, hi: float, target: float,
                     iters: int = 200) -> float:
    """Root of func(p) = target on [lo, hi] where a sign change exists."""
    f_lo = func(lo) - target
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = func(mid) - target
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return hi


def flat_coverage_premium(horizon: int, worst_loss: float, surplus: float,
                          curve: DampingCurve | None = None,
                          cap: float | None = None) -> float:
    """Smallest flat premium whose coverage holds for all higher premiums.

    Without damping this is (worst_loss + surplus) / horizon.  With
    damping the surplus g(p) = f(p)*(horizon*p - worst_loss) is
    piecewise linear/quadratic/linear and can dip back below the target
    after first reaching it, so we return the rightmost crossing: past
    it the requirement holds permanently, and among the candidate
    crossings it yields the lowest damped revenue (revenue at a
    crossing is surplus + f(p)*worst_loss, and f decreases in p).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1 year")
    if worst_loss < 0 or surplus < 0:
        raise ValueError("worst-case loss and surplus must be nonnegative")
    if curve is None or curve.rate == 0.0:
        root = max(0.0, (worst_loss + surplus) / horizon)
        if cap is not None and root > cap:
            raise PricingInfeasibleError(
                f"flat premium {root:.6g} exceeds the premium cap {cap:.6g}"
                f" (horizon {horizon}, worst-case loss {worst_loss:.6g},"
                f" required surplus {surplus:.6g})")
        return root

    def g(p: float) -> float:
        return _flat_surplus(p, horizon, worst_loss, curve)

    # breakpoints delimiting monotone segments of g
    floor_start = curve.floor_start
    points = [0.0, curve.onset]
    # stationary point of the quadratic middle segment
    vertex = (worst_loss / (2.0 * horizon) + 0.5 / curve.rate
              + 0.5 * curve.onset)
    if curve.onset < vertex < floor_start:
        points.append(vertex)
    points.append(floor_start)
    # the final segment rises with slope floor*horizon; this point is
    # past every possible crossing
    tail = floor_start + (surplus + curve.floor * worst_loss + 1.0) / (
        curve.floor * horizon)
    points.append(tail)
    if cap is not None:
        points = [min(p, cap) for p in points]
        points.append(cap)
    points = sorted(set(points))

    root = None
    for lo, hi in zip(points, points[1:]):
        # only upward crossings matter: the rightmost crossing is one
        if g(lo) < surplus <= g(hi):
            crossing = _bisect_crossing(g, lo, hi, surplus)
            root = crossing if root is None else max(root, crossing)
    if g(points[-1]) < surplus:
        limit = cap if cap is not None else points[-1]
        raise PricingInfeasibleError(
            f"no flat premium within cap {limit:.6g} attains surplus"
            f" {surplus:.6g} against worst-case loss {worst_loss:.6g}"
            f" over {horizon} years")
    if root is None:
        return 0.0
    return root


def solve_nominal(losses, delta: float, gamma1: float,
                  curve: DampingCurve | None = None,
                  state: str = "", years: list[int] | None = None,
                  cap: float | None = None) -> PremiumSchedule:
    """Price against a single known loss path.

    The program minimizes collected revenue subject to end-of-horizon
    surplus delta and a year-over-year premium change band gamma1.  The
    optimum is attained on a flat schedule (the constraints involve the
    premium total only), and the flat representative is what is
    returned even when the optimal face contains non-flat points.
    """
    losses = np.asarray(losses, dtype=float).ravel()
    if losses.size == 0:
        raise ValueError("need at least one year of losses")
    if np.any(losses < 0):
        raise ValueError("losses must be nonnegative")
    if delta < 0 or gamma1 < 0:
        raise ValueError("delta and gamma1 must be nonnegative")
    T = losses.size
    total_loss = float(losses.sum())

    if curve is None or curve.rate == 0.0:
        # cross-check the flat value against the full LP over non-flat
        # schedules; they agree because coverage binds on the total
        A_rows = [-np.ones(T)]
        b = [-(total_loss + delta)]
        names = ["coverage"]
        for t in range(1, T):
            up = np.zeros(T)
            up[t] = 1.0
            up[t - 1] = -1.0
            A_rows.extend([up, -up])
            b.extend([gamma1, gamma1])
            names.extend([f"rise_y{t}", f"fall_y{t}"])
        upper = np.full(T, np.inf if cap is None else cap)
        lp = LinearProgram(np.ones(T), np.array(A_rows), np.array(b),
                           np.zeros(T), upper,
                           var_names=[f"p{t + 1}" for t in range(T)],
                           row_names=names)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise PricingInfeasibleError(
                f"nominal pricing {sol.status}: cap={cap}, gamma1={gamma1}")
        flat = float(sol.objective) / T
        residual = T * flat - total_loss - delta
    else:
        flat = flat_coverage_premium(T, total_loss, delta, curve, cap)
        residual = _flat_surplus(flat, T, total_loss, curve) - delta

    fractions = np.full(T, damping_value(curve, flat))
    return PremiumSchedule(state=state,
                           years=years or _default_years(T),
                           premiums=np.full(T, flat),
                           scheme=SCHEME_NOMINAL,
                           damped_fraction=fractions,
                           binding_constraint="coverage",
                           coverage_residual=residual)


def solve_ro1(state: str, mean: float, std: float, horizon: int,
              gamma2: float, delta: float, gamma1: float = np.inf,
              curve: DampingCurve | None = None,
              years: list[int] | None = None,
              cap: float | None = None) -> PremiumSchedule:
    """Flat premium covering the statistical worst-case loss band."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if gamma1 < 0:
        raise ValueError("gamma1 must be nonnegative")
    band = clt_bound(state, mean, std, horizon, gamma2)
    flat = flat_coverage_premium(horizon, band.bound, delta, curve, cap)
    residual = _flat_surplus(flat, horizon, band.bound, curve) - delta
    fractions = np.full(horizon, damping_value(curve, flat))
    return PremiumSchedule(state=state,
                           years=years or _default_years(horizon),
                           premiums=np.full(horizon, flat),
                           scheme=SCHEME_RO1,
                           damped_fraction=fractions,
                           binding_constraint="CLT",
                           gamma2=gamma2,
                           coverage_residual=residual)


def solve_ro2(state: str, mean: float, std: float, horizon: int,
              gamma2: float, delta: float, forecasts: list[MlSet],
              gamma1: float = np.inf,
              curve: DampingCurve | None = None,
              years: list[int] | None = None,
              cap: float | None = None) -> PremiumSchedule:
    """Flat premium covering both the statistical band and every
    forecast-driven loss cap.

    Each forecast adds the requirement that revenue over its own k-year
    horizon covers the capped loss plus delta; the final premium is the
    largest of the individual flat solutions, so adding forecasts never
    lowers the answer.
    """
    if not forecasts:
        raise ValueError("solve_ro2 requires at least one forecast bound")
    if delta < 0 or gamma1 < 0:
        raise ValueError("delta and gamma1 must be nonnegative")
    for fc in forecasts:
        if fc.horizon > horizon:
            raise ValueError(
                f"forecast horizon {fc.horizon} exceeds pricing horizon"
                f" {horizon}")
    band = clt_bound(state, mean, std, horizon, gamma2)
    flat = flat_coverage_premium(horizon, band.bound, delta, curve, cap)
    binding = "CLT"
    for fc in forecasts:
        candidate = flat_coverage_premium(fc.horizon, fc.bound, delta,
                                          curve, cap)
        if candidate > flat:
            flat = candidate
            binding = f"ML(k={fc.horizon},theta={fc.theta:g})"
    residual = min(
        _flat_surplus(flat, horizon, band.bound, curve),
        min(_flat_surplus(flat, fc.horizon, fc.bound, curve)
            for fc in forecasts)) - delta
    fractions = np.full(horizon, damping_value(curve, flat))
    return PremiumSchedule(state=state,
                           years=years or _default_years(horizon),
                           premiums=np.full(horizon, flat),
                           scheme=SCHEME_RO2,
                           damped_fraction=fractions,
                           binding_constraint=binding,
                           gamma2=gamma2,
                           coverage_residual=residual)


def write_schedules(schedules: list[PremiumSchedule], path) -> None:
    """One CSV row per state-year."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "year", "premium", "damped_fraction",
                         "scheme", "binding_constraint"])
        for sched in schedules:
            for i, year in enumerate(sched.years):
                writer.writerow([sched.state, year,
                                 repr(float(sched.premiums[i])),
                                 repr(float(sched.damped_fraction[i])),
                                 sched.scheme, sched.binding_constraint])


def read_schedules(path) -> list[PremiumSchedule]:
    """Rebuild schedules from :func:`write_schedules` output."""
    groups: dict[tuple[str, str], dict] = {}
    order: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"state", "year", "premium", "damped_fraction",
                    "scheme", "binding_constraint"}
        if reader.fieldnames is None or not required.issubset(
                reader.fieldnames):
            raise ValueError(f"{path}: missing schedule columns")
        for row in reader:
            key = (row["state"], row["scheme"])
            if key not in groups:
                groups[key] = {"years": [], "premiums": [], "fractions": [],
                               "binding": row["binding_constraint"]}
                order.append(key)
            groups[key]["years"].append(int(row["year"]))
            groups[key]["premiums"].append(float(row["premium"]))
            groups[key]["fractions"].append(float(row["damped_fraction"]))
    out = []
    for state, scheme in order:
        g = groups[(state, scheme)]
        out.append(PremiumSchedule(state=state, years=g["years"],
                                   premiums=np.array(g["premiums"]),
                                   scheme=scheme,
                                   damped_fraction=np.array(g["fractions"]),
                                   binding_constraint=g["binding"]))
    return out
