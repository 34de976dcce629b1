"""Claims and policy ingestion for state-year loss panels.

Raw inputs are the public flood program's claim and policy extracts:
one CSV row per claim (date of loss, state, building payout) and one
row per policy (state, termination date, total premium).  This module
parses them defensively, aggregates to state-year panels, patches
missing cells by interpolation, and computes the per-state historical
statistics the pricing models consume.

Row-level problems are collected rather than raised one at a time; the
parse aborts only when the error rate crosses a configured threshold.
Rows from jurisdictions outside the configured list and rows with blank
amounts are dropped silently but counted.
"""

from __future__ import annotations

import csv
import datetime
import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

US_STATES = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA",
    "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA", "ME", "MD",
    "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ",
    "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA", "RI", "SC",
    "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
]
# the 50 states plus the two island territories with steady program
# participation; DC and the Pacific territories are excluded
JURISDICTIONS = US_STATES + ["PR", "VI"]


class IngestError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class IngestConfig:
    """Column names and filtering rules for the raw extracts."""

    claim_date_column: str = "dateOfLoss"
    claim_state_column: str = "state"
    claim_amount_column: str = "amountPaidOnBuildingClaim"
    policy_state_column: str = "propertyState"
    # the misspelling is the upstream provider's, not ours
    policy_date_column: str = "policyTeminationDate"
    policy_premium_column: str = "totalInsurancePremiumOfThePolicy"
    jurisdictions: list[str] = field(default_factory=lambda: list(JURISDICTIONS))
    max_error_rate: float = 0.01


@dataclass(frozen=True)
class ClaimRecord:
    date: datetime.date
    state: str
    amount: float


@dataclass(frozen=True)
class PolicyRecord:
    year: int
    state: str
    premium: float


@dataclass
class ParseResult:
    """Record list plus an account of everything that was not kept."""

    records: list
    n_rows: int
    n_dropped_blank: int
    n_dropped_jurisdiction: int
    errors: list[str]

    @property
    def error_rate(self) -> float:
        return len(self.errors) / self.n_rows if self.n_rows else 0.0


def _parse_date(raw: str) -> datetime.date:
    return datetime.date.fromisoformat(raw.strip()[:10])


def _check_error_budget(result: ParseResult, path, config: IngestConfig):
    if result.n_rows and result.error_rate > config.max_error_rate:
        sample = "; ".join(result.errors[:5])
        raise IngestError(
            f"{path}: {len(result.errors)} of {result.n_rows} rows"
            f" unusable ({result.error_rate:.1%} > limit"
            f" {config.max_error_rate:.1%}): {sample}")


def parse_claims(path, config: IngestConfig | None = None) -> ParseResult:
    """Read the claims extract into :class:`ClaimRecord` objects.

    Rows with a blank payout are dropped (no building payment was
    recorded).  Rows whose state is not a configured jurisdiction are
    dropped.  Unparseable dates or amounts, and negative amounts, are
    row errors counted against the error budget.
    """
    config = config or IngestConfig()
    allowed = set(config.jurisdictions)
    records: list[ClaimRecord] = []
    result = ParseResult(records, 0, 0, 0, [])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {config.claim_date_column, config.claim_state_column,
                  config.claim_amount_column}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise IngestError(
                f"{path}: expected columns {sorted(needed)}, found"
                f" {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            result.n_rows += 1
            state = (row[config.claim_state_column] or "").strip()
            if state not in allowed:
                result.n_dropped_jurisdiction += 1
                continue
            raw_amount = (row[config.claim_amount_column] or "").strip()
            if raw_amount == "":
                result.n_dropped_blank += 1
                continue
            try:
                when = _parse_date(row[config.claim_date_column] or "")
            except ValueError:
                result.errors.append(f"line {lineno}: bad date"
                                     f" {row[config.claim_date_column]!r}")
                continue
            try:
                amount = float(raw_amount)
            except ValueError:
                result.errors.append(f"line {lineno}: bad amount"
                                     f" {raw_amount!r}")
                continue
            if not math.isfinite(amount) or amount < 0:
                result.errors.append(f"line {lineno}: amount {amount!r}"
                                     " negative or non-finite")
                continue
            records.append(ClaimRecord(when, state, amount))
    _check_error_budget(result, path, config)
    return result


def parse_policies(path, config: IngestConfig | None = None) -> ParseResult:
    """Read the policy extract into :class:`PolicyRecord` objects.

    A policy is attributed to the year its term ends.  The same drop
    and error rules as :func:`parse_claims` apply.
    """
    config = config or IngestConfig()
    allowed = set(config.jurisdictions)
    records: list[PolicyRecord] = []
    result = ParseResult(records, 0, 0, 0, [])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {config.policy_state_column, config.policy_date_column,
                  config.policy_premium_column}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise IngestError(
                f"{path}: expected columns {sorted(needed)}, found"
                f" {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            result.n_rows += 1
            state = (row[config.policy_state_column] or "").strip()
            if state not in allowed:
                result.n_dropped_jurisdiction += 1
                continue
            raw_premium = (row[config.policy_premium_column] or "").strip()
            if raw_premium == "":
                result.n_dropped_blank += 1
                continue
            try:
                when = _parse_date(row[config.policy_date_column] or "")
            except ValueError:
                result.errors.append(f"line {lineno}: bad date"
                                     f" {row[config.policy_date_column]!r}")
                continue
            try:
                premium = float(raw_premium)
            except ValueError:
                result.errors.append(f"line {lineno}: bad premium"
                                     f" {raw_premium!r}")
                continue
            if not math.isfinite(premium) or premium < 0:
                result.errors.append(f"line {lineno}: premium {premium!r}"
                                     " negative or non-finite")
                continue
            records.append(PolicyRecord(when.year, state, premium))
    _check_error_budget(result, path, config)
    return result


@dataclass
class LossPanel:
    """State-by-year loss totals; NaN marks cells with no observations."""

    states: list[str]
    years: np.ndarray
    losses: np.ndarray

    def __post_init__(self) -> None:
        self.years = np.asarray(self.years, dtype=int)
        self.losses = np.asarray(self.losses, dtype=float)
        if self.losses.shape != (len(self.states), self.years.size):
            raise IngestError("loss matrix shape must be states x years")

    def state_index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise IngestError(f"state {state!r} not in panel") from None

    def year_index(self, year: int) -> int:
        hits = np.flatnonzero(self.years == year)
        if hits.size == 0:
            raise IngestError(f"year {year} not in panel")
        return int(hits[0])

    def losses_for(self, state: str, years=None) -> np.ndarray:
        row = self.losses[self.state_index(state)]
        if years is None:
            return row
        return np.array([row[self.year_index(y)] for y in years])

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.losses).sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["state", "year", "loss"])
            for i, state in enumerate(self.states):
                for j, year in enumerate(self.years):
                    v = self.losses[i, j]
                    writer.writerow([state, int(year),
                                     "" if np.isnan(v) else repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "LossPanel":
        cells: dict[tuple[str, int], float] = {}
        states: list[str] = []
        years: set[int] = set()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"state", "year", "loss"}.issubset(
                    reader.fieldnames):
                raise IngestError(f"{path}: expected state,year,loss columns")
            for row in reader:
                state = row["state"]
                year = int(row["year"])
                if state not in states:
                    states.append(state)
                years.add(year)
                raw = row["loss"]
                cells[(state, year)] = float(raw) if raw != "" else np.nan
        year_list = np.array(sorted(years), dtype=int)
        losses = np.full((len(states), year_list.size), np.nan)
        for (state, year), v in cells.items():
            losses[states.index(state), int(np.flatnonzero(year_list == year)[0])] = v
        return cls(states, year_list, losses)


def aggregate_state_year(records: list[ClaimRecord], start_year: int,
                         end_year: int,
                         states: list[str] | None = None) -> LossPanel:
    """Sum claim payouts per state and calendar year.

    Cells with no contributing records are left missing (NaN); states
    supplied explicitly but absent from the records come out as
    all-missing rows, to be dealt with at interpolation time.
    """
    if end_year < start_year:
        raise IngestError("end year precedes start year")
    if states is None:
        states = sorted({r.state for r in records})
    years = np.arange(start_year, end_year + 1)
    losses = np.full((len(states), years.size), np.nan)
    index = {s: i for i, s in enumerate(states)}
    for rec in records:
        if rec.state not in index:
            continue
        if not start_year <= rec.date.year <= end_year:
            continue
        i, j = index[rec.state], rec.date.year - start_year
        if np.isnan(losses[i, j]):
            losses[i, j] = 0.0
        losses[i, j] += rec.amount
    return LossPanel(list(states), years, losses)


def interpolate_missing(panel: LossPanel) -> LossPanel:
    """Fill missing cells: linear between observations, constant at the
    edges.  A state with no observations at all is an error."""
    filled = panel.losses.copy()
    for i, state in enumerate(panel.states):
        row = filled[i]
        observed = np.flatnonzero(~np.isnan(row))
        if observed.size == 0:
            raise IngestError(
                f"state {state} has no observed losses to interpolate from")
        if observed.size < row.size:
            idx = np.arange(row.size)
            filled[i] = np.interp(idx, observed, row[observed])
    return LossPanel(list(panel.states), panel.years.copy(),
                     np.maximum(filled, 0.0))


@dataclass(frozen=True)
class StateStats:
    """Historical annual-loss statistics over a training window."""

    state: str
    mean: float
    std: float
    start_year: int
    end_year: int

    @property
    def n_years(self) -> int:
        return self.end_year - self.start_year + 1


def compute_stats(panel: LossPanel, start_year: int,
                  end_year: int) -> dict[str, StateStats]:
    """Per-state mean and population standard deviation of annual
    losses over [start_year, end_year]; requires a gap-free panel."""
    if end_year - start_year + 1 < 2:
        raise IngestError("statistics window must cover at least 2 years")
    j0 = panel.year_index(start_year)
    j1 = panel.year_index(end_year)
    window = panel.losses[:, j0:j1 + 1]
    if np.isnan(window).any():
        raise IngestError("statistics window contains missing cells;"
                          " interpolate first")
    out = {}
    for i, state in enumerate(panel.states):
        out[state] = StateStats(state=state,
                                mean=float(window[i].mean()),
                                std=float(window[i].std()),
                                start_year=start_year, end_year=end_year)
    return out


def write_stats(stats: dict[str, StateStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "mean", "std", "start_year", "end_year"])
        for state in stats:
            s = stats[state]
            writer.writerow([s.state, repr(s.mean), repr(s.std),
                             s.start_year, s.end_year])


def read_stats(path) -> dict[str, StateStats]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"state", "mean", "std", "start_year", "end_year"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise IngestError(f"{path}: missing statistics columns")
        for row in reader:
            out[row["state"]] = StateStats(
                state=row["state"], mean=float(row["mean"]),
                std=float(row["std"]), start_year=int(row["start_year"]),
                end_year=int(row["end_year"]))
    return out


@dataclass
class PolicyPanel:
    """Premium collected and policy count per state-year."""

    states: list[str]
    years: np.ndarray
    premium_collected: np.ndarray
    policy_count: np.ndarray

    def __post_init__(self) -> None:
        self.years = np.asarray(self.years, dtype=int)
        self.premium_collected = np.asarray(self.premium_collected,
                                            dtype=float)
        self.policy_count = np.asarray(self.policy_count, dtype=int)
        shape = (len(self.states), self.years.size)
        if (self.premium_collected.shape != shape
                or self.policy_count.shape != shape):
            raise IngestError("policy panel arrays must be states x years")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["state", "year", "premium_collected",
                             "policy_count"])
            for i, state in enumerate(self.states):
                for j, year in enumerate(self.years):
                    writer.writerow([state, int(year),
                                     repr(float(self.premium_collected[i, j])),
                                     int(self.policy_count[i, j])])

    @classmethod
    def from_csv(cls, path) -> "PolicyPanel":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            needed = {"state", "year", "premium_collected", "policy_count"}
            if reader.fieldnames is None or not needed.issubset(
                    reader.fieldnames):
                raise IngestError(f"{path}: missing policy panel columns")
            for row in reader:
                rows.append((row["state"], int(row["year"]),
                             float(row["premium_collected"]),
                             int(row["policy_count"])))
        states = []
        years = sorted({r[1] for r in rows})
        for r in rows:
            if r[0] not in states:
                states.append(r[0])
        year_arr = np.array(years, dtype=int)
        premium = np.zeros((len(states), len(years)))
        count = np.zeros((len(states), len(years)), dtype=int)
        for state, year, prem, cnt in rows:
            i, j = states.index(state), years.index(year)
            premium[i, j] = prem
            count[i, j] = cnt
        return cls(states, year_arr, premium, count)


def aggregate_policies(records: list[PolicyRecord],
                       states: list[str] | None = None,
                       start_year: int | None = None,
                       end_year: int | None = None) -> PolicyPanel:
    """Sum premiums and count policies per state-year.

    The year span defaults to the range present in the records; cells
    without policies hold zero premium and zero count.
    """
    if not records and (start_year is None or end_year is None):
        raise IngestError("cannot infer a year span from zero policies")
    if states is None:
        states = sorted({r.state for r in records})
    if start_year is None:
        start_year = min(r.year for r in records)
    if end_year is None:
        end_year = max(r.year for r in records)
    years = np.arange(start_year, end_year + 1)
    premium = np.zeros((len(states), years.size))
    count = np.zeros((len(states), years.size), dtype=int)
    index = {s: i for i, s in enumerate(states)}
    for rec in records:
        if rec.state not in index or not start_year <= rec.year <= end_year:
            continue
        i, j = index[rec.state], rec.year - start_year
        premium[i, j] += rec.premium
        count[i, j] += 1
    return PolicyPanel(list(states), years, premium, count)


def max_mean_premium(panel: PolicyPanel) -> float:
    """Largest state-year average premium per policy, used to calibrate
    the demand damping curve."""
    counts = panel.policy_count
    if not (counts > 0).any():
        raise IngestError("policy panel has no populated cells")
    means = np.where(counts > 0, panel.premium_collected / np.maximum(counts, 1),
                     0.0)
    return float(means.max())


def state_max_mean_premium(panel: PolicyPanel) -> dict[str, float]:
    """Per-state version of :func:`max_mean_premium`.

    States with no populated cells fall back to the panel-wide maximum
    so a damping curve can still be anchored for them.
    """
    overall = max_mean_premium(panel)
    out = {}
    for i, state in enumerate(panel.states):
        counts = panel.policy_count[i]
        if (counts > 0).any():
            means = panel.premium_collected[i][counts > 0] / counts[counts > 0]
            out[state] = float(means.max())
        else:
            logger.warning("no policy data for %s; damping anchor falls"
                           " back to the panel maximum", state)
            out[state] = overall
    return out
