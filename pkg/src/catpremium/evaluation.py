"""Backtesting premium schedules against realized losses.

Given priced schedules and the actual loss panel, this module tracks
each state's running account over the evaluation window, reporting the
aggregate surplus, absolute deviation between collected revenue and
losses, and the count of states that were ever underwater.  A sweep
helper reprices across a grid of band widths to trace the
surplus/insolvency trade-off frontier.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .ingest import LossPanel
from .pricing_ro import PremiumSchedule

logger = logging.getLogger(__name__)


@dataclass
class StateOutcome:
    state: str
    cumulative_revenue: float
    cumulative_loss: float
    insolvent: bool

    @property
    def balance(self) -> float:
        return self.cumulative_revenue - self.cumulative_loss


@dataclass
class BacktestReport:
    scheme: str
    years: list[int]
    outcomes: list[StateOutcome]
    surplus: float
    abs_deviation: float
    insolvent_count: int
    gamma2: float | None = None


def backtest(schedules: list[PremiumSchedule], panel: LossPanel,
             years) -> BacktestReport:
    """Run every schedule against realized losses over `years`.

    A state is insolvent when its cumulative damped revenue falls below
    its cumulative loss at the end of any year in the window; recovering
    later does not clear the flag.
    """
    years = [int(y) for y in years]
    if not years:
        raise ValueError("need at least one evaluation year")
    if not schedules:
        raise ValueError("no schedules to backtest")
    schemes = {s.scheme for s in schedules}
    if len(schemes) > 1:
        raise ValueError(f"schedules mix schemes {sorted(schemes)}")
    seen = set()
    outcomes = []
    surplus = 0.0
    abs_dev = 0.0
    n_insolvent = 0
    for sched in schedules:
        if sched.state in seen:
            raise ValueError(f"duplicate schedule for state {sched.state}")
        seen.add(sched.state)
        year_pos = {int(y): i for i, y in enumerate(sched.years)}
        missing = [y for y in years if y not in year_pos]
        if missing:
            raise ValueError(
                f"schedule for {sched.state} lacks years {missing}")
        revenue = np.array([sched.damped_revenue[year_pos[y]] for y in years])
        losses = panel.losses_for(sched.state, years)
        if np.isnan(losses).any():
            raise ValueError(f"realized losses missing for {sched.state}")
        cum_rev = np.cumsum(revenue)
        cum_loss = np.cumsum(losses)
        insolvent = bool(np.any(cum_rev < cum_loss))
        outcome = StateOutcome(state=sched.state,
                               cumulative_revenue=float(cum_rev[-1]),
                               cumulative_loss=float(cum_loss[-1]),
                               insolvent=insolvent)
        outcomes.append(outcome)
        surplus += outcome.balance
        abs_dev += float(np.abs(revenue - losses).sum())
        n_insolvent += int(insolvent)
    gamma2 = schedules[0].gamma2
    return BacktestReport(scheme=schedules[0].scheme, years=years,
                          outcomes=outcomes, surplus=surplus,
                          abs_deviation=abs_dev,
                          insolvent_count=n_insolvent, gamma2=gamma2)


def write_backtest(report: BacktestReport, path) -> None:
    """Per-state account summary as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "scheme", "cumulative_revenue",
                         "cumulative_loss", "balance", "insolvent"])
        for o in report.outcomes:
            writer.writerow([o.state, report.scheme,
                             repr(o.cumulative_revenue),
                             repr(o.cumulative_loss), repr(o.balance),
                             int(o.insolvent)])


@dataclass
class FrontierRow:
    scheme: str
    gamma2: float
    insolvent_count: int | None
    surplus: float | None
    abs_deviation: float | None
    error: str = ""


ScheduleBuilder = Callable[[float], list[PremiumSchedule]]


def sweep_gamma2(builders: Mapping[str, ScheduleBuilder], gamma2_grid,
                 panel: LossPanel, years,
                 static: Mapping[str, list[PremiumSchedule]] | None = None,
                 ) -> list[FrontierRow]:
    """Backtest every scheme at every band width.

    `builders` map scheme names to functions producing schedules for a
    given gamma2; `static` schemes (baselines) are backtested once and
    replicated across the grid so frontier plots can overlay them.  A
    failure in one cell is recorded on its row and the sweep moves on.
    """
    grid = [float(g) for g in gamma2_grid]
    if not grid:
        raise ValueError("empty gamma2 grid")
    if sorted(grid) != grid:
        raise ValueError("gamma2 grid must be sorted ascending")
    rows: list[FrontierRow] = []
    for scheme in sorted(builders):
        build = builders[scheme]
        for g2 in grid:
            try:
                report = backtest(build(g2), panel, years)
                rows.append(FrontierRow(scheme, g2, report.insolvent_count,
                                        report.surplus,
                                        report.abs_deviation))
            except Exception as exc:  # keep sweeping past broken cells
                logger.warning("sweep cell (%s, %.3g) failed: %s",
                               scheme, g2, exc)
                rows.append(FrontierRow(scheme, g2, None, None, None,
                                        error=str(exc)))
    for scheme in sorted(static or {}):
        try:
            report = backtest(static[scheme], panel, years)
            for g2 in grid:
                rows.append(FrontierRow(scheme, g2, report.insolvent_count,
                                        report.surplus,
                                        report.abs_deviation))
        except Exception as exc:
            logger.warning("static scheme %s failed: %s", scheme, exc)
            for g2 in grid:
                rows.append(FrontierRow(scheme, g2, None, None, None,
                                        error=str(exc)))
    rows.sort(key=lambda r: (r.scheme, r.gamma2))
    return rows


def write_frontier(rows: list[FrontierRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "gamma2", "insolvent_count", "surplus",
                         "abs_deviation", "error"])
        for r in rows:
            writer.writerow([
                r.scheme, repr(r.gamma2),
                "" if r.insolvent_count is None else r.insolvent_count,
                "" if r.surplus is None else repr(r.surplus),
                "" if r.abs_deviation is None else repr(r.abs_deviation),
                r.error])


def read_frontier(path) -> list[FrontierRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"scheme", "gamma2", "insolvent_count", "surplus",
                  "abs_deviation", "error"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ValueError(f"{path}: missing frontier columns")
        for row in reader:
            rows.append(FrontierRow(
                scheme=row["scheme"],
                gamma2=float(row["gamma2"]),
                insolvent_count=(None if row["insolvent_count"] == ""
                                 else int(row["insolvent_count"])),
                surplus=(None if row["surplus"] == ""
                         else float(row["surplus"])),
                abs_deviation=(None if row["abs_deviation"] == ""
                               else float(row["abs_deviation"])),
                error=row["error"]))
    return rows
