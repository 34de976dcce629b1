"""Reference premium schedules the optimized schemes are judged against.

Two baselines: charging the running mean of all losses observed so far
(a backward-looking actuarial rule), and passing through the premiums
the program actually collected.
"""

from __future__ import annotations

import logging

import numpy as np

from .ingest import LossPanel, PolicyPanel
from .pricing_ro import PremiumSchedule

logger = logging.getLogger(__name__)

SCHEME_CMA = "cma"
SCHEME_HIST = "hist"


def cma_schedule(panel: LossPanel, eval_years,
                 states: list[str] | None = None) -> list[PremiumSchedule]:
    """Cumulative moving average of observed losses, one schedule per
    state.

    The premium for year t is the mean of the panel's losses over every
    year strictly before t, so realized losses during the evaluation
    window feed later premiums but never their own year's.
    """
    eval_years = [int(y) for y in eval_years]
    if not eval_years:
        raise ValueError("need at least one evaluation year")
    first_panel_year = int(panel.years[0])
    if min(eval_years) <= first_panel_year:
        raise ValueError(
            f"no history before evaluation year {min(eval_years)};"
            f" panel starts at {first_panel_year}")
    states = states or list(panel.states)
    out = []
    for state in states:
        row = panel.losses[panel.state_index(state)]
        premiums = []
        for year in eval_years:
            past = row[panel.years < year]
            if np.isnan(past).any():
                raise ValueError(
                    f"missing losses before {year} for {state};"
                    " interpolate first")
            premiums.append(float(past.mean()))
        out.append(PremiumSchedule(state=state, years=eval_years,
                                   premiums=np.array(premiums),
                                   scheme=SCHEME_CMA))
    return out


def hist_schedule(policies: PolicyPanel, eval_years,
                  states: list[str] | None = None) -> list[PremiumSchedule]:
    """Premiums actually collected, passed through as the schedule.

    State-years absent from the policy panel contribute zero premium;
    each gap is logged since a zero-revenue year usually means the
    extract simply does not reach that far.
    """
    eval_years = [int(y) for y in eval_years]
    if not eval_years:
        raise ValueError("need at least one evaluation year")
    states = states or list(policies.states)
    panel_years = [int(y) for y in policies.years]
    out = []
    for state in states:
        premiums = np.zeros(len(eval_years))
        if state in policies.states:
            i = policies.states.index(state)
            for j, year in enumerate(eval_years):
                if year in panel_years:
                    premiums[j] = policies.premium_collected[
                        i, panel_years.index(year)]
                else:
                    logger.warning("no policy data for %s year %d;"
                                   " using zero premium", state, year)
        else:
            logger.warning("state %s missing from policy data; using zero"
                           " premiums", state)
        out.append(PremiumSchedule(state=state, years=eval_years,
                                   premiums=premiums, scheme=SCHEME_HIST))
    return out
