"""Adaptive premium rules that react to observed losses.

Instead of committing to fixed premiums, the insurer commits to an
affine decision rule

    p_1 = alpha_1,      p_t = alpha_t + beta_t * l_{t-1}   (t >= 2)

and requires worst-case coverage over the statistical loss band.  The
resulting semi-infinite program is reduced to a finite LP by dualizing
three families of inner maximizations over the band:

* epigraph: an auxiliary objective variable must dominate total
  collected premium for every admissible path,
* coverage: end-of-horizon surplus must reach delta for every path,
* positivity: each year's premium must stay nonnegative for every path.

Each inner maximization over {l >= 0, sum(l) <= c1, -sum(l) <= c2}
contributes a pair of multipliers (one per band side) whose value
c1*s_hi + c2*s_lo bounds the inner optimum from above; strong duality
makes the bound tight at the LP optimum, which the audit verifies
block by block.  Demand damping is intentionally absent here: the rule
is linear in observed losses, and revenue stays linear in the
decisions.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, solve_lp
from .pricing_ro import PremiumSchedule, PricingInfeasibleError
from .uncertainty import CltSet

logger = logging.getLogger(__name__)

SCHEME_ARO = "aro"


@dataclass
class AroCounterpart:
    """Finite LP equivalent of the adaptive pricing program."""

    lp: LinearProgram
    horizon: int
    c1: float
    c2: float
    blocks: dict[str, list[int]]

    def var_index(self, name: str) -> int:
        return self.lp.var_names.index(name)


@dataclass
class AffinePolicy:
    """Solved decision rule: intercepts alpha and loss loadings beta."""

    state: str
    years: list[int]
    alpha: np.ndarray
    beta: np.ndarray
    omega: float
    gamma2: float | None = None
    delta: float | None = None
    gamma3: float | None = None
    gamma4: float | None = None
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        if self.beta.size != self.alpha.size - 1:
            raise ValueError("beta must have one entry fewer than alpha")
        if len(self.years) != self.alpha.size:
            raise ValueError("years must match the pricing horizon")

    @property
    def horizon(self) -> int:
        return self.alpha.size


@dataclass
class AroAuditReport:
    """Evidence that a solved rule is robust over its band."""

    state: str
    n_paths: int
    block_gaps: dict[str, float]
    omega_shortfall: float
    min_premium: float
    coverage_margin: float
    passed: bool


def build_aro_counterpart(band: CltSet, delta: float, gamma3: float,
                          gamma4: float) -> AroCounterpart:
    """Assemble the dualized LP for one state's loss band.

    Variable order: objective bound, T intercepts, T-1 loadings, then
    multiplier pairs for the epigraph block, the coverage block, and
    one positivity block per adaptive year.
    """
    T = band.horizon
    if T < 2:
        raise ValueError("adaptive pricing needs a horizon of at least 2")
    if delta < 0 or gamma3 < 0 or gamma4 < 0:
        raise ValueError("delta, gamma3 and gamma4 must be nonnegative")
    c1 = band.total_upper
    c2 = band.half_width - T * band.mean  # negated band lower end

    n = 4 * T + 2
    names = (["omega"]
             + [f"alpha_{t}" for t in range(1, T + 1)]
             + [f"beta_{t}" for t in range(2, T + 1)]
             + ["s_ep_hi", "s_ep_lo", "s_cov_hi", "s_cov_lo"])
    for t in range(2, T + 1):
        names += [f"s_pos{t}_hi", f"s_pos{t}_lo"]
    i_omega = 0
    i_alpha = {t: t for t in range(1, T + 1)}
    i_beta = {t: T + t - 1 for t in range(2, T + 1)}
    i_ep = (2 * T, 2 * T + 1)
    i_cov = (2 * T + 2, 2 * T + 3)
    i_pos = {t: (2 * T + 4 + 2 * (t - 2), 2 * T + 5 + 2 * (t - 2))
             for t in range(2, T + 1)}

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    row_names: list[str] = []
    blocks: dict[str, list[int]] = {"epigraph": [], "coverage": [],
                                    "positivity": [], "slow_alpha": [],
                                    "slow_beta": []}

    def add(block: str, name: str, coeffs: dict[int, float],
            bound: float) -> None:
        row = np.zeros(n)
        for j, v in coeffs.items():
            row[j] = v
        blocks[block].append(len(rows))
        rows.append(row)
        rhs.append(bound)
        row_names.append(name)

    # epigraph: omega >= sum(alpha) + worst-case sum(beta_t * l_{t-1})
    coeffs = {i_alpha[t]: 1.0 for t in range(1, T + 1)}
    coeffs.update({i_ep[0]: c1, i_ep[1]: c2, i_omega: -1.0})
    add("epigraph", "ep_value", coeffs, 0.0)
    for t in range(2, T + 1):
        add("epigraph", f"ep_dual_t{t}",
            {i_beta[t]: 1.0, i_ep[0]: -1.0, i_ep[1]: 1.0}, 0.0)
    add("epigraph", "ep_dual_0", {i_ep[0]: -1.0, i_ep[1]: 1.0}, 0.0)

    # coverage: sum(alpha) - worst-case sum((1 - beta_{t+1}) l_t) >= delta,
    # where the final year's loss enters with full weight 1
    coeffs = {i_alpha[t]: -1.0 for t in range(1, T + 1)}
    coeffs.update({i_cov[0]: c1, i_cov[1]: c2})
    add("coverage", "cov_value", coeffs, -delta)
    for t in range(2, T + 1):
        add("coverage", f"cov_dual_t{t}",
            {i_beta[t]: -1.0, i_cov[0]: -1.0, i_cov[1]: 1.0}, -1.0)
    add("coverage", "cov_dual_0", {i_cov[0]: -1.0, i_cov[1]: 1.0}, -1.0)

    # positivity: alpha_t + beta_t * l_{t-1} >= 0 for the worst path
    for t in range(2, T + 1):
        hi, lo = i_pos[t]
        add("positivity", f"pos_value_t{t}",
            {i_alpha[t]: -1.0, hi: c1, lo: c2}, 0.0)
        add("positivity", f"pos_dual_t{t}",
            {i_beta[t]: -1.0, hi: -1.0, lo: 1.0}, 0.0)
        add("positivity", f"pos_dual0_t{t}", {hi: -1.0, lo: 1.0}, 0.0)

    # slowly varying decisions
    for t in range(2, T + 1):
        add("slow_alpha", f"alpha_rise_t{t}",
            {i_alpha[t]: 1.0, i_alpha[t - 1]: -1.0}, gamma3)
        add("slow_alpha", f"alpha_fall_t{t}",
            {i_alpha[t]: -1.0, i_alpha[t - 1]: 1.0}, gamma3)
    for t in range(3, T + 1):
        add("slow_beta", f"beta_rise_t{t}",
            {i_beta[t]: 1.0, i_beta[t - 1]: -1.0}, gamma4)
        add("slow_beta", f"beta_fall_t{t}",
            {i_beta[t]: -1.0, i_beta[t - 1]: 1.0}, gamma4)

    c = np.zeros(n)
    c[i_omega] = 1.0
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[i_alpha[1]] = 0.0  # first-year premium is the intercept itself
    for j in range(2 * T, n):
        lower[j] = 0.0  # multipliers
    lp = LinearProgram(c, np.array(rows), np.array(rhs), lower, upper,
                       var_names=names, row_names=row_names)
    return AroCounterpart(lp=lp, horizon=T, c1=c1, c2=c2, blocks=blocks)


def _band_inner_max(c1: float, c2: float, weights: np.ndarray) -> float:
    """Exact worst-case of weights @ l over the loss band, via LP."""
    T = weights.size
    lp = LinearProgram(-weights,
                       np.vstack([np.ones(T), -np.ones(T)]),
                       np.array([c1, c2]),
                       np.zeros(T))
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise PricingInfeasibleError(f"inner maximization {sol.status}")
    return -float(sol.objective)


def solve_aro(state: str, mean: float, std: float, horizon: int,
              gamma2: float, delta: float, gamma3: float, gamma4: float,
              years: list[int] | None = None) -> AffinePolicy:
    """Optimize the affine rule for one state.

    Returns the rule minimizing the worst-case premium total subject to
    worst-case coverage, per-year positivity, and slowly varying
    decisions.  Raises :class:`PricingInfeasibleError` when no rule
    satisfies the blocks (for instance under a hand-tightened variant
    of the counterpart).
    """
    band = CltSet(state=state, horizon=horizon, mean=float(mean),
                  std=float(std), gamma2=float(gamma2))
    cp = build_aro_counterpart(band, delta, gamma3, gamma4)
    sol = solve_lp(cp.lp)
    if sol.status != "optimal":
        raise PricingInfeasibleError(
            f"adaptive pricing for {state or 'state'} ended {sol.status}:"
            f" {sol.message}")
    T = horizon
    alpha = sol.x[1:T + 1].copy()
    beta = sol.x[T + 1:2 * T].copy()
    return AffinePolicy(state=state,
                        years=years or list(range(1, T + 1)),
                        alpha=alpha, beta=beta,
                        omega=float(sol.objective),
                        gamma2=gamma2, delta=delta,
                        gamma3=gamma3, gamma4=gamma4,
                        c1=cp.c1, c2=cp.c2)


def _affine_premiums(policy: AffinePolicy, losses: np.ndarray) -> np.ndarray:
    premiums = policy.alpha.copy()
    premiums[1:] += policy.beta * losses[:-1]
    return premiums


def realize_premiums(policy: AffinePolicy, losses,
                     curve=None) -> PremiumSchedule:
    """Apply the rule to a realized loss path.

    Losses outside the modeled band can drive an affine premium
    negative; such values are clamped to zero with a warning since a
    negative premium is not chargeable.
    """
    losses = np.asarray(losses, dtype=float).ravel()
    if losses.size != policy.horizon:
        raise ValueError(
            f"loss path length {losses.size} does not match policy"
            f" horizon {policy.horizon}")
    premiums = _affine_premiums(policy, losses)
    if np.any(premiums < 0):
        worst = float(premiums.min())
        logger.warning(
            "affine rule for %s produced a negative premium (%.6g) on an"
            " out-of-band loss path; clamping to zero",
            policy.state or "state", worst)
        premiums = np.maximum(premiums, 0.0)
    return PremiumSchedule(state=policy.state, years=list(policy.years),
                           premiums=premiums, scheme=SCHEME_ARO,
                           gamma2=policy.gamma2)


def _canonical_block_values(policy: AffinePolicy) -> dict[str, float]:
    """Closed-form multiplier values for each dualized block.

    Each inner maximization has optimal value c1 * max(0, coeffs) when
    the band is nonempty, attained with the low-side multiplier at
    zero; these are the values the audit compares against exact inner
    maximizations.
    """
    beta = policy.beta
    vals = {
        "epigraph": policy.c1 * max(0.0, float(beta.max(initial=0.0))),
        "coverage": policy.c1 * max(1.0, float((1.0 - beta).max(initial=1.0))),
    }
    for i, t in enumerate(range(2, policy.horizon + 1)):
        vals[f"positivity_t{t}"] = policy.c1 * max(0.0, -float(beta[i]))
    return vals


def audit_policy(policy: AffinePolicy, n_paths: int = 1000, seed: int = 0,
                 gap_tol: float = 1e-6,
                 feas_tol: float = 1e-6) -> AroAuditReport:
    """Check strong duality per block and robustness over sampled paths.

    Paths include the band vertices (total loss concentrated in a
    single year, at both ends of the band) plus Dirichlet-spread
    samples.  Fails when any affine premium dips below -feas_tol or
    any path's surplus falls short of delta by more than feas_tol,
    or when a block's multiplier value is not the exact inner optimum.
    """
    if policy.c1 is None or policy.delta is None:
        raise ValueError("audit requires a policy produced by solve_aro")
    T = policy.horizon
    beta = policy.beta
    scale = max(1.0, abs(policy.c1), policy.delta)

    # block-by-block strong duality
    gaps: dict[str, float] = {}
    canon = _canonical_block_values(policy)
    ep_weights = np.append(beta, 0.0)  # objective weight on each year's loss
    ep_inner = _band_inner_max(policy.c1, policy.c2, ep_weights)
    gaps["epigraph"] = abs(canon["epigraph"] - ep_inner)
    cov_weights = np.append(1.0 - beta, 1.0)
    gaps["coverage"] = abs(
        canon["coverage"] - _band_inner_max(policy.c1, policy.c2,
                                            cov_weights))
    for i, t in enumerate(range(2, T + 1)):
        w = np.zeros(T)
        w[t - 2] = -beta[i]
        gaps[f"positivity_t{t}"] = abs(
            canon[f"positivity_t{t}"] - _band_inner_max(policy.c1, policy.c2,
                                                        w))
    # the claimed objective must dominate the exact worst-case total
    omega_shortfall = float(policy.alpha.sum() + ep_inner - policy.omega)

    # scenario sweep over the band, reconstructed from its two ends
    upper = max(0.0, policy.c1)
    lower = max(0.0, -policy.c2)
    paths = [np.full(T, upper / T)]
    for total in {upper, lower}:
        for t in range(T):
            v = np.zeros(T)
            v[t] = total
            paths.append(v)
    if n_paths > len(paths):
        rng = np.random.default_rng(seed)
        totals = rng.uniform(lower, upper, size=n_paths - len(paths))
        props = rng.dirichlet(np.ones(T), size=n_paths - len(paths))
        paths.extend(props * totals[:, None])
    paths = np.asarray(paths)

    min_premium = np.inf
    margin = np.inf
    for path in paths:
        p = _affine_premiums(policy, path)
        min_premium = min(min_premium, float(p.min()))
        margin = min(margin, float(p.sum() - path.sum() - policy.delta))

    passed = (max(gaps.values()) <= gap_tol * scale
              and omega_shortfall <= feas_tol * scale
              and min_premium >= -feas_tol * scale
              and margin >= -feas_tol * scale)
    return AroAuditReport(state=policy.state, n_paths=len(paths),
                          block_gaps=gaps, omega_shortfall=omega_shortfall,
                          min_premium=min_premium,
                          coverage_margin=margin, passed=passed)


def write_policies(policies: list[AffinePolicy], path) -> None:
    """CSV with one row per state-year: intercept and loss loading."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "t", "year", "alpha", "beta"])
        for pol in policies:
            for i, year in enumerate(pol.years):
                beta = "" if i == 0 else repr(float(pol.beta[i - 1]))
                writer.writerow([pol.state, i + 1, year,
                                 repr(float(pol.alpha[i])), beta])


def read_policies(path) -> list[AffinePolicy]:
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"state", "t", "year", "alpha", "beta"}
        if reader.fieldnames is None or not required.issubset(
                reader.fieldnames):
            raise ValueError(f"{path}: missing policy columns")
        for row in reader:
            st = row["state"]
            if st not in groups:
                groups[st] = {"years": [], "alpha": [], "beta": []}
                order.append(st)
            groups[st]["years"].append(int(row["year"]))
            groups[st]["alpha"].append(float(row["alpha"]))
            if row["beta"] != "":
                groups[st]["beta"].append(float(row["beta"]))
    out = []
    for st in order:
        g = groups[st]
        out.append(AffinePolicy(state=st, years=g["years"],
                                alpha=np.array(g["alpha"]),
                                beta=np.array(g["beta"]),
                                omega=float("nan")))
    return out


def write_audits(reports: list[AroAuditReport], path) -> None:
    payload = [{
        "state": r.state,
        "n_paths": r.n_paths,
        "block_gaps": r.block_gaps,
        "omega_shortfall": r.omega_shortfall,
        "min_premium": r.min_premium,
        "coverage_margin": r.coverage_margin,
        "passed": r.passed,
    } for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
