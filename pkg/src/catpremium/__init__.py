"""Catastrophe insurance premium pricing under loss uncertainty.

State-level flood losses feed three families of premium schedules:
nominal pricing against a known loss path, flat robust pricing against
a statistical loss band optionally intersected with classifier-driven
loss caps, and adaptive pricing where each year's premium responds to
the previous year's loss.  Everything needed to reproduce a study end
to end lives here: extract ingestion, severity classifiers, the LP
machinery behind the robust counterparts, backtesting, and a CLI.
"""

from .baselines import cma_schedule, hist_schedule
from .config import ConfigError, RunConfig, config_hash, load_config
from .evaluation import (BacktestReport, FrontierRow, StateOutcome,
                         backtest, sweep_gamma2)
from .ingest import (IngestConfig, IngestError, LossPanel, PolicyPanel,
                     StateStats, aggregate_policies, aggregate_state_year,
                     compute_stats, interpolate_missing, parse_claims,
                     parse_policies)
from .lp import (LinearProgram, LpError, LpSolution, check_certificate,
                 solve_lp)
from .pricing_aro import (AffinePolicy, AroAuditReport, audit_policy,
                          realize_premiums, solve_aro)
from .pricing_ro import (DampingCurve, PremiumSchedule,
                         PricingInfeasibleError, flat_coverage_premium,
                         make_damping_curve, solve_nominal, solve_ro1,
                         solve_ro2)
from .risk import (ClassifierMetrics, LogisticModel, RiskForecast,
                   auc_score, build_dataset, cross_validate,
                   default_thresholds, evaluate_classifier,
                   forecast_from_model, predict_proba, train_logistic)
from .uncertainty import CltSet, MlSet, clt_bound, ml_bound

__version__ = "0.1.0"

__all__ = [
    "AffinePolicy",
    "AroAuditReport",
    "BacktestReport",
    "ClassifierMetrics",
    "CltSet",
    "ConfigError",
    "DampingCurve",
    "FrontierRow",
    "IngestConfig",
    "IngestError",
    "LinearProgram",
    "LogisticModel",
    "LossPanel",
    "LpError",
    "LpSolution",
    "MlSet",
    "PolicyPanel",
    "PremiumSchedule",
    "PricingInfeasibleError",
    "RiskForecast",
    "RunConfig",
    "StateOutcome",
    "StateStats",
    "aggregate_policies",
    "aggregate_state_year",
    "auc_score",
    "audit_policy",
    "backtest",
    "build_dataset",
    "check_certificate",
    "clt_bound",
    "cma_schedule",
    "compute_stats",
    "config_hash",
    "cross_validate",
    "default_thresholds",
    "evaluate_classifier",
    "flat_coverage_premium",
    "forecast_from_model",
    "hist_schedule",
    "interpolate_missing",
    "load_config",
    "make_damping_curve",
    "ml_bound",
    "parse_claims",
    "parse_policies",
    "predict_proba",
    "realize_premiums",
    "solve_aro",
    "solve_lp",
    "solve_nominal",
    "solve_ro1",
    "solve_ro2",
    "sweep_gamma2",
    "train_logistic",
]
