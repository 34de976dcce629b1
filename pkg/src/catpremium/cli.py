"""Command-line orchestration: ingest, train-risk, price, sweep.

Each command reads one YAML configuration, writes its artifacts under
the configured output directory, and finishes with a JSON manifest
recording the config hash, input checksums, and artifact names.  Runs
are deterministic given (config, seed, input files): rerunning a
command on unchanged inputs reproduces every output byte for byte.

Exit codes: 0 success, 1 computational infeasibility, 2 configuration
or IO error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .baselines import SCHEME_CMA, SCHEME_HIST, cma_schedule, hist_schedule
from .config import ConfigError, RunConfig, config_hash, load_config
from .evaluation import FrontierRow, sweep_gamma2, write_frontier
from .ingest import (
    IngestError,
    LossPanel,
    PolicyPanel,
    aggregate_policies,
    aggregate_state_year,
    compute_stats,
    interpolate_missing,
    parse_claims,
    parse_policies,
    read_stats,
    state_max_mean_premium,
    write_stats,
)
from .lp import LpError
from .pricing_aro import (audit_policy, realize_premiums, solve_aro,
                          write_audits, write_policies)
from .pricing_ro import (DampingCurve, PricingInfeasibleError,
                         make_damping_curve, solve_nominal, solve_ro1,
                         solve_ro2, write_schedules)
from .report import render_frontier
from .risk import (DatasetError, MetricsError, build_dataset, cross_validate,
                   default_thresholds, evaluate_classifier,
                   forecast_from_model, predict_proba, read_forecasts,
                   save_model, train_logistic, write_forecasts)
from .uncertainty import MlSet, clt_bound

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2

SCHEMES = ("nominal", "ro1", "ro2", "aro", "cma", "hist")
# schemes whose premiums move with the band width; the rest are
# backtested once and replicated across the sweep grid
VARYING_SCHEMES = ("ro1", "ro2", "aro")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, name: str, command: str, cfg: RunConfig,
                    inputs: list[Path], artifacts: list[Path],
                    details: dict | None = None) -> Path:
    payload = {
        "command": command,
        "config_hash": config_hash(cfg),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "artifacts": sorted(p.name for p in artifacts),
        "details": details or {},
    }
    path = out_dir / f"manifest_{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _pmap(workers: int, fn, items):
    """Order-preserving map over a thread pool (serial when pointless)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _input_file(value: str, key: str) -> Path:
    if not value:
        raise ConfigError(f"{key} is not set in the config")
    path = Path(value)
    if not path.is_file():
        raise ConfigError(f"{key}: no such file: {path}")
    return path


def _require_artifact(out_dir: Path, name: str) -> Path:
    path = out_dir / name
    if not path.is_file():
        raise ConfigError(f"missing artifact {name} under {out_dir};"
                          " run the ingest command first")
    return path


def cmd_ingest(cfg: RunConfig) -> int:
    out_dir = Path(cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    claims_path = _input_file(cfg.paths.claims, "paths.claims")
    policies_path = _input_file(cfg.paths.policies, "paths.policies")
    span = (cfg.windows.train[0], cfg.windows.test[1])

    claims = parse_claims(claims_path, cfg.ingest)
    panel = interpolate_missing(
        aggregate_state_year(claims.records, span[0], span[1]))
    stats = compute_stats(panel, cfg.windows.train[0], cfg.windows.train[1])
    policies = parse_policies(policies_path, cfg.ingest)
    policy_panel = aggregate_policies(policies.records, states=panel.states)
    anchors = state_max_mean_premium(policy_panel)

    panel_path = out_dir / "loss_panel.csv"
    panel.to_csv(panel_path)
    stats_path = out_dir / "state_stats.csv"
    write_stats(stats, stats_path)
    policy_path = out_dir / "policy_panel.csv"
    policy_panel.to_csv(policy_path)
    damping_path = out_dir / "damping.json"
    with open(damping_path, "w", encoding="utf-8") as fh:
        json.dump({"anchors": anchors}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    def drop_counts(result):
        return {"n_rows": result.n_rows,
                "n_dropped_blank": result.n_dropped_blank,
                "n_dropped_jurisdiction": result.n_dropped_jurisdiction,
                "n_errors": len(result.errors)}

    _write_manifest(out_dir, "ingest", "ingest", cfg,
                    inputs=[claims_path, policies_path],
                    artifacts=[panel_path, stats_path, policy_path,
                               damping_path],
                    details={"window": list(span),
                             "n_states": len(panel.states),
                             "claims": drop_counts(claims),
                             "policies": drop_counts(policies)})
    logger.info("ingested %d states over %d-%d", len(panel.states), *span)
    return EXIT_OK


def cmd_train_risk(cfg: RunConfig) -> int:
    out_dir = Path(cfg.paths.out_dir)
    panel_path = _require_artifact(out_dir, "loss_panel.csv")
    panel = LossPanel.from_csv(panel_path)
    if cfg.params.thetas:
        thetas = [float(t) for t in cfg.params.thetas]
    else:
        thetas = default_thresholds(panel, cfg.windows.train[0],
                                    cfg.windows.train[1],
                                    levels=cfg.params.percentile_levels)
    combos = [(theta, k) for theta in thetas for k in cfg.params.horizons]

    def run_combo(combo):
        theta, k = combo
        out = {"theta": theta, "horizon": k, "tag": f"theta{theta:g}_k{k}"}
        try:
            train, test = build_dataset(panel, theta, k,
                                        cfg.windows.ml_split_year)
            cv = cross_validate(train.X, train.y, cfg.risk.c_grid,
                                n_folds=cfg.risk.cv_folds, seed=cfg.seed,
                                max_iter=cfg.risk.max_iter, tol=cfg.risk.tol)
            model = train_logistic(train.X, train.y, C=cv.best_C,
                                   max_iter=cfg.risk.max_iter,
                                   tol=cfg.risk.tol,
                                   feature_names=train.feature_names)
        except (DatasetError, MetricsError) as exc:
            out["skipped"] = str(exc)
            return out
        out["model"] = model
        out["forecasts"] = forecast_from_model(model, test)
        out["best_C"] = cv.best_C
        out["cv_auc"] = {f"{c:g}": auc for c, auc in cv.mean_auc.items()}
        try:
            metrics = evaluate_classifier(test.y, predict_proba(model,
                                                                test.X))
            out["metrics"] = dataclasses.asdict(metrics)
        except MetricsError as exc:
            out["metrics"] = {"error": str(exc)}
        return out

    results = _pmap(cfg.workers, run_combo, combos)

    artifacts = []
    all_forecasts = []
    trained = []
    skipped = []
    for res in results:
        tag = res["tag"]
        if "skipped" in res:
            logger.warning("skipping threshold %g horizon %d: %s",
                           res["theta"], res["horizon"], res["skipped"])
            skipped.append({"theta": res["theta"], "horizon": res["horizon"],
                            "reason": res["skipped"]})
            continue
        model_path = out_dir / f"model_{tag}.json"
        save_model(res["model"], model_path)
        fc_path = out_dir / f"forecasts_{tag}.csv"
        write_forecasts(res["forecasts"], fc_path)
        metrics_path = out_dir / f"metrics_{tag}.json"
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(res["metrics"], fh, indent=2, sort_keys=True)
            fh.write("\n")
        artifacts += [model_path, fc_path, metrics_path]
        all_forecasts += res["forecasts"]
        trained.append({"theta": res["theta"], "horizon": res["horizon"],
                        "best_C": res["best_C"], "cv_auc": res["cv_auc"]})
    if all_forecasts:
        combined = out_dir / "forecasts.csv"
        write_forecasts(all_forecasts, combined)
        artifacts.append(combined)
    _write_manifest(out_dir, "train_risk", "train-risk", cfg,
                    inputs=[panel_path], artifacts=artifacts,
                    details={"thresholds": thetas, "trained": trained,
                             "skipped": skipped})
    if not trained:
        print("error: no (threshold, horizon) combination produced a"
              " usable classifier", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


class _Workspace:
    """Ingested artifacts a pricing run works from."""

    def __init__(self, cfg: RunConfig):
        out_dir = Path(cfg.paths.out_dir)
        self.out_dir = out_dir
        self.panel_path = _require_artifact(out_dir, "loss_panel.csv")
        self.panel = LossPanel.from_csv(self.panel_path)
        self.stats_path = _require_artifact(out_dir, "state_stats.csv")
        self.stats = read_stats(self.stats_path)
        self.states = list(self.stats)
        self.inputs = [self.panel_path, self.stats_path]

        self.policy_panel = None
        policy_path = out_dir / "policy_panel.csv"
        if policy_path.is_file():
            self.policy_panel = PolicyPanel.from_csv(policy_path)
            self.inputs.append(policy_path)
        anchors_path = out_dir / "damping.json"
        self.anchors: dict[str, float] = {}
        if anchors_path.is_file():
            with open(anchors_path, encoding="utf-8") as fh:
                self.anchors = json.load(fh)["anchors"]
            self.inputs.append(anchors_path)
        self.curves = _damping_curves(cfg, self.anchors, self.states)


def _damping_curves(cfg: RunConfig, anchors: dict[str, float],
                    states: list[str]) -> dict[str, DampingCurve | None]:
    if not cfg.damping.enabled:
        return {s: None for s in states}
    override = cfg.damping.p_hist_max
    if override is None and not anchors:
        raise ConfigError("damping is enabled but damping.json is absent;"
                          " run ingest or set damping.p_hist_max")
    curves: dict[str, DampingCurve | None] = {}
    for state in states:
        anchor = override if override is not None else anchors.get(state, 0.0)
        if anchor <= 0:
            logger.warning("no positive premium anchor for %s; pricing it"
                           " without damping", state)
            curves[state] = None
            continue
        rate = (None if cfg.damping.m_mode == "inverse_max"
                else float(cfg.damping.m_mode))
        curves[state] = make_damping_curve(anchor, cfg.damping.p0_frac,
                                           rate, cfg.damping.c_min)
    return curves


def _premium_cap(cfg: RunConfig, worst_loss: float, horizon: int,
                 anchor: float) -> float | None:
    if cfg.params.premium_cap_mult is None:
        return None
    return cfg.params.premium_cap_mult * max(worst_loss / horizon, anchor,
                                             cfg.params.delta)


def _load_forecast_sets(cfg: RunConfig,
                        ws: _Workspace) -> tuple[dict[str, list[MlSet]],
                                                 Path]:
    if cfg.paths.external_forecasts:
        path = _input_file(cfg.paths.external_forecasts,
                           "paths.external_forecasts")
    else:
        path = ws.out_dir / "forecasts.csv"
        if not path.is_file():
            raise ConfigError(
                "scheme ro2 needs forecasts: run train-risk first or set"
                " paths.external_forecasts")
    base = cfg.forecast_base_year
    horizon = len(cfg.test_years)
    sets: dict[str, list[MlSet]] = {}
    for fc in read_forecasts(path):
        if fc.base_year != base:
            continue
        if fc.horizon > horizon:
            logger.warning("dropping forecast (theta=%g, k=%d) for %s: its"
                           " horizon exceeds the pricing window",
                           fc.theta, fc.horizon, fc.state)
            continue
        sets.setdefault(fc.state, []).append(
            MlSet(theta=fc.theta, probability=fc.probability,
                  margin=cfg.params.eps, horizon=fc.horizon,
                  state=fc.state))
    if not sets:
        raise ConfigError(f"{path} holds no usable forecasts at base year"
                          f" {base}")
    return sets, path


def _price_flat(scheme: str, cfg: RunConfig, ws: _Workspace, gamma2: float,
                forecast_sets: dict[str, list[MlSet]] | None = None):
    years = cfg.test_years
    horizon = len(years)
    delta, gamma1 = cfg.params.delta, cfg.params.gamma1

    def for_state(state):
        stats = ws.stats[state]
        curve = ws.curves[state]
        anchor = ws.anchors.get(state, 0.0)
        if scheme == "nominal":
            losses = ws.panel.losses_for(state, years)
            cap = _premium_cap(cfg, float(losses.sum()), horizon, anchor)
            return solve_nominal(losses, delta, gamma1, curve, state=state,
                                 years=years, cap=cap)
        band = clt_bound(state, stats.mean, stats.std, horizon, gamma2)
        cap = _premium_cap(cfg, band.bound, horizon, anchor)
        if scheme == "ro1":
            return solve_ro1(state, stats.mean, stats.std, horizon, gamma2,
                             delta, gamma1, curve, years, cap)
        sets = forecast_sets.get(state) if forecast_sets else None
        if not sets:
            raise ConfigError(f"no forecasts for {state} at base year"
                              f" {cfg.forecast_base_year}")
        return solve_ro2(state, stats.mean, stats.std, horizon, gamma2,
                         delta, sets, gamma1, curve, years, cap)

    return _pmap(cfg.workers, for_state, ws.states)


def _price_aro(cfg: RunConfig, ws: _Workspace, gamma2: float,
               with_audits: bool):
    years = cfg.test_years
    horizon = len(years)

    def for_state(state):
        stats = ws.stats[state]
        policy = solve_aro(state, stats.mean, stats.std, horizon, gamma2,
                           cfg.params.delta, cfg.params.gamma3,
                           cfg.params.gamma4, years=years)
        schedule = realize_premiums(policy, ws.panel.losses_for(state,
                                                                years))
        audit = audit_policy(policy, seed=cfg.seed) if with_audits else None
        return schedule, policy, audit

    results = _pmap(cfg.workers, for_state, ws.states)
    schedules = [r[0] for r in results]
    policies = [r[1] for r in results]
    audits = [r[2] for r in results] if with_audits else []
    return schedules, policies, audits


def cmd_price(cfg: RunConfig, scheme: str) -> int:
    ws = _Workspace(cfg)
    out_dir = ws.out_dir
    gamma2 = cfg.params.gamma2
    artifacts = []
    details: dict = {"scheme": scheme, "delta": cfg.params.delta}
    failed_audits = 0

    if scheme == SCHEME_CMA:
        schedules = cma_schedule(ws.panel, cfg.test_years)
    elif scheme == SCHEME_HIST:
        if ws.policy_panel is None:
            raise ConfigError("scheme hist needs policy_panel.csv; run"
                              " ingest first")
        schedules = hist_schedule(ws.policy_panel, cfg.test_years,
                                  states=ws.states)
    elif scheme == "aro":
        details["gamma2"] = gamma2
        schedules, policies, audits = _price_aro(cfg, ws, gamma2,
                                                 with_audits=True)
        policies_path = out_dir / "aro_policies.csv"
        write_policies(policies, policies_path)
        audits_path = out_dir / "aro_audits.json"
        write_audits(audits, audits_path)
        artifacts += [policies_path, audits_path]
        failed_audits = sum(1 for a in audits if not a.passed)
        details["audits_failed"] = failed_audits
    else:
        forecast_sets = None
        if scheme == "ro2":
            forecast_sets, fc_path = _load_forecast_sets(cfg, ws)
            ws.inputs.append(fc_path)
        if scheme in ("ro1", "ro2"):
            details["gamma2"] = gamma2
        schedules = _price_flat(scheme, cfg, ws, gamma2, forecast_sets)

    schedule_path = out_dir / f"schedule_{scheme}.csv"
    write_schedules(schedules, schedule_path)
    artifacts.append(schedule_path)
    _write_manifest(out_dir, f"price_{scheme}", "price", cfg,
                    inputs=ws.inputs, artifacts=artifacts, details=details)
    if failed_audits:
        print(f"error: {failed_audits} adaptive policies failed their"
              " audits; see aro_audits.json", file=sys.stderr)
        return EXIT_INFEASIBLE
    logger.info("priced %d states under scheme %s", len(schedules), scheme)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, only_scheme: str | None = None) -> int:
    ws = _Workspace(cfg)
    out_dir = ws.out_dir
    grid = list(cfg.params.gamma2_grid)
    schemes = [only_scheme] if only_scheme else list(SCHEMES)

    builders = {}
    if "ro1" in schemes:
        builders["ro1"] = lambda g2: _price_flat("ro1", cfg, ws, g2)
    if "ro2" in schemes:
        try:
            forecast_sets, fc_path = _load_forecast_sets(cfg, ws)
            ws.inputs.append(fc_path)
            builders["ro2"] = lambda g2: _price_flat("ro2", cfg, ws, g2,
                                                     forecast_sets)
        except ConfigError:
            if only_scheme == "ro2":
                raise

            def missing_forecasts(g2):
                raise ConfigError("forecasts unavailable; run train-risk"
                                  " or set paths.external_forecasts")
            builders["ro2"] = missing_forecasts
    if "aro" in schemes:
        builders["aro"] = lambda g2: _price_aro(cfg, ws, g2,
                                                with_audits=False)[0]

    static = {}
    static_failures = {}
    for scheme in schemes:
        if scheme in VARYING_SCHEMES:
            continue
        try:
            if scheme == SCHEME_CMA:
                static[scheme] = cma_schedule(ws.panel, cfg.test_years)
            elif scheme == SCHEME_HIST:
                if ws.policy_panel is None:
                    raise ConfigError("policy_panel.csv is missing")
                static[scheme] = hist_schedule(ws.policy_panel,
                                               cfg.test_years,
                                               states=ws.states)
            else:
                static[scheme] = _price_flat("nominal", cfg, ws, 0.0)
        except Exception as exc:
            logger.warning("static scheme %s failed: %s", scheme, exc)
            static_failures[scheme] = str(exc)

    rows = sweep_gamma2(builders, grid, ws.panel, cfg.test_years,
                        static=static)
    for scheme, message in static_failures.items():
        rows += [FrontierRow(scheme, g2, None, None, None, error=message)
                 for g2 in grid]
    rows.sort(key=lambda r: (r.scheme, r.gamma2))

    frontier_path = out_dir / "frontier.csv"
    write_frontier(rows, frontier_path)
    artifacts = [frontier_path]
    n_failed = sum(1 for r in rows if r.error)
    if n_failed < len(rows):
        artifacts += render_frontier(rows, out_dir)
    _write_manifest(out_dir, "sweep", "sweep", cfg, inputs=ws.inputs,
                    artifacts=artifacts,
                    details={"gamma2_grid": grid, "schemes": schemes,
                             "n_cells": len(rows), "n_failed": n_failed})
    if n_failed == len(rows):
        print("error: every sweep cell failed; see frontier.csv",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    if n_failed:
        logger.warning("%d of %d sweep cells failed; see frontier.csv",
                       n_failed, len(rows))
    logger.info("swept %d cells across %d band widths", len(rows),
                len(grid))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catpremium",
        description="State-level catastrophe premium pricing workflows")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help="override the output directory")

    common(sub.add_parser("ingest",
                          help="parse raw extracts into loss/premium"
                               " panels and state statistics"))
    common(sub.add_parser("train-risk",
                          help="train severity classifiers and write"
                               " test-window forecasts"))
    p_price = sub.add_parser("price", help="price one premium scheme")
    common(p_price)
    p_price.add_argument("--scheme", required=True, choices=SCHEMES)
    p_sweep = sub.add_parser("sweep",
                             help="backtest schemes across the band-width"
                                  " grid and emit the frontier")
    common(p_sweep)
    p_sweep.add_argument("--scheme", default=None, choices=SCHEMES,
                         help="restrict the sweep to one scheme")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.paths.out_dir = args.out
        cfg.validate()
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "train-risk":
            return cmd_train_risk(cfg)
        if args.command == "price":
            return cmd_price(cfg, args.scheme)
        return cmd_sweep(cfg, args.scheme)
    except (ConfigError, IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PricingInfeasibleError, LpError, DatasetError,
            MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
