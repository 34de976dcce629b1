import json

import pytest

from catpremium.cli import main
from catpremium.pricing_ro import read_schedules

STATES = ["FL", "LA", "NY", "TX"]

CONFIG = """\
paths:
  claims: {claims}
  policies: {policies}
  out_dir: {out}
windows:
  train: [1990, 2004]
  test: [2005, 2008]
  ml_split_year: 2002
params:
  gamma1: 1.0e9
  gamma2: 0.8
  gamma2_grid: [0.0, 1.0, 2.0]
  gamma3: 1.0e9
  gamma4: 1.0
  delta: 50.0
  eps: 0.1
  thetas: [400.0, 800.0]
  horizons: [2]
{extra_params}damping:
  enabled: true
risk:
  cv_folds: 2
ingest:
  jurisdictions: [FL, LA, NY, TX]
seed: 3
workers: 2
"""


def annual_loss(i, year):
    # deterministic sawtooth with a large spike every sixth year, so
    # severity labels carry both classes at both thresholds
    loss = 100.0 + 40.0 * ((i + year) % 5)
    if year % 6 == 0:
        loss += 600.0
    return loss


def make_inputs(root):
    claims = root / "claims.csv"
    lines = ["dateOfLoss,state,amountPaidOnBuildingClaim"]
    for i, state in enumerate(STATES):
        for year in range(1990, 2009):
            total = annual_loss(i, year)
            lines.append(f"{year}-06-15,{state},{total * 0.6}")
            lines.append(f"{year}-09-01,{state},{total * 0.4}")
    claims.write_text("\n".join(lines) + "\n")

    policies = root / "policies.csv"
    lines = ["propertyState,policyTeminationDate,"
             "totalInsurancePremiumOfThePolicy"]
    for i, state in enumerate(STATES):
        for year in range(1990, 2009):
            premium = 150.0 + 10.0 * i + 20.0 * (year % 3)
            lines.append(f"{state},{year}-03-31,{premium}")
            lines.append(f"{state},{year}-10-31,{premium}")
    policies.write_text("\n".join(lines) + "\n")
    return claims, policies


def write_config(root, out, extra_params=""):
    claims, policies = make_inputs(root)
    cfg = root / "run.yaml"
    cfg.write_text(CONFIG.format(claims=claims, policies=policies, out=out,
                                 extra_params=extra_params))
    return cfg


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    out = root / "out"
    cfg = write_config(root, out)
    assert main(["ingest", "--config", str(cfg)]) == 0
    assert main(["train-risk", "--config", str(cfg)]) == 0
    return {"root": root, "config": cfg, "out": out}


class TestIngest:
    def test_artifacts_and_manifest(self, workspace):
        out = workspace["out"]
        for name in ("loss_panel.csv", "state_stats.csv",
                     "policy_panel.csv", "damping.json"):
            assert (out / name).is_file()
        manifest = json.loads((out / "manifest_ingest.json").read_text())
        assert len(manifest["artifacts"]) == 4
        assert len(manifest["config_hash"]) == 64
        assert all(len(d) == 64 for d in manifest["inputs"].values())
        assert manifest["details"]["n_states"] == 4

    def test_missing_claims_path_names_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("paths:\n  policies: whatever.csv\n")
        assert main(["ingest", "--config", str(cfg)]) == 2
        assert "paths.claims" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, workspace):
        out = workspace["out"]
        names = ["loss_panel.csv", "state_stats.csv", "policy_panel.csv",
                 "damping.json", "manifest_ingest.json"]
        before = {n: (out / n).read_bytes() for n in names}
        assert main(["ingest", "--config", str(workspace["config"])]) == 0
        for n in names:
            assert (out / n).read_bytes() == before[n]


class TestTrainRisk:
    def test_per_combo_and_combined_outputs(self, workspace):
        out = workspace["out"]
        for tag in ("theta400_k2", "theta800_k2"):
            assert (out / f"model_{tag}.json").is_file()
            assert (out / f"forecasts_{tag}.csv").is_file()
            metrics = json.loads((out / f"metrics_{tag}.json").read_text())
            assert "error" in metrics or 0.0 <= metrics["auc"] <= 1.0
        combined = (out / "forecasts.csv").read_text().splitlines()
        assert combined[0] == "state,base_year,horizon,theta,probability"
        manifest = json.loads((out / "manifest_train_risk.json").read_text())
        assert len(manifest["details"]["trained"]) == 2
        assert manifest["details"]["skipped"] == []

    def test_rerun_identical_forecasts(self, workspace):
        out = workspace["out"]
        before = (out / "forecasts.csv").read_bytes()
        assert main(["train-risk", "--config",
                     str(workspace["config"])]) == 0
        assert (out / "forecasts.csv").read_bytes() == before

    def test_needs_ingest_first(self, workspace, capsys):
        empty = workspace["root"] / "empty"
        code = main(["train-risk", "--config", str(workspace["config"]),
                     "--out", str(empty)])
        assert code == 2
        assert "loss_panel.csv" in capsys.readouterr().err


class TestPrice:
    def test_ro1_schedule_contract(self, workspace):
        assert main(["price", "--config", str(workspace["config"]),
                     "--scheme", "ro1"]) == 0
        path = workspace["out"] / "schedule_ro1.csv"
        lines = path.read_text().splitlines()
        assert lines[0] == ("state,year,premium,damped_fraction,scheme,"
                            "binding_constraint")
        assert len(lines) == 1 + len(STATES) * 4
        schedules = read_schedules(path)
        assert [s.state for s in schedules] == STATES
        assert all(s.binding_constraint == "CLT" for s in schedules)

    def test_ro2_without_forecasts(self, workspace, capsys):
        bare = workspace["root"] / "bare"
        assert main(["ingest", "--config", str(workspace["config"]),
                     "--out", str(bare)]) == 0
        code = main(["price", "--config", str(workspace["config"]),
                     "--out", str(bare), "--scheme", "ro2"])
        assert code == 2
        assert "train-risk" in capsys.readouterr().err

    def test_ro2_at_least_ro1(self, workspace):
        cfg = str(workspace["config"])
        assert main(["price", "--config", cfg, "--scheme", "ro1"]) == 0
        assert main(["price", "--config", cfg, "--scheme", "ro2"]) == 0
        ro1 = {s.state: s.premiums[0]
               for s in read_schedules(workspace["out"] / "schedule_ro1.csv")}
        ro2 = {s.state: s.premiums[0]
               for s in read_schedules(workspace["out"] / "schedule_ro2.csv")}
        for state in STATES:
            assert ro2[state] >= ro1[state] - 1e-9

    def test_aro_writes_policies_and_audits(self, workspace):
        assert main(["price", "--config", str(workspace["config"]),
                     "--scheme", "aro"]) == 0
        out = workspace["out"]
        assert (out / "schedule_aro.csv").is_file()
        policy_lines = (out / "aro_policies.csv").read_text().splitlines()
        assert policy_lines[0] == "state,t,year,alpha,beta"
        assert len(policy_lines) == 1 + len(STATES) * 4
        audits = json.loads((out / "aro_audits.json").read_text())
        assert len(audits) == len(STATES)
        assert all(a["passed"] for a in audits)
        assert all(gap <= 1e-6 for a in audits
                   for gap in a["block_gaps"].values())

    def test_baseline_schemes(self, workspace):
        cfg = str(workspace["config"])
        for scheme in ("nominal", "cma", "hist"):
            assert main(["price", "--config", cfg,
                         "--scheme", scheme]) == 0
            assert (workspace["out"] / f"schedule_{scheme}.csv").is_file()

    def test_infeasible_cap_exits_one(self, workspace, capsys):
        root = workspace["root"]
        cfg = root / "capped.yaml"
        cfg.write_text(write_config(root, workspace["out"]).read_text()
                       .replace("  eps: 0.1\n",
                                "  eps: 0.1\n  premium_cap_mult: 1.0e-6\n"))
        assert main(["price", "--config", str(cfg),
                     "--scheme", "ro1"]) == 1
        assert "cap" in capsys.readouterr().err


class TestSweep:
    def test_full_grid(self, workspace):
        assert main(["sweep", "--config", str(workspace["config"])]) == 0
        out = workspace["out"]
        lines = (out / "frontier.csv").read_text().splitlines()
        # 6 schemes x 3 grid points
        assert len(lines) == 1 + 18
        assert (out / "frontier.png").is_file()
        assert (out / "sweep_curves.png").is_file()
        manifest = json.loads((out / "manifest_sweep.json").read_text())
        assert manifest["details"]["n_failed"] == 0
        assert sorted(manifest["artifacts"]) == [
            "frontier.csv", "frontier.png", "sweep_curves.png"]

    def test_single_scheme_restriction(self, workspace):
        single = workspace["root"] / "single"
        assert main(["ingest", "--config", str(workspace["config"]),
                     "--out", str(single)]) == 0
        assert main(["sweep", "--config", str(workspace["config"]),
                     "--out", str(single), "--scheme", "ro1"]) == 0
        lines = (single / "frontier.csv").read_text().splitlines()
        assert len(lines) == 1 + 3
        assert all(line.startswith("ro1,") for line in lines[1:])

    def test_missing_forecasts_recorded_not_fatal(self, workspace):
        nofc = workspace["root"] / "nofc"
        assert main(["ingest", "--config", str(workspace["config"]),
                     "--out", str(nofc)]) == 0
        assert main(["sweep", "--config", str(workspace["config"]),
                     "--out", str(nofc)]) == 0
        lines = (nofc / "frontier.csv").read_text().splitlines()[1:]
        ro2_rows = [l for l in lines if l.startswith("ro2,")]
        assert len(ro2_rows) == 3
        assert all("forecasts unavailable" in l for l in ro2_rows)

    def test_rerun_identical_frontier(self, workspace):
        out = workspace["out"]
        before = (out / "frontier.csv").read_bytes()
        png_before = (out / "frontier.png").read_bytes()
        assert main(["sweep", "--config", str(workspace["config"])]) == 0
        assert (out / "frontier.csv").read_bytes() == before
        assert (out / "frontier.png").read_bytes() == png_before


class TestParser:
    def test_seed_override_changes_hash(self, workspace):
        out = workspace["out"]
        base = json.loads(
            (out / "manifest_ingest.json").read_text())["config_hash"]
        assert main(["ingest", "--config", str(workspace["config"]),
                     "--seed", "99"]) == 0
        seeded = json.loads(
            (out / "manifest_ingest.json").read_text())["config_hash"]
        assert seeded != base
        # restore the original manifest for the other tests
        assert main(["ingest", "--config", str(workspace["config"])]) == 0

    def test_bad_scheme_rejected(self):
        with pytest.raises(SystemExit):
            main(["price", "--config", "x.yaml", "--scheme", "fancy"])
