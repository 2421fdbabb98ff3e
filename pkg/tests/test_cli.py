"""Command-line behaviour: exit codes, manifests, scenario files and golden outputs.

Golden files live in ``tests/data``; set ``FGWILD_REGEN_GOLDEN=1`` to rewrite
them after an intentional output change.
"""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from fgwild.cli import main, read_scenario_file

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture.csv"
REGEN = os.environ.get("FGWILD_REGEN_GOLDEN") == "1"

FIT_ARGS = ["fit", "--data", str(FIXTURE), "--covariate-cols", "z1"]
BAND_ARGS = ["band", "--data", str(FIXTURE), "--covariate-cols", "z1", "--z", "1",
             "--variant", "all", "--boot", "200", "--seed", "11"]


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def check_golden(name, text):
    path = DATA / name
    if REGEN:
        path.write_text(text)
    assert text == path.read_text()


def strip_volatile(manifest):
    return {k: v for k, v in manifest.items() if k not in ("wall_time_seconds", "argv")}


class TestGolden:
    def test_fit(self, capsys):
        code, out, _ = run(FIT_ARGS, capsys)
        assert code == 0
        body = json.loads(out)
        body["manifest"] = strip_volatile(body["manifest"])
        body["manifest"]["config"]["data"] = FIXTURE.name
        check_golden("fit_golden.json", json.dumps(body, indent=2, sort_keys=True) + "\n")

    def test_band_csv(self, tmp_path, capsys):
        out = tmp_path / "band.csv"
        code, _, _ = run(BAND_ARGS + ["--format", "csv", "--out", str(out)], capsys)
        assert code == 0
        check_golden("band_golden.csv", out.read_text())
        manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
        assert manifest["seed"] == 11 and manifest["command"] == "band"
        assert manifest["schema_version"] == 1

    def test_band_json_matches_csv(self, tmp_path, capsys):
        code, out, _ = run(BAND_ARGS + ["--format", "json"], capsys)
        assert code == 0
        body = json.loads(out)
        assert [b["variant"] for b in body["bands"]] == ["plain0", "plain1", "plain2", "ep0", "ep1", "ep2"]
        rows = (DATA / "band_golden.csv").read_text().splitlines()[1:]
        ep0 = [r.split(",") for r in rows if r.startswith("ep0,")]
        band = body["bands"][3]
        assert [float(r[3]) for r in ep0] == band["lower"]
        assert [float(r[4]) for r in ep0] == band["upper"]


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(FIT_ARGS + ["--bogus"])
        assert info.value.code == 2

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

    def test_bad_variant(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(BAND_ARGS[:-6] + ["--variant", "ep9"])
        assert info.value.code == 2

    def test_wrong_z_length(self, capsys):
        code, _, err = run(["band", "--data", str(FIXTURE), "--covariate-cols", "z1", "--z", "1,2",
                            "--boot", "10"], capsys)
        assert code == 1
        assert json.loads(err)["error"] == "invalid_input"

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["fit", "--data", str(tmp_path / "nope.csv")], capsys)
        assert code == 1 and "error" in json.loads(err)

    def test_validated_data_error(self, tmp_path, capsys):
        f = tmp_path / "tied.csv"
        f.write_text("time,event,cens,z\n1,1,3,0\n1,1,3,1\n2,0,2,0\n")
        code, _, err = run(["fit", "--data", str(f), "--covariate-cols", "z"], capsys)
        assert code == 1
        err = json.loads(err)
        assert err["error"] == "tied_type1_events" and err["times"] == [1.0]

    def test_bad_interval(self, capsys):
        code, _, err = run(BAND_ARGS + ["--interval", "0.0001,1"], capsys)
        assert code == 1 and json.loads(err)["error"] == "invalid_interval"

    def test_unconverged_fit_exits_one(self, capsys):
        code, out, _ = run(FIT_ARGS + ["--max-iter", "1", "--tol", "1e-15"], capsys)
        assert code == 1
        assert json.loads(out)["fit"]["converged"] is False

    def test_negative_hazard(self, capsys):
        code, _, err = run(["simulate", "--beta0", "0.25", "--alpha01", "0.5", "--alpha02", "0.05",
                            "--censor-max", "10"], capsys)
        assert code == 1 and json.loads(err)["error"] == "negative_cause_specific_hazard"

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "fgwild", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("fgwild ")


class TestSimulate:
    def test_round_trip_through_fit(self, tmp_path, capsys):
        data = tmp_path / "sim.csv"
        assert run(["simulate", "--n", "60", "--censoring-rate", "low", "--out", str(data)], capsys)[0] == 0
        manifest = json.loads(Path(str(data) + ".manifest.json").read_text())
        assert manifest["counters"]["censored"] + manifest["counters"]["type1"] + \
            manifest["counters"]["type2"] == 60
        code, out, _ = run(["fit", "--data", str(data), "--covariate-cols", "z1"], capsys)
        assert code == 0 and json.loads(out)["fit"]["converged"]

    def test_seed_from_environment(self, monkeypatch, capsys):
        monkeypatch.setenv("FGWILD_SEED", "5")
        a = run(["simulate", "--n", "10", "--censor-max", "3"], capsys)[1]
        monkeypatch.setenv("FGWILD_SEED", "6")
        b = run(["simulate", "--n", "10", "--censor-max", "3"], capsys)[1]
        c = run(["simulate", "--n", "10", "--censor-max", "3", "--seed", "5"], capsys)[1]
        assert a != b and a == c


SCENARIO_TOML = """
skip_invalid = true

[defaults]
n_studies = 4
n_boot = 30
target_z = [[0.0]]

[grid]
hazards = [[0.5, 0.05], [0.5, 0.5]]
beta0 = [[-0.5], [0.25]]
n = [60]
censoring_rate = ["low"]
"""


class TestScenarioFiles:
    def test_grid_order_and_hazards(self, tmp_path):
        f = tmp_path / "s.toml"
        f.write_text(SCENARIO_TOML)
        specs, skip = read_scenario_file(f)
        assert skip
        assert [(s["beta0"], s["alpha01"], s["alpha02"]) for s in specs] == [
            ([-0.5], 0.5, 0.05), ([-0.5], 0.5, 0.5), ([0.25], 0.5, 0.05), ([0.25], 0.5, 0.5)]
        assert all(s["n_studies"] == 4 for s in specs)

    def test_json_scenarios(self, tmp_path):
        f = tmp_path / "s.json"
        f.write_text(json.dumps({"defaults": {"n": 50}, "scenario": [{"beta0": [-0.5]}, {"n": 70}]}))
        specs, _ = read_scenario_file(f)
        assert specs == [{"n": 50, "beta0": [-0.5]}, {"n": 70}]

    def test_coverage_skips_infeasible_rows(self, tmp_path, capsys):
        f = tmp_path / "s.toml"
        f.write_text(SCENARIO_TOML)
        out = tmp_path / "cov.csv"
        code, _, _ = run(["coverage", "--scenario", str(f), "--threads", "1", "--out", str(out)], capsys)
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 4  # header + three feasible settings
        assert lines[0].endswith("plain0,plain1,plain2,ep0,ep1,ep2")
        manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
        assert manifest["counters"]["skipped_scenarios"] == 1

    def test_thread_count_does_not_change_output(self, tmp_path, capsys):
        f = tmp_path / "s.toml"
        f.write_text("n = 60\nn_studies = 6\nn_boot = 30\n")
        outs = []
        for threads in ("1", "2"):
            out = tmp_path / f"cov{threads}.csv"
            assert run(["coverage", "--scenario", str(f), "--threads", threads, "--seed", "3",
                        "--out", str(out)], capsys)[0] == 0
            outs.append(out.read_text())
        assert outs[0] == outs[1]
