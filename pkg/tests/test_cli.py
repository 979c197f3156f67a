"""Command-line interface tests: JSON round trips, pipelines, exit codes."""

import json
import math

import pytest

from recwin import presets
from recwin.cli import main, scenario_from_json, scenario_to_json
from recwin.design_calc import schoenfeld_pipeline, wr_model_based_n


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestScenarioJSON:
    def test_round_trip_all_presets(self):
        for number in range(1, 7):
            spec = presets.scenario(number)
            assert scenario_from_json(scenario_to_json(spec)) == spec

    def test_round_trip_design_scenario(self):
        spec = presets.lwr_design_scenario()
        assert scenario_from_json(scenario_to_json(spec)) == spec

    def test_unknown_field_rejected(self):
        doc = scenario_to_json(presets.scenario(1))
        doc["surprise"] = 1
        from recwin import errors

        with pytest.raises(errors.MissingColumn):
            scenario_from_json(doc)


class TestPipelines:
    def test_simulate_then_wr(self, tmp_path, capsys):
        csv_path = tmp_path / "d.csv"
        code, _, _ = run(
            capsys, "simulate", "--preset", "scenario1", "--n", "120",
            "--seed", "5", "--out", str(csv_path),
        )
        assert code == 0 and csv_path.exists()
        code, out, _ = run(capsys, "wr", "--data", str(csv_path), "--rule", "lwr")
        assert code == 0
        doc = json.loads(out)
        assert doc["rule"] == "lwr" and doc["wr"] > 0
        # library path gives the identical answer
        from recwin.presets import scenario
        from recwin.sim_engine import simulate_dataset
        from recwin.win_rules import WinRule
        from recwin.wr_inference import wr_unstratified

        ref = wr_unstratified(simulate_dataset(scenario(1, 120), seed=5), WinRule.LWR)
        assert doc["wr"] == pytest.approx(ref.wr, abs=1e-12)

    def test_jfm_fit_on_simulated_data(self, tmp_path, capsys):
        csv_path = tmp_path / "d.csv"
        run(capsys, "simulate", "--preset", "scenario1", "--n", "300",
            "--seed", "8", "--out", str(csv_path))
        code, out, _ = run(
            capsys, "jfm", "--data", str(csv_path),
            "--rec-covariates", "trt,z2", "--death-covariates", "trt",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["converged"] is True
        assert "joint_treatment_test" in doc
        assert -1.5 < doc["estimates"]["rec_trt"] < 0.5

    def test_ss_schoenfeld_matches_library(self, capsys):
        code, out, _ = run(
            capsys, "ss-schoenfeld", "--rate-control", "0.3567",
            "--hr", "0.848", "--accrual", "3", "--end", "4",
        )
        assert code == 0
        ref = schoenfeld_pipeline(0.3567, 0.848, accrual=3.0, end=4.0)
        assert json.loads(out)["n"] == ref.n

    def test_ss_wr_matches_library(self, capsys):
        code, out, _ = run(
            capsys, "ss-wr", "--zeta0", "1.1", "--delta0=-0.35,-0.22",
            "--xi=1,1",
        )
        assert code == 0
        assert json.loads(out)["n"] == wr_model_based_n(1.1, (-0.35, -0.22), (1.0, 1.0))

    def test_replicate_study_thread_determinism(self, capsys):
        argv = [
            "replicate-study", "--preset", "scenario1", "--n", "80",
            "--n-replicates", "12", "--seed", "17",
            "--true-log-wr", str(math.log(1.2253)),
        ]
        outputs = []
        for threads in ("1", "2"):
            code, out, _ = run(capsys, *argv, "--threads", threads)
            assert code == 0
            outputs.append(out)
        assert outputs[0] == outputs[1]
        doc = json.loads(outputs[0])
        assert doc["power"]["n_trials"] == 12
        assert "summary" in doc


class TestExitCodes:
    def test_missing_file_is_2(self, capsys):
        code, _, err = run(capsys, "wr", "--data", "/nonexistent/f.csv")
        assert code == 2
        assert json.loads(err)["category"] == "usage"

    def test_bad_csv_is_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        code, _, err = run(capsys, "wr", "--data", str(bad))
        assert code == 3
        assert json.loads(err)["category"] == "data_validation"

    def test_null_hr_is_4(self, capsys):
        code, _, err = run(
            capsys, "ss-schoenfeld", "--rate-control", "0.3",
            "--hr", "1.0", "--accrual", "3", "--end", "4",
        )
        assert code == 4
        assert json.loads(err)["error"] == "NullHR"

    def test_usage_error_is_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["wr"])  # missing required --data
        assert exc.value.code == 2
