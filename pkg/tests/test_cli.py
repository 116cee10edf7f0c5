"""Command-line front end: exit codes, overrides, seeding, output files."""

import json

import pytest

from plumesense import cli
from plumesense.runners import ResultTable, read_results
from plumesense.scenario import scenario_schema


@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({
        "experiment": {"kind": "conc_vs_distance",
                       "distances": [50.0, 100.0, 200.0],
                       "wind_speeds": [140.0]},
        "seed": 8,
    }))
    return path


class TestHappyPath:
    def test_field_writes_csv(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({
            "experiment": {"kind": "field",
                           "x": {"start": 50.0, "stop": 100.0, "num": 3},
                           "y": {"start": -2.0, "stop": 2.0, "num": 5},
                           "z": {"start": 178.0, "stop": 182.0, "num": 5}},
        }))
        out = tmp_path / "grid.csv"
        code = cli.dispatch(["field", "--scenario", str(scenario), "--out", str(out)])
        assert code == cli.EXIT_OK
        table = read_results(out)
        assert table.columns == ("x", "y", "z", "concentration")
        assert len(table.rows) == 75

    def test_stdout_when_no_out(self, scenario_file, capsys):
        code = cli.dispatch(["conc-vs-dist", "--scenario", str(scenario_file)])
        assert code == cli.EXIT_OK
        captured = capsys.readouterr()
        assert "ratio" in captured.out
        assert "3 rows" in captured.err

    def test_json_format_flag(self, scenario_file, tmp_path):
        out = tmp_path / "t.json"
        code = cli.dispatch(["conc-vs-dist", "--scenario", str(scenario_file),
                             "--out", str(out), "--format", "json"])
        assert code == cli.EXIT_OK
        record = json.loads(out.read_text())
        assert record["columns"] == ["wind_speed", "distance", "ratio"]


class TestConfigErrors:
    def test_invalid_override_value_reports_field(self, scenario_file, capsys):
        code = cli.dispatch([
            "conc-vs-dist", "--scenario", str(scenario_file),
            "--set", "receiver.radius=-1",
        ])
        assert code == cli.EXIT_CONFIG
        assert "receiver.radius" in capsys.readouterr().err

    def test_unknown_override_field_rejected(self, scenario_file, capsys):
        code = cli.dispatch([
            "conc-vs-dist", "--scenario", str(scenario_file),
            "--set", "receiver.bogus=1",
        ])
        assert code == cli.EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_kind_mismatch(self, scenario_file, capsys):
        code = cli.dispatch(["pmd", "--scenario", str(scenario_file)])
        assert code == cli.EXIT_CONFIG
        assert "conc_vs_distance" in capsys.readouterr().err

    def test_missing_scenario(self, tmp_path):
        code = cli.dispatch(["field", "--scenario", str(tmp_path / "none.json")])
        assert code == cli.EXIT_CONFIG

    def test_unknown_subcommand(self):
        assert cli.dispatch(["explode"]) == cli.EXIT_CONFIG

    def test_io_error(self, scenario_file):
        code = cli.dispatch(["conc-vs-dist", "--scenario", str(scenario_file),
                             "--out", "/nonexistent-dir/x.csv"])
        assert code == cli.EXIT_IO


class TestSeeding:
    def test_seed_flag_overrides_scenario(self, tmp_path):
        scenario = tmp_path / "mc.json"
        scenario.write_text(json.dumps({
            "experiment": {"kind": "mc_pmd", "trials": 20000,
                           "snr_arguments": [1.0]},
            "seed": 1,
        }))
        outs = []
        for name, seed in (("a.csv", "5"), ("b.csv", "5"), ("c.csv", "6")):
            out = tmp_path / name
            code = cli.dispatch(["mc-pmd", "--scenario", str(scenario),
                                 "--seed", seed, "--out", str(out)])
            assert code == cli.EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_missing_seed_draws_one(self, tmp_path):
        scenario = tmp_path / "mc.json"
        scenario.write_text(json.dumps({
            "experiment": {"kind": "mc_pmd", "trials": 20000,
                           "snr_arguments": [1.0]},
        }))
        out = tmp_path / "r.csv"
        code = cli.dispatch(["mc-pmd", "--scenario", str(scenario),
                             "--out", str(out)])
        assert code == cli.EXIT_OK
        seed_line = [l for l in out.read_text().splitlines()
                     if l.startswith("# seed")][0]
        assert seed_line.split(":")[1].strip() != "none"


class TestEnvScenarioDir:
    def test_bare_name_resolved_from_env(self, scenario_file, tmp_path, monkeypatch):
        elsewhere = tmp_path / "elsewhere"
        elsewhere.mkdir()
        monkeypatch.chdir(elsewhere)
        monkeypatch.setenv("PLUMESENSE_SCENARIO_DIR", str(scenario_file.parent))
        out = tmp_path / "o.csv"
        code = cli.dispatch(["conc-vs-dist", "--scenario", scenario_file.name,
                             "--out", str(out)])
        assert code == cli.EXIT_OK


class TestValidateOraclesExit:
    def test_budget_violation_maps_to_numeric_exit(self, scenario_file, monkeypatch,
                                                   capsys):
        failing = ResultTable(
            columns=("check", "value", "budget", "passed"),
            units=("id", "1", "1", "bool"),
            rows=[(0.0, 0.5, 0.02, 0.0)],
            metadata={"version": "0", "config_hash": "x", "seed": "1",
                      "checks": "0=steady_l2"},
        )
        monkeypatch.setitem(cli.RUNNERS, "validate_oracles",
                            lambda config, jobs=1: failing)
        code = cli.dispatch(["validate-oracles", "--scenario", str(scenario_file),
                             "--set", "experiment={\"kind\": \"validate_oracles\"}"])
        assert code == cli.EXIT_NUMERIC
        assert "steady_l2" in capsys.readouterr().err


class TestSchema:
    def test_schema_prints_json(self, capsys):
        assert cli.dispatch(["schema"]) == cli.EXIT_OK
        printed = json.loads(capsys.readouterr().out)
        assert printed == scenario_schema()

    def test_schema_out_file(self, tmp_path):
        out = tmp_path / "schema.json"
        assert cli.dispatch(["schema", "--out", str(out)]) == cli.EXIT_OK
        assert json.loads(out.read_text()) == scenario_schema()
