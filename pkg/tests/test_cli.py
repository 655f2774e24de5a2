import json
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from contract_forge import cli


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("contract_forge") / "fixtures" / name))


FAST_FIXTURES = [
    "example4_enumerate.json",
    "plain_menu_demo.json",
    "necessity_env.json",
    "revisable_grid.json",
]


class TestParseScenario:
    @pytest.mark.parametrize(
        "name",
        FAST_FIXTURES + ["labor_single.json", "agency_beta17_21.json"],
    )
    def test_bundled_fixtures_parse(self, name):
        sc = cli.parse_scenario(fixture_path(name))
        assert sc.command in cli.COMMANDS

    @pytest.mark.parametrize("name", FAST_FIXTURES)
    def test_parse_serialize_round_trip(self, name, tmp_path):
        raw = json.loads(fixture_path(name).read_text())
        out = tmp_path / "again.json"
        out.write_text(json.dumps(raw))
        sc = cli.parse_scenario(out)
        assert sc.raw == raw

    def test_unknown_field_named(self, tmp_path):
        bad = tmp_path / "bad.json"
        raw = json.loads(fixture_path("labor_single.json").read_text())
        raw["foo"] = 1
        bad.write_text(json.dumps(raw))
        with pytest.raises(cli.ScenarioError, match="unknown field 'foo'"):
            cli.parse_scenario(bad)

    def test_nested_unknown_field_has_path(self, tmp_path):
        bad = tmp_path / "bad.json"
        raw = json.loads(fixture_path("labor_single.json").read_text())
        raw["problem"]["mystery"] = True
        bad.write_text(json.dumps(raw))
        with pytest.raises(cli.ScenarioError, match=r"\$\.problem"):
            cli.parse_scenario(bad)

    def test_expression_error_with_offset(self, tmp_path):
        bad = tmp_path / "bad.json"
        raw = json.loads(fixture_path("labor_single.json").read_text())
        raw["problem"]["agent"] = "x*theta -"
        bad.write_text(json.dumps(raw))
        with pytest.raises(cli.ScenarioError, match="offset 9"):
            cli.parse_scenario(bad)

    def test_unknown_command(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": 1, "command": "fly"}')
        with pytest.raises(cli.ScenarioError, match="unknown command"):
            cli.parse_scenario(bad)

    def test_json_error_positioned(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": 1')
        with pytest.raises(cli.ScenarioError, match="offset"):
            cli.parse_scenario(bad)


class TestRunAndReports:
    def test_enumerate_counts(self, tmp_path):
        sc = cli.parse_scenario(fixture_path("example4_enumerate.json"))
        report = cli.run(sc)
        assert report.payload["results"]["count"] == 3
        files = cli.write_report(report, tmp_path)
        assert [f.name for f in files] == ["report.json"]

    def test_empty_tables_no_csv(self, tmp_path):
        sc = cli.parse_scenario(fixture_path("necessity_env.json"))
        report = cli.run(sc)
        files = cli.write_report(report, tmp_path)
        assert [f.name for f in files] == ["report.json"]

    def test_exit_codes_via_cli(self, tmp_path):
        runner = CliRunner()
        ok = runner.invoke(
            cli.main,
            [
                "--scenario",
                str(fixture_path("example4_enumerate.json")),
                "--out",
                str(tmp_path / "a"),
            ],
        )
        assert ok.exit_code == 0
        finding = runner.invoke(
            cli.main,
            [
                "--scenario",
                str(fixture_path("plain_menu_demo.json")),
                "--out",
                str(tmp_path / "b"),
            ],
        )
        assert finding.exit_code == 1
        assert "safe-profitable deviation: PlainMenu" in finding.output
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": 1, "command": "solve-single"}')
        err = runner.invoke(cli.main, ["--scenario", str(bad), "--out", str(tmp_path / "c")])
        assert err.exit_code == 2

    def test_missing_file_is_error(self, tmp_path):
        runner = CliRunner()
        res = runner.invoke(
            cli.main, ["--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path)]
        )
        assert res.exit_code == 2

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONTRACT_FORGE_OUT", str(tmp_path / "envout"))
        runner = CliRunner()
        res = runner.invoke(
            cli.main, ["--scenario", str(fixture_path("example4_enumerate.json"))]
        )
        assert res.exit_code == 0
        assert (tmp_path / "envout" / "report.json").exists()

    def test_gamma_tables_sorted_identical(self, tmp_path):
        sc = cli.parse_scenario(fixture_path("revisable_grid.json"))
        report = cli.run(sc)
        assert report.exit_code == 0
        cli.write_report(report, tmp_path)
        a = (tmp_path / "gamma_alpha.csv").read_bytes()
        z = (tmp_path / "gamma_zero.csv").read_bytes()
        assert a == z

    @pytest.mark.parametrize("name", FAST_FIXTURES)
    def test_reruns_byte_identical(self, name, tmp_path):
        sc = cli.parse_scenario(fixture_path(name))
        for run_dir in ("one", "two"):
            cli.write_report(cli.run(sc), tmp_path / run_dir)
        one = sorted((tmp_path / "one").iterdir())
        two = sorted((tmp_path / "two").iterdir())
        assert [f.name for f in one] == [f.name for f in two]
        for f1, f2 in zip(one, two):
            assert f1.read_bytes() == f2.read_bytes()

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        sc = cli.parse_scenario(fixture_path("necessity_env.json"))
        outputs = []
        for threads in (1, 2, 8):
            report = cli.run(sc, threads=threads)
            out = tmp_path / f"t{threads}"
            cli.write_report(report, out)
            outputs.append((out / "report.json").read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_number_formatting_12_digits(self):
        from contract_forge.reportio import dumps, format_number

        assert format_number(1.0 / 3.0) == "0.333333333333"
        assert format_number(1) == "1"
        assert format_number(True) == "true"
        text = dumps({"v": 2.0 / 3.0})
        assert "0.666666666667" in text

    def test_private_check_requires_private_env(self, tmp_path):
        raw = json.loads(fixture_path("necessity_env.json").read_text())
        raw["command"] = "private-check"
        raw["assessment"] = {
            "contracts": [
                {"kind": "menu_rec", "menu": ["a"]},
                {"kind": "menu_rec", "menu": ["d"]},
            ],
            "strategy": {
                "t0": [{"profile": ["a|w", "d|e"], "prob": 1.0}],
                "t1": [{"profile": ["a|w", "d|e"], "prob": 1.0}],
                "t2": [{"profile": ["a|w", "d|e"], "prob": 1.0}],
            },
        }
        raw["options"] = {}
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(raw))
        sc = cli.parse_scenario(path)
        with pytest.raises(cli.ScenarioError, match="private"):
            cli.run(sc)


class TestEngineScenarios:
    def _check_equilibrium_scenario(self, tmp_path, strategy_rows):
        raw = {
            "schema": 1,
            "command": "check-equilibrium",
            "environment": {
                "types": {
                    "kind": "finite",
                    "items": [
                        {"label": "t0", "value": 1.0, "weight": 0.5},
                        {"label": "t1", "value": 2.0, "weight": 0.5},
                    ],
                },
                "principals": [
                    {
                        "contractible": [{"label": "x", "value": 1.0}],
                        "noncontractible": [
                            {"label": "y0", "value": 0.0},
                            {"label": "y1", "value": 1.0},
                        ],
                        "feasible": {"x": ["y0", "y1"]},
                    }
                ],
                "payoffs": {
                    "mode": "expressions",
                    "agent": "x*theta - y",
                    "principals": ["y*theta"],
                },
            },
            "assessment": {
                "contracts": [{"kind": "menu_rec", "menu": ["x"]}],
                "strategy": strategy_rows,
            },
            "options": {},
        }
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(raw))
        return cli.run(cli.parse_scenario(path))

    def test_check_equilibrium_exit_codes(self, tmp_path):
        # both types prefer y0 at equal x, so recommending y1 for t0 fails IC
        failing = self._check_equilibrium_scenario(
            tmp_path,
            {
                "t0": [{"profile": ["x|y1"], "prob": 1.0}],
                "t1": [{"profile": ["x|y1"], "prob": 1.0}],
            },
        )
        assert failing.exit_code == 1
        passing = self._check_equilibrium_scenario(
            tmp_path,
            {
                "t0": [{"profile": ["x|y1"], "prob": 1.0}],
                "t1": [{"profile": ["x|y0"], "prob": 1.0}],
            },
        )
        # principal prefers y1 against the t0 posterior? v = y*theta:
        # separating: after x|y1 posterior t0, v(y1)=1 > v(y0)=0, follows
        # recommendation; agent t0: u = 1 - y, prefers y0; deviating to x|y0
        # yields y0 and u = 1 > 0, so this also fails agent IC
        assert passing.exit_code == 1
        pooled = self._check_equilibrium_scenario(
            tmp_path,
            {
                "t0": [{"profile": ["x|y0"], "prob": 1.0}],
                "t1": [{"profile": ["x|y0"], "prob": 1.0}],
            },
        )
        # pooling on y0: principal deviation to y1 pays 1.5 > 0 at the prior
        assert pooled.exit_code == 1

    def test_robust_check_scenario(self, tmp_path):
        raw = json.loads(fixture_path("necessity_env.json").read_text())
        env_block = raw["environment"]
        # necessity payoffs are built by the generator; reproduce them as a table
        from contract_forge import contracts as ct
        from contract_forge import cli as _cli

        env = _cli._environment_from(env_block, "$.environment")
        nec_env, _, phi = ct.necessity_environment(env, 0, ["a", "b"])
        entries = []
        for (state, prof), (u, vs) in nec_env.payoffs.table.items():
            entries.append(
                {
                    "state": state,
                    "pairs": [list(p) for p in prof],
                    "agent": u,
                    "principals": list(vs),
                }
            )
        scenario = {
            "schema": 1,
            "command": "robust-check",
            "environment": {
                "types": env_block["types"],
                "principals": env_block["principals"],
                "payoffs": {"mode": "table", "entries": entries},
            },
            "assessment": {
                "contracts": [
                    {"kind": "menu_rec", "menu": ["a", "b"]},
                    {"kind": "menu_rec", "menu": ["d"]},
                ],
                "strategy": {
                    lab: [{"profile": [f"{phi[lab]}|w", "d|e"], "prob": 1.0}]
                    for lab in ("t0", "t1", "t2")
                },
            },
            "options": {},
        }
        path = tmp_path / "robust.json"
        path.write_text(json.dumps(scenario))
        report = cli.run(cli.parse_scenario(path))
        assert report.exit_code == 0
        assert report.payload["results"]["passed"] is True


class TestSerializationRoundTrip:
    def test_check_equilibrium_report_serializes(self, tmp_path):
        """Flag fields reach the JSON writer as plain booleans and numbers."""
        raw = {
            "schema": 1,
            "command": "check-equilibrium",
            "environment": {
                "types": {
                    "kind": "finite",
                    "items": [{"label": "t0", "value": 1.0, "weight": 1.0}],
                },
                "principals": [
                    {
                        "contractible": [{"label": "x", "value": 1.0}],
                        "noncontractible": [
                            {"label": "y0", "value": 0.0},
                            {"label": "y1", "value": 1.0},
                        ],
                        "feasible": {"x": ["y0", "y1"]},
                    }
                ],
                "payoffs": {
                    "mode": "expressions",
                    "agent": "x*theta - y",
                    "principals": ["y*theta"],
                },
            },
            "assessment": {
                "contracts": [{"kind": "menu_rec", "menu": ["x"]}],
                "strategy": {"t0": [{"profile": ["x|y1"], "prob": 1.0}]},
                "continuation": [
                    {"principal": 1, "profile": ["x|y0"], "action": "y1"},
                    {"principal": 1, "profile": ["x|y1"], "action": "y1"},
                ],
            },
        }
        path = tmp_path / "s.json"
        path.write_text(json.dumps(raw))
        report = cli.run(cli.parse_scenario(path))
        files = cli.write_report(report, tmp_path / "out")
        payload = json.loads(files[0].read_text())
        assert payload["results"]["passed"] is True
        assert payload["results"]["values"] == [1]
        assert payload["results"]["bayes_ok"] is True
