import csv
import json
import os

import pytest
import yaml

from infoputs.cli import emit_plot_data, fresh_directory, main, run, sha256
from infoputs.config import ScenarioConfig, emit_scenario, parse_scenario
from infoputs.errors import ConfigurationError


def write(tmp_path, doc, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


class TestParse:
    def test_minimal_defaults(self, tmp_path):
        cfg = parse_scenario(write(tmp_path, {"game": {"family": "canonical"}, "run": {"mode": "certify"}}))
        assert cfg.policy.eta == 0.01 and cfg.run.eps == 1e-3
        assert cfg.run.grid == 200 and cfg.run.trials == 1000

    def test_negative_switch_rate(self, tmp_path):
        with pytest.raises(ConfigurationError, match="switch_rate must be positive"):
            parse_scenario(write(tmp_path, {"game": {"switch_rate": -1}}))

    def test_unknown_keys(self, tmp_path):
        with pytest.raises(ConfigurationError, match="run.colour"):
            parse_scenario(write(tmp_path, {"run": {"colour": "red"}}))
        with pytest.raises(ConfigurationError, match="extras"):
            parse_scenario(write(tmp_path, {"extras": {}}))
        with pytest.raises(ConfigurationError, match="game.parameters.z"):
            parse_scenario(write(tmp_path, {"game": {"family": "affine", "parameters": {"z": 1}}}))

    @pytest.mark.parametrize("doc,key", [
        ({"policy": {"eta": "small"}}, "policy.eta"),
        ({"policy": {"eta": 1.5}}, "policy.eta"),
        ({"run": {"N": 2.5}}, "run.N"),
        ({"run": {"mu0": 1.2}}, "run.mu0"),
        ({"run": {"grid": 10}}, "run.grid"),
        ({"run": {"mode": "dance"}}, "run.mode"),
        ({"policy": {"kind": "delayed_jump"}}, "policy.t_delay"),
        ({"output": {"formats": ["xml"]}}, "output.formats"),
        ({"game": {"family": "tabulated"}}, "game.parameters.A_grid"),
        ({"run": {"oracle": "yes"}}, "run.oracle"),
    ])
    def test_errors_name_the_key(self, tmp_path, doc, key):
        with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
            parse_scenario(write(tmp_path, doc))

    def test_round_trip(self, tmp_path):
        cfg = parse_scenario(write(tmp_path, {"game": {"family": "affine", "parameters": {"a": 1.0, "b": 2.0, "c": -1.0}},
                                              "run": {"mode": "simulate", "mu0": 0.4, "Ns": [10, 100]}}))
        p = tmp_path / "again.yaml"
        emit_scenario(cfg, p)
        assert parse_scenario(str(p)) == cfg

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_scenario(str(tmp_path / "missing.yaml"))
        bad = tmp_path / "bad.yaml"
        bad.write_text("game: [unclosed")
        with pytest.raises(ConfigurationError):
            parse_scenario(str(bad))


def _cfg(tmp_path, **run):
    doc = {"game": {"family": "canonical"}, "run": dict(run), "output": {"directory": str(tmp_path / "runs")}}
    return ScenarioConfig.from_dict(doc)


class TestRun:
    def test_constants(self, tmp_path):
        man = run(_cfg(tmp_path), "constants")
        doc = json.load(open(os.path.join(man.directory, "constants.json")))
        assert doc["L"] == pytest.approx(1 / 3, abs=1e-6)
        assert doc["l"] == pytest.approx(1.0, abs=1e-6)
        assert doc["M"] == pytest.approx(2 / 3, abs=1e-6)

    def test_dominance_csv(self, tmp_path):
        man = run(_cfg(tmp_path), "dominance")
        rows = list(csv.reader(open(os.path.join(man.directory, "thresholds.csv"))))
        assert rows[0] == ["A", "psi_LD", "psi_UD"] and rows[1][1] == "0.333333333"
        idx = json.load(open(os.path.join(man.directory, "plot_data", "index.json")))
        assert set(idx) == {"psi_ld", "psi_ud"}

    def test_simulate_deterministic(self, tmp_path):
        cfg = _cfg(tmp_path, mu0=0.45, A0=0.1, horizon=4.0, profile="adversarial")
        a = run(cfg, "simulate", seed=5)
        b = run(cfg, "simulate", seed=5)
        assert a.directory != b.directory
        ta = open(os.path.join(a.directory, "trajectory.csv")).read()
        assert ta == open(os.path.join(b.directory, "trajectory.csv")).read()
        assert a.checksums["trajectory.csv"] == b.checksums["trajectory.csv"]

    def test_manifest_checksums(self, tmp_path):
        man = run(_cfg(tmp_path, mu0=0.5), "simulate")
        on_disk = json.load(open(os.path.join(man.directory, "manifest.json")))
        assert on_disk["version"] and on_disk["seed"] == 0
        for rel in man.files:
            assert sha256(os.path.join(man.directory, rel)) == on_disk["checksums"][rel]

    def test_private_bound(self, tmp_path):
        man = run(_cfg(tmp_path, mu0=0.1), "private-bound")
        doc = json.load(open(os.path.join(man.directory, "private_bound.json")))
        assert doc["bound"] == pytest.approx(0.35, abs=1e-9)

    def test_certify_failure_status(self, tmp_path):
        doc = {"game": {"family": "canonical"}, "policy": {"kind": "no_information"},
               "output": {"directory": str(tmp_path / "runs")}}
        man = run(ScenarioConfig.from_dict(doc), "certify")
        assert man.status == "failed"

    def test_regime_family_dominance(self, tmp_path):
        doc = {"game": {"family": "regime", "parameters": {"intercepts": [1.5, 0.5], "slopes": [-0.75, -0.25],
                                                             "cost": 0.6}},
               "run": {"grid": 64}, "output": {"directory": str(tmp_path / "runs")}}
        cfg = ScenarioConfig.from_dict(doc)
        man = run(cfg, "dominance")
        assert man.status == "ok"
        with pytest.raises(ConfigurationError):
            run(cfg, "simulate")

    def test_finite_needs_N(self, tmp_path):
        with pytest.raises(ConfigurationError, match="run.N"):
            run(_cfg(tmp_path), "finite")

    def test_finite_and_concentration(self, tmp_path):
        man = run(_cfg(tmp_path, N=200, mu0=0.5, horizon=3.0, trials=1), "finite")
        assert "trajectory.csv" in man.files
        man = run(_cfg(tmp_path, N=1000, trials=100, Ns=[100, 400, 1600]), "concentration")
        doc = json.load(open(os.path.join(man.directory, "slope.json")))
        assert -0.8 < doc["slope"] < -0.2

    def test_no_mode(self, tmp_path):
        with pytest.raises(ConfigurationError):
            run(_cfg(tmp_path))


class TestMain:
    def test_exit_codes(self, tmp_path, capsys):
        good = write(tmp_path, {"game": {"family": "canonical"}})
        assert main(["constants", "--config", good, "--out", str(tmp_path / "o")]) == 0
        bad = write(tmp_path, {"game": {"switch_rate": -1}}, "bad.yaml")
        assert main(["constants", "--config", bad]) == 1
        assert "switch_rate must be positive" in capsys.readouterr().err
        quiet = write(tmp_path, {"policy": {"kind": "no_information"}}, "q.yaml")
        assert main(["certify", "--config", quiet, "--out", str(tmp_path / "o")]) == 2

    def test_seed_flag(self, tmp_path):
        good = write(tmp_path, {"run": {"mu0": 0.5, "horizon": 1.0}})
        assert main(["simulate", "--config", good, "--seed", "9", "--out", str(tmp_path / "o")]) == 0
        assert any(d.startswith("simulate-seed9-") for d in os.listdir(tmp_path / "o"))


class TestPlotData:
    def test_series(self, tmp_path):
        files = emit_plot_data({"belief": ([0, 1, 1, 2], [0.5, 0.5, 0.7, 0.7], "t", "mu")}, str(tmp_path / "p"))
        rows = list(csv.reader(open(files[0])))
        assert rows[0] == ["t", "mu"] and len(rows) == 5
        assert json.load(open(files[-1]))["belief"]["rows"] == 4

    def test_empty(self, tmp_path):
        with pytest.raises(ConfigurationError):
            emit_plot_data({}, str(tmp_path))
        with pytest.raises(ConfigurationError):
            emit_plot_data({"x": ([], [])}, str(tmp_path))

    def test_jump_staircase(self, g1, policy, tmp_path):
        from infoputs.simulate import compliant, simulate_continuum

        tr = simulate_continuum(g1, policy, 0.1, 0.0, compliant(), 1.0, seed=0)
        t, m = tr.belief_staircase()
        files = emit_plot_data({"staircase": (t, m, "t", "mu")}, str(tmp_path))
        rows = list(csv.reader(open(files[0])))[1:]
        same_t = [i for i in range(1, len(rows)) if rows[i][0] == rows[i - 1][0] and rows[i][1] != rows[i - 1][1]]
        assert len(same_t) == 1


def test_fresh_directory_never_reused(tmp_path):
    a = fresh_directory(str(tmp_path), "x")
    b = fresh_directory(str(tmp_path), "x")
    assert a != b and os.path.isdir(a) and os.path.isdir(b)
