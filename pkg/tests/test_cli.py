import csv
import io

import numpy as np
import pytest
import yaml

from adaptalloc import cli
from adaptalloc.control_sim import SimSettings
from adaptalloc.exceptions import ValidationError
from adaptalloc.plant import ADMIRE_A


def read_metrics(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, val = line.partition(" = ")
        out[key] = val
    return out


def write_yaml(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


class TestRun:
    def test_run_writes_outputs(self, tmp_path):
        code = cli.main(["run", "--case", "III", "--duration", "2",
                         "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        assert (tmp_path / "trajectory.csv").exists()
        m = read_metrics(tmp_path / "metrics.txt")
        rates = np.array(m["max_rate_applied"].split(), dtype=float)
        limit = np.array(m["rate_limit_value"].split(), dtype=float)
        assert np.all(rates <= limit)
        assert m["case"] == "III"

    def test_run_reports_oscillation(self, tmp_path):
        assert cli.main(["run", "--case", "II", "--duration", "7",
                         "--out", str(tmp_path)]) == 0
        m = read_metrics(tmp_path / "metrics.txt")
        assert float(m["oscillation_total"]) > 0
        assert len(m["oscillation_index"].split()) == 4

    def test_step_size_changes_row_count(self, tmp_path):
        assert cli.main(["run", "--dt", "0.0005", "--duration", "0.5",
                         "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert len(rows) == 1 + 1001

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert cli.main(["run", "--duration", "1", "--seed", "3",
                             "--out", str(d)]) == 0
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        assert (a / "metrics.txt").read_bytes() == (b / "metrics.txt").read_bytes()

    def test_env_out_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv(cli.OUT_ENV, str(target))
        assert cli.main(["run", "--duration", "0.1"]) == 0
        assert (target / "trajectory.csv").exists()


class TestConfig:
    def test_unknown_key_exit_code(self, tmp_path, capsys):
        path = write_yaml(tmp_path, {"allocator": {"gama": 3}})
        assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 2
        assert "gama" in capsys.readouterr().err

    def test_unknown_section(self):
        with pytest.raises(ValidationError):
            cli.load_config({"allocators": {}})

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("allocator: [unclosed\n")
        with pytest.raises(ValidationError):
            cli.load_config(str(path))

    def test_values_applied(self):
        cfg = cli.load_config({
            "case": "II", "seed": 4,
            "simulation": {"dt": 0.002, "duration": 3},
            "allocator": {"gamma": 50},
            "fault": {"time": 1.5, "level": 0.5},
            "reference": {"pulses": [{"channel": "q", "amplitude_deg": 2,
                                      "start": 0.5, "duration": 1}]},
        })
        s = cfg.settings
        assert (cfg.case, cfg.seed) == ("II", 4)
        assert (s.dt, s.duration, s.gamma, s.fault_time) == (0.002, 3.0, 50.0, 1.5)
        assert s.fault_level == (0.5,) * 4
        assert s.reference.pulses[0].channel == 1

    def test_partial_gains_rejected(self):
        with pytest.raises(ValidationError):
            cli.load_config({"controller": {"k_y": [[1, 0], [0, 1]]}})

    def test_plant_override(self, tmp_path):
        A = [list(row) for row in ADMIRE_A]
        A[0][0] = -1.0
        cfg = cli.load_config({"plant": {"A": A, "rate_max_deg": 20}})
        assert cfg.model.A[0, 0] == -1.0
        assert np.allclose(np.degrees(cfg.limits.rate_max), 20.0)

    def test_integration_fault_exit_code(self, tmp_path):
        A = (np.array(ADMIRE_A) + 1e6 * np.eye(5)).tolist()
        eye = np.eye(3).tolist()
        path = write_yaml(tmp_path, {
            "plant": {"A": A},
            "controller": {"k_y": eye, "k_i": eye,
                           "k_x": np.zeros((3, 5)).tolist()},
            "simulation": {"duration": 2},
        })
        assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 3


class TestVerify:
    def test_only(self, capsys):
        assert cli.main(["verify", "--only", "lemma2,continuity"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("lemma2")
        assert all("PASS" in line for line in out)
        assert len(out) == 1 + 6

    def test_seeded_repeat_identical(self, capsys, tmp_path):
        args = ["verify", "--only", "lemma6", "--only", "lipschitz",
                "--seed", "7"]
        path = write_yaml(tmp_path, {"verify": {"lipschitz_pairs": 20000}})
        assert cli.main(args + ["--config", path]) == 0
        first = capsys.readouterr().out
        assert cli.main(args + ["--config", path]) == 0
        assert capsys.readouterr().out == first

    def test_unknown_check(self):
        assert cli.main(["verify", "--only", "lemma9"]) == 2

    def test_writes_file_when_out_given(self, tmp_path):
        assert cli.main(["verify", "--only", "lemma2", "--out",
                         str(tmp_path)]) == 0
        assert (tmp_path / "verify.txt").read_text().startswith("lemma2")

    def test_failure_exit_code(self, monkeypatch):
        from adaptalloc import verify as vf
        monkeypatch.setattr(vf, "EXACT_TOL", -1.0)
        assert cli.main(["verify", "--only", "lemma2"]) == 1


class TestSweep:
    def test_grid_rows(self, tmp_path):
        code = cli.main(["sweep", "--duration", "0.5", "--grid", "gamma=100,400",
                         "--grid", "a_m=-5,-2", "--out", str(tmp_path)])
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(
            (tmp_path / "sweep.csv").read_text())))
        assert len(rows) == 4
        assert {r["status"] for r in rows} == {"ok"}
        assert [(r["gamma"], r["a_m"]) for r in rows] == [
            ("100.0", "-5.0"), ("100.0", "-2.0"), ("400.0", "-5.0"), ("400.0", "-2.0")]

    def test_single_point_matches_run(self, tmp_path):
        cfg = cli.load_config({"simulation": {"duration": 1}})
        text, failed = cli.run_sweep(cfg, {"gamma": [400.0]})
        assert failed == 0
        row = next(csv.DictReader(io.StringIO(text)))
        _, res = cli.simulate("III", SimSettings(duration=1.0))
        assert float(row["f_max"]) == res["f_max"]
        assert float(row["post_fault_rms"]) == res["post_fault_rms"]

    def test_fault_magnitude_ordering(self):
        cfg = cli.load_config({"simulation": {"duration": 9}})
        text, failed = cli.run_sweep(cfg, {"fault_magnitude": [0.0, 0.3]})
        assert failed == 0
        rows = list(csv.DictReader(io.StringIO(text)))
        assert float(rows[0]["post_fault_rms"]) < float(rows[1]["post_fault_rms"])

    def test_parallel_matches_serial(self):
        cfg = cli.load_config({"simulation": {"duration": 0.3}})
        grid = {"gamma": [100.0, 400.0]}
        assert cli.run_sweep(cfg, grid, jobs=2) == cli.run_sweep(cfg, grid)

    def test_bad_grid_key(self):
        with pytest.raises(ValidationError):
            cli.parse_grid(["M=1,2"])
        with pytest.raises(ValidationError):
            cli.parse_grid(["gamma"])

    def test_sweep_from_config(self, tmp_path):
        path = write_yaml(tmp_path, {"simulation": {"duration": 0.2},
                                     "sweep": {"q": [1, 2, 3]}})
        assert cli.main(["sweep", "--config", path, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "sweep.csv").read_text().count("\n") == 4
