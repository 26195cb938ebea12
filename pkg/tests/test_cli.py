import json
import os

import numpy as np
import pytest

from quasimodes.cli import CSV_HEADER, JobConfig, main
from quasimodes.ends import bulge_end
from quasimodes.errors import ConfigError
from quasimodes.series import HalfPowerSeries


def write_config(path, data):
    with open(path, "w") as f:
        json.dump(data, f)
    return str(path)


RECT = {"family": {"kind": "adiabatic", "width": 1.0}, "modes": [0],
        "h_sweep": [0.1, 0.05], "order": 2}


class TestJobConfig:
    def test_unknown_top_key(self):
        with pytest.raises(ConfigError):
            JobConfig({**RECT, "frobnicate": 1})

    def test_unknown_family_key(self):
        with pytest.raises(ConfigError):
            JobConfig({"family": {"kind": "adiabatic", "depth": 2},
                       "h_sweep": [0.1]})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            JobConfig({"family": {"kind": "spherical"}, "h_sweep": [0.1]})

    def test_sweep_must_decrease(self):
        with pytest.raises(ConfigError):
            JobConfig({**RECT, "h_sweep": [0.05, 0.1]})

    def test_sweep_must_be_positive(self):
        with pytest.raises(ConfigError):
            JobConfig({**RECT, "h_sweep": [0.1, -0.05]})

    def test_negative_order(self):
        with pytest.raises(ConfigError):
            JobConfig({**RECT, "order": -1})

    def test_end_modes_start_at_one(self):
        with pytest.raises(ConfigError):
            JobConfig({"family": {"kind": "ends", "preset": "straight"},
                       "modes": [0], "h_sweep": [0.1]})

    def test_missing_config_file(self):
        with pytest.raises(ConfigError):
            JobConfig.load("/nonexistent/job.json")


class TestPredict:
    def test_rectangle_series(self, tmp_path):
        cfg = write_config(tmp_path / "job.json", RECT)
        rc = main(["predict", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 0
        with open(tmp_path / "series_m0.json") as f:
            ser = HalfPowerSeries.from_json(f.read())
        # agreement at the grid discretization floor
        assert ser.coeff(-4) == pytest.approx(np.pi**2, rel=1e-4)
        assert ser.coeff(0) == pytest.approx(np.pi**2, rel=1e-4)
        assert abs(ser.coeff(2)) < 1e-4
        table = (tmp_path / "predict_table.txt").read_text()
        assert table.splitlines()[0].startswith("h")
        assert len(table.splitlines()) == 3

    def test_stretch_series(self, tmp_path):
        cfg = write_config(tmp_path / "job.json",
                           {"family": {"kind": "regular"}, "modes": [0],
                            "h_sweep": [0.1], "order": 3})
        assert main(["predict", "--config", cfg,
                     "--out", str(tmp_path)]) == 0
        with open(tmp_path / "series_m0.json") as f:
            ser = HalfPowerSeries.from_json(f.read())
        for j in range(4):
            expect = (-1.0) ** j * (j + 1) * np.pi**2
            assert ser.coeff(2 * j) == pytest.approx(expect, rel=1e-3)

    def test_ellipse_series(self, tmp_path):
        cfg = write_config(tmp_path / "job.json",
                           {"family": {"kind": "thinshape",
                                       "preset": "ellipse"},
                            "modes": [0], "h_sweep": [0.05], "order": 2})
        assert main(["predict", "--config", cfg,
                     "--out", str(tmp_path)]) == 0
        with open(tmp_path / "series_m0.json") as f:
            ser = HalfPowerSeries.from_json(f.read())
        assert ser.coeff(-4) == pytest.approx(np.pi**2 / 4)
        assert ser.coeff(-2) == pytest.approx(np.pi / 2)


class TestDirectAndValidate:
    def test_direct_csv_contract(self, tmp_path):
        cfg = write_config(tmp_path / "job.json", RECT)
        assert main(["direct", "--config", cfg, "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "direct.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3
        fields = lines[1].split(",")
        assert fields[0] == "0.1"
        assert fields[2] == ""  # no prediction columns in a direct run

    def test_validate_pass_and_files(self, tmp_path):
        cfg = write_config(tmp_path / "job.json",
                           {**RECT, "thresholds": {"max_abs_residual": 1.0}})
        rc = main(["validate", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "validate.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        row = lines[1].split(",")
        assert float(row[2]) == pytest.approx(float(row[3]), rel=1e-4)
        svg = (tmp_path / "residuals.svg").read_text()
        assert svg.lstrip().startswith("<?xml")
        dat = (tmp_path / "residuals_m0.dat").read_text().splitlines()
        assert len(dat) == 2 and len(dat[0].split()) == 2
        assert (tmp_path / "report.txt").exists()

    def test_validate_threshold_violation(self, tmp_path):
        cfg = write_config(tmp_path / "job.json",
                           {**RECT, "thresholds": {"max_abs_residual": 1e-9}})
        rc = main(["validate", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 1

    def test_byte_stable_and_jobs(self, tmp_path):
        cfg = write_config(tmp_path / "job.json", RECT)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["validate", "--config", cfg, "--out", str(a)])
        main(["validate", "--config", cfg, "--out", str(b), "--jobs", "2",
              "--seedless"])
        for name in ("validate.csv", "report.txt", "residuals_m0.dat",
                     "residuals.svg"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_out_env_override(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "job.json", RECT)
        env_dir = tmp_path / "env_out"
        monkeypatch.setenv("QML_OUT", str(env_dir))
        main(["direct", "--config", cfg, "--out", str(tmp_path / "flag_out")])
        assert (env_dir / "direct.csv").exists()
        assert not (tmp_path / "flag_out").exists()

    def test_regular_family_has_no_oracle(self, tmp_path):
        cfg = write_config(tmp_path / "job.json",
                           {"family": {"kind": "regular"}, "modes": [0],
                            "h_sweep": [0.1]})
        assert main(["direct", "--config", cfg,
                     "--out", str(tmp_path)]) == 2


class TestScatter:
    def test_straight_end_clear(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "job.json",
                           {"family": {"kind": "ends", "preset": "straight"}})
        rc = main(["scatter", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "non-resonance: clear" in out
        a = float(out.split("scattering constant a = ")[1].split()[0])
        assert a == pytest.approx(1.0, abs=1e-6)

    def test_suspect_end_exits_3(self, tmp_path):
        verts = bulge_end(62.0 / 33.0).vertices
        cfg = write_config(tmp_path / "job.json",
                           {"family": {"kind": "ends", "vertices": verts}})
        rc = main(["scatter", "--config", cfg, "--out", str(tmp_path)])
        assert rc == 3
        report = (tmp_path / "scatter_report.txt").read_text()
        assert "withheld" in report

    def test_wrong_family_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "job.json", RECT)
        assert main(["scatter", "--config", cfg,
                     "--out", str(tmp_path)]) == 2
