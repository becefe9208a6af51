import json
import math
import subprocess
import sys

import pytest

from slitlab.cli import main

PI = math.pi

SIMPLE_CONFIG = """
[domain]
shape = rectangle
width = 3.141592653589793
height = 3.141592653589793

[slit]
center = 1.5707963267948966 1.5707963267948966
eps_list = 0.2 0.1 0.05

[mesh]
h_max = 0.14
tip_levels = 6

[target]
index = 1
multiplicity = 1

[run]
checks = l2ratio
richardson = false
"""

LAMBDA5_CONFIG = SIMPLE_CONFIG.replace("index = 1", "index = 2").replace(
    "multiplicity = 1", "multiplicity = 2"
)


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "config.txt"
    path.write_text(SIMPLE_CONFIG)
    return path


class TestCk:
    def test_table_values(self, tmp_path, capsys):
        code = main(["ck", "--max-k", "6", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "C_0 = 2" in out
        assert "C_1 = 1" in out
        assert "C_2 = 0.5" in out
        assert "C_3 = 0.75" in out
        csv = (tmp_path / "ck.csv").read_text().splitlines()
        assert csv[0] == "k,c_k"
        assert csv[1] == "0,2"
        assert csv[3] == "2,0.5"

    def test_seventeen_digit_output(self, tmp_path):
        main(["ck", "--max-k", "8", "--out", str(tmp_path)])
        rows = (tmp_path / "ck.csv").read_text().splitlines()
        # C_5 = 5/8 + ... check a non-terminating value keeps full precision
        c4 = float(rows[5].split(",")[1])
        from slitlab.asymptotics import c_coeff

        assert c4 == c_coeff(4)


class TestValidation:
    def test_missing_config_exit_2(self, tmp_path, capsys):
        code = main(["sweep", "--config", str(tmp_path / "nope.txt"), "--out", str(tmp_path)])
        assert code == 2
        err = capsys.readouterr().err
        assert "nope.txt" in err

    def test_bad_override_names_field(self, config_file, tmp_path, capsys):
        code = main(
            [
                "sweep",
                "--config",
                str(config_file),
                "--out",
                str(tmp_path),
                "--set",
                "mesh.bogus=3",
            ]
        )
        assert code == 2
        assert "mesh.bogus" in capsys.readouterr().err

    def test_negative_max_k(self, tmp_path, capsys):
        code = main(["ck", "--max-k", "-1", "--out", str(tmp_path)])
        assert code == 2


class TestMeshEigsRoundTrip:
    def test_bit_identical_eigenvalues(self, config_file, tmp_path, capsys):
        out = tmp_path / "a"
        assert main(["mesh", "--config", str(config_file), "--out", str(out)]) == 0
        mesh_path = out / "mesh.txt"
        assert mesh_path.exists()
        assert main(["eigs", "--config", str(config_file), "--out", str(out)]) == 0
        direct = (out / "eigs.csv").read_text()
        out2 = tmp_path / "b"
        assert (
            main(
                [
                    "eigs",
                    "--config",
                    str(config_file),
                    "--out",
                    str(out2),
                    "--set",
                    f"mesh.import_path={mesh_path}",
                ]
            )
            == 0
        )
        imported = (out2 / "eigs.csv").read_text()
        assert direct == imported


class TestCapacityCommand:
    def test_writes_csv(self, config_file, tmp_path):
        assert main(["capacity", "--config", str(config_file), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "capacity.csv").read_text().splitlines()
        assert rows[0] == "eps,cap,disc_err"
        assert len(rows) == 4


class TestDecomposeCommand:
    def test_lambda5_structure(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text(LAMBDA5_CONFIG)
        assert main(["decompose", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "decompose.json").read_text())
        assert payload["orders"] == [1]
        assert payload["kappa"] == ["inf", 1]
        coeff = payload["predicted_shifts"][1]["coefficient"]
        assert abs(coeff - 16 / PI) <= 1e-10


class TestSweepCommand:
    def test_writes_csv_and_echoes(self, config_file, tmp_path, capsys):
        assert main(["sweep", "--config", str(config_file), "--out", str(tmp_path)]) == 0
        text = (tmp_path / "sweep.csv").read_text()
        assert text.splitlines()[0].startswith("eps,level,lambda_index")
        out = capsys.readouterr().out
        assert out.splitlines()[0] == text.splitlines()[0]
        assert (tmp_path / "plot.svg").exists()


class TestVerifyCommand:
    def test_report_written_with_status_lines(self, config_file, tmp_path, capsys):
        assert main(["verify", "--config", str(config_file), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert "l2ratio" in report["checks"]
        out = capsys.readouterr().out
        assert "l2ratio" in out and ("PASS" in out or "FAIL" in out)

    def test_effective_config_echoed(self, config_file, tmp_path):
        assert (
            main(
                [
                    "verify",
                    "--config",
                    str(config_file),
                    "--out",
                    str(tmp_path),
                    "--set",
                    "mesh.h_max=0.16",
                ]
            )
            == 0
        )
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["config"]["mesh"]["h_max"] == "0.16"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "slitlab.cli", "ck", "--max-k", "2", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "C_2 = 0.5" in proc.stdout
