import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from qvqt import cli
from qvqt.engine import NumericalError, hubbard_reference
from qvqt.hubbard import HubbardConfig

FAST = ["--layers1", "1", "--layers2", "1", "--budget", "30"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestSolve:
    def test_schema(self, capsys):
        code, out, _ = run(capsys, "solve", "--sites", "2", "--beta", "1", "--seed", "1", *FAST)
        assert code == 0
        record = json.loads(out)
        assert tuple(record) == cli.RESULT_FIELDS
        assert record["seed"] == 1 and record["mode"] == "exact" and record["shots"] is None
        assert 0 <= record["fidelity"] <= 1 + 1e-12

    def test_same_seed_same_bytes(self, capsys):
        argv = ["solve", "--sites", "2", "--seed", "4", *FAST]
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_missing_seed_is_recorded(self, capsys):
        code, out, err = run(capsys, "solve", "--sites", "2", *FAST)
        assert code == 0
        seed = json.loads(out)["seed"]
        assert isinstance(seed, int) and str(seed) in err

    def test_out_file_matches_stdout(self, capsys, tmp_path):
        path = tmp_path / "r.json"
        _, out, _ = run(capsys, "solve", "--seed", "2", *FAST)
        run(capsys, "solve", "--seed", "2", "--out", str(path), *FAST)
        assert path.read_text() == out

    def test_shots_mode(self, capsys):
        code, out, _ = run(capsys, "solve", "--seed", "2", "--mode", "shots", "--shots", "3000", *FAST)
        record = json.loads(out)
        assert code == 0 and record["mode"] == "shots" and record["shots"] == 3000

    def test_adaptive(self, capsys):
        code, out, _ = run(capsys, "solve", "--seed", "0", "--adaptive", "--fidelity-target", "0.5", "--budget", "50")
        assert code == 0 and json.loads(out)["layers1"] >= 1


class TestConfig:
    def test_round_trip(self):
        cfg = cli.parse_config({"sites": 3, "beta_grid": [0.1, 1], "seed": 5, "u": 1})
        assert cli.parse_config(json.loads(cli.serialize_config(cfg))) == cfg

    def test_file_and_overrides(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"sites": 2, "u": 0.5, "seed": 3, "layers1": 1, "layers2": 1, "optimizer_budget": 20}))
        _, out, _ = run(capsys, "solve", "--config", str(path), "--u", "0.25")
        assert json.loads(out)["U"] == 0.25

    def test_dump_config_reproduces_run(self, capsys, tmp_path):
        dump = tmp_path / "resolved.json"
        _, first, _ = run(capsys, "solve", "--dump-config", str(dump), *FAST)
        _, second, _ = run(capsys, "solve", "--config", str(dump))
        assert first == second

    @pytest.mark.parametrize(
        "argv",
        [
            ["ed", "--beta-grid", ""],
            ["ed", "--beta-grid", "1,0.5"],
            ["solve", "--sites", "1"],
            ["solve", "--boundary", "moebius"],
            ["solve", "--beta", "-1"],
            ["solve", "--mode", "shots"],
            ["solve", "--layers1", "zero"],
            ["variance", "--site-range", "1,2"],
            ["ed", "--sites", "7"],
        ],
    )
    def test_config_errors_exit_2(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2 and "config error" in err

    def test_unknown_key_and_bad_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"sites": 2, "colour": "red"}))
        assert run(capsys, "solve", "--config", str(bad))[0] == 2
        bad.write_text("{not json")
        assert run(capsys, "solve", "--config", str(bad))[0] == 2
        assert run(capsys, "solve", "--config", str(tmp_path / "missing.json"))[0] == 2

    def test_numerical_failure_exit_3(self, capsys, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericalError("non-finite free energy")

        monkeypatch.setattr(cli, "solve", boom)
        code, _, err = run(capsys, "solve", "--seed", "1")
        assert code == 3 and "numerical" in err


class TestScans:
    def test_scan_beta_high_temperature(self, capsys):
        code, out, _ = run(capsys, "scan-beta", "--sites", "2", "--beta-grid", "0.05", "--seed", "0", "--layers1", "2", "--layers2", "2", "--budget", "300")
        assert code == 0
        assert out.splitlines()[0] == ",".join(cli.SCAN_BETA_COLUMNS)
        (row,) = rows(out)
        assert abs(float(row["S_rec"]) - 4 * np.log(2)) <= 0.02 * 4 * np.log(2)
        ref = hubbard_reference(HubbardConfig(2), 0.05)
        assert float(row["S_exact"]) == ref.entropy
        assert float(row["E_ground"]) < float(row["E_exact"])

    def test_scan_beta_default_grid(self):
        grid = cli.DEFAULT_BETA_GRID
        assert len(grid) == 25 and grid[0] == pytest.approx(0.05) and grid[-1] == pytest.approx(35.0)
        assert np.all(np.diff(grid) > 0)

    def test_pool_keeps_grid_order(self, capsys):
        argv = ["scan-beta", "--beta-grid", "0.5,1,2", "--seed", "1", *FAST]
        _, serial, _ = run(capsys, *argv)
        _, pooled, _ = run(capsys, *argv, "--jobs", "2")
        assert serial == pooled

    def test_scan_umu_single_cell(self, capsys):
        code, out, _ = run(capsys, "scan-umu", "--sites", "2", "--beta", "0.5", "--u-grid", "0.1", "--mu-grid", "0.1", "--seed", "0", "--layers1", "2", "--layers2", "2", "--budget", "300")
        (row,) = rows(out)
        assert code == 0 and float(row["abs_error"]) <= 0.05

    def test_scan_umu_grid_shape_and_free_column(self, capsys):
        _, out, _ = run(capsys, "scan-umu", "--u-grid", "0,0.5", "--mu-grid", "0.1,0.4,0.9", "--seed", "0", *FAST)
        table = rows(out)
        assert [(float(r["U"]), float(r["mu"])) for r in table] == [(u, m) for u in (0, 0.5) for m in (0.1, 0.4, 0.9)]
        # U = 0 cells at beta = 1: free fermions on a 2-site chain, levels -t and +t
        for r in table[:3]:
            mu = float(r["mu"])
            eps = np.array([-1.0, 1.0]) - mu
            assert float(r["n_exact"]) == pytest.approx(2 * np.sum(1 / (1 + np.exp(1.0 * eps))) / 2, abs=1e-12)

    def test_default_umu_grid(self):
        assert len(cli.DEFAULT_UMU_GRID) == 10
        assert cli.DEFAULT_UMU_GRID[0] == pytest.approx(0.1) and cli.DEFAULT_UMU_GRID[-1] == pytest.approx(1.0)


class TestDiagnosticsCommands:
    def test_variance_rows(self, capsys):
        code, out, _ = run(capsys, "variance", "--sites", "2", "--layer-range", "1,2,3", "--samples", "100", "--seed", "5")
        table = rows(out)
        assert code == 0 and len(table) == 3
        assert out.splitlines()[0] == "n_sites,layers,n_samples,variance,seed"
        assert [int(r["layers"]) for r in table] == [1, 2, 3]

    def test_multiseed_iteration_envelope(self, capsys):
        code, out, _ = run(capsys, "multiseed", "--sites", "2", "--beta-grid", "1,5.25", "--n-seeds", "10", "--seed", "0", "--layers1", "2", "--layers2", "2")
        table = rows(out)
        assert code == 0 and out.splitlines()[0] == "beta,metric,mean,std,n_seeds"
        iters = [float(r["mean"]) for r in table if r["metric"] == "iterations"]
        assert len(iters) == 2 and all(20 <= m <= 500 for m in iters)

    def test_ed_golden(self, capsys):
        _, out, _ = run(capsys, "ed", "--sites", "2", "--beta-grid", "0.5,3")
        table = rows(out)
        for r in table:
            ref = hubbard_reference(HubbardConfig(2), float(r["beta"]))
            assert float(r["F"]) == ref.free_energy and float(r["number_density"]) == ref.number_density


def test_floats_use_17_digits():
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert cli.format_value(np.float64(1 / 3)) == "0.33333333333333331"
    assert cli.format_value(None) == "" and cli.format_value(7) == "7"


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "qvqt.cli", "ed", "--sites", "1", "--boundary", "open", "--beta-grid", "1"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "beta,F,E,S,number_density"
