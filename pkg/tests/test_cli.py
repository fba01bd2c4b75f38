import json
import subprocess
import sys

import pytest

from invasion_qsd.cli import EXIT_ARGS, EXIT_CAP, EXIT_NUMERIC, EXIT_OK, main
from invasion_qsd.dual import lambda_closed_m1
from invasion_qsd.reporting import read_csv


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_lambda_json(tmp_path):
    code, out = run(tmp_path, "lambda", "--m", "1", "--n", "10")
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert {"command", "m", "n", "version"} <= doc["meta"].keys()
    assert doc["lambda_closed_m1"] == lambda_closed_m1(10)
    assert max(v for k, v in doc["gaps"].items() if "asymptotic" not in k) < 1e-12


def test_qsd_exact_csv(tmp_path):
    code, out = run(tmp_path, "qsd", "--m", "2", "--n", "5")
    assert code == EXIT_OK
    meta, rows = read_csv(out.read_text())
    assert meta["method"] == "exact"
    assert len(rows) == 3 * 6 - 4
    assert sum(float(r["nu"]) for r in rows) == pytest.approx(1.0, abs=1e-14)


def test_restart_rerun_is_byte_identical(tmp_path):
    argv = ["qsd", "--m", "2", "--n", "5", "--method", "restart", "--steps", "20000", "--seed", "4"]
    _, a = run(tmp_path, *argv, name="a.csv")
    _, b = run(tmp_path, *argv, name="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_tail_writes_csv_and_report(tmp_path):
    report = tmp_path / "reg.json"
    code, out = run(tmp_path, "tail", "--m", "2", "--n", "5", "--replicas", "3000", "--report", str(report))
    assert code == EXIT_OK
    meta, rows = read_csv(out.read_text())
    assert rows[0] == {"t": "0", "survivors": "3000", "p_hat": "1"}
    doc = json.loads(report.read_text())
    assert doc["meta"]["replicas"] == 3000
    assert 0 < doc["lambda_hat"] < 1


def test_sigma(tmp_path):
    code, out = run(tmp_path, "sigma", "--m", "2", "--n", "4", "--samples", "2000", "--report", str(tmp_path / "r"))
    assert code == EXIT_OK
    assert read_csv(out.read_text())[0]["start"] == "SPLIT"


def test_spectrum_and_limit(tmp_path):
    code, out = run(tmp_path, "spectrum", "--m", "2", "--n", "4")
    assert code == EXIT_OK
    meta, rows = read_csv(out.read_text())
    assert len(rows) == 11 and float(meta["max_abs_imag"]) < 1e-12
    code, out = run(tmp_path, "limit-check", "--m", "2", "--n", "11", name="lim.json")
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["sl_residual"] < 1e-12 and len(doc["ks_beta"]) == 3


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 7, "seed": 9}))
    code, out = run(tmp_path, "lambda", "--m", "2", "--n", "3", "--config", str(cfg))
    assert code == EXIT_OK
    assert json.loads(out.read_text())["n"] == 7


@pytest.mark.parametrize(
    "argv,expected",
    [
        (["lambda", "--m", "1", "--n", "2"], EXIT_ARGS),
        (["lambda", "--m", "3"], EXIT_ARGS),
        (["qsd", "--m", "2", "--n", "5", "--method", "conditional"], EXIT_ARGS),
        (["tail", "--m", "2", "--n", "5", "--replicas", "0"], EXIT_ARGS),
        (["spectrum", "--m", "10", "--n", "100"], EXIT_CAP),
        (
            ["qsd", "--m", "1", "--n", "3", "--method", "conditional", "--t-star", "100000", "--replicas", "2"],
            EXIT_NUMERIC,
        ),
    ],
)
def test_exit_codes(tmp_path, argv, expected):
    assert main([*argv, "--out", str(tmp_path / "x")]) == expected
    assert not (tmp_path / "x").exists()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "invasion_qsd", "lambda", "--m", "2", "--n", "3"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert json.loads(proc.stdout)["m"] == 2


def test_lambda_report_examples():
    from invasion_qsd.cli import cmd_lambda

    r13 = cmd_lambda(1, 3)
    assert abs(r13["lambda_closed_m1"] - r13["lambda_numeric"]) <= 1e-12
    r420 = cmd_lambda(4, 20)
    assert abs(r420["lambda_spectral"] - r420["lambda_numeric"]) <= 1e-10
    r2200 = cmd_lambda(2, 200)
    assert r2200["one_minus_lambda"] / (4 / 200**3) == pytest.approx(1.0, rel=0.05)
    assert abs(r2200["lambda_spectral"] - r2200["lambda_numeric"]) <= 1e-10
    assert {"f1", "f2", "f3", "lambda_asymptotic"} <= r2200.keys()


def test_csv_metadata_block(tmp_path):
    code, out = run(tmp_path, "qsd", "--m", "2", "--n", "5", "--method", "restart", "--steps", "5000", "--seed", "12")
    meta, _ = read_csv(out.read_text())
    assert meta["seed"] == "12" and meta["steps"] == "5000" and meta["m"] == "2"
    assert meta["version"]


def test_large_exact_qsd(tmp_path):
    code, out = run(tmp_path, "qsd", "--m", "10", "--n", "100")
    assert code == EXIT_OK
    _, rows = read_csv(out.read_text())
    assert len(rows) == 11 * 101 - 4
    assert sum(float(r["nu"]) for r in rows) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("n", [11, 25])
def test_tail_regression_matches_exact(n):
    from invasion_qsd.cli import cmd_tail
    from invasion_qsd.dual import lambda_cmc_numeric

    _, report = cmd_tail(2, n, 10**5, None, 3)
    assert abs((1 - report.lambda_hat) / (1 - lambda_cmc_numeric(2, n)) - 1) <= 0.10


def test_spectral_route_skipped_above_cap():
    from invasion_qsd.cli import cmd_lambda

    report = cmd_lambda(2, 50, cap=100)
    assert "lambda_spectral" not in report and "exceeds cap" in report["spectral_note"]
