import csv
import io
import json
import subprocess
import sys

import pytest

from cachedof.cli import CSV_COLUMNS, main

SMALL = ["--kt", "3", "--kr", "3", "--nt", "1", "--mu-t", "0.3333", "--mu-r", "0.3333", "--r", "4.5"]
BIG = ["--kt", "12", "--kr", "24", "--nt", "4", "--r", "4"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_small(capsys):
    code, out, _ = run(capsys, "analyze", *SMALL)
    doc = json.loads(out)
    assert code == 0
    assert doc["exact"]["delta_up"] == "8/9"
    assert doc["delta_up"] == pytest.approx(0.8889, abs=1e-4)


def test_analyze_big(capsys):
    code, out, _ = run(capsys, "analyze", *BIG, "--mu-t", "0.5", "--mu-r", "0")
    doc = json.loads(out)
    assert code == 0 and doc["delta_up"] == 1.0 and doc["gap"] <= 1.5


def test_analyze_all_cached(capsys):
    code, out, _ = run(capsys, "analyze", *BIG, "--mu-t", "0.5", "--mu-r", "1")
    doc = json.loads(out)
    assert code == 0 and doc["delta_up"] == 0 and doc["delta_f"] == 0 and doc["delta_e"] == 0


def test_units_and_fractions_agree(capsys):
    _, a, _ = run(capsys, "analyze", *BIG, "--mu-t", "0.5")
    _, b, _ = run(capsys, "analyze", *BIG, "--mt-units", "6")
    assert a == b


def test_units_win_on_conflict(capsys):
    code, out, err = run(capsys, "analyze", *BIG, "--mu-t", "0.5", "--mt-units", "4")
    assert code == 0 and "warning" in err
    assert json.loads(out)["mu_t_kt"] == 4


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kt": 12, "kr": 24, "nt": 4, "r": "4", "mu_t": "0.5"}))
    _, out, _ = run(capsys, "analyze", "--config", str(cfg))
    assert json.loads(out)["delta_up"] == 1.0
    _, out, _ = run(capsys, "analyze", "--config", str(cfg), "--mu-t", "0")
    assert json.loads(out)["delta_up"] == 3.5


def test_non_integer_point_uses_memory_sharing(capsys):
    code, out, _ = run(capsys, "analyze", *BIG, "--mt-units", "6", "--mr-units", "6.5", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert float(rows[0]["delta_up"]) == pytest.approx((1 - 6 / 24 + 1 - 7 / 24) / 2, abs=1e-12)
    assert rows[0]["m"] == "nan" and rows[0]["gap"] == "nan"


def test_sweep_csv_schema_and_determinism(capsys):
    argv = ["sweep", *BIG, "--mt-units", "4", "--axis", "mu_r_kr", "--start", "0", "--stop", "24"]
    code, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert code == 0 and first == second
    reader = csv.reader(io.StringIO(first))
    assert next(reader) == CSV_COLUMNS
    assert len(list(reader)) == 25


def test_sweep_thread_count_does_not_change_output(capsys, monkeypatch):
    argv = ["sweep", "--preset", "fig2"]
    monkeypatch.setenv("CACHEDOF_THREADS", "1")
    _, one, _ = run(capsys, *argv)
    monkeypatch.setenv("CACHEDOF_THREADS", "8")
    _, many, _ = run(capsys, *argv)
    assert one == many
    assert len(one.splitlines()) == 1 + 9 * 49


def test_fig3_preset(capsys):
    _, out, _ = run(capsys, "sweep", "--preset", "fig3", "--format", "json")
    rows = json.loads(out)
    by_r = {}
    for row in rows:
        by_r.setdefault(row["r"], []).append(row)
    assert by_r[4.0][0]["m"] == 4 and by_r[16.0][0]["m"] == 6
    assert {series[12]["m"] for series in by_r.values()} == {3}


def test_sweep_to_file(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, stdout, _ = run(capsys, "sweep", *BIG, "--axis", "r", "--values", "1,2,4", "--out", str(out))
    assert code == 0 and stdout == ""
    assert out.read_text().startswith(",".join(CSV_COLUMNS))


def test_simulate(capsys, tmp_path):
    slots, placement = tmp_path / "slots.txt", tmp_path / "placement.json"
    argv = ["simulate", *SMALL, "--seed", "1", "--dump-slots", str(slots), "--dump-placement", str(placement)]
    code, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    doc = json.loads(first)
    assert code == 0 and first == second
    assert doc["delta_e_emp"]["value"] == pytest.approx(0.6667, abs=1e-4)
    assert doc["delta_f_emp"]["value"] == pytest.approx(0.2222, abs=1e-4)
    assert doc["decode_ok"] is True
    assert slots.read_text().startswith("slot 0")
    assert json.loads(placement.read_text())["split"]["cells"] == 9


def test_simulate_suboptimal_multiplicity(capsys):
    _, best, _ = run(capsys, "analyze", *SMALL)
    code, out, _ = run(capsys, "simulate", *SMALL, "--seed", "1", "--m-override", "1")
    assert code == 0
    assert json.loads(out)["delta_total_emp"]["value"] > json.loads(best)["delta_up"]


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["analyze", "--kt", "3", "--kr", "3", "--nt", "1", "--r", "1", "--mt-units", "5"], 2),
        (["analyze", "--kt", "3", "--nt", "1", "--r", "1"], 2),
        (["analyze", "--kt", "3", "--kr", "3", "--nt", "1", "--r", "x"], 2),
        (["simulate", *SMALL, "--mu-t", "0.5"], 2),
        (["simulate", *SMALL, "--m-override", "7"], 2),
        (["simulate", "--kt", "3", "--kr", "3", "--nt", "1", "--mt-units", "0", "--r", "0"], 3),
        (["verify", "--quick", "--inject-mutant", "nope"], 2),
    ],
)
def test_exit_codes(capsys, argv, expected):
    code, _, err = run(capsys, *argv)
    assert code == expected
    assert err.startswith("error") or "warning" in err


def test_verify_mu_r_zero(capsys):
    code, out, _ = run(capsys, "verify", "--quick", "--mu-r-kr", "0", "--seeds", "2", "--samples", "5")
    assert code == 0
    assert "max gap observed" in out


def test_verify_strict_reports_known_deviations(capsys):
    code, out, err = run(capsys, "verify", "--quick", "--strict", "--seeds", "2", "--samples", "5")
    assert code == 5
    assert "KNOWN-FAIL" in out and "first failing check" in err


def test_verify_mutant_is_caught(capsys):
    code, out, err = run(capsys, "verify", "--quick", "--inject-mutant", "drop_mu_r", "--seeds", "2", "--samples", "5")
    assert code == 5
    assert out.startswith("FAIL       gap certificate")
    assert "kt=" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cachedof", "analyze", *SMALL], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["exact"]["delta_up"] == "8/9"
