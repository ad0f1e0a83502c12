import csv
import io
import subprocess
import sys

import pytest

from cfqkd import cli

HEADER = (
    "eta,r_raw_analytic,r_raw_mc,r_raw_ci,p_ab_diff_analytic,p_ab_diff_mc,p_ab_diff_ci,"
    "i_ab,i_ea,i_eb,r_secret_fraction,r_secret_fraction_unclamped,r_qkd_analytic,r_qkd_mc,r_qkd_ci"
)
MC_COLUMNS = ("r_raw_mc", "r_raw_ci", "p_ab_diff_mc", "p_ab_diff_ci", "r_qkd_mc", "r_qkd_ci")


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_csv_header_is_stable(capsys):
    code, out, _ = run(["sweep", "--analytic-only", "--steps", "3"], capsys)
    assert code == 0
    assert out.splitlines()[0] == HEADER
    assert tuple(HEADER.split(",")) == cli.CSV_COLUMNS


def test_analytic_only_leaves_mc_columns_empty(capsys):
    _, out, _ = run(["sweep", "--analytic-only", "--steps", "11"], capsys)
    table = rows(out)
    assert len(table) == 11
    for row in table:
        assert all(row[c] == "" for c in MC_COLUMNS)
    half = table[5]
    assert half["eta"] == "0.5" and half["r_raw_analytic"] == "0.21875" and half["r_qkd_analytic"] == "0"
    assert half["p_ab_diff_analytic"] == "0.428571428571"


def test_default_grid_has_51_rows(capsys):
    _, out, _ = run(["sweep", "--analytic-only"], capsys)
    assert len(rows(out)) == 51


def test_sweep_row_at_half_contains_zero(capsys):
    _, out, _ = run(["sweep", "--steps", "11", "--rounds", "200000", "--seed", "4"], capsys)
    half = rows(out)[5]
    assert float(half["r_qkd_analytic"]) == 0.0
    assert float(half["r_qkd_mc"]) - float(half["r_qkd_ci"]) <= 0.0
    for row in rows(out):
        assert abs(float(row["r_raw_mc"]) - float(row["r_raw_analytic"])) <= float(row["r_raw_ci"]) * 1.5


def test_sweep_is_byte_identical(tmp_path):
    paths = []
    for workers in ("1", "1", "3"):
        path = tmp_path / f"out{len(paths)}.csv"
        code = cli.main(["sweep", "--steps", "5", "--rounds", "300000", "--seed", "9",
                         "--workers", workers, "--out", str(path)])
        assert code == 0
        paths.append(path)
    first = paths[0].read_bytes()
    assert all(p.read_bytes() == first for p in paths[1:])


def test_seed_changes_output(capsys):
    _, a, _ = run(["sweep", "--steps", "2", "--rounds", "1000", "--seed", "1"], capsys)
    _, b, _ = run(["sweep", "--steps", "2", "--rounds", "1000", "--seed", "2"], capsys)
    assert a != b


def test_numbers_use_twelve_significant_digits():
    assert cli.format_number(1 / 3) == "0.333333333333"
    assert cli.format_number(None) == ""
    assert cli.format_number(0.0) == "0"


def test_plot_outputs(tmp_path, capsys):
    prefix = tmp_path / "fig"
    code, _, _ = run(["sweep", "--analytic-only", "--steps", "5", "--plot", str(prefix)], capsys)
    assert code == 0
    for name in ("fig.dat", "fig-information.svg", "fig-rates.svg"):
        assert (tmp_path / name).stat().st_size > 0
    assert (tmp_path / "fig.dat").read_text().startswith("# eta i_ab")


@pytest.mark.parametrize("argv", [
    ["sweep", "--reflectivity", "1.5", "--analytic-only"],
    ["sweep", "--eta-start", "0.8", "--eta-end", "0.2"],
    ["sweep", "--steps", "0"],
    ["sweep", "--rounds", "0"],
    ["sweep", "--confidence", "1.2", "--rounds", "100", "--steps", "1"],
    ["sweep", "--adversary", "bogus"],
    ["verify", "--workers", "0"],
    ["simulate", "--adversary", "s2", "--eta", "0.3"],
    ["simulate", "--eta", "2"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


def test_io_errors_exit_3(tmp_path, capsys):
    code, _, err = run(["sweep", "--analytic-only", "--out", str(tmp_path / "missing" / "x.csv")], capsys)
    assert code == 3 and "cannot write" in err
    code, _, _ = run(["sweep", "--config", str(tmp_path / "nope.cfg")], capsys)
    assert code == 3
    code, _, _ = run(["simulate", "--rounds", "2", "--out", str(tmp_path / "missing" / "r.txt")], capsys)
    assert code == 3


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\nsteps = 3\nanalytic-only = true\neta_end = 0.5\n")
    _, out, _ = run(["sweep", "--config", str(cfg)], capsys)
    assert [r["eta"] for r in rows(out)] == ["0", "0.25", "0.5"]
    _, out, _ = run(["sweep", "--config", str(cfg), "--steps", "2"], capsys)
    assert [r["eta"] for r in rows(out)] == ["0", "0.5"]


@pytest.mark.parametrize("text", ["steps 3\n", "colour = red\n", "steps = many\n", "adversary = mallory\n"])
def test_bad_config_exits_2(tmp_path, capsys, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, _ = run(["sweep", "--config", str(cfg)], capsys)
    assert code == 2


def test_simulate_single_round_is_deterministic(capsys):
    _, a, _ = run(["simulate", "--rounds", "1", "--seed", "5"], capsys)
    _, b, _ = run(["simulate", "--rounds", "1", "--seed", "5"], capsys)
    assert a == b
    lines = a.splitlines()
    assert lines[0].startswith("# cfqkd records")
    assert lines[1].split() == list(cli.RECORD_COLUMNS)
    assert len(lines) == 3


def _records(text):
    lines = text.splitlines()
    header = lines[1].split()
    return [dict(zip(header, line.split())) for line in lines[2:]]


def test_simulate_without_loss_has_no_loss_flags(capsys):
    _, out, _ = run(["simulate", "--rounds", "100000", "--eta", "0"], capsys)
    recs = _records(out)
    assert len(recs) == 100_000
    assert all(r["loss_ab"] == "0" and r["loss_ba"] == "0" for r in recs)
    assert all(r["eve_action"] == "-" for r in recs)


def test_simulate_strategy2_at_half_never_blocks(capsys):
    _, out, _ = run(["simulate", "--rounds", "20000", "--eta", "0.5", "--adversary", "s2"], capsys)
    recs = _records(out)
    assert {r["eve_action"] for r in recs} == {"attack"}
    assert any(r["outcome"] == "D4-only" for r in recs)
    for r in recs:
        if r["outcome"] == "D1":
            assert r["outcome_pol"] == "VH"[int(r["alice_bit"])]
            assert r["eve_bit"] == str(1 - "VH".index(r["eve_basis"]))


def test_verify_passes_and_fails_on_fault(capsys):
    code, out, _ = run(["verify", "--rounds", "200000"], capsys)
    assert code == 0, out
    assert out.splitlines()[-1].endswith("checks ok")
    assert "[FAIL]" not in out
    code, out, _ = run(["verify", "--rounds", "200000", "--inject-fault"], capsys)
    assert code == 1
    assert any("[FAIL]" in line and "eta=0.8" in line for line in out.splitlines())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cfqkd", "sweep", "--analytic-only", "--steps", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == HEADER
