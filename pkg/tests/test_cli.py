import csv
import io
import subprocess
import sys

import pytest

from secalign.cli import EXIT_DEGENERATE, EXIT_INADMISSIBLE, EXIT_IO, EXIT_PARSE, EXIT_RETRY, main, parse_range
from secalign.fidelity import TABLE_COLUMNS
from secalign.protocol import ProtocolTranscript


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    reader = csv.reader(io.StringIO(text), strict=True)
    header = next(reader)
    return header, list(reader)


@pytest.mark.parametrize(
    "text,expected",
    [("3", [3]), ("1..4", [1, 2, 3, 4]), ("2..10:4", [2, 6, 10]), (" 5 .. 6 ", [5, 6])],
)
def test_parse_range(text, expected):
    assert parse_range(text) == expected


@pytest.mark.parametrize("text", ["0", "4..2", "1..5:0", "a..b", "1-3"])
def test_parse_range_rejects(text):
    with pytest.raises(Exception):
        parse_range(text)


def test_benchmark_2d_table(capsys):
    code, out, _ = run(capsys, "benchmark", "--method", "2d", "--n", "1..10")
    assert code == 0
    header, rows = read_csv(out)
    assert tuple(header) == TABLE_COLUMNS
    assert len(rows) == 10
    row3 = dict(zip(header, rows[2]))
    assert float(row3["fidelity"]) == pytest.approx(0.9333, abs=1e-4)
    for row in rows:
        for cell in row[1:]:
            float(cell)
            assert "," not in cell


def test_benchmark_method_a_row(capsys):
    code, out, _ = run(capsys, "benchmark", "--method", "a", "--n", "2")
    header, rows = read_csv(out)
    row = dict(zip(header, rows[0]))
    assert float(row["fidelity"]) == pytest.approx(0.85, abs=0.005)
    assert row["baseline"] == "0.875"
    assert row["N_total"] == "6"


def test_benchmark_monte_carlo_rows_and_seed(capsys, tmp_path):
    out = tmp_path / "b.csv"
    code, _, err = run(capsys, "benchmark", "--method", "b", "--n", "2..3", "--trials", "2000", "--out", str(out))
    assert code == 0 and err.startswith("seed: ")
    _, rows = read_csv(out.read_text())
    assert [r[0] for r in rows] == ["b", "b-mc", "b", "b-mc"]
    seed = err.split()[1]
    again = tmp_path / "c.csv"
    run(capsys, "benchmark", "--method", "b", "--n", "2..3", "--trials", "2000", "--seed", seed, "--out", str(again))
    assert again.read_bytes() == out.read_bytes()


def test_benchmark_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "benchmark", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == EXIT_IO and "error" in err


def test_estimate_fully_discordant(capsys, tmp_path):
    path = tmp_path / "rec.txt"
    path.write_text("# alice then bob\n+1 -1 +1 -1\n-1,+1,-1,+1\n")
    code, out, _ = run(capsys, "estimate", str(path))
    assert code == 0
    assert "q=1.0" in out and "cos_e=0.6666666666666666" in out


def test_estimate_method_b_inadmissible(capsys, tmp_path):
    path = tmp_path / "rec.txt"
    ones = " ".join(["+"] * 20)
    minus = " ".join(["-"] * 20)
    path.write_text(f"{ones}\n{minus}\n{ones}\n{minus}\n")
    code, out, _ = run(capsys, "estimate", "--method", "b", str(path))
    assert code == EXIT_INADMISSIBLE and "inadmissible" in out


def test_estimate_method_a_degenerate(capsys, tmp_path):
    path = tmp_path / "rec.txt"
    path.write_text("+ +\n+ -\n" * 3)
    code, out, _ = run(capsys, "estimate", "--method", "a", str(path))
    assert code == EXIT_DEGENERATE and "degenerate" in out


@pytest.mark.parametrize(
    "text,where",
    [("+1 -1 2\n-1 -1 -1\n", "line 1, column 7"), ("\n# c\n+ -\n+ ?\n", "line 4, column 3"), ("", "no outcome")],
)
def test_estimate_parse_errors(capsys, tmp_path, text, where):
    path = tmp_path / "rec.txt"
    path.write_text(text)
    code, _, err = run(capsys, "estimate", str(path))
    assert code == EXIT_PARSE and where in err


def test_estimate_length_mismatch(capsys, tmp_path):
    path = tmp_path / "rec.txt"
    path.write_text("+ - +\n+ -\n")
    code, _, err = run(capsys, "estimate", str(path))
    assert code == EXIT_PARSE and "line 2" in err


def test_protocol_writes_transcript(capsys, tmp_path):
    out = tmp_path / "t.txt"
    code, summary, _ = run(capsys, "protocol", "--method", "2d", "--n", "100", "--seed", "3", "--out", str(out))
    assert code == 0
    tr = ProtocolTranscript.deserialize(out.read_text())
    assert tr.config.seed == 3
    assert "fidelity:" in summary and "verdict: Pass" in summary


def test_protocol_intercept_detected(capsys, tmp_path):
    out = tmp_path / "t.txt"
    code, summary, _ = run(
        capsys, "protocol", "--n", "100", "--seed", "1", "--attack", "intercept", "--fraction", "1.0", "--out", str(out)
    )
    assert code == 0 and "verdict: Fail" in summary


def test_protocol_zero_fraction_ghz_matches_honest(capsys, tmp_path):
    honest, ghz = tmp_path / "h.txt", tmp_path / "g.txt"
    _, s1, _ = run(capsys, "protocol", "--method", "a", "--seed", "4", "--out", str(honest))
    _, s2, _ = run(capsys, "protocol", "--method", "a", "--seed", "4", "--attack", "ghz", "--fraction", "0", "--out", str(ghz))
    a = ProtocolTranscript.deserialize(honest.read_text())
    b = ProtocolTranscript.deserialize(ghz.read_text())
    assert a.estimate == b.estimate and a.verdict == b.verdict
    assert s1.splitlines()[2:] == s2.splitlines()[2:]


def test_protocol_retry_exhaustion_exit_code(capsys, tmp_path):
    out = tmp_path / "t.txt"
    args = ["protocol", "--method", "b", "--n", "10", "--axis", "0.7,0.7,0.05", "--retries", "0", "--out", str(out)]
    codes = [run(capsys, *args, "--seed", str(s))[0] for s in range(40)]
    assert EXIT_RETRY in codes
    assert set(codes) <= {0, EXIT_RETRY}


def test_help_documents_exit_codes(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for code in ("0", "2", "3", "4", "5", "6", "7"):
        assert f"  {code}  " in out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "secalign", "benchmark", "--n", "2"], capture_output=True, text=True, check=True
    )
    assert proc.stdout.startswith(",".join(TABLE_COLUMNS))
