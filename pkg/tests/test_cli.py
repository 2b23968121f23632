import itertools
import json

import pytest
from click.testing import CliRunner

from cli import EXIT_CAP, EXIT_PARSE, EXIT_UNSUPPORTED, main, parse_values
from errors import UnsupportedError


def _unique_solution_cnf():
    # every assignment except 111 is ruled out by its own clause
    clauses = []
    for bits in itertools.product([0, 1], repeat=3):
        if bits == (1, 1, 1):
            continue
        clauses.append(" ".join(str(v + 1) if b == 0 else str(-(v + 1)) for v, b in enumerate(bits)) + " 0")
    return "p cnf 3 7\n" + "\n".join(clauses) + "\n"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def cnf_file(tmp_path):
    path = tmp_path / "unique.cnf"
    path.write_text(_unique_solution_cnf())
    return path


def test_parse_values():
    assert parse_values("2,3,4") == [2, 3, 4]
    assert parse_values("32..512") == [32, 64, 128, 256, 512]
    for bad in ("8..2", "a,b", "0,1", ""):
        with pytest.raises(UnsupportedError):
            parse_values(bad)


def test_compile_writes_schedule_and_report(runner, cnf_file, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(main, ["compile", str(cnf_file), "--kind", "SAT", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "✅ SAT" in result.output
    report = json.loads((out / "unique.report.json").read_text())
    assert report["validation"]["ok"]
    assert report["report"]["n"] == 3
    assert (out / "unique.schedule.json").exists()


def test_solve_finds_the_unique_assignment(runner, cnf_file, tmp_path):
    result = runner.invoke(main, ["solve", str(cnf_file), "--kind", "sat", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "M=1, r*=2" in result.output
    assert "✅ 111" in result.output
    solution = json.loads((tmp_path / "unique.solution.json").read_text())
    assert solution["success_probability"] == pytest.approx(solution["closed_form"], abs=1e-9)
    assert solution["top"][0]["assignment"] == "111"


def test_parse_error_exit_code(runner, tmp_path):
    path = tmp_path / "broken.cnf"
    path.write_text("p cnf x\n")
    result = runner.invoke(main, ["compile", str(path), "--kind", "SAT", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_PARSE


def test_missing_threshold_exit_code(runner, tmp_path):
    path = tmp_path / "path.txt"
    path.write_text("4\n0 1\n1 2\n2 3\n")
    result = runner.invoke(main, ["compile", str(path), "--kind", "MIS", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_UNSUPPORTED


def test_threshold_from_flag(runner, tmp_path):
    path = tmp_path / "path.txt"
    path.write_text("4\n0 1\n1 2\n2 3\n")
    result = runner.invoke(main, ["compile", str(path), "--kind", "MIS", "--k1", "2", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output


def test_simulation_cap_exit_code(runner, cnf_file, tmp_path):
    result = runner.invoke(main, ["solve", str(cnf_file), "--kind", "SAT", "--max-sim-qubits", "2",
                                  "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CAP


def test_l_scaling_is_reproducible(runner):
    args = ["experiment", "l_scaling", "--t", "2", "--n", "16..32", "--trials", "3", "--seed", "5"]
    first = runner.invoke(main, args)
    second = runner.invoke(main, args)
    assert first.exit_code == 0, first.output
    assert first.output == second.output
    assert first.output.splitlines()[0] == "n N t L_mean L_std L_norm"


def test_l_scaling_rejects_invalid_range(runner):
    result = runner.invoke(main, ["experiment", "l_scaling", "--n", "64..16"])
    assert result.exit_code == EXIT_UNSUPPORTED


def test_sc_compare_table(runner, tmp_path):
    out = tmp_path / "sc.json"
    result = runner.invoke(main, ["experiment", "sc_compare", "--n", "16..32", "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert [row["n"] for row in rows] == [16, 32]


def test_compile_reads_dominating_set_as_set_system(runner, tmp_path):
    path = tmp_path / "star.txt"
    path.write_text("k1 = 1\nn = 3\n0: 1 2\n1: 0\n2: 0\n")
    result = runner.invoke(main, ["compile", str(path), "--kind", "dsp", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "star.report.json").read_text())
    assert report["validation"]["ok"]


def test_solve_refuses_width_past_enumeration(runner, tmp_path):
    path = tmp_path / "wide.cnf"
    path.write_text("p cnf 25 1\n" + " ".join(str(v) for v in range(1, 26)) + " 0\n")
    result = runner.invoke(main, ["solve", str(path), "--kind", "SAT", "--max-sim-qubits", "30",
                                  "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CAP


def test_compile_writes_geometry_frames(runner, cnf_file, tmp_path):
    result = runner.invoke(main, ["compile", str(cnf_file), "--kind", "SAT", "--geometry", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    frames = json.loads((tmp_path / "unique.geometry.json").read_text())
    schedule = json.loads((tmp_path / "unique.schedule.json").read_text())
    assert frames[0]["section"] == "initial"
    assert len(frames) == len(schedule["steps"]) + 1


def test_solve_writes_amplitudes(runner, cnf_file, tmp_path):
    result = runner.invoke(main, ["solve", str(cnf_file), "--kind", "SAT", "--amplitudes", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "unique.amplitudes.txt").read_text().split("\n")
    rows = [line.split() for line in lines if line]
    assert all(len(row) == 3 for row in rows)
    assert sum(float(re) ** 2 + float(im) ** 2 for _, re, im in rows) == pytest.approx(1.0, abs=1e-9)


def test_merge_depth_table(runner):
    result = runner.invoke(main, ["experiment", "merge_depth", "--n", "4,16"])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0] == "N qbt_layers qbt_predicted qra_layers qra_predicted"
    assert [line.split()[0] for line in lines[1:]] == ["4", "16"]
