import csv
import re
import subprocess
import sys

import numpy as np
import pytest

from tonewton.cli import REPORT_COLUMNS, BenchSuite, main

RESULT = re.compile(r"^RESULT (\S+) (\S+) iters=(\d+) grad=(\S+) status=(\S+)$")


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_minimize_golden_line(capsys):
    code, out = run(capsys, "minimize", "--objective", "himmelblau", "--optimizer", "ton", "--x0", "2,1")
    assert code == 0
    last = out.out.strip().splitlines()[-1]
    m = RESULT.match(last)
    assert m and m.group(1) == "himmelblau" and m.group(2) == "ton" and m.group(5) == "Converged"
    assert int(m.group(3)) <= 6
    assert re.fullmatch(r"\d\.\d{3}e[+-]\d\d", m.group(4))
    assert "point       (3, 2)" in out.out


def test_minimize_already_optimal(capsys):
    code, out = run(capsys, "minimize", "--objective", "bohachevsky", "--optimizer", "newton2", "--x0", "0,0")
    assert code == 0
    assert out.out.strip().splitlines()[-1] == "RESULT bohachevsky newton2 iters=0 grad=0.000e+00 status=Converged"


def test_minimize_max_iterations_exit_code(capsys):
    code, out = run(capsys, "minimize", "--objective", "beale", "--optimizer", "gd", "--step", "0.001",
                    "--x0", "2.8,0.2", "--max-iters", "5")
    assert code == 3
    assert "status=MaxIterations" in out.out


def test_minimize_step_failed_exit_code(capsys):
    # the unshifted Taylor model of Himmelblau at (3, 3.5) has no second-order point
    code, out = run(capsys, "minimize", "--objective", "himmelblau", "--optimizer", "ton", "--x0", "3,3.5",
                    "--shifts", "0")
    assert code == 2
    assert out.out.strip().splitlines()[-1].endswith("status=StepFailed")


@pytest.mark.parametrize("argv", [
    ["minimize", "--objective", "rosenbrock", "--optimizer", "ton", "--x0", "1,1"],
    ["minimize", "--objective", "himmelblau", "--optimizer", "bfgs", "--x0", "1,1"],
    ["minimize", "--objective", "himmelblau", "--optimizer", "ton", "--x0", "1,a"],
    ["minimize", "--objective", "himmelblau", "--optimizer", "ton", "--x0", "1,2,3"],
    ["minimize", "--objective", "himmelblau", "--optimizer", "gd", "--x0", "1,2"],
    ["minimize", "--objective", "himmelblau", "--optimizer", "ton", "--x0", "1,2", "--shifts", "5,10"],
    ["fractal", "--objective", "quadratic", "--window", "0,1,2", "--out", "x.ppm"],
    ["fractal", "--objective", "quadratic", "--res", "2by2", "--out", "x.ppm"],
    ["bench", "--suite", "no-such-suite.ini"],
    [],
])
def test_usage_errors(capsys, argv):
    code, out = run(capsys, *argv)
    assert code == 1
    assert out.err


def test_trace_written_and_io_error(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, _ = run(capsys, "minimize", "--objective", "himmelblau", "--optimizer", "newton2", "--x0", "2,1",
                  "--trace", str(path))
    assert code == 0 and path.read_text().startswith("iter,x0,x1,f")
    code, out = run(capsys, "minimize", "--objective", "himmelblau", "--optimizer", "newton2", "--x0", "2,1",
                    "--trace", str(tmp_path / "missing" / "t.csv"))
    assert code == 4 and "missing" in out.err


def test_fractal_tiny_quadratic(capsys, tmp_path):
    code, out = run(capsys, "fractal", "--objective", "quadratic", "--res", "2x2", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "quadratic_ton.csv")))
    assert rows == [["0", "0"], ["0", "0"]]
    assert (tmp_path / "quadratic_ton.ppm").exists()


def test_fractal_himmelblau_catalogue(capsys, tmp_path):
    code, out = run(capsys, "fractal", "--objective", "himmelblau", "--res", "40x40",
                    "--out", str(tmp_path / "him.ppm"))
    assert code == 0
    cat = list(csv.reader(open(tmp_path / "him_catalogue.csv")))
    assert len(cat) - 1 >= 4


def test_fractal_io_error(capsys, tmp_path):
    code, out = run(capsys, "fractal", "--objective", "quadratic", "--res", "2x2",
                    "--out", str(tmp_path / "missing" / "q.ppm"))
    assert code == 4 and "missing" in out.err


def test_empty_suite(capsys, tmp_path):
    suite = tmp_path / "empty.ini"
    suite.write_text("[defaults]\neps = 1e-5\n")
    report = tmp_path / "r.csv"
    code, out = run(capsys, "bench", "--suite", str(suite), "--report", str(report))
    assert code == 0
    assert report.read_text().splitlines() == [",".join(REPORT_COLUMNS)]
    assert "BENCH cases=0 within_band=0 missed=0" in out.out


def test_custom_suite_band_miss(capsys, tmp_path):
    suite = tmp_path / "s.ini"
    suite.write_text(
        "[defaults]\neps = 1e-5\n\n"
        "[him newton2]\nobjective = himmelblau\noptimizer = newton2\nstarts = 2,1; 4,3\nexpected = 7; 40\nband = newton\n")
    report = tmp_path / "r.csv"
    code, out = run(capsys, "bench", "--suite", str(suite), "--report", str(report), "--jobs", "2")
    assert code == 5
    rows = list(csv.DictReader(open(report)))
    assert [r["x0"] for r in rows] == ["2,1", "4,3"]
    assert [r["within_band"] for r in rows] == ["true", "false"]


def test_malformed_suite(capsys, tmp_path):
    suite = tmp_path / "bad.ini"
    suite.write_text("[x]\nobjective = himmelblau\noptimizer = newton2\nstarts = 2,1\nexpected = 7; 8\n")
    code, _ = run(capsys, "bench", "--suite", str(suite))
    assert code == 1


def test_builtin_suite_contents():
    suite = BenchSuite.load("paper")
    assert len(suite.cases) == 108
    objectives = {c.objective for c in suite.cases}
    assert objectives == {"bohachevsky", "mccormick", "beale", "himmelblau"}
    him = [c for c in suite.cases if c.objective == "himmelblau" and c.optimizer == "gd"
           and c.config.step_size == 0.025]
    assert him and all(c.at_least and c.expected == 4000 for c in him)


def test_backend_info(capsys):
    code, out = run(capsys, "--backend-info")
    assert code == 0 and out.out.strip() in ("backend numpy", "backend cython")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "tonewton", "minimize", "--objective", "quadratic",
                          "--optimizer", "ton", "--x0", "1,1"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip().splitlines()[-1] == "RESULT quadratic ton iters=1 grad=0.000e+00 status=Converged"
