import csv
import json

import pytest

from crossderiv.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_coeffs(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["coeffs", "--order", "1", "--nodes", "1,-1", "--out", str(out)]) == 0
    rows = read_csv(out)
    coef = [float(r[2]) for r in rows if r[0] == "coefficient"]
    assert coef == pytest.approx([0.5, -0.5], abs=1e-12)


def test_coeffs_singular_exit_4(capsys):
    assert main(["coeffs", "--order", "1", "--nodes", "1,-1", "--exponents", "1,3"]) == 4
    assert "error" in capsys.readouterr().err


def test_parameter_error_exit_2():
    assert main(["coeffs", "--order", "1", "--nodes", "1,1"]) == 2
    assert main(["indices", "--function", "nosuch", "--budget", "100"]) == 2
    assert main(["--threads", "0", "coeffs", "--order", "1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_a2_error_exit_3():
    assert main(["derivative", "--function", "ishigami", "--point", "0,0,0", "--subset", "1",
                 "--N", "1", "--law", "gaussian", "--sigma", "1.0"]) == 3


def test_scheme_flag_combinations():
    # --exponents implies the custom scheme and conflicts with any other explicit scheme
    assert main(["coeffs", "--order", "1", "--scheme", "single", "--nodes", "1"]) == 0
    assert main(["coeffs", "--order", "1", "--scheme", "rate_optimal", "--exponents", "0,1"]) == 2


def test_derivative(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["--seed", "3", "derivative", "--function", "poly:x1*x2", "--point", "0.5,2",
                 "--subset", "1", "--N", "500", "--out", str(out)]) == 0
    rows = read_csv(out)
    rec = dict(zip(rows[0], rows[1]))
    assert abs(float(rec["value"]) - 2.0) <= 4 * float(rec["std_error"]) + 1e-9


def test_derivative_export_and_import(tmp_path):
    design = tmp_path / "design.csv"
    assert main(["derivative", "--function", "poly:x1^2", "--point", "1", "--subset", "1", "--N", "50",
                 "--export-design", str(design)]) == 0
    rows = read_csv(design)[1:]
    ys = tmp_path / "y.csv"
    ys.write_text("row,y\n" + "".join(f"{r[0]},{float(r[3]) ** 2!r}\n" for r in rows))
    out = tmp_path / "est.csv"
    assert main(["derivative", "--design", str(design), "--outputs", str(ys), "--out", str(out)]) == 0
    ys.write_text("row,y\n0,1\n")
    assert main(["derivative", "--design", str(design), "--outputs", str(ys)]) == 2


def test_seed_flag_position_and_reproducibility(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--seed", "5", "indices", "--function", "ishigami", "--budget", "600", "--out", str(a)]) == 0
    assert main(["indices", "--seed", "5", "--function", "ishigami", "--budget", "600", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_experiment(tmp_path):
    out = tmp_path / "exp.csv"
    assert main(["--deterministic", "experiment", "--function", "ishigami", "--budgets", "600,900",
                 "--replicates", "2", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 1 + 2 * 2 * 3 * 2
    assert (tmp_path / "exp_aggregate.csv").exists() and (tmp_path / "exp.meta.json").exists()


def test_emulate(tmp_path, capsys):
    out, state = tmp_path / "emu.csv", tmp_path / "emu.txt"
    assert main(["emulate", "--function", "gfun_b", "--budget", "300", "--out", str(out),
                 "--save", str(state)]) == 0
    rows = read_csv(out)
    assert rows[0][-2:] == ["predicted", "true"] and len(rows) == 1 + 100
    info = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert info["runs_used"] <= 300
    assert state.read_text().startswith("# crossderiv-emulator v1")
    pts = tmp_path / "pts.csv"
    pts.write_text("1.5," + ",".join(["0.5"] * 9) + "\n")
    assert main(["emulate", "--function", "gfun_b", "--budget", "300", "--eval-points", str(pts)]) == 3
