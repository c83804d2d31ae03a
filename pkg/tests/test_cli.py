import json

import numpy as np
import pytest

from rankselect.cli import main
from rankselect.io import InputError, read_matrix, read_table, write_matrix
from rankselect.rsc import adaptive_mu
from rankselect.simulate import ExperimentConfig, RngSpec, draw_training


@pytest.fixture
def exp1_files(tmp_path):
    cfg = ExperimentConfig("exp1", 100, 25, 25, 10, 0.1, 0.4)
    x, a, e = draw_training(cfg, RngSpec(0, 0).generator())
    write_matrix(tmp_path / "x.csv", x)
    write_matrix(tmp_path / "y.csv", x @ a + e)
    return tmp_path


def test_matrix_round_trip_exact(tmp_path, rng):
    a = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-300, 300, (7, 3))
    write_matrix(tmp_path / "a.csv", a)
    assert np.array_equal(read_matrix(tmp_path / "a.csv"), a)


def test_matrix_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    with pytest.raises(InputError, match=r"bad.csv:2:2"):
        read_matrix(tmp_path / "bad.csv")
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    with pytest.raises(InputError, match=r"ragged.csv:2"):
        read_matrix(tmp_path / "ragged.csv")
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(InputError):
        read_matrix(tmp_path / "empty.csv")
    (tmp_path / "nan.csv").write_text("1,nan\n")
    with pytest.raises(InputError):
        read_matrix(tmp_path / "nan.csv")
    with pytest.raises(InputError):
        read_matrix(tmp_path / "missing.csv")


def test_fit_rsc_adaptive(exp1_files, capsys):
    out = exp1_files / "o"
    code = main(["fit", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv"),
                 "--method", "rsc-adaptive", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["selected_rank"] == 10
    assert report["mu"] == pytest.approx(adaptive_mu(report["s2"], 25, 25))
    assert len(report["eigenvalues"]) == 25
    coef = read_matrix(out / "coefficients.csv")
    assert coef.shape == (25, 25) and np.linalg.matrix_rank(coef) == 10


def test_fit_coefficients_round_trip(exp1_files):
    from rankselect.rsc import rsc_fit

    out = exp1_files / "o"
    main(["fit", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv"),
          "--method", "rsc", "--mu", "150", "--out", str(out)])
    x, y = read_matrix(exp1_files / "x.csv"), read_matrix(exp1_files / "y.csv")
    assert np.array_equal(read_matrix(out / "coefficients.csv"), rsc_fit(x, y, 150.0).coefficients)


def test_fit_zero_response(tmp_path, rng):
    write_matrix(tmp_path / "x.csv", rng.standard_normal((20, 4)))
    write_matrix(tmp_path / "y.csv", np.zeros((20, 3)))
    assert main(["fit", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"),
                 "--method", "rsc", "--mu", "1", "--out", str(tmp_path / "o")]) == 0
    assert np.all(read_matrix(tmp_path / "o" / "coefficients.csv") == 0)
    assert json.loads((tmp_path / "o" / "report.json").read_text())["selected_rank"] == 0


def test_fit_nnp_variants(exp1_files, caplog):
    args = ["fit", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv")]
    assert main(args + ["--method", "nnp", "--tau", "0", "--out", str(exp1_files / "a")]) == 0
    assert "degenerate" in caplog.text
    assert main(args + ["--method", "nnp-calibrated", "--tau", "300", "--out", str(exp1_files / "b")]) == 0
    rep = json.loads((exp1_files / "b" / "report.json").read_text())
    assert rep["converged"] and rep["kkt_residual"] <= 1e-4
    assert main(args + ["--method", "nnp", "--max-iterations", "2", "--tau", "10",
                        "--out", str(exp1_files / "c")]) == 3
    assert (exp1_files / "c" / "report.json").exists()


def test_fit_input_errors(exp1_files, tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    assert main(["fit", "--x", str(tmp_path / "bad.csv"), "--y", str(exp1_files / "y.csv"),
                 "--method", "rsc", "--mu", "1", "--out", str(tmp_path / "o")]) == 2
    assert "bad.csv:2:2" in capsys.readouterr().err
    write_matrix(tmp_path / "short.csv", np.ones((5, 2)))
    assert main(["fit", "--x", str(tmp_path / "short.csv"), "--y", str(exp1_files / "y.csv"),
                 "--method", "rsc", "--mu", "1", "--out", str(tmp_path / "o")]) == 2
    assert main(["fit", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv"),
                 "--method", "rsc", "--out", str(tmp_path / "o")]) == 2
    assert main(["fit", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv"),
                 "--method", "rsc", "--mu", "-1", "--out", str(tmp_path / "o")]) == 2


def test_simulate_bundled_grids(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["simulate", "exp2", "--reps", "1", "--grid-points", "8", "--out", str(out),
                 "--details", str(tmp_path / "d.csv")]) == 0
    rows = read_table(out)
    assert len(rows) == 9 * 4
    assert {(r["b"], r["rho"]) for r in rows} == {(b, r) for b in ("0.1", "0.2", "0.3")
                                                  for r in ("0.9", "0.5", "0.1")}
    assert "seed: 20240102" in capsys.readouterr().out
    assert len(read_table(tmp_path / "d.csv")) == 36


def test_simulate_exp1_grid_shape(tmp_path):
    from rankselect.cli import _configs, _load_config, build_parser

    args = build_parser().parse_args(["simulate", "exp1", "--out", str(tmp_path / "s.csv")])
    cfgs = _configs(args, _load_config("exp1"))
    assert len(cfgs) == 12 and all(c.m == 100 and c.p == 25 and c.r == 10 for c in cfgs)


def test_simulate_invalid_config(tmp_path):
    (tmp_path / "c.json").write_text('{"experiment": "exp1", "m": 10}')
    assert main(["simulate", str(tmp_path / "c.json"), "--out", str(tmp_path / "s.csv")]) == 2
    (tmp_path / "d.json").write_text("{not json")
    assert main(["simulate", str(tmp_path / "d.json"), "--out", str(tmp_path / "s.csv")]) == 2


def test_simulate_seed_reproducible(tmp_path):
    cfg = {"experiment": "exp2", "m": 20, "p": 100, "n": 25, "q": 10, "r": 5, "rho": 0.5,
           "b": 0.3, "replications": 2, "grid_points": 8}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    for name in ("a.csv", "b.csv"):
        main(["simulate", str(tmp_path / "c.json"), "--seed", "9", "--out", str(tmp_path / name)])
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_path_command(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["path", "--scenario", "0.3,0.1", "--seed", "1", "--grid-points", "30",
                 "--out", str(out)]) == 0
    rows = read_table(out)
    rsc = [int(r["rank"]) for r in rows if r["method"] == "RSC"]
    assert rsc[0] == 25 and rsc[-1] == 0
    assert all(a >= b for a, b in zip(rsc, rsc[1:]))
    assert main(["path", "--out", str(out)]) == 2


def test_path_from_matrices(exp1_files):
    out = exp1_files / "p.csv"
    assert main(["path", "--x", str(exp1_files / "x.csv"), "--y", str(exp1_files / "y.csv"),
                 "--grid-points", "10", "--out", str(out)]) == 0
    assert all(r["mse_xa"] == "" for r in read_table(out))


def test_tightness_command(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["tightness", "--seed", "2", "--trials", "50", "--out", str(out)]) == 0
    rows = read_table(out)
    assert len(rows) == 100
    assert all(float(r["snr"]) > 1 for r in rows)
    reports = json.loads(out.with_suffix(".json").read_text())
    assert all(r["passed"] for r in reports)
    assert "seed: 2" in capsys.readouterr().out


def test_bounds_command(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert main(["bounds", "--check", "lemma3", "--seed", "3", "--out", str(out)]) == 0
    reports = json.loads(out.read_text())
    assert [r["bound_name"] for r in reports][0] == "lemma3_mean"
    assert all(r["passed"] for r in reports)
    text = capsys.readouterr().out
    assert "[PASS] lemma3_mean" in text and "seed: 3" in text


def test_bounds_failure_exit_code(tmp_path):
    cfg = {"experiment": "exp1", "m": 100, "p": 25, "n": 25, "r": 10, "rho": 0.1, "b": 0.05}
    (tmp_path / "weak.json").write_text(json.dumps(cfg))
    assert main(["bounds", "--check", "cor4", "--config", str(tmp_path / "weak.json"),
                 "--reps", "20", "--seed", "1"]) == 1
