import json
import subprocess
import sys

import numpy as np
import pytest

from miuraflow.cli import build_parser, main

KDV_BOOST = "boost:c=1(soliton:kappa=1,x0=0)"


class _Field:
    def __init__(self, t, x, values):
        self.t, self.x, self.values = t, x, values


def read_field_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, x = np.unique(data[:, 0]), np.unique(data[:, 1])
    return _Field(t, x, data[:, 2].reshape(t.size, x.size))


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["exit_code"] == code
    return code, rep


def symbol_file(path, terms, side="+"):
    path.write_text(json.dumps({"side": side, "terms": [
        {"exp": {"num": n, "den": d}, "coeff": [c]} for (n, d), c in terms]}))
    return str(path)


class TestSolve:
    def test_zero(self, tmp_path):
        code, rep = run(tmp_path, "solve-mkdv", "--r0", "zero", "--q", "zero",
                        "--nx", "41", "--nt", "6")
        assert code == 0 and rep["status"] == "ok"
        r = read_field_csv(tmp_path / "r.csv")
        assert r.values.shape == (6, 41) and np.all(r.values == 0)
        assert (tmp_path / "psi_diag.json").exists()

    def test_kink(self, tmp_path):
        code, _ = run(tmp_path, "solve-mkdv", "--r0", "kink", "--q", KDV_BOOST,
                      "--nx", "1001", "--nt", "251")
        assert code == 0
        diag = json.loads((tmp_path / "psi_diag.json").read_text())
        assert diag["mkdv_residual"] <= 1e-4
        r = read_field_csv(tmp_path / "r.csv")
        ref = -np.tanh(r.x[None] + 2 * r.t[:, None])
        assert np.max(np.abs(r.values - ref)) <= 1e-4

    def test_gate(self, tmp_path):
        code, rep = run(tmp_path, "solve-mkdv", "--r0", "const:c=1", "--q", "const:c=2",
                        "--nx", "41", "--nt", "6")
        assert code == 3 and "gate" in rep["status"]

    def test_bad_spec(self, tmp_path):
        code, rep = run(tmp_path, "solve-mkdv", "--r0", "kink(", "--q", "zero")
        assert code == 2

    def test_missing_csv_is_usage_error(self, tmp_path):
        code, _ = run(tmp_path, "solve-mkdv", "--r0", f"csv:file={tmp_path / 'nope.csv'}",
                      "--q", "zero", "--nx", "41", "--nt", "6")
        assert code == 2

    def test_numerical_failure(self, tmp_path):
        # r0 only known on [-1, 1]: characteristics leave the data window
        x = np.linspace(-1, 1, 21)
        np.savetxt(tmp_path / "r0.csv", np.c_[x, 0 * x + 0.5], delimiter=",", header="x,value",
                   comments="")
        code, rep = run(tmp_path, "solve-mkdv", "--r0", f"csv:file={tmp_path / 'r0.csv'}",
                        "--q", "const:c=0.25", "--xmin", "-1", "--xmax", "1", "--nx", "21",
                        "--nt", "6", "--tmax", "0.5")
        assert code == 4 and rep["status"] == "numerical failure"

    def test_auto_q(self, tmp_path):
        code, _ = run(tmp_path, "solve-mkdv", "--r0", "kink", "--q", "auto",
                      "--nx", "1024", "--nt", "11", "--tmax", "0.1")
        # a kink has B(r0) = 1 - 2 sech^2, which does not decay
        assert code == 2

    def test_plot(self, tmp_path):
        code, _ = run(tmp_path, "solve-mkdv", "--r0", "zero", "--q", "zero",
                      "--nx", "41", "--nt", "6", "--plot")
        assert code == 0
        assert (tmp_path / "r.png").read_bytes()[:4] == b"\x89PNG"


class TestVerify:
    def test_unknown_suite(self, tmp_path):
        code, rep = run(tmp_path, "verify", "--suite", "nonsense")
        assert code == 2 and "nonsense" in rep["message"]

    def test_asymptotics_suite(self, tmp_path, capsys):
        code, rep = run(tmp_path, "verify", "--suite", "asymptotics")
        assert code == 0
        names = [c["name"] for c in rep["result"]["checks"]]
        assert any("0.6" in n or "obstruction" in n or "reject" in n for n in names)
        assert rep["result"]["seed"] == 20240611
        assert "PASS" in capsys.readouterr().out

    @pytest.mark.slow
    def test_wronskian_suite(self, tmp_path):
        code, rep = run(tmp_path, "verify", "--suite", "wronskian")
        assert code == 0 and rep["result"]["pass"]


class TestSpectrum:
    def test_soliton(self, tmp_path):
        code, _ = run(tmp_path, "spectrum", "--q", "soliton:kappa=1,x0=0", "--times", "0,0.5",
                      "--window", "-2,-0.5")
        assert code == 0
        out = json.loads((tmp_path / "spectrum.json").read_text())
        assert set(out) >= {"times", "eigenvalues", "max_pair_dev", "multiplicities"}
        assert [len(e) for e in out["eigenvalues"]] == [1, 1]
        assert abs(out["eigenvalues"][0][0] + 1) <= 1e-4 and out["max_pair_dev"] <= 1e-6

    def test_violation_exit(self, tmp_path):
        code, _ = run(tmp_path, "spectrum", "--q", "soliton:kappa=1,x0=0", "--times", "0,0.5",
                      "--window", "-2,-0.5", "--nx", "200", "--pair-tol", "1e-16")
        assert code in (0, 1)

    def test_window_edge_is_numerical(self, tmp_path):
        lam1 = 400 * np.sin(np.pi / 40) ** 2
        code, rep = run(tmp_path, "spectrum", "--q", "zero", "--times", "0",
                        "--window", f"{float(lam1)!r},50", "--xmin", "-1", "--xmax", "1", "--nx", "21")
        assert code == 4 and "edge" in rep["message"]

    def test_small_grid_is_usage_error(self, tmp_path):
        assert run(tmp_path, "spectrum", "--q", "zero", "--nx", "3")[0] == 2


class TestAsymptotics:
    def test_constant(self, tmp_path):
        f = symbol_file(tmp_path / "s.json", [((0, 1), 2.0)])
        code, _ = run(tmp_path, "asymptotics", "--r0-symbol", f, "--nt", "11")
        assert code == 0
        rows = np.loadtxt(tmp_path / "coefficients.csv", delimiter=",", skiprows=1)
        assert (tmp_path / "coefficients.csv").read_text().splitlines()[0] == "t,k,a_k"
        for k in np.unique(rows[:, 1]):
            sel = rows[rows[:, 1] == k, 2]
            assert np.all(sel == sel[0])

    def test_cube_root(self, tmp_path):
        f = symbol_file(tmp_path / "s.json", [((1, 3), 1.0)])
        code, rep = run(tmp_path, "asymptotics", "--r0-symbol", f, "--nt", "11")
        assert code == 0 and rep["result"]["strictly_lower_triangular"]
        rows = np.loadtxt(tmp_path / "coefficients.csv", delimiter=",", skiprows=1)
        last = rows[rows[:, 0] == rows[:, 0].max()]
        assert np.allclose(last[:3, 2], [0.75, 2.0, 6.0], atol=1e-10)

    def test_obstruction(self, tmp_path):
        f = symbol_file(tmp_path / "s.json", [((3, 5), 1.0)])
        code, rep = run(tmp_path, "asymptotics", "--r0-symbol", f)
        assert code == 5
        assert "9/5" in rep["message"] and "8/5" in rep["message"]

    def test_half_needs_o_class(self, tmp_path):
        f = symbol_file(tmp_path / "s.json", [((1, 2), 1.0)])
        assert run(tmp_path, "asymptotics", "--r0-symbol", f)[0] == 5

    def test_bad_json(self, tmp_path):
        (tmp_path / "s.json").write_text("{not json")
        assert run(tmp_path, "asymptotics", "--r0-symbol", str(tmp_path / "s.json"))[0] == 2


class TestConfig:
    def test_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# small grid\nnx = 41\nnt=6\n")
        code, rep = run(tmp_path, "solve-mkdv", "--r0", "zero", "--q", "zero",
                        "--config", str(cfg))
        assert code == 0
        assert rep["config"]["options"]["nx"] == 41
        assert read_field_csv(tmp_path / "r.csv").values.shape == (6, 41)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus=1\n")
        code, rep = run(tmp_path, "solve-mkdv", "--r0", "zero", "--q", "zero",
                        "--config", str(cfg))
        assert code == 2 and "bogus" in rep["message"]

    def test_bad_value(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nx=many\n")
        assert run(tmp_path, "solve-mkdv", "--r0", "zero", "--q", "zero",
                   "--config", str(cfg))[0] == 2

    def test_missing_required(self, tmp_path):
        assert run(tmp_path, "solve-mkdv", "--r0", "zero")[0] == 2


def test_outputs_are_deterministic(tmp_path):
    outs = []
    d = tmp_path / "run"
    for _ in range(2):
        main(["solve-mkdv", "--r0", "kink", "--q", KDV_BOOST, "--nx", "201", "--nt", "21",
              "--out", str(d)])
        f = symbol_file(tmp_path / "s.json", [((1, 3), 1.0)])
        main(["asymptotics", "--r0-symbol", f, "--nt", "11", "--out", str(d / "asy")])
        outs.append([(d / p).read_bytes() for p in
                     ("r.csv", "psi_diag.json", "report.json", "asy/coefficients.csv",
                      "asy/symbol.json")])
    assert outs[0] == outs[1]


def test_negative_values_and_parser():
    ns = build_parser().parse_args(["spectrum", "--q", "zero", "--window=-2,-0.5"])
    assert ns.window == (-2.0, -0.5)
    assert main(["spectrum", "--q", "zero", "--window", "-2,-0.5", "--times", "0",
                 "--nx", "101", "--out", "/tmp/miuraflow-cli-neg"]) in (0, 4)


def test_console_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "miuraflow.cli", "verify", "--suite", "bogus",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert p.returncode == 2 and "unknown suite" in p.stderr
    assert json.loads((tmp_path / "report.json").read_text())["exit_code"] == 2
