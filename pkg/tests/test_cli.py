import json
import subprocess
import sys

import pytest

from abkd import cli, nn
from abkd.report import read_csv

SMALL = ["--n-train", "120", "--n-test", "60", "--epochs", "2", "--batch-size", "32",
         "--teacher-sizes", "20,16,10", "--student-sizes", "20,8,10", "--spread", "0.5"]


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)

    def go(*argv):
        code = cli.main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return go


def one_error_line(err, category):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith(f"error:{category}: ")


class TestEvalDivergence:
    @pytest.mark.parametrize("extra,expected", [
        (["--alpha", "1", "--beta", "0"], "0.368064"),
        (["--alpha", "0", "--beta", "1"], "0.510826"),
        (["--family", "jsd"], "0.101749"),
        (["--family", "fkld"], "0.368064"),
        (["--family", "wsd", "--wsd-weights", "0.5,0.5"], "0.439445"),
    ])
    def test_examples(self, run, extra, expected):
        code, out, _ = run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5", *extra)
        assert code == 0 and out.strip() == expected

    def test_no_files_without_out(self, run, tmp_path):
        run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5")
        assert not list(tmp_path.iterdir())

    def test_csv_with_out(self, run, tmp_path):
        code, _, _ = run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5", "--alpha", "0.5", "--beta", "0.5",
                         "--out", "d")
        (row,) = read_csv(tmp_path / "d" / "divergence.csv")
        assert code == 0 and row["family"] == "ab" and row["alpha"] == 0.5

    def test_overflow_exit_3(self, run):
        code, _, err = run("eval-divergence", "--p", "0.999999,0.000001", "--q", "0.000001,0.999999",
                           "--alpha", "-60", "--beta", "0")
        assert code == 3
        one_error_line(err, "numeric")

    def test_length_mismatch(self, run):
        code, _, err = run("eval-divergence", "--p", "0.5,0.5", "--q", "1")
        assert code == 1
        one_error_line(err, "config")

    def test_bad_simplex(self, run):
        code, _, err = run("eval-divergence", "--p=-0.5,1.5", "--q", "0.5,0.5")
        assert code == 1
        one_error_line(err, "input")


class TestUsage:
    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        [],
        ["eval-divergence", "--p", "0.5,0.5"],
        ["eval-divergence", "--p", "0.5,0.5", "--q", "0.5,0.5", "--bogus"],
        ["eval-divergence", "--p", "a,b", "--q", "0.5,0.5"],
        ["eval-divergence", "--p", "0.5,0.5", "--q", "0.5,0.5", "--fam", "jsd"],
        ["distill", "--use-ce", "maybe"],
    ])
    def test_exit_2(self, run, argv):
        code, out, err = run(*argv)
        assert code == 2 and out == ""
        one_error_line(err, "usage")

    def test_console_script(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "abkd.cli", "nope"], capture_output=True, text=True, cwd=tmp_path)
        assert res.returncode == 2
        assert res.stderr.startswith("error:usage: ")


class TestConfigFile:
    def test_values_applied_and_flags_win(self, run, tmp_path):
        (tmp_path / "c.cfg").write_text("# comment\nfamily = jsd\nalpha = 0.5\n")
        _, out, _ = run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5", "--config", "c.cfg")
        assert out.strip() == "0.101749"
        _, out, _ = run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5", "--config", "c.cfg",
                        "--family", "ab", "--alpha", "1")
        assert out.strip() == "0.368064"

    def test_flag_with_equals_wins(self, run, tmp_path):
        (tmp_path / "c.cfg").write_text("alpha = 0\nbeta = 1\n")
        _, out, _ = run("eval-divergence", "--p", "0.9,0.1", "--q", "0.5,0.5", "--config", "c.cfg", "--beta=0",
                        "--alpha=1")
        assert out.strip() == "0.368064"

    @pytest.mark.parametrize("text", ["nonsense_key = 1\n", "family = nope\n", "alpha = x\n", "out = elsewhere\n"])
    def test_bad_keys_exit_2(self, run, tmp_path, text):
        (tmp_path / "c.cfg").write_text(text)
        code, _, err = run("eval-divergence", "--p", "0.5,0.5", "--q", "0.5,0.5", "--config", "c.cfg")
        assert code == 2
        one_error_line(err, "usage")

    def test_missing_equals(self, run, tmp_path):
        (tmp_path / "c.cfg").write_text("alpha 0.5\n")
        code, _, err = run("eval-divergence", "--p", "0.5,0.5", "--q", "0.5,0.5", "--config", "c.cfg")
        assert code == 1
        one_error_line(err, "config")


class TestGradCheck:
    def test_csv(self, run, tmp_path):
        code, _, _ = run("grad-check", "--families", "ab,fkld,wsd", "--alphas", "0.5", "--betas", "0,1",
                         "--classes", "2,5", "--n", "5")
        assert code == 0
        rows = read_csv(tmp_path / "runs" / "grad-check" / "gradcheck.csv")
        assert [(r["family"], r["C"]) for r in rows] == [
            ("ab", 2), ("ab", 5), ("ab", 2), ("ab", 5), ("fkld", 2), ("fkld", 5), ("wsd", 2), ("wsd", 5)]
        assert all(r["max_rel_err"] <= 1e-6 for r in rows)
        assert rows[4]["alpha"] == 1.0 and rows[4]["beta"] == 0.0
        assert rows[-1]["alpha"] != rows[-1]["alpha"]  # NaN: not an alpha-beta member

    def test_failure_exit_3(self, run, monkeypatch):
        monkeypatch.setattr(cli, "GRADCHECK_TOL", 0.0)
        code, _, err = run("grad-check", "--families", "rkld", "--classes", "5", "--n", "3")
        assert code == 3
        one_error_line(err, "numeric")

    def test_bad_step(self, run):
        code, _, err = run("grad-check", "--families", "fkld", "--h", "0.5", "--n", "1")
        assert code == 1
        one_error_line(err, "parameter")


class TestVerifyTheory:
    def test_clean(self, run, tmp_path):
        code, out, _ = run("verify-theory", "--case", "t3-case1,t32-case2", "--n", "500", "--seed", "7")
        assert code == 0 and "ok" in out
        rows = read_csv(tmp_path / "runs" / "verify-theory" / "theory.csv")
        assert [(r["case"], r["n"], r["violations"], r["witness_json"]) for r in rows] == [
            ("t3-case1", 500, 0, None), ("t32-case2", 500, 0, None)]

    def test_violation_exit_4(self, run, tmp_path):
        code, _, err = run("verify-theory", "--case", "t32-case1", "--n", "500", "--seed", "7")
        assert code == 4
        one_error_line(err, "theorem-violation")
        out = tmp_path / "runs" / "verify-theory"
        (row,) = read_csv(out / "theory.csv")
        witness = json.loads((out / "witnesses" / "t32-case1.json").read_text())
        assert row["violations"] > 0 and row["witness_json"] == witness
        assert witness["lhs"] < witness["rhs"]

    def test_unknown_case(self, run):
        code, _, err = run("verify-theory", "--case", "t7-case9", "--n", "10")
        assert code == 1
        one_error_line(err, "config")

    def test_infeasible_config(self, run):
        code, _, err = run("verify-theory", "--case", "t32-case3", "--classes", "2", "--n", "10")
        assert code == 1
        one_error_line(err, "config")


class TestOutputDirs:
    def test_suffixes(self, run, tmp_path):
        for _ in range(3):
            assert run("verify-theory", "--case", "t3-case3", "--n", "50", "--out", "res")[0] == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["res", "res-1", "res-2"]

    def test_unique_dir_nested(self, tmp_path):
        a = cli.unique_dir(tmp_path / "x" / "y")
        b = cli.unique_dir(tmp_path / "x" / "y")
        assert a.name == "y" and b.name == "y-1" and b.is_dir()


class TestTraining:
    def test_distill(self, run, tmp_path):
        code, out, _ = run("distill", "--alpha", "0.5", "--beta", "0.5", *SMALL)
        assert code == 0
        d = tmp_path / "runs" / "distill"
        rows = read_csv(d / "run.csv")
        assert [r["epoch"] for r in rows] == [1, 2]
        summary = json.loads((d / "summary.json").read_text())
        assert summary["config"]["alpha"] == 0.5 and summary["error"] is None
        assert 0.0 <= summary["teacher_acc"] <= 1.0
        student = nn.load(d / "student.json")
        assert student.spec.layer_sizes == (20, 8, 10)
        assert nn.load(d / "teacher.json").spec.layer_sizes == (20, 16, 10)
        assert run("report", d)[0] == 0
        assert (d / "summary.txt").exists()

    def test_size_mismatch(self, run):
        code, _, err = run("distill", *SMALL, "--classes", "5")
        assert code == 1
        one_error_line(err, "config")

    def test_sweep_and_report(self, run, tmp_path):
        code, _, _ = run("sweep", "--alphas", "0.5,1", "--betas", "0,0.5", "--seeds", "2", "--workers", "1", *SMALL)
        assert code == 0
        d = tmp_path / "runs" / "sweep"
        names = {p.name for p in d.iterdir()}
        assert {"sweep.csv", "surface.csv", "summary.json", "summary.txt", "heatmap_acc.svg",
                "sensitivity_alpha.svg", "sensitivity_beta.svg"} <= names
        assert len(read_csv(d / "sweep.csv")) == 8
        assert len(read_csv(d / "surface.csv")) == 4
        code, out, _ = run("report", d, "--out", "again")
        assert code == 0 and out.startswith("sweep report")
        assert (tmp_path / "again" / "heatmap_acc.svg").read_bytes() == (d / "heatmap_acc.svg").read_bytes()

    def test_sweep_threads_env(self, run, tmp_path, monkeypatch):
        argv = ["sweep", "--alphas", "0.5,1", "--betas", "0.5", "--seeds", "2", "--no-plots", *SMALL]
        monkeypatch.setenv("ABKD_THREADS", "1")
        run(*argv, "--out", "one")
        monkeypatch.setenv("ABKD_THREADS", "3")
        run(*argv, "--out", "three")
        assert (tmp_path / "one" / "sweep.csv").read_bytes() == (tmp_path / "three" / "sweep.csv").read_bytes()
        assert not list((tmp_path / "one").glob("*.svg"))

    def test_sweep_all_failed_exit_3(self, run, tmp_path):
        code, _, err = run("sweep", "--alphas", "1", "--betas", "0", "--seeds", "1", "--lam", "1e6", "--epochs", "3",
                           "--batch-size", "32", "--n-train", "400", "--n-test", "200", "--spread", "0.3")
        assert code == 3
        one_error_line(err, "numeric")
        summary = json.loads((tmp_path / "runs" / "sweep" / "summary.json").read_text())
        assert len(summary["failures"]) == 1

    def test_report_empty_dir(self, run, tmp_path):
        (tmp_path / "empty").mkdir()
        code, _, err = run("report", "empty")
        assert code == 1
        one_error_line(err, "data")
