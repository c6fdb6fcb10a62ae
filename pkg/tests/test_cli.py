import json
import subprocess
import sys

import numpy as np
import pytest

from hdee import datagen
from hdee.cli import EXIT_INPUT, EXIT_NUMERICAL, build_parser, dataset_from_table, main, read_csv
from hdee.models import Kind

LINEAR_CONFIG = {"model": "linear", "n": 40, "d": 8, "rho": 0.25, "reps": 4, "seed": 3,
                 "lambda": {"type": "formula", "c": 1.0}}


def write(path, text):
    path.write_text(text)
    return str(path)


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "hdee.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("simulate", "analyze", "gen", "solve"):
        assert name in proc.stdout
    for name in ("simulate", "analyze", "gen", "solve"):
        with pytest.raises(SystemExit) as exc:
            main([name, "--help"])
        assert exc.value.code == 0


def test_every_flag_documented():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        for action in sp._actions:
            assert action.help, f"{name} {action.dest} lacks help text"


class TestSimulate:
    def test_writes_tables(self, tmp_path, capsys):
        cfg = write(tmp_path / "lin.json", json.dumps(LINEAR_CONFIG))
        out = tmp_path / "out"
        assert main(["simulate", cfg, "--out", str(out)]) == 0
        for name in ("results.csv", "results.md", "replicates.csv"):
            assert (out / name).exists()
        assert "| lin |" in capsys.readouterr().out

    def test_byte_identical(self, tmp_path):
        cfg = write(tmp_path / "lin.json", json.dumps(LINEAR_CONFIG))
        for tag in ("a", "b"):
            assert main(["simulate", cfg, "--out", str(tmp_path / tag), "--seed", "9"]) == 0
        for name in ("results.csv", "results.md", "replicates.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_malformed_json(self, tmp_path, capsys):
        cfg = write(tmp_path / "bad.json", '{"model": "linear", "d": }')
        assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_INPUT
        assert "line 1" in capsys.readouterr().err

    def test_bad_key_named(self, tmp_path, capsys):
        cfg = write(tmp_path / "bad.json", json.dumps({**LINEAR_CONFIG, "lamda": 1}))
        assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_INPUT
        assert "lamda" in capsys.readouterr().err

    def test_zero_reps(self, tmp_path):
        cfg = write(tmp_path / "z.json", json.dumps({**LINEAR_CONFIG, "reps": 0}))
        assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_INPUT
        assert not (tmp_path / "o").exists()


class TestAnalyze:
    def test_missing_cell(self, tmp_path):
        data = write(tmp_path / "d.csv", "x1,x2,y\n1,2,3\n4,5\n")
        assert main(["analyze", data, "--model", "linear", "--target", "1"]) == EXIT_INPUT

    def test_non_numeric(self, tmp_path):
        data = write(tmp_path / "d.csv", "x1,x2,y\n1,2,3\n4,five,6\n")
        assert main(["analyze", data, "--model", "linear", "--target", "1"]) == EXIT_INPUT

    def test_bad_alpha(self, tmp_path):
        data = write(tmp_path / "d.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8,10\n")
        assert main(["analyze", data, "--model", "linear", "--target", "1", "--alpha", "1.5"]) == EXIT_INPUT

    def test_target_range(self, tmp_path):
        data = write(tmp_path / "d.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8,10\n")
        assert main(["analyze", data, "--model", "linear", "--target", "3"]) == EXIT_INPUT

    def test_degenerate_projection(self, tmp_path):
        # an all-zero design makes the projection the zero vector
        data = write(tmp_path / "d.csv", "x1,x2,y\n0,0,1\n0,0,2\n0,0,3\n")
        code = main(["analyze", data, "--model", "linear", "--target", "1", "--lambda", "1", "--lambda-prime", "1"])
        assert code == EXIT_NUMERICAL

    @pytest.mark.parametrize("kind", ["linear", "ivr", "clime", "skeptic", "lda", "var1"])
    def test_gen_round_trip(self, kind, tmp_path, capsys):
        out = tmp_path / kind
        size = ["--n", "120"]
        assert main(["gen", "--model", kind, "--d", "5", "--rho", "0.3", "--seed", "4", "--out", str(out)] + size) == 0
        args = ["analyze", str(out / "data.csv"), "--model", kind, "--target", "1", "--out", str(out)]
        if kind in ("clime", "skeptic", "var1"):
            args += ["--column", "2"]
        assert main(args) == 0
        text = capsys.readouterr().out
        assert "CI = [" in text
        header, body = read_csv(out / "analysis.csv")
        width = 6 if kind in ("clime", "skeptic", "var1") else 5
        assert header[0] == "target" and body.shape == (1, width)

    def test_all_pairs(self, tmp_path, capsys):
        out = tmp_path / "g"
        assert main(["gen", "--model", "clime", "--d", "4", "--n", "100", "--rho", "0.3", "--out", str(out)]) == 0
        assert main(["analyze", str(out / "data.csv"), "--model", "clime", "--all-pairs"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 1 + 6  # gen message, header, 6 edges

    def test_clime_coverage_smoke(self, tmp_path, capsys):
        # design fixed in advance: d = 10, n = 250, rho = 0.3, edge (1, 2), default tuning
        hits = 0
        for seed in range(100):
            out = tmp_path / f"s{seed}"
            main(["gen", "--model", "clime", "--d", "10", "--n", "250", "--rho", "0.3",
                  "--seed", str(seed), "--column", "2", "--out", str(out)])
            main(["analyze", str(out / "data.csv"), "--model", "clime", "--target", "1", "--column", "2",
                  "--out", str(out)])
            truth = read_csv(out / "truth.csv")[1][0, 1]
            _, row = read_csv(out / "analysis.csv")
            hits += row[0, 4] <= truth <= row[0, 5]
        capsys.readouterr()
        assert truth == 0.3
        assert hits >= 92


class TestSolve:
    def test_example(self, tmp_path, capsys):
        A = write(tmp_path / "A.csv", "c1,c2\n1,0\n0,1\n")
        b = write(tmp_path / "b.csv", "b\n1\n0.5\n")
        assert main(["solve", A, b, "--lambda", "0.25", "--out", str(tmp_path / "o")]) == 0
        assert "objective = 1\n" in capsys.readouterr().out
        _, x = read_csv(tmp_path / "o" / "x.csv")
        np.testing.assert_allclose(x[:, 0], [0.75, 0.25])

    def test_size_mismatch(self, tmp_path):
        A = write(tmp_path / "A.csv", "c1,c2\n1,0\n0,1\n")
        b = write(tmp_path / "b.csv", "b\n1\n0.5\n2\n")
        assert main(["solve", A, b, "--lambda", "0.25"]) == EXIT_INPUT

    def test_infeasible(self, tmp_path):
        A = write(tmp_path / "A.csv", "c1,c2\n1,1\n1,1\n")
        b = write(tmp_path / "b.csv", "b\n1\n-1\n")
        assert main(["solve", A, b, "--lambda", "0.1"]) == EXIT_NUMERICAL


def test_gen_byte_identical(tmp_path):
    for tag in ("a", "b"):
        assert main(["gen", "--model", "skeptic", "--d", "4", "--n", "30", "--seed", "5", "--out", str(tmp_path / tag)]) == 0
    for name in ("data.csv", "truth.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_values_round_trip(tmp_path):
    gd = datagen.gen_linear(datagen.GeneratorSpec("linear", d=3, n=10, seed=2))
    main(["gen", "--model", "linear", "--d", "3", "--n", "10", "--seed", "2", "--out", str(tmp_path)])
    header, body = read_csv(tmp_path / "data.csv")
    data = dataset_from_table(Kind.LINEAR, header, body)
    np.testing.assert_array_equal(data.X, gd.dataset.X)
    np.testing.assert_array_equal(data.y, gd.dataset.y)
