import csv
import io
import json
import re

import numpy as np
import pytest

from edgeci.cli import main
from edgeci.g0i import G0IParams, sample
from edgeci.imaging import Raster, save_csv_matrix, save_pgm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def data_lines(text):
    return [l for l in text.splitlines() if not l.startswith("#")]


class TestSample:
    def test_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for f in (a, b):
            assert run(capsys, "sample", "--alpha", -5, "--unit-mean", "--looks", 1,
                       "-n", 1000, "--seed", 7, "-o", f)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert len(lines) == 1000 + 1 and "seed=7" in lines[0]

    def test_bad_alpha(self, capsys):
        code, _, err = run(capsys, "sample", "--alpha", -0.5, "--unit-mean", "-n", 5)
        assert code == 2 and "alpha < -1" in err

    def test_gamma_xor_unit_mean(self, capsys):
        assert run(capsys, "sample", "--alpha", -3, "-n", 5)[0] == 2
        assert run(capsys, "sample", "--alpha", -3, "--gamma", 2, "--unit-mean", "-n", 5)[0] == 2

    def test_entropy_seed_echoed(self, capsys):
        code, out, _ = run(capsys, "sample", "--alpha", -3, "--gamma", 2, "-n", 3)
        seed = int(re.search(r"seed=(\d+)", out).group(1))
        code2, out2, _ = run(capsys, "sample", "--alpha", -3, "--gamma", 2, "-n", 3, "--seed", seed)
        assert out == out2

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sample", "--alpha", "x", "-n", "3"])
        assert exc.value.code == 2


def two_region_file(path, seed, capsys, left=-2, right=-10):
    parts = []
    for alpha, s in ((left, 2 * seed), (right, 2 * seed + 1)):
        _, out, _ = run(capsys, "sample", "--alpha", alpha, "--unit-mean", "-n", 50, "--seed", s)
        parts += data_lines(out)
    path.write_text("\n".join(parts) + "\n")


class TestFitDetectCi:
    def test_fit(self, tmp_path, capsys):
        f = tmp_path / "z.txt"
        run(capsys, "sample", "--alpha", -5, "--unit-mean", "-n", 20000, "--seed", 1, "-o", f)
        code, out, _ = run(capsys, "fit", "--input", f)
        doc = json.loads(out)
        assert code == 0 and doc["converged"] and abs(doc["alpha_hat"] + 5) < 1

    def test_detect(self, tmp_path, capsys):
        f = tmp_path / "s.txt"
        two_region_file(f, 0, capsys)
        code, out, _ = run(capsys, "detect", "--input", f)
        doc = json.loads(out)
        assert code == 0 and 1 <= doc["j_hat"] <= 99 and doc["n"] == 100

    def test_all_methods(self, tmp_path, capsys):
        f = tmp_path / "s.txt"
        two_region_file(f, 1, capsys)
        code, out, _ = run(capsys, "ci", "--input", f, "--methods", "perc,bbm,st1,st2,full-t",
                           "--B", 99, "--B-prime", 10, "--B-x", 20, "--seed", 4)
        doc = json.loads(out)
        assert code == 0
        assert set(doc["intervals"]) == {"perc", "bbm", "st1", "st2", "full-t"}
        assert doc["meta"]["seed"] == 4 and doc["meta"]["bootstrap"]["B"] == 99
        for v in doc["intervals"].values():
            assert v["ok"] and v["lower"] <= v["upper"] and "runtime" in v

    def test_deterministic_apart_from_timing(self, tmp_path, capsys):
        f = tmp_path / "s.txt"
        two_region_file(f, 2, capsys)
        docs = []
        for _ in range(2):
            out = run(capsys, "ci", "--input", f, "--methods", "perc,st2", "--B", 99,
                      "--B-prime", 10, "--B-x", 20, "--seed", 5)[1]
            d = json.loads(out)
            for v in d["intervals"].values():
                v.pop("runtime")
            docs.append(d)
        assert docs[0] == docs[1]

    @pytest.mark.parametrize("flags", [["--level", "1.5"], ["--methods", "bca"], ["--B", "0"]])
    def test_usage_errors(self, tmp_path, capsys, flags):
        f = tmp_path / "s.txt"
        two_region_file(f, 3, capsys)
        assert run(capsys, "ci", "--input", f, *flags)[0] == 2

    def test_missing_input(self, capsys):
        assert run(capsys, "ci", "--input", "/nonexistent/strip.txt")[0] in (1, 2)

    def test_window_file(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        a = sample(G0IParams.unit_mean(-2), 50 * 20, rng).reshape(50, 20)
        b = sample(G0IParams.unit_mean(-10), 50 * 20, rng).reshape(50, 20)
        f = tmp_path / "w.csv"
        np.savetxt(f, np.vstack([a, b]), delimiter=",")
        doc = json.loads(run(capsys, "ci", "--input", f, "--B", 99, "--seed", 1)[1])
        assert doc["intervals"]["perc"]["lower"] <= 50 <= doc["intervals"]["perc"]["upper"]

    def test_image_window(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        img = np.vstack([sample(G0IParams.unit_mean(-2), 50 * 21, rng).reshape(50, 21),
                         sample(G0IParams.unit_mean(-10), 50 * 21, rng).reshape(50, 21)])
        save_csv_matrix(Raster(img), tmp_path / "i.csv")
        doc = json.loads(run(capsys, "detect", "--image", tmp_path / "i.csv",
                             "--rect", "0,0,21,100")[1])
        assert doc["edge_pixel"] == [doc["j_hat"] - 1, 10]

    @pytest.mark.slow
    def test_piped_sample_coverage(self, tmp_path, capsys):
        hits = 0
        f = tmp_path / "s.txt"
        for seed in range(100):
            two_region_file(f, 100 + seed, capsys)
            doc = json.loads(run(capsys, "ci", "--input", f, "--B", 199, "--seed", seed)[1])
            ci = doc["intervals"]["perc"]
            hits += ci["lower"] <= 50 <= ci["upper"]
        assert hits >= 90


class TestSimulate:
    BASE = ["simulate", "--R", 3, "--B", 29, "--B-prime", 5, "--B-x", 10, "--workers", 1]

    def test_csv_and_json(self, tmp_path, capsys):
        c, j = tmp_path / "r.csv", tmp_path / "r.json"
        code, _, _ = run(capsys, *self.BASE, "--methods", "perc,bbm", "--seed", 1,
                         "--csv", c, "--json", j)
        assert code == 0
        rows = list(csv.DictReader(c.open()))
        assert [r["method"] for r in rows] == ["perc", "bbm"]
        doc = json.loads(j.read_text())
        assert doc["meta"]["seed"] == 1
        assert doc["reports"][0]["config"]["bootstrap"]["B"] == 29

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        texts = []
        for k in range(2):
            out = tmp_path / f"{k}.csv"
            run(capsys, *self.BASE, "--methods", "perc,st1", "--seed", 11, "--csv", out)
            rows = list(csv.DictReader(out.open()))
            for r in rows:
                r.pop("mean_runtime")
            texts.append(rows)
        assert texts[0] == texts[1]

    def test_grid_no_edge_schema(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        code, _, _ = run(capsys, *self.BASE, "--methods", "perc", "--seed", 2, "--grid",
                         "--grid-alpha-left=-5", "--grid-alpha-right=-5", "--csv", out)
        header = out.read_text().splitlines()[0]
        assert code == 0 and "coverage" not in header and "mean_length" in header

    def test_grid_rows(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        run(capsys, *self.BASE, "--methods", "perc,bbm", "--seed", 2, "--grid",
            "--grid-alpha-left=-2", "--grid-alpha-right=-4,-6", "--csv", out)
        rows = list(csv.DictReader(out.open()))
        assert [(r["alpha_right"], r["method"]) for r in rows] == [
            ("-4.0", "perc"), ("-4.0", "bbm"), ("-6.0", "perc"), ("-6.0", "bbm")]

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[experiment]\nR = 2\nmethods = perc\nmaster_seed = 42\n"
                       "[image]\nalpha_left = -3\nalpha_right = -9\n"
                       "[bootstrap]\nB = 19\n")
        j = tmp_path / "r.json"
        assert run(capsys, "simulate", "--config", cfg, "--workers", 1, "--json", j)[0] == 0
        doc = json.loads(j.read_text())
        rep = doc["reports"][0]
        assert doc["meta"]["seed"] == 42 and rep["config"]["R"] == 2
        assert rep["config"]["spec"]["alpha_left"] == -3

    @pytest.mark.parametrize("text", ["[image]\nalpha_left = abc\n", "[experiment\nR=2\n",
                                      "[bootstrap]\nlevel = 2\n"])
    def test_bad_config(self, tmp_path, capsys, text):
        cfg = tmp_path / "bad.ini"
        cfg.write_text(text)
        assert run(capsys, "simulate", "--config", cfg)[0] == 2

    def test_missing_config(self, capsys):
        assert run(capsys, "simulate", "--config", "/nonexistent.ini")[0] == 2

    @pytest.mark.slow
    @pytest.mark.xfail(strict=True, reason="unit-mean textures keep coverage near the nominal "
                       "0.95 rather than 1.0 (minimum 0.92 on this grid)")
    def test_easy_grid_coverage(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        run(capsys, "simulate", "--R", 200, "--B", 199, "--seed", 6, "--workers", 1,
            "--methods", "perc,bbm,st1,st2", "--grid", "--grid-alpha-left=-2",
            "--grid-alpha-right=-4,-5,-6,-7,-8", "--csv", out)
        cov = [float(r["coverage"]) for r in csv.DictReader(out.open())]
        assert len(cov) == 20 and min(cov) >= 0.98


def write_boundary(path, seed, width=210):
    rng = np.random.default_rng(seed)
    top = sample(G0IParams.unit_mean(-2), 50 * width, rng).reshape(50, width)
    bot = sample(G0IParams.unit_mean(-10), 50 * width, rng).reshape(50, width)
    save_csv_matrix(Raster(np.vstack([top, bot])), path)


class TestAnalyze:
    def test_ten_windows(self, tmp_path, capsys):
        img, rect = tmp_path / "i.csv", tmp_path / "r.txt"
        write_boundary(img, 0)
        rect.write_text("# x y w h orientation n aggregation\n0 0 210 100 vertical 10 window\n")
        svg, out = tmp_path / "o.svg", tmp_path / "o.csv"
        code, _, _ = run(capsys, "analyze", img, rect, "--B", 99, "--seed", 1,
                         "--methods", "perc,bbm", "--svg", svg, "--csv", out)
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 10
        text = svg.read_text()
        assert "seed=1" in text
        for cls in ("estimate", "lower", "upper"):
            pts = re.search(rf'class="{cls}" points="([^"]*)"', text).group(1).split()
            assert len(pts) == 10

    def test_pgm_input(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        a = np.round(np.vstack([sample(G0IParams.unit_mean(-2), 50 * 21, rng).reshape(50, 21),
                                sample(G0IParams.unit_mean(-10), 50 * 21, rng).reshape(50, 21)])
                     * 100)
        save_pgm(np.minimum(a, 65535), tmp_path / "i.pgm", maxval=65535)
        (tmp_path / "r.txt").write_text("0 0 21 100 vertical 1 window\n")
        code, _, _ = run(capsys, "analyze", tmp_path / "i.pgm", tmp_path / "r.txt", "--B", 99,
                         "--seed", 1, "--svg", tmp_path / "o.svg", "--csv", tmp_path / "o.csv")
        assert code == 0

    def test_homogeneous_all_flagged(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        img = tmp_path / "h.csv"
        save_csv_matrix(Raster(sample(G0IParams.unit_mean(-5), 100 * 210, rng).reshape(100, 210)), img)
        (tmp_path / "r.txt").write_text("0 0 210 100 vertical 10 window\n")
        run(capsys, "analyze", img, tmp_path / "r.txt", "--B", 99, "--seed", 3,
            "--svg", tmp_path / "o.svg", "--csv", tmp_path / "o.csv")
        rows = list(csv.DictReader((tmp_path / "o.csv").open()))
        assert all("no_edge_suspected:perc" in r["flags"] for r in rows)

    def test_missing_file_no_outputs(self, tmp_path, capsys):
        (tmp_path / "r.txt").write_text("0 0 21 100 vertical 1 window\n")
        svg, out = tmp_path / "o.svg", tmp_path / "o.csv"
        code, _, err = run(capsys, "analyze", tmp_path / "none.pgm", tmp_path / "r.txt",
                           "--svg", svg, "--csv", out)
        assert code == 2 and not svg.exists() and not out.exists()

    @pytest.mark.parametrize("rect", ["0 0 210 100 vertical 4 window\n", "0 0 300 100 vertical 10 window\n",
                                      "0 0 210 100 sideways 10 window\n", "# nothing\n"])
    def test_bad_rectangles(self, tmp_path, capsys, rect):
        img = tmp_path / "i.csv"
        write_boundary(img, 4)
        (tmp_path / "r.txt").write_text(rect)
        svg = tmp_path / "o.svg"
        code, _, _ = run(capsys, "analyze", img, tmp_path / "r.txt", "--svg", svg,
                         "--csv", tmp_path / "o.csv")
        assert code == 2 and not svg.exists()


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--B", 30, "--B-prime", 5, "--B-x", 10,
                       "--repeats", 1, "--seed", 1)
    doc = json.loads(out)
    assert code == 0 and set(doc["methods"]) == {"perc", "bbm", "st1", "st2", "full-t"}


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "edgeci", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "edgeci" in res.stdout
