import math
import subprocess
import sys

import numpy as np
import pytest

from meanvort.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from meanvort.diagnostics import CSV_HEADER, parse_csv
from meanvort.snapshot import read_snapshot, write_snapshot

PATCH = """\
grid.n = 64
params.alpha = 1.0
initial.preset = uniform_patch
initial.c = 4
initial.radius = 0.28
time.T = 0.4
time.snapshot_stride = 4
"""


def write_config(tmp_path, text, name="run.cfg", out="out"):
    path = tmp_path / name
    path.write_text(text + f"outputs.dir = {out}\n")
    return path


def read_csv_rows(path):
    return parse_csv(path.read_text())


class TestRun:
    def test_zero_horizon(self, tmp_path):
        cfg = write_config(tmp_path, "grid.n = 16\ntime.T = 0\n")
        assert main(["run", "--config", str(cfg)]) == EXIT_OK
        out = tmp_path / "out"
        assert len(read_csv_rows(out / "diagnostics.csv")) == 1
        assert sorted(p.name for p in out.glob("omega_*.mvf")) == ["omega_00000.mvf"]
        manifest = (out / "manifest.txt").read_text()
        assert "status = ok" in manifest and "numpy" in manifest

    def test_patch_run_populates_margins(self, tmp_path):
        cfg = write_config(tmp_path, PATCH)
        assert main(["run", "--config", str(cfg)]) == EXIT_OK
        rows = read_csv_rows(tmp_path / "out" / "diagnostics.csv")
        assert len(rows) >= 3
        later = rows[1:]
        assert all(0.9 <= r["margin_r44_sharp"] <= 1.05 for r in later)
        assert all(r["margin_r44_univ"] <= 1.05 for r in later)
        assert all(not math.isnan(r["energy_rhs_res"]) for r in rows[1:-1])
        snapshot = read_snapshot(tmp_path / "out" / "v_00001.mvf")
        assert snapshot[2].shape == (2, 64, 64)
        plot = (tmp_path / "out" / "plot_linf.dat").read_text().splitlines()
        assert plot[0] == "# t linf" and len(plot) == len(rows) + 1

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        a = write_config(tmp_path, PATCH, "a.cfg", "a")
        b = write_config(tmp_path, PATCH, "b.cfg", "b")
        assert main(["run", "--config", str(a)]) == EXIT_OK
        assert main(["run", "--config", str(b)]) == EXIT_OK
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_compressible_run_writes_zeta(self, tmp_path):
        text = (
            "grid.n = 32\nparams.regime = compressible\nparams.lambda = 0.5\n"
            "initial.zeta_amplitude = 0.2\ntime.T = 0.1\ntime.snapshot_stride = 1000\n"
        )
        assert main(["run", "--config", str(write_config(tmp_path, text))]) == EXIT_OK
        assert (tmp_path / "out" / "zeta_00000.mvf").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "params.gamma = 1\n")
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "params.gamma" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_solver_error_keeps_partial_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path, PATCH + "solver.tol = 1e-14\nsolver.max_iter = 1\n")
        assert main(["run", "--config", str(cfg)]) == EXIT_SOLVER
        assert "solver error" in capsys.readouterr().err
        out = tmp_path / "out"
        assert "status = aborted" in (out / "manifest.txt").read_text()
        # The initial reconstruction already fails, so only the header is written.
        assert read_csv_rows(out / "diagnostics.csv") == []

    def test_environment_overrides_output_dir(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, "grid.n = 16\ntime.T = 0\n")
        monkeypatch.setenv("MEANVORT_OUT", str(tmp_path / "env"))
        assert main(["run", "--config", str(cfg)]) == EXIT_OK
        assert (tmp_path / "env" / "diagnostics.csv").exists()
        assert not (tmp_path / "out").exists()

    def test_pinning_from_snapshot_file(self, tmp_path):
        from meanvort.fields import Grid2D
        from meanvort.presets import cosine_potential

        grid = Grid2D(16, 8.0)
        write_snapshot(tmp_path / "h.mvf", grid, 0.0, cosine_potential(grid, 0.3))
        text = "grid.n = 16\ntime.T = 0\npinning.preset = file\npinning.path = h.mvf\n"
        assert main(["run", "--config", str(write_config(tmp_path, text))]) == EXIT_OK
        _, _, h = read_snapshot(tmp_path / "out" / "h.mvf")
        assert np.max(np.abs(h - cosine_potential(grid, 0.3))) == 0.0

    def test_console_entry_point(self, tmp_path):
        cfg = write_config(tmp_path, "grid.n = 16\ntime.T = 0\n")
        proc = subprocess.run([sys.executable, "-m", "meanvort", "run", "--config", str(cfg)])
        assert proc.returncode == EXIT_OK


DEGENERATE = """\
grid.n = 32
params.regime = degenerate_parabolic
"""


class TestDegenerate:
    def test_regime_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, "grid.n = 16\n")
        assert main(["degenerate", "--config", str(cfg)]) == EXIT_CONFIG

    def test_curl_free_data_is_reproduced(self, tmp_path):
        text = DEGENERATE + "initial.preset = zero\nforcing.preset = cosine\nforcing.amplitude = 0.3\ndegenerate.times = 0, 0.5\n"
        assert main(["degenerate", "--config", str(write_config(tmp_path, text))]) == EXIT_OK
        _, _, v0 = read_snapshot(tmp_path / "out" / "v_00000.mvf")
        _, t, v1 = read_snapshot(tmp_path / "out" / "v_00001.mvf")
        assert t == 0.5
        assert np.max(np.abs(v1 - v0)) <= 1e-12

    def test_constant_density_closed_form(self, tmp_path):
        text = DEGENERATE + "degenerate.scenario = constant_f\ndegenerate.f0 = 2\ndegenerate.times = 0, 1, 2, 4\n"
        assert main(["degenerate", "--config", str(write_config(tmp_path, text))]) == EXIT_OK
        lines = (tmp_path / "out" / "degenerate.csv").read_text().splitlines()
        assert lines[0] == "t,kappa_min,kappa_max,kappa_mean,kappa_exact,v_rel_l2_diff"
        for line in lines[1:]:
            t, kmin, kmax, _, exact, _ = map(float, line.split(","))
            assert exact == pytest.approx(1 / (1 + 2 * t))
            assert max(abs(kmin - exact), abs(kmax - exact)) <= 1e-6

    def test_compare_with_evolution_run(self, tmp_path):
        common = (
            "grid.n = 32\nparams.regime = degenerate_parabolic\ninitial.c = 2\n"
            "forcing.preset = cosine\nforcing.amplitude = 0.3\n"
        )
        run_cfg = write_config(tmp_path, common + "time.T = 0.5\ntime.snapshot_stride = 1000\n", "r.cfg", "evo")
        assert main(["run", "--config", str(run_cfg)]) == EXIT_OK
        deg_cfg = write_config(tmp_path, common + "degenerate.times = 0.5\n", "d.cfg", "deg")
        assert main(["degenerate", "--config", str(deg_cfg), "--compare", str(tmp_path / "evo")]) == EXIT_OK
        row = (tmp_path / "deg" / "degenerate.csv").read_text().splitlines()[1].split(",")
        assert float(row[0]) == 0.5
        assert float(row[-1]) <= 0.02

    def test_compare_needs_a_run_directory(self, tmp_path):
        cfg = write_config(tmp_path, DEGENERATE)
        assert main(["degenerate", "--config", str(cfg), "--compare", str(tmp_path / "none")]) == EXIT_CONFIG


class TestCheck:
    def _patch_run(self, tmp_path):
        cfg = write_config(tmp_path, PATCH)
        assert main(["run", "--config", str(cfg)]) == EXIT_OK
        return tmp_path / "out"

    def test_fresh_run_passes(self, tmp_path, capsys):
        out = self._patch_run(tmp_path)
        assert main(["check", str(out)]) == EXIT_OK
        table = capsys.readouterr().out
        assert "mass" in table and "positivity" in table and "FAIL" not in table

    def test_tampered_snapshot_fails_positivity(self, tmp_path, capsys):
        out = self._patch_run(tmp_path)
        path = out / "omega_00001.mvf"
        grid, t, omega = read_snapshot(path)
        i, j = np.unravel_index(np.argmax(omega), omega.shape)
        omega[i, j] = -omega[i, j]
        write_snapshot(path, grid, t, omega)
        assert main(["check", str(out)]) == EXIT_CHECK
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("positivity") and "FAIL" in line for line in lines)

    def test_empty_directory_is_a_usage_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["check", str(tmp_path / "empty")]) == EXIT_CONFIG

    def test_missing_directory_is_a_usage_error(self, tmp_path):
        assert main(["check", str(tmp_path / "absent")]) == EXIT_CONFIG


class TestSweep:
    def test_sweep_creates_one_directory_per_value(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "grid.n = 16\ntime.T = 0.05\n", out="sweep")
        code = main(["sweep", "--config", str(cfg), "--vary", "params.alpha=0.5,1.0", "--jobs", "2"])
        assert code == EXIT_OK
        for name in ("params.alpha=0.5", "params.alpha=1.0"):
            text = (tmp_path / "sweep" / name / "config.txt").read_text()
            assert f"params.alpha = {name.split('=')[1]}" in text

    def test_bad_vary_value(self, tmp_path):
        cfg = write_config(tmp_path, "grid.n = 16\n")
        assert main(["sweep", "--config", str(cfg), "--vary", "grid.n=48"]) == EXIT_CONFIG
        assert main(["sweep", "--config", str(cfg), "--vary", "grid.n"]) == EXIT_CONFIG


def test_usage_errors():
    assert main([]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["--help"]) == EXIT_OK
