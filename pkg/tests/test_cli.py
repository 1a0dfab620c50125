import csv
import json
import math
import subprocess
import sys
import time

import pytest

from eotlab.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERDICT, ConfigError, main,
                        parse_config_text)

CSV_HEAD = ["eps", "ot_eps", "cost_term", "plan_entropy", "suboptimality", "c_eps", "w2_to_opt",
            "envelope_residual"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return str(p)


class TestPresets:
    def test_table_lists_six_presets_with_tags(self, capsys):
        assert main(["presets"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()[1:]
        assert len(lines) == 6
        tags = {ln.split()[0]: ln.split()[1] for ln in lines}
        assert tags["gaussian1d"] == tags["gaussian2d"] == tags["gaussian_lipschitz"] == "H1/H2"
        assert tags["cosh_compact"] == "H3"

    def test_json(self, capsys):
        assert main(["presets", "--json"]) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 6 and all(r["hypothesis"] for r in rows)

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "eotlab", "presets", "--json"],
                             capture_output=True, text=True, check=True)
        assert len(json.loads(out.stdout)) == 6


class TestRun:
    def test_two_point_is_fast(self, tmp_path):
        t0 = time.perf_counter()
        assert main(["run", "--preset", "discrete2x2", "--out", str(tmp_path)]) == EXIT_OK
        assert time.perf_counter() - t0 < 1.0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["run_meta.json", "sweep.csv",
                                                             "verdicts.json"]

    def test_gaussian1d(self, tmp_path):
        assert main(["run", "--preset", "gaussian1d", "--out", str(tmp_path)]) == EXIT_OK
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 5
        assert list(rows[0])[:8] == CSV_HEAD
        meta = json.loads((tmp_path / "run_meta.json").read_text())
        assert meta["tolerance_table_version"] == "1.0"
        assert json.loads((tmp_path / "verdicts.json").read_text())["all_pass"]

    def test_increasing_eps_is_config_error(self, tmp_path, capsys):
        code = main(["run", "--preset", "gaussian1d", "--eps", "0.1", "0.2", "0.4",
                     "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "decreasing" in capsys.readouterr().err
        assert not any(tmp_path.iterdir())

    @pytest.mark.parametrize("res", ["100", "32", "8192"])
    def test_resolution_must_be_power_of_two_in_range(self, tmp_path, res):
        assert main(["run", "--preset", "gaussian1d", "--resolution", res,
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_gaussian2d_needs_square_resolution(self, tmp_path):
        assert main(["run", "--preset", "gaussian2d", "--resolution", "128",
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_preset(self, tmp_path):
        assert main(["run", "--preset", "gauss", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_usage_error_exit_code(self):
        assert main(["run"]) == EXIT_CONFIG

    def test_full_precision_csv(self, tmp_path, discrete_run):
        main(["run", "--preset", "discrete2x2", "--out", str(tmp_path)])
        for row, rec in zip(read_csv(tmp_path / "sweep.csv"), discrete_run.sweep.records):
            for key in CSV_HEAD:
                value = getattr(rec, key)
                assert float(row[key]) == value or (math.isnan(value) and row[key] == "nan")

    def test_deterministic_outputs(self, tmp_path):
        args = ["run", "--preset", "custom", "--resolution", "64", "--eps", "0.4", "0.2", "0.1"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == main(args + ["--out", str(b)])
        for name in ("sweep.csv", "verdicts.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_solver_failure_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, "preset = gaussian1d\nresolution = 64\n"
                                     "eps_list = 0.4, 0.2, 0.001\nmax_iter = 200\n")
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
        rows = read_csv(tmp_path / "o" / "sweep.csv")
        assert rows[-1]["error"].startswith("SinkhornConvergenceError")

    def test_verdict_failure_exit_code(self, tmp_path):
        code = main(["run", "--preset", "discrete2x2", "--allow-tolerance-override",
                     "--tolerance", "closed_form=0", "--out", str(tmp_path)])
        assert code == EXIT_VERDICT
        meta = json.loads((tmp_path / "run_meta.json").read_text())
        assert meta["tolerance_overrides"] == {"closed_form": 0.0}

    def test_tolerance_override_needs_flag(self, tmp_path):
        assert main(["run", "--preset", "discrete2x2", "--tolerance", "closed_form=0",
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_thread_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EOTLAB_THREADS", "1")
        assert main(["run", "--preset", "discrete2x2", "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads((tmp_path / "run_meta.json").read_text())["threads"] == "1"
        monkeypatch.setenv("EOTLAB_THREADS", "many")
        assert main(["run", "--preset", "discrete2x2", "--out", str(tmp_path)]) == EXIT_CONFIG


class TestConfigFile:
    def test_config_run(self, tmp_path):
        cfg = write_config(tmp_path, "# two atoms\npreset = discrete2x2\n"
                                     f"output_dir = {tmp_path / 'out'}\neps_list = 0.9 0.6 0.3\n")
        assert main(["run", "--config", cfg]) == EXIT_OK
        assert [float(r["eps"]) for r in read_csv(tmp_path / "out" / "sweep.csv")] == [0.9, 0.6, 0.3]

    def test_command_line_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, "preset = discrete2x2\nseed = 4\n")
        assert main(["run", "--config", cfg, "--seed", "9", "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads((tmp_path / "run_meta.json").read_text())["seed"] == 9

    def test_unknown_key_fails_closed(self, tmp_path):
        cfg = write_config(tmp_path, "preset = discrete2x2\ntolerence.closed_form = 1\n")
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG

    @pytest.mark.parametrize("text", ["preset discrete2x2", "preset = a\npreset = b",
                                      "seed = x", "compute_w2 = maybe"])
    def test_malformed_lines(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_tolerance_keys(self):
        with pytest.raises(ConfigError):
            parse_config_text("tolerance.closed_form = 1e-3")
        out = parse_config_text("tolerance.closed_form = 1e-3", allow_tolerance_override=True)
        assert out["tolerance_overrides"] == {"closed_form": 1e-3}

    def test_unknown_tolerance_name(self, tmp_path):
        cfg = write_config(tmp_path, "preset = discrete2x2\ntolerance.closedform = 1\n")
        assert main(["run", "--config", cfg, "--allow-tolerance-override",
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_custom_keys_only_for_custom_preset(self, tmp_path):
        cfg = write_config(tmp_path, "preset = gaussian1d\nvar1 = 2\n")
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG
