import os

import numpy as np
import pytest

from monisum.cli import build_config, dispatch, read_config_file


@pytest.fixture()
def trace_path(tmp_path):
    path = str(tmp_path / "trace.csv")
    rc = dispatch(
        [
            "gen", "--nodes", "8", "--steps", "120", "--resources", "2",
            "--groups", "3", "--noise", "0.02", "--seed", "1", "-o", path,
        ]
    )
    assert rc == 0
    return path


class TestGen:
    def test_happy_path(self, tmp_path):
        out = str(tmp_path / "t.csv")
        rc = dispatch(
            ["gen", "--nodes", "5", "--steps", "50", "--groups", "2", "--seed", "3",
             "-o", out]
        )
        assert rc == 0
        assert os.path.exists(out)
        with open(out) as f:
            assert f.readline().strip() == "t,node,cpu"

    def test_invalid_groups(self, tmp_path, capsys):
        rc = dispatch(
            ["gen", "--nodes", "2", "--steps", "10", "--groups", "5", "-o",
             str(tmp_path / "x.csv")]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestRun:
    def test_populates_output_dir(self, trace_path, tmp_path):
        out = str(tmp_path / "out")
        rc = dispatch(
            ["run", "--trace", trace_path, "--winit", "10", "--horizons", "1,3",
             "-o", out]
        )
        assert rc == 0
        names = set(os.listdir(out))
        assert {"manifest", "metrics.csv", "aggregate.csv", "frequencies.csv"} <= names
        figures = set(os.listdir(os.path.join(out, "figures")))
        assert {"frequencies.png", "rmse_timeseries.png", "rmse_by_horizon.png"} <= figures

    def test_no_figures_flag(self, trace_path, tmp_path):
        out = str(tmp_path / "out")
        rc = dispatch(
            ["run", "--trace", trace_path, "--winit", "10", "--horizons", "1",
             "--no-figures", "-o", out]
        )
        assert rc == 0
        assert not os.path.exists(os.path.join(out, "figures"))

    def test_missing_trace_names_file(self, tmp_path, capsys):
        missing = str(tmp_path / "missing.csv")
        rc = dispatch(["run", "--trace", missing, "-o", str(tmp_path / "o")])
        assert rc == 1
        err = capsys.readouterr().err
        assert "missing.csv" in err and err.count("\n") == 1

    def test_dumps(self, trace_path, tmp_path):
        out = str(tmp_path / "out")
        rc = dispatch(
            ["run", "--trace", trace_path, "--winit", "10", "--horizons", "1",
             "--dump-assignments", "--dump-forecasts", "--no-figures", "-o", out]
        )
        assert rc == 0
        with open(os.path.join(out, "assignments.csv")) as f:
            assert f.readline().strip() == "t,node,resource,label"
        with open(os.path.join(out, "forecasts.csv")) as f:
            assert f.readline().strip() == "t,h,node,resource,forecast,true"

    def test_determinism_byte_identical(self, trace_path, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            rc = dispatch(
                ["run", "--trace", trace_path, "--winit", "10", "--horizons", "1,5",
                 "--seed", "7", "--no-figures", "-o", out]
            )
            assert rc == 0
            outs.append(out)
        for fname in ("metrics.csv", "aggregate.csv", "frequencies.csv", "manifest"):
            with open(os.path.join(outs[0], fname), "rb") as fa:
                with open(os.path.join(outs[1], fname), "rb") as fb:
                    assert fa.read() == fb.read(), fname

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            dispatch(["run", "--nonsense"])
        assert exc.value.code == 2


class TestConfigFile:
    def test_flags_override_config(self, trace_path, tmp_path):
        cfg_path = tmp_path / "c.cfg"
        cfg_path.write_text(
            "budget = 0.5\nk = 2\nw_init = 10\nhorizons = 1\nseed = 3\n",
            encoding="utf-8",
        )
        out = str(tmp_path / "out")
        rc = dispatch(
            ["run", "--trace", trace_path, "--config", str(cfg_path),
             "--budget", "0.2", "--no-figures", "-o", out]
        )
        assert rc == 0
        manifest = dict(
            line.split(" = ", 1)
            for line in open(os.path.join(out, "manifest")).read().splitlines()
        )
        assert manifest["budget"] == "0.2"  # flag wins
        assert manifest["k"] == "2"  # config file survives

    def test_unknown_key_rejected(self, tmp_path):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("nonsense = 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="unknown config key"):
            read_config_file(str(cfg_path))

    def test_comments_and_blanks_ignored(self, tmp_path):
        cfg_path = tmp_path / "c.cfg"
        cfg_path.write_text(
            "# comment\n\nbudget = 0.4  # trailing\nhorizons = 1,5\n",
            encoding="utf-8",
        )
        cfg = read_config_file(str(cfg_path))
        assert cfg == {"budget": 0.4, "horizons": (1, 5)}


class TestSweepCommand:
    def test_budget_sweep(self, trace_path, tmp_path):
        out = str(tmp_path / "sw")
        rc = dispatch(
            ["sweep", "--trace", trace_path, "--axis", "B", "--values", "0.2,0.8",
             "--winit", "10", "--horizons", "1", "--no-figures", "-o", out]
        )
        assert rc == 0
        lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
        assert lines[0] == "axis,value,resource,metric,result"
        assert any(",0.2," in line for line in lines[1:])
        assert any(",0.8," in line for line in lines[1:])

    def test_sweep_figure_rendered(self, trace_path, tmp_path):
        out = str(tmp_path / "sw")
        rc = dispatch(
            ["sweep", "--trace", trace_path, "--axis", "K", "--values", "2,3",
             "--winit", "10", "--horizons", "1", "-o", out]
        )
        assert rc == 0
        assert os.path.exists(os.path.join(out, "figures", "sweep.png"))


class TestMonitorCommand:
    def test_monitor_outputs(self, trace_path, tmp_path):
        out = str(tmp_path / "mon")
        rc = dispatch(
            ["monitor", "--trace", trace_path, "--k", "3", "--train-len", "50",
             "--test-len", "50", "-o", out]
        )
        assert rc == 0
        lines = open(os.path.join(out, "monitor.csv")).read().splitlines()
        assert lines[0] == "resource,test_rmse"
        assert len(lines) == 3
        assert os.path.exists(os.path.join(out, "figures", "monitor.png"))


class TestCorrCommand:
    def test_corr_outputs(self, trace_path, tmp_path):
        out = str(tmp_path / "corr")
        rc = dispatch(["corr", "--trace", trace_path, "-o", out])
        assert rc == 0
        lines = open(os.path.join(out, "corr_cdf.csv")).read().splitlines()
        assert lines[0] == "value,cdf"
        assert len(lines) == 1 + 8 * 7 // 2
        vals = np.array([float(l.split(",")[0]) for l in lines[1:]])
        assert np.all(np.diff(vals) >= 0)
        assert os.path.exists(os.path.join(out, "figures", "corr_cdf.png"))

    def test_unknown_resource(self, trace_path, tmp_path, capsys):
        rc = dispatch(
            ["corr", "--trace", trace_path, "--resource", "gpu", "-o",
             str(tmp_path / "c")]
        )
        assert rc == 1
        assert "gpu" in capsys.readouterr().err


class TestBuildConfig:
    def test_merged_defaults(self):
        import argparse

        ns = argparse.Namespace(config=None, budget=0.4, k=None)
        cfg = build_config(ns)
        assert cfg.budget == 0.4
        assert cfg.k == 3
