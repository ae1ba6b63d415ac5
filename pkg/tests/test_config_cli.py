import json
from fractions import Fraction

import numpy as np
import pytest

from hetflow import artifacts, cli, config
from hetflow.errors import ConfigError

CIRCLE = """\
# shrinking circle
experiment = curve
forcing.kind = constant
forcing.value = 0
initial.kind = circle
initial.n = 64
solver.t_max = 0.05
solver.sample_interval = 0.01
"""

GRAPH = """\
experiment = graph
forcing.kind = sin-x
forcing.offset = 1
initial.kind = random-fourier
initial.n = 64
solver.t_max = 0.02
solver.sample_interval = 0.005
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- parsing -----------------------------------------------------------------------


def test_defaults_and_values():
    cfg = config.load_text(CIRCLE)
    assert cfg.experiment == "curve"
    assert cfg["solver.cfl"] == 0.25
    assert cfg["initial.n"] == 64
    assert cfg.echo()["forcing.value"] == "0"


def test_unknown_key_named():
    with pytest.raises(ConfigError) as info:
        config.load_text("experiment = curve\nsolver.cfll = 0.3\n")
    assert info.value.field == "solver.cfll"
    assert "solver.cfll" in str(info.value)


def test_duplicate_and_malformed():
    with pytest.raises(ConfigError):
        config.load_text("experiment = curve\nexperiment = graph\n")
    with pytest.raises(ConfigError):
        config.load_text("experiment curve\n")
    with pytest.raises(ConfigError):
        config.load_text("seed = 3\n")


@pytest.mark.parametrize("line,field", [
    ("homogenize.eps = 0.3", "homogenize.eps"),
    ("homogenize.eps = 1/4, 2/7", "homogenize.eps"),
    ("homogenize.eps = 1/8, 1/4", "homogenize.eps"),
    ("solver.cfl = 0.9", "solver.cfl"),
    ("solver.t_max = -1", "solver.t_max"),
    ("weak.deltas = 0.1, 0.2", "weak.deltas"),
    ("initial.n = 8", "initial.n"),
    ("forcing.kind = wobbly", "forcing.kind"),
    ("solver.cfl = abc", "solver.cfl"),
])
def test_range_errors_name_field(line, field):
    with pytest.raises(ConfigError) as info:
        config.load_text(f"experiment = homogenize\n{line}\n")
    assert info.value.field == field


def test_eps_parsing():
    cfg = config.load_text("experiment = homogenize\nhomogenize.eps = 1/4, 0.125, 1/16\n")
    assert cfg["homogenize.eps"] == [Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)]


def test_slope_and_direction_parsing():
    assert config.parse_slope("2/3").label() == "2/3"
    assert config.parse_slope("-1").value == -1.0
    assert not config.parse_slope("irr:1.4142").is_rational
    cfg = config.load_text("experiment = effective-speed\nspeed.directions = 1, 2; irr:1, 1.5\n")
    d = cfg["speed.directions"]
    assert d[0].p == (1, 2) and not d[1].integer
    with pytest.raises(ConfigError):
        config.load_text("experiment = effective-speed\nspeed.directions = 1.5, 2\n")


def test_weak_needs_x_only():
    with pytest.raises(ConfigError) as info:
        config.load_text("experiment = weak\nforcing.kind = product\n")
    assert info.value.field == "forcing.kind"


def test_points_file_missing(tmp_path):
    with pytest.raises(ConfigError) as info:
        config.load_text("experiment = curve\ninitial.kind = points\ninitial.file = nope.csv\n",
                         base_dir=tmp_path)
    assert info.value.field == "initial.file"


def test_points_file_curve(tmp_path):
    th = 2 * np.pi * np.arange(32) / 32
    np.savetxt(tmp_path / "pts.csv", np.column_stack([np.cos(th), np.sin(th)]), delimiter=",")
    cfg = config.load_text("experiment = curve\ninitial.kind = points\ninitial.file = pts.csv\n",
                           base_dir=tmp_path)
    assert cfg.curve_initial().n == 32


def test_builders():
    cfg = config.load_text(GRAPH)
    s = cfg.graph_initial()
    assert s.n == 64
    # same seed, same random datum
    assert np.array_equal(s.u, config.load_text(GRAPH).graph_initial().u)
    assert cfg.graph_solver().t_max == 0.02
    g = cfg.forcing()
    assert g.x_only


def test_dump_round_trip():
    cfg = config.load_text(CIRCLE)
    again = config.load_text(config.dump(cfg.echo()))
    assert again.values == cfg.values


# --- artifacts ------------------------------------------------------------------------


def test_csv_format(tmp_path):
    p = artifacts.write_csv(tmp_path / "a.csv", ["a", "b", "c"], [(0.1, 3, True), (np.nan, None, "x")])
    assert p.read_bytes() == b"a,b,c\n0.1,3,true\nnan,,x\n"
    assert artifacts.read_csv(p)[0] == ["a", "b", "c"]


def test_json_nan_null(tmp_path):
    p = artifacts.write_json(tmp_path / "a.json", {"v": float("nan"), "w": np.float64(1.5)})
    assert json.loads(p.read_text()) == {"v": None, "w": 1.5}
    assert p.read_text().endswith("\n")


# --- command line -----------------------------------------------------------------------


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(write(tmp_path, CIRCLE))]) == 0
    assert capsys.readouterr().out.startswith("ok")


def test_validate_cfl_error(tmp_path, capsys):
    p = write(tmp_path, "experiment = curve\nsolver.cfl = 0.9\n")
    assert cli.main(["validate", "--config", str(p)]) == 2
    assert "solver.cfl" in capsys.readouterr().err


def test_run_unknown_key_exit_2(tmp_path, capsys):
    p = write(tmp_path, "experiment = curve\nsolver.cfll = 0.3\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "solver.cfll" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["validate", "--config", str(tmp_path / "none.cfg")]) == 2


def test_run_circle(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(write(tmp_path, CIRCLE)), "--out", str(out)]) == 0
    for name in ("snapshots.csv", "diagnostics.csv", "summary.json", "manifest.json"):
        assert (out / name).is_file()
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["error"] is None
    assert "snapshots.csv" in man["files"]
    assert set(man["versions"]) >= {"hetflow", "numpy", "scipy"}
    summ = json.loads((out / "summary.json").read_text())
    # with g = 0 the exponential-form energy bound is 0 and is always flagged;
    # the length-balance form holds
    assert summ["violations"] == ["curvature_energy_vs_exp_bound"]
    head, rows = artifacts.read_csv(out / "snapshots.csv")
    assert head[:4] == ["t", "i", "x", "y"]
    assert len(rows) == 6 * 64


def data_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_run_deterministic_and_round_trip(tmp_path):
    p = write(tmp_path, GRAPH)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.run(p, a) == 0
    assert cli.run(p, b) == 0
    assert data_files(a) == data_files(b)
    # the manifest's echoed config re-runs to identical data
    man = json.loads((a / "manifest.json").read_text())
    q = write(tmp_path, config.dump(man["config"]), "echo.cfg")
    assert cli.run(q, c) == 0
    assert data_files(a) == data_files(c)


def test_seed_override_changes_data(tmp_path):
    p = write(tmp_path, GRAPH)
    assert cli.run(p, tmp_path / "a", seed=1) == 0
    assert cli.run(p, tmp_path / "b", seed=2) == 0
    assert (tmp_path / "a" / "snapshots.csv").read_bytes() != (tmp_path / "b" / "snapshots.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 1 and man["config"]["seed"] == "1"


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("HETFLOW_OUT", str(tmp_path / "env"))
    p = write(tmp_path, CIRCLE)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "manifest.json").is_file()
    assert not (tmp_path / "flag").exists()


def test_solver_failure_exit_3(tmp_path, capsys):
    p = write(tmp_path, "experiment = graph\ninitial.kind = linear\ninitial.slope = 2\n"
                        "initial.n = 32\nsolver.grad_cap = 1\nsolver.t_max = 0.01\n")
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(p), "--out", str(out)]) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "solver-failure"
    assert man["error"].startswith("GradientBlowup")
    assert (out / "snapshots_partial.csv").is_file()


def test_jobs_must_be_positive(tmp_path):
    assert cli.main(["run", "--config", str(write(tmp_path, CIRCLE)), "--jobs", "0"]) == 2


def test_outputs_stay_in_directory(tmp_path):
    out = tmp_path / "o"
    assert cli.run(write(tmp_path, CIRCLE), out) == 0
    before = {p.name for p in tmp_path.iterdir()}
    assert before == {"run.cfg", "o"}


@pytest.mark.parametrize("text,files", [
    ("experiment = effective-speed\nforcing.kind = sin-y\nforcing.offset = 2\n"
     "speed.slopes = 0, 1/2, irr:1.4142135623730951\nspeed.directions = 0, 1\n",
     ["speeds.csv", "G_samples.csv"]),
    ("experiment = discontinuity-scan\nforcing.kind = sin-y\nforcing.offset = 2\n"
     "speed.slopes = 0, 1/3, irr:1.4142135623730951\n", ["scan.csv"]),
    ("experiment = homogenize\nforcing.kind = square-wave\ninitial.kind = fourier\n"
     "initial.modes = 1 0 0.1\nhomogenize.eps = 1/2, 1/4\nhomogenize.T = 0.02\n",
     ["distances.csv", "report.json"]),
    ("experiment = weak\nforcing.kind = square-wave\ninitial.n = 64\nsolver.t_max = 0.02\n"
     "solver.sample_interval = 0.005\nweak.deltas = 0.2, 0.1, 0.05\n",
     ["gaps.csv", "weak_residuals.csv", "snapshots_finest.csv"]),
    ("experiment = diagnostics\ninitial.n = 64\nsolver.t_max = 1\nsolver.sample_interval = 0.02\n",
     ["density.csv", "rescaled_density.csv", "shrinker_residual.csv"]),
])
def test_each_experiment_runs(tmp_path, text, files):
    out = tmp_path / "o"
    assert cli.run(write(tmp_path, text), out) == 0
    for f in files:
        assert (out / f).is_file(), f
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok"
