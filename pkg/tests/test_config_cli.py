"""Run configuration plumbing and the command line front end."""

import json

import numpy as np
import pytest

from fluctop.cli import build_parser, main
from fluctop.config import (FitSection, GridSpec, InitialSpec, RunConfig,
                            SolverSection, config_from_dict, density_range,
                            load_config, preset, save_config,
                            symmetric_gradients)
from fluctop.errors import ConfigError
from fluctop.estimator import (EstimatorParams, ProfilePoint,
                               RawOperatorTable, RowEstimate)
from fluctop.solver import DirichletBC, PeriodicBC
from fluctop.thermo import m_from_density


def tiny_config() -> RunConfig:
    """Fast but meaningful pipeline settings for the end-to-end test."""
    return RunConfig(
        master_seed=2024,
        estimator=EstimatorParams(lattice_size=100, n_basis=10,
                                  realizations=300, window=1e-7,
                                  equilibration=1e-4),
        grid=GridSpec(flat_rho=(5.0, 7.0, 9.0), affine_rho=(5.0, 7.0, 9.0),
                      gradients=symmetric_gradients(6.5)),
        fit=FitSection(constrained=True, weighted=True),
        solver=SolverSection(initial=InitialSpec(kind="cosine", mean=7.0,
                                                 amplitude=0.5),
                             boundary="periodic", n_nodes=12,
                             horizon=1e-4, n_snapshots=2),
    )


# --- configuration ------------------------------------------------------------


def test_density_range_is_inclusive_and_rounded():
    grid = density_range(4.0, 9.9, 0.1)
    assert len(grid) == 60
    assert grid[0] == 4.0 and grid[-1] == 9.9
    assert all(round(v, 10) == v for v in grid)


def test_symmetric_gradients_sorted_pairs():
    assert symmetric_gradients(15.0, 5.0) == (-15.0, -5.0, 5.0, 15.0)
    with pytest.raises(ConfigError):
        symmetric_gradients(-3.0)


def test_preset_grid_sizes_frozen():
    assert len(preset("desk-scale").grid.build_points()) == 9
    assert len(preset("full-scale").grid.build_points()) == 228
    assert len(preset("full-scale-unconstrained").grid.build_points()) == 6111
    assert preset("desk-scale").solver is None
    assert preset("relax-cosine").solver.n_nodes == 40
    assert preset("full-scale-unconstrained").fit.constrained is False


def test_full_scale_grid_ordering():
    pts = preset("full-scale").grid.build_points()
    assert [p.index for p in pts] == list(range(228))
    assert (pts[59].rho, pts[59].grad) == (9.9, 0.0)
    assert (pts[60].rho, pts[60].grad) == (4.0, -19.0)
    assert (pts[-1].rho, pts[-1].grad) == (10.0, 19.0)
    assert len({(p.rho, p.grad) for p in pts}) == 228


def test_unknown_preset_lists_choices():
    with pytest.raises(ConfigError, match="desk-scale"):
        preset("nope")


def test_config_round_trip(tmp_path):
    cfg = preset("relax-cosine")
    path = tmp_path / "config.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_unknown_keys_rejected():
    base = {"estimator": {"lattice_size": 100, "n_basis": 10}}
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict({**base, "bogus": 1})
    with pytest.raises(ConfigError, match="lattice"):
        config_from_dict({"estimator": {"lattice": 100}})
    with pytest.raises(ConfigError):
        config_from_dict({**base, "master_seed": -3})


def test_with_overrides():
    cfg = preset("desk-scale")
    out = cfg.with_overrides(master_seed=7, workers=4)
    assert out.master_seed == 7
    assert out.estimator.workers == 4
    assert out.estimator.lattice_size == cfg.estimator.lattice_size
    assert cfg.with_overrides(master_seed=None, workers=None) == cfg


def test_initial_profiles():
    x = np.array([0.0, 0.25, 0.5, 1.0])
    cos = InitialSpec(kind="cosine", mean=7.0, amplitude=2.0).values(x)
    assert cos == pytest.approx([9.0, 7.0, 5.0, 9.0], abs=1e-12)
    pw = InitialSpec(kind="power", base=4.0, amplitude=7.0, exponent=3).values(x)
    assert pw == pytest.approx([4.0, 4.0 + 7.0 / 64, 4.875, 11.0])
    aff = InitialSpec(kind="affine", rho_center=7.0, slope=4.0).values(x)
    assert aff == pytest.approx([5.0, 6.0, 7.0, 9.0])
    with pytest.raises(ConfigError):
        InitialSpec(kind="sawtooth")


def test_solver_section_builds_fields():
    cosine = SolverSection(initial=InitialSpec(kind="cosine"), n_nodes=40)
    f = cosine.build_initial_field()
    assert isinstance(f.bc, PeriodicBC)
    assert f.n_nodes == 40
    assert f.values.min() == pytest.approx(5.0, abs=0.05)
    assert f.values.max() == pytest.approx(9.0, abs=0.05)

    ramp = SolverSection(initial=InitialSpec(kind="power", base=4.0,
                                             amplitude=7.0, exponent=3),
                         boundary="dirichlet", n_nodes=24)
    g = ramp.build_initial_field()
    assert isinstance(g.bc, DirichletBC)
    assert g.values[0] == 4.0 and g.values[-1] == 11.0


def test_solver_section_validation():
    init = InitialSpec(kind="cosine")
    with pytest.raises(ConfigError):
        SolverSection(initial=init, safety=0.2)   # explicit Euler bound is 1/6
    with pytest.raises(ConfigError):
        SolverSection(initial=init, safety=0.0)
    with pytest.raises(ConfigError):
        SolverSection(initial=init, boundary="absorbing")


# --- command line -------------------------------------------------------------


def test_help_and_version_exit_zero(capsys):
    for flag in ("--help", "--version"):
        with pytest.raises(SystemExit) as exc:
            main([flag])
        assert exc.value.code == 0
        capsys.readouterr()


def test_verbose_flag_position():
    parser = build_parser()
    args = ["fit", "--table", "t.csv", "--out", "f.json"]
    assert parser.parse_args(["-v"] + args).verbose is True
    assert parser.parse_args(args[:1] + ["-v"] + args[1:]).verbose is True
    assert parser.parse_args(args).verbose is False


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main(["tabulate", "--preset", "nope",
                 "--out", str(tmp_path)]) == 1
    assert main(["fit", "--table", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "fit.json")]) == 1
    # desk-scale has no solver section, so compare is a config error
    assert main(["compare", "--preset", "desk-scale",
                 "--fit", str(tmp_path / "fit.json"),
                 "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_flat_only_table_is_a_numerical_error(tmp_path, capsys):
    params = EstimatorParams(lattice_size=100, n_basis=10, realizations=50,
                             window=1e-7, equilibration=0.0)
    rows = []
    for i, rho in enumerate((4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)):
        m = float(m_from_density(rho)) * params.n_basis
        rows.append(RowEstimate(ProfilePoint(i, rho),
                                np.array([-m, 2 * m, -m]),
                                np.full(3, 0.1), 50, 1e-7))
    table = RawOperatorTable(rows, params, master_seed=1)
    path = tmp_path / "table.csv"
    table.save(path)
    rc = main(["fit", "--table", str(path),
               "--out", str(tmp_path / "fit.json")])
    assert rc == 2
    assert "grad" in capsys.readouterr().err


def test_pipeline_end_to_end(tmp_path, capsys):
    cfg_path = tmp_path / "config.json"
    save_config(tiny_config(), cfg_path)
    run = tmp_path / "run"
    fit_path = tmp_path / "fit.json"

    assert main(["tabulate", "--config", str(cfg_path),
                 "--out", str(run)]) == 0
    assert (run / "table.csv").exists()
    assert (run / "table.meta.json").exists()
    assert (run / "config.json").exists()
    out = capsys.readouterr().out
    assert "tabulated 9 points (0 failed)" in out

    assert main(["fit", "--table", str(run / "table.csv"), "--weighted",
                 "--out", str(fit_path)]) == 0
    assert main(["stencil", "--fit", str(fit_path),
                 "--out", str(tmp_path / "stencil.json")]) == 0
    report = json.loads((tmp_path / "stencil.json").read_text())
    base = report["base_normalized"]
    # coarse statistics, so only require the diffusive shape
    assert base[0] == pytest.approx(-1.0)
    assert base[1] == pytest.approx(2.0, abs=0.5)
    assert base[2] == pytest.approx(-1.0, abs=0.5)

    cmp_dir = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_path),
                 "--fit", str(fit_path), "--out", str(cmp_dir)]) == 0
    assert (cmp_dir / "trajectory.csv").exists()
    errors = (cmp_dir / "errors.csv").read_text().splitlines()
    assert len(errors) == 4
    assert float(errors[-1].split(",")[2]) < 0.2
    capsys.readouterr()


def test_probe_commands(tmp_path, capsys):
    cfg_path = tmp_path / "config.json"
    save_config(tiny_config(), cfg_path)

    loc = tmp_path / "loc.json"
    assert main(["probe-locality", "--config", str(cfg_path),
                 "--realizations", "200", "--separation", "2",
                 "--out", str(loc)]) == 0
    rep = json.loads(loc.read_text())
    assert rep["separation"] == 2
    assert rep["stderr"] > 0

    bias = tmp_path / "bias.json"
    assert main(["probe-bias", "--config", str(cfg_path),
                 "--realizations", "200", "--out", str(bias)]) == 0
    rep = json.loads(bias.read_text())
    assert len(rep["full_entries"]) == 3
    assert rep["window"] == pytest.approx(1e-7)
    capsys.readouterr()
