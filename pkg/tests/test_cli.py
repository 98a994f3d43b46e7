import json

import pytest

from hdgcontrol.cli import ConfigError, RunConfig, compare, main
from hdgcontrol.io import read_records


def run_cli(args):
    return main([str(a) for a in args])


def test_run_writes_all_artifacts(tmp_path, capsys):
    out = tmp_path / "a"
    rc = run_cli(["run", "--problem", "example1", "--k", 1, "--theta", 0.6,
                  "--budget", 20000, "--out", out])
    assert rc == 0
    assert {p.name for p in out.iterdir()} == {"records.csv", "mesh.vtk", "convergence.svg"}
    rows = read_records(out / "records.csv")
    n = [r["n_dof"] for r in rows]
    assert all(b > a for a, b in zip(n, n[1:]))
    assert "meshes" in capsys.readouterr().out


def test_emit_none_writes_only_csv(tmp_path):
    out = tmp_path / "b"
    assert run_cli(["run", "--problem", "example2", "--budget", 500, "--out", out,
                    "--emit", "none"]) == 0
    assert [p.name for p in out.iterdir()] == ["records.csv"]


def test_invalid_theta_names_field(tmp_path, capsys):
    assert run_cli(["run", "--theta", 1.5, "--out", tmp_path]) == 2
    assert "theta" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        RunConfig(theta=1.5).validate()
    assert info.value.field == "theta"


@pytest.mark.parametrize("field,value", [("k", 4), ("mode", "random"), ("budget", -1),
                                         ("fp_tol", 0.0), ("fp_max", 0), ("rho", 0.0),
                                         ("problem", "example9"), ("emit", ["png"]),
                                         ("solver", "gmres")])
def test_config_validation_names_field(field, value):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({field: value})
    assert info.value.field == field


def test_unknown_config_field():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"thetaa": 0.5})
    assert info.value.field == "thetaa"


def test_budget_below_initial_dofs_is_config_error(tmp_path, capsys):
    assert run_cli(["run", "--budget", 10, "--out", tmp_path / "x"]) == 2
    assert "budget" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "example2", "k": 1, "theta": 0.3, "budget": 600,
                               "out": str(tmp_path / "from_file"), "emit": ["csv"]}))
    assert run_cli(["run", "--config", cfg, "--theta", 0.5]) == 0
    rows = read_records(tmp_path / "from_file" / "records.csv")
    assert rows[-1]["n_dof"] > 600
    from hdgcontrol.io import read_records_meta
    assert read_records_meta(tmp_path / "from_file" / "records.csv")["theta"] == 0.5


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert run_cli(["run", "--config", cfg]) == 2
    assert run_cli(["run", "--config", tmp_path / "missing.json"]) == 4


def test_csv_numbers_reproducible(tmp_path):
    for name in ("r1", "r2"):
        assert run_cli(["run", "--problem", "example2", "--budget", 1500,
                        "--out", tmp_path / name, "--emit", "csv"]) == 0
    a = read_records(tmp_path / "r1" / "records.csv")
    b = read_records(tmp_path / "r2" / "records.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(a) == strip(b)


def test_compare_overlay(tmp_path):
    for name, theta in (("t2", 0.2), ("t6", 0.6)):
        assert run_cli(["run", "--problem", "example2", "--theta", theta, "--budget", 1500,
                        "--out", tmp_path / name, "--emit", "csv"]) == 0
    merged = compare(tmp_path / "t2", tmp_path / "t6", tmp_path / "cmp")
    assert [r["n_dof"] for r in merged] == sorted(r["n_dof"] for r in merged)
    svg = (tmp_path / "cmp" / "compare.svg").read_text()
    assert svg.count("<polyline") == 4  # eta and E for each run
    assert "theta=0.2" in svg and "theta=0.6" in svg
    # identical runs overlay onto the same rows
    same = compare(tmp_path / "t2", tmp_path / "t2", tmp_path / "same")
    assert all(r["eta_A"] == r["eta_B"] for r in same)


def test_compare_refuses_mismatched_problems(tmp_path, capsys):
    assert run_cli(["run", "--problem", "example2", "--budget", 300, "--out", tmp_path / "a",
                    "--emit", "csv"]) == 0
    assert run_cli(["run", "--problem", "example1", "--budget", 300, "--out", tmp_path / "b",
                    "--emit", "csv"]) == 0
    assert run_cli(["compare", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "c"]) == 2
    assert "different problems" in capsys.readouterr().err


def test_compare_accepts_config_files(tmp_path):
    cfgs = []
    for mode in ("adaptive", "uniform"):
        c = tmp_path / f"{mode}.json"
        c.write_text(json.dumps({"problem": "example2", "mode": mode, "budget": 2000,
                                 "out": str(tmp_path / mode), "emit": []}))
        cfgs.append(c)
    assert run_cli(["compare", *cfgs, "--out", tmp_path / "cmp"]) == 0
    assert (tmp_path / "adaptive" / "records.csv").exists()


def test_solver_failure_exit_code_and_partial_csv(tmp_path):
    mesh = tmp_path / "coarse.txt"
    from hdgcontrol.io import write_mesh
    from hdgcontrol.problems import square_mesh
    write_mesh(square_mesh(2), mesh)
    out = tmp_path / "fail"
    assert run_cli(["run", "--mesh", mesh, "--fp-max", 10, "--budget", 1000, "--out", out]) == 3
    assert read_records(out / "records.csv") == []


def test_missing_run_directory(tmp_path):
    assert run_cli(["compare", tmp_path / "nope", tmp_path / "nope2"]) == 4
