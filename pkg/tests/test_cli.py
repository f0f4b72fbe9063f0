import csv

import pytest

from afem2d import cli
from afem2d.adapt import ConfigError
from afem2d.cli import RunConfig


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_run_writes_artifacts(tmp_path):
    out = str(tmp_path / "z")
    rc = cli.main(["run", "--problem", "zshape", "--theta", "0.5",
                   "--max-elements", "300", "--output", out])
    assert rc == 0
    rows = _read_csv(out + "_levels.csv")
    assert rows[0] == cli.LEVEL_COLUMNS
    assert len(rows) > 3
    # strictly increasing element counts
    counts = [int(r[1]) for r in rows[1:]]
    assert all(b > a for a, b in zip(counts, counts[1:]))
    rates = _read_csv(out + "_rates.csv")
    assert rates[0] == ["quantity", "slope"]
    assert {r[0] for r in rates[1:]} == set(cli.RATE_QUANTITIES)
    meshes = list(tmp_path.glob("z_mesh_*.txt"))
    assert len(meshes) == 1
    assert meshes[0].read_text().startswith("afem2d-mesh v1")


def test_run_is_deterministic(tmp_path):
    args = ["run", "--problem", "zshape", "--max-elements", "300"]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(args + ["--output", a]) == 0
    assert cli.main(args + ["--output", b]) == 0
    assert (tmp_path / "a_levels.csv").read_bytes() \
        == (tmp_path / "b_levels.csv").read_bytes()
    assert (tmp_path / "a_rates.csv").read_bytes() \
        == (tmp_path / "b_rates.csv").read_bytes()


def test_bad_config_exits_2(tmp_path):
    out = str(tmp_path / "x")
    assert cli.main(["run", "--problem", "moebius", "--output", out]) == 2
    assert cli.main(["run", "--theta", "1.5", "--output", out]) == 2
    assert cli.main(["run", "--max-elements", "-3", "--output", out]) == 2
    assert cli.main(["run", "--cg-tol", "2.0", "--output", out]) == 2
    # nothing was written for invalid configurations
    assert not list(tmp_path.glob("x_*"))


def test_no_command_shows_help():
    assert cli.main([]) == 2


def test_compare_multi_theta(tmp_path):
    out = str(tmp_path / "cmp")
    rc = cli.main(["compare", "--problem", "zshape", "--thetas", "0.3,0.7",
                   "--include-uniform", "--max-elements", "200",
                   "--max-levels", "6", "--output", out])
    assert rc == 0
    rows = _read_csv(out + "_compare.csv")
    assert rows[0] == ["run"] + cli.LEVEL_COLUMNS
    runs = {r[0] for r in rows[1:]}
    assert runs == {"zshape-doerfler-theta_0.3", "zshape-doerfler-theta_0.7",
                    "zshape-uniform"}


def test_compare_label_deduplication(tmp_path):
    cfg = RunConfig(problem="zshape", max_elements=100, max_levels=3)
    out = str(tmp_path / "dup.csv")
    cli.compare([cfg, cfg], out)
    rows = _read_csv(out)
    runs = {r[0] for r in rows[1:]}
    assert runs == {"zshape-doerfler-theta_0.5",
                    "zshape-doerfler-theta_0.5-1"}


def test_compare_rejects_mixed_problems(tmp_path):
    a = RunConfig(problem="zshape")
    b = RunConfig(problem="lshape")
    with pytest.raises(ConfigError):
        cli.compare([a, b], str(tmp_path / "x.csv"))


def test_custom_mesh_problem(tmp_path):
    from afem2d import affine_problem
    mesh_path = tmp_path / "square.txt"
    affine_problem().initial_mesh.write(mesh_path)
    out = str(tmp_path / "c")
    rc = cli.main(["run", "--problem", f"custom:{mesh_path}:affine",
                   "--max-levels", "3", "--output", out])
    assert rc == 0
    rows = _read_csv(out + "_levels.csv")
    # affine data: estimator at the floor, loop stops on the first level
    assert len(rows) == 2
    assert float(rows[1][cli.LEVEL_COLUMNS.index("varrho_sq")]) < 1e-20


def test_config_label_shapes():
    assert RunConfig(strategy="uniform").label() == "zshape-uniform"
    assert RunConfig(name="pinned").label() == "pinned"
    assert "modified" in RunConfig(strategy="modified").label()
