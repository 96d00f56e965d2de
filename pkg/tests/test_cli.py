import csv

import pytest

from g2lab.cli import DEFAULTS, load_config, main, make_grid, parse_config_text
from g2lab.errors import ConfigError


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_defaults_and_overrides():
    values = parse_config_text("flow.dt = 1e-3  # faster\n\n# comment only\nseed=4\n")
    assert values["flow.dt"] == "1e-3" and values["seed"] == "4"
    assert values["flow.kind"] == DEFAULTS["flow.kind"]
    assert parse_config_text("", "curvature")["grid.dims"] == "32,32"


def test_unknown_key_and_bad_line():
    with pytest.raises(ConfigError):
        parse_config_text("flow.colour = red")
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.cfg"))


def test_grid_padding():
    grid = make_grid(parse_config_text("grid.dims = 8,4"))
    assert grid.dims == (8, 4, 1, 1, 1, 1, 1)
    with pytest.raises(ConfigError):
        make_grid(parse_config_text("grid.dims = 0"))


@pytest.mark.parametrize("text", ["flow.dt = 0", "flow.dt = -1", "flow.kind = Ricci", "grid.dims = a,b",
                                  "field.band_limit = 99"])
def test_config_errors_exit_2(tmp_path, text):
    cfg = _write(tmp_path, "grid.dims = 8\nflow.steps = 1\n" + text + "\n")
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["flow", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2


def test_bad_snapshot_exits_3(tmp_path):
    bad = tmp_path / "bad.g2f"
    bad.write_bytes(b"not a snapshot")
    cfg = _write(tmp_path, f"grid.dims = 8\nflow.steps = 1\nfield.snapshot = {bad}\n")
    assert main(["flow", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_identities_and_corrupt_control(tmp_path):
    cfg = _write(tmp_path, "identities.trials = 50\n")
    assert main(["verify-identities", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["verify-identities", "--config", cfg, "--out", str(tmp_path / "b"), "--corrupt-psi", "1e-3"]) == 1


def test_flow_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, "grid.dims = 8,8\nflow.steps = 3\nflow.snapshot_every = 3\n")
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["flow", "--config", cfg, "--out", str(out), "--no-timestamp"]) == 0
        runs.append((out / "flow_monitor.csv").read_text())
        assert (out / "snapshot_000003.g2f").exists()
        assert (out / "flow_energies.svg").exists() and (out / "flow_volume.svg").exists()
    assert runs[0] == runs[1]
    rows = _rows(tmp_path / "a" / "flow_monitor.csv")
    assert rows[0] == ["step", "t", "Vol", "EL", "ED", "EM", "dt", "solver_iters", "residual"]
    assert len(rows) == 5

    # A snapshot written by one run restarts the next.
    snap = tmp_path / "a" / "snapshot_000003.g2f"
    cfg2 = _write(tmp_path, f"grid.dims = 8,8\nflow.steps = 1\nfield.snapshot = {snap}\n", "restart.cfg")
    assert main(["flow", "--config", cfg2, "--out", str(tmp_path / "c"), "--no-timestamp"]) == 0


def test_connections_csv_and_empty_suites(tmp_path):
    cfg = _write(tmp_path, "grid.dims = 8,8\nconnections.combos = 0.2:0.3:0.5,0.5:0.5:0.5\n")
    assert main(["connections", "--config", cfg, "--out", str(tmp_path / "a"), "--no-timestamp"]) == 0
    rows = _rows(tmp_path / "a" / "connections.csv")
    assert rows[0] == ["connection", "metric", "h", "lhs", "rhs", "rel_err"]
    assert any(r[0] == "Combo(0.5,0.5,0.5)" for r in rows[1:])
    empty = _write(tmp_path, "connections.suites = \n", "empty.cfg")
    assert main(["connections", "--config", empty, "--out", str(tmp_path / "b")]) == 0


def test_variations_csv(tmp_path):
    cfg = _write(tmp_path, "grid.dims = 8,8\n")
    assert main(["verify-variations", "--config", cfg, "--out", str(tmp_path), "--no-timestamp"]) == 0
    assert _rows(tmp_path / "variations.csv")[0] == ["operator", "h", "mismatch", "order-ratio"]


def test_geodesic_csv(tmp_path):
    cfg = _write(tmp_path, "geodesic.T = 0.01\ngeodesic.dt = 0.005\ngeodesic.connection = DL,DD\n")
    assert main(["geodesic", "--config", cfg, "--out", str(tmp_path), "--no-timestamp"]) == 0
    rows = _rows(tmp_path / "geodesic.csv")
    assert rows[0] == ["connection", "t", "speed", "relative_drift"]
    assert {r[0] for r in rows[1:]} == {"DL", "DD"}


def test_curvature_csv(tmp_path):
    assert main(["curvature", "--out", str(tmp_path), "--no-timestamp"]) == 0
    assert _rows(tmp_path / "curvature.csv")[0] == ["check", "max_violation", "grid"]
