import csv

import pytest

from geodesign.cli import main
from geodesign.stations import bundled_stations_path

TINY_EXAMPLE = """
scenario = moderate
seed = 11

[budgets]
K = 1
B = 20
R = 40
reps = 2
restarts = 1
grid_levels = 1
sweep_cap = 1
fit_restarts = 1
fit_max_evals = 1200
K_eval = 1
"""

TINY_NETWORK = """
seed = 5

[space]
mode = stations

[model]
covariates1 = 0 1
covariates2 = 0 2

[prior]
beta10 = 8.0 1.0
beta11 = -1.1 0.25
beta12 = 0.9 0.25
beta20 = 3.5 0.05
beta21 = -0.4 0.05
beta22 = -0.5 0.05
log_sigma1 = 0.0 0.1
log_sill_ratio1 = 0.5 0.1
log_range1 = -1.2 0.1
log_smooth1 = 0.4 0.1
log_sill_ratio2 = 0.0 0.1
log_range2 = -1.2 0.1
log_smooth2 = -0.7 0.1
logit_tau = 0.85 0.1

[budgets]
K = 1
B = 20
R = 40
reps = 2
restarts = 1
sweep_cap = 1
fit_restarts = 1
fit_max_evals = 1200
K_eval = 1
"""


@pytest.fixture()
def example_cfg(tmp_path):
    path = tmp_path / "example.cfg"
    path.write_text(TINY_EXAMPLE)
    return str(path)


@pytest.fixture()
def network_cfg(tmp_path):
    path = tmp_path / "network.cfg"
    path.write_text(TINY_NETWORK)
    return str(path)


def test_simulate_writes_dataset(example_cfg, tmp_path):
    out = tmp_path / "sim"
    assert main(["--config", example_cfg, "--out", str(out), "simulate", "--n", "3"]) == 0
    rows = (out / "dataset.csv").read_text().splitlines()
    assert rows[0] == "label,x,y,y1,y2"
    assert len(rows) == 4
    assert (out / "manifest.txt").exists()


def test_optimize_continuous_and_evaluate(example_cfg, tmp_path):
    out = tmp_path / "opt"
    assert main(["--config", example_cfg, "--out", str(out), "optimize", "--loss", "estimation", "--n", "2"]) == 0
    design_file = out / "design.txt"
    lines = design_file.read_text().splitlines()
    assert len(lines) == 2
    assert "wall_time=NA" in (out / "losses.txt").read_text()
    assert (out / "trace.txt").exists()
    assert (out / "timings.txt").exists()

    out2 = tmp_path / "eval"
    rc = main(
        ["--config", example_cfg, "--out", str(out2), "evaluate", "--designs", str(design_file), "--objective", "E", "--reps", "2"]
    )
    assert rc == 0
    dist = (out2 / "distribution.txt").read_text().splitlines()
    assert len(dist) == 2


def test_optimize_network_with_cluster_filter(network_cfg, tmp_path):
    out = tmp_path / "net"
    rc = main(["--config", network_cfg, "--out", str(out), "optimize", "--loss", "estimation", "--n", "2", "--filter-cluster", "C3"])
    assert rc == 0
    ids = (out / "design.txt").read_text().split()
    clusters = {row[0]: row[9] for row in list(csv.reader(open(bundled_stations_path())))[1:]}
    assert all(clusters[i] == "C3" for i in ids)
    # UTM output within relative tolerance of the originals
    utm = [tuple(map(float, line.split())) for line in (out / "design_utm.txt").read_text().splitlines()]
    originals = {row[0]: (float(row[1]), float(row[2])) for row in list(csv.reader(open(bundled_stations_path())))[1:]}
    for sid, (x, y) in zip(ids, utm):
        ox, oy = originals[sid]
        assert abs(x - ox) <= 1e-6 * abs(ox)
        assert abs(y - oy) <= 1e-6 * abs(oy)


def test_unknown_cluster_is_config_error(network_cfg, tmp_path):
    rc = main(["--config", network_cfg, "--out", str(tmp_path / "x"), "optimize", "--loss", "dual", "--n", "2", "--filter-cluster", "C9"])
    assert rc == 2


def test_missing_config_exit_code(tmp_path):
    rc = main(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o"), "simulate"])
    assert rc == 2


def test_broken_station_file_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("station_id,x_utm,y_utm,x1,x2,x3,y1,y2,sampled\na,0,zero,0,0,0,,,false\n")
    cfg = tmp_path / "cfg.cfg"
    cfg.write_text(TINY_NETWORK.replace("mode = stations", f"mode = stations\npath = {bad}"))
    rc = main(["--config", str(cfg), "--out", str(tmp_path / "o"), "simulate"])
    assert rc == 3


def test_compare_approx_outputs(example_cfg, tmp_path):
    out = tmp_path / "ca"
    assert main(["--config", example_cfg, "--out", str(out), "compare-approx", "--count", "2", "--n", "2"]) == 0
    table = (out / "approx_table.txt").read_text()
    assert "loss_nested=" in table and "wall_time" not in table
    assert "pearson=" in (out / "approx_summary.txt").read_text()
    assert "mean_wall_time_nested=" in (out / "timings.txt").read_text()


def test_fixed_designs_outputs(example_cfg, tmp_path):
    out = tmp_path / "fd"
    assert main(["--config", example_cfg, "--out", str(out), "fixed-designs", "--n", "3", "--reps", "2"]) == 0
    pv = (out / "predictive_variances.txt").read_text().splitlines()
    # three designs x (4 prediction-set rows is wrong: 25-grid) x 2 responses
    assert len(pv) == 3 * 25 * 2
    assert (out / "parameter_variances.txt").exists()
    assert (out / "design_close_pred.txt").exists()


def test_manifest_records_versions(example_cfg, tmp_path):
    out = tmp_path / "m"
    main(["--config", example_cfg, "--out", str(out), "simulate", "--n", "2"])
    manifest = (out / "manifest.txt").read_text()
    assert "config_hash=sha256:" in manifest
    assert "geodesign_version=" in manifest
    assert "numpy_version=" in manifest
    assert "seed=11" in manifest
