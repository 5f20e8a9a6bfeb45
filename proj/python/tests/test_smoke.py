import json

import numpy as np
import pytest

import assign_surrogate as asg


def small_scenario(seed=3):
    cfg = asg.ScenarioConfig()
    cfg.rows, cfg.cols = 3, 3
    cfg.edge_length, cfg.hex_size = 150.0, 150.0
    cfg.capacity = 0.2
    cfg.agents, cfg.departure_window, cfg.k = 40, 120.0, 3
    cfg.sim = asg.SimConfig(1.0, 10.0, 300.0)
    return asg.build_scenario(cfg, seed)


def test_grid_points_count():
    pts = asg.grid_points(3, 4)
    assert len(pts) == 15
    assert all(sum(p) == 4 for p in pts)


def test_simulate_and_aggregate():
    sc = small_scenario()
    ranks = sc.random_assignment(1)
    assert len(ranks) == sc.agents
    out = sc.simulate(ranks)
    q = out["flows"]
    assert q.shape == (sc.cells, sc.sim.intervals)
    assert q.min() >= 0
    tt = asg.aggregate_tt(q, sc.sim.interval)
    assert abs(tt - out["total_travel_time"]) <= 2 * sc.agents * sc.sim.interval
    a = sc.assignment_matrix(ranks)
    assert a.shape == q.shape
    assert sc.simulate(ranks)["total_travel_time"] == out["total_travel_time"]


def test_validation_errors_map_to_python():
    sc = small_scenario()
    with pytest.raises(ValueError):
        sc.simulate([99] * sc.agents)
    with pytest.raises(ValueError):
        asg.spearman([1.0], [1.0])


def test_spearman():
    assert asg.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert asg.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_cli_pipeline_and_model(tmp_path):
    config = {
        "seed": 5,
        "network": {"rows": 3, "cols": 3, "edge_length": 150, "capacity": 0.2, "hex_size": 150},
        "demand": {"agents": 40, "window": 120},
        "paths": {"k": 3},
        "sampler": {"resolution": 3, "count": 20},
        "sim": {"horizon": 300},
        "dataset": {"flow_window": 4, "assign_window": 4},
        "model": {"hidden": 8, "residual_channels": 4},
        "train": {"max_epochs": 1, "batch_size": 32},
    }
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(config))
    exp = str(tmp_path / "exp")
    steps = [["net", "gen"], ["demand", "gen"], ["paths", "build"], ["sample", "grid"],
             ["simulate", "batch"], ["dataset", "build"], ["train"], ["eval", "tt"]]
    for step in steps:
        code, out, err = asg.run_command(step + ["--config", str(cfg_file), "--out", exp])
        assert code == 0, err
    assert (tmp_path / "exp" / "eval" / "tt_report.csv").exists()

    code, _, err = asg.run_command(["train", "--config", str(cfg_file), "--out", exp])
    assert code == 1 and "--force" in err

    ds = asg.load_dataset(str(tmp_path / "exp" / "dataset"))
    assert len(ds["runs"]) == 20
    model = asg.Model.load(str(tmp_path / "exp" / "model"))
    run = ds["runs"][ds["split"]["test"][0]]
    q_hat = model.rollout(run["assignment"])
    assert q_hat.shape == run["flows"].shape
    assert np.all(q_hat >= 0)
    step = model.predict_step(np.zeros((4, model.cells)), np.zeros((4, model.cells)))
    assert len(step) == model.cells

    flow_only = model.flow_only_variant()
    other = np.zeros_like(run["assignment"])
    assert np.array_equal(flow_only.rollout(run["assignment"]), flow_only.rollout(other))
