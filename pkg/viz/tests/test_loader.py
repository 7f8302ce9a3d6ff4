"""Run-directory parsing: formats, ordering, and failure modes."""

import csv
import os

import numpy as np
import pytest

from pathviz import MalformedExportError, MissingExportError, load_cloud, load_config, load_metrics
from pathviz.loader import load_controls, load_trajectory

from conftest import make_run_dir, write_cloud_csv


def test_cloud_round_trip(tmp_path):
    times = np.array([0.0, 0.5, 1.0])
    frames = [np.random.default_rng(i).standard_normal((7, 3)) for i in range(3)]
    path = str(tmp_path / "trajectory.csv")
    write_cloud_csv(path, times, frames)
    cloud = load_cloud(path)
    assert np.allclose(cloud.times, times)
    assert cloud.d == 3
    for got, want in zip(cloud.frames, frames):
        # %.17g column formatting round-trips float64 exactly
        assert np.array_equal(got, want)
    assert cloud.stacked().shape == (21, 3)
    assert np.array_equal(cloud.terminal(), frames[-1])


def test_cloud_restores_sample_order(tmp_path):
    path = str(tmp_path / "controls.csv")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "sample", "x1"])
        for j in (2, 0, 1):                      # rows shuffled on disk
            writer.writerow(["0.000000", j, float(j)])
    cloud = load_cloud(path)
    assert np.array_equal(cloud.frames[0][:, 0], [0.0, 1.0, 2.0])


def test_missing_trajectory_names_expected_file(scc_run):
    os.remove(os.path.join(scc_run, "trajectory.csv"))
    with pytest.raises(MissingExportError) as err:
        load_trajectory(scc_run)
    assert "trajectory.csv" in str(err.value)
    assert scc_run in str(err.value)


def test_cloud_without_coordinate_columns(tmp_path):
    path = str(tmp_path / "bad.csv")
    with open(path, "w") as f:
        f.write("time,sample,value\n0.0,0,1.0\n")
    with pytest.raises(MalformedExportError):
        load_cloud(path)


def test_ragged_frames_rejected(tmp_path):
    path = str(tmp_path / "ragged.csv")
    with open(path, "w") as f:
        f.write("time,sample,x1\n0.0,0,1.0\n0.0,1,2.0\n1.0,0,3.0\n")
    with pytest.raises(MalformedExportError):
        load_cloud(path)


def test_config_and_metrics(scc_run):
    cfg = load_config(scc_run)
    assert cfg["problem"]["name"] == "scc"
    assert cfg["action"]["potential_id"] == "scc-bumps"
    df = load_metrics(scc_run)
    assert list(df["epoch"]) == [0, 1, 2, 3]
    assert (df["total"].diff().dropna() < 0).all()


def test_config_must_be_snapshot(tmp_path):
    run = tmp_path / "r"
    run.mkdir()
    (run / "config.yaml").write_text("- just\n- a list\n")
    with pytest.raises(MalformedExportError):
        load_config(str(run))


def test_metrics_need_epoch_and_total(tmp_path):
    run = tmp_path / "r"
    run.mkdir()
    (run / "metrics.csv").write_text("a,b\n1,2\n")
    with pytest.raises(MalformedExportError):
        load_metrics(str(run))


def test_controls_loader(scc_run):
    cloud = load_controls(scc_run)
    assert len(cloud.times) == 4
    assert cloud.times[0] == 0.0 and cloud.times[-1] == 1.0


def test_missing_config(tmp_path):
    with pytest.raises(MissingExportError) as err:
        load_config(str(tmp_path))
    assert "config.yaml" in str(err.value)


def test_run_factory_is_deterministic(tmp_path):
    a = make_run_dir(str(tmp_path / "a"))
    b = make_run_dir(str(tmp_path / "b"))
    with open(os.path.join(a, "trajectory.csv")) as fa, \
         open(os.path.join(b, "trajectory.csv")) as fb:
        assert fa.read() == fb.read()
