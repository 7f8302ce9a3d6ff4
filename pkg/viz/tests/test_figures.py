"""Figure builders: smoke renders, determinism, and the potential check."""

import os

import numpy as np
import pytest

from pathviz import (MalformedExportError, MissingExportError, cosine_similarities,
                     count_high_potential, render_metrics, render_opinion_hist,
                     render_path_panels)
from pathviz.figures import _group_label, _group_runs

from conftest import make_run_dir


def _size(path):
    assert os.path.isfile(path)
    return os.path.getsize(path)


def test_path_panels_render(scc_run, tmp_path):
    out = render_path_panels(scc_run, str(tmp_path / "panels.png"))
    assert _size(out) > 10_000


def test_path_panels_without_potential(plain_run, tmp_path):
    out = render_path_panels(plain_run, str(tmp_path / "plain.png"))
    assert _size(out) > 10_000


def test_path_panels_deterministic(scc_run, tmp_path):
    a = render_path_panels(scc_run, str(tmp_path / "a.png"), style_seed=4)
    b = render_path_panels(scc_run, str(tmp_path / "b.png"), style_seed=4)
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_path_panels_missing_export(scc_run, tmp_path):
    os.remove(os.path.join(scc_run, "trajectory.csv"))
    with pytest.raises(MissingExportError) as err:
        render_path_panels(scc_run, str(tmp_path / "x.png"))
    assert "trajectory.csv" in str(err.value)


def test_high_potential_counts(scc_run, crossing_run):
    count, threshold, peak = count_high_potential(scc_run)
    assert count == 0
    assert peak == pytest.approx(49.01, abs=0.05)
    assert threshold == pytest.approx(0.5 * peak)
    bad_count, _, _ = count_high_potential(crossing_run)
    assert bad_count >= 50       # both toll gates are crossed


def test_high_potential_requires_potential(plain_run):
    with pytest.raises(MalformedExportError):
        count_high_potential(plain_run)


def test_cosine_similarities_properties():
    pts = np.random.default_rng(0).standard_normal((300, 2))
    sims = cosine_similarities(pts, n_pairs=2000, style_seed=1)
    assert sims.shape == (2000,)
    assert (sims >= -1.0000001).all() and (sims <= 1.0000001).all()
    again = cosine_similarities(pts, n_pairs=2000, style_seed=1)
    assert np.array_equal(sims, again)
    other = cosine_similarities(pts, n_pairs=2000, style_seed=2)
    assert not np.array_equal(sims, other)


def test_cosine_similarities_polarized_cloud():
    sign = np.where(np.arange(200) % 2 == 0, 1.0, -1.0)
    pts = np.stack([2.0 * sign, 2.0 * sign], axis=1)
    pts += 0.01 * np.random.default_rng(3).standard_normal(pts.shape)
    sims = cosine_similarities(pts, style_seed=0)
    assert np.abs(sims).mean() > 0.99


def test_cosine_needs_two_samples():
    with pytest.raises(MalformedExportError):
        cosine_similarities(np.zeros((1, 2)))


def test_metrics_single_run(scc_run, tmp_path):
    out = render_metrics(scc_run, str(tmp_path / "metrics.png"))
    assert _size(out) > 10_000


def test_metrics_seed_band_and_warmup_groups(tmp_path):
    runs = [make_run_dir(str(tmp_path), seed=s) for s in (1, 2, 3)]
    runs.append(make_run_dir(str(tmp_path), seed=9, warmup_steps=0))
    groups = _group_runs(runs)
    assert set(groups) == {("scc", True), ("scc", False)}
    assert len(groups[("scc", True)]) == 3
    labels = {_group_label(k, list(groups)) for k in groups}
    assert labels == {"scc (warmup)", "scc (no warmup)"}
    out = render_metrics(runs, str(tmp_path / "bands.png"))
    assert _size(out) > 10_000


def test_metrics_empty_input():
    with pytest.raises(MalformedExportError):
        render_metrics([], "x.png")


def test_opinion_histogram(opinion_run, tmp_path):
    out = render_opinion_hist(opinion_run, str(tmp_path / "hist.png"))
    assert _size(out) > 5_000


def test_metrics_adds_histogram_for_opinion(opinion_run, scc_run, tmp_path):
    out = render_metrics([scc_run, opinion_run], str(tmp_path / "mix.png"))
    plain = render_metrics([scc_run], str(tmp_path / "plain.png"))
    # the extra similarity panel widens the figure
    assert _size(out) != _size(plain)
