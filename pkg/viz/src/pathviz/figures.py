"""Figure builders: pushforward panels, metric curves, opinion histograms.

Every builder takes run directories that a finished optimization exported,
renders with a pinned style, and writes one image file. Rendering is
deterministic for identical inputs and style seed (use .png outputs; SVG
embeds volatile metadata).
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import cm, colors  # noqa: E402

from .errors import MalformedExportError  # noqa: E402
from .loader import (load_config, load_controls, load_metrics,  # noqa: E402
                     load_trajectory)
from .potentials import potential_fn  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
}
# time colormap: red at t=0 shading to yellow at t=1
_TIME_CMAP = matplotlib.colormaps["autumn"]
_GRID_RES = 401


def _planar(frame: np.ndarray) -> np.ndarray:
    """First two coordinates; 1-d clouds get a zero second axis."""
    if frame.shape[1] == 1:
        return np.column_stack([frame[:, 0], np.zeros(len(frame))])
    return frame[:, :2]


def _cloud_bbox(frames) -> tuple:
    pts = np.concatenate([_planar(f) for f in frames], axis=0)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.08 * np.maximum(hi - lo, 1e-3)
    return lo - pad, hi + pad


def _potential_grid(V, lo, hi, res: int = _GRID_RES):
    xs = np.linspace(lo[0], hi[0], res)
    ys = np.linspace(lo[1], hi[1], res)
    XX, YY = np.meshgrid(xs, ys)
    ZZ = V(np.stack([XX, YY], axis=-1))
    return XX, YY, ZZ


def _grid_peak(V, lo, hi) -> float:
    """Max of V: coarse grid, then a refinement window around the argmax.

    Narrow compact bumps slip between coarse grid points, so one pass is not
    enough for a trustworthy peak.
    """
    XX, YY, ZZ = _potential_grid(V, lo, hi)
    k = int(np.argmax(ZZ))
    cx = XX.ravel()[k]
    cy = YY.ravel()[k]
    step = np.array([(hi[0] - lo[0]), (hi[1] - lo[1])]) / (_GRID_RES - 1)
    w = 2.0 * step
    _, _, ZZ2 = _potential_grid(V, np.array([cx, cy]) - w, np.array([cx, cy]) + w, res=161)
    return float(max(ZZ.max(), ZZ2.max()))


def _overlay_contours(ax, V, lo, hi):
    XX, YY, ZZ = _potential_grid(V, lo, hi)
    peak = _grid_peak(V, lo, hi)
    if peak <= 0:
        return
    levels = [f * peak for f in (0.1, 0.3, 0.5, 0.7, 0.9)]
    ax.contour(XX, YY, ZZ, levels=levels, colors="dimgray", linewidths=0.8, alpha=0.8)


def _scatter_frames(ax, times, frames, rng, max_points: int):
    norm = colors.Normalize(vmin=0.0, vmax=1.0)
    for t, frame in zip(times, frames):
        pts = _planar(frame)
        if len(pts) > max_points:
            pts = pts[rng.choice(len(pts), max_points, replace=False)]
        ax.scatter(pts[:, 0], pts[:, 1], s=3, color=_TIME_CMAP(norm(t)),
                   edgecolors="none", alpha=0.7, rasterized=True)
    ax.set_aspect("equal", adjustable="datalim")
    return cm.ScalarMappable(norm=norm, cmap=_TIME_CMAP)


def render_path_panels(run_dir: str, out_path: str, style_seed: int = 0,
                       max_points: int = 400) -> str:
    """Two scatter panels: the cloud at control times and on the export grid.

    Obstacle contours come from the config snapshot's potential id (planar
    potentials only; higher-dimensional clouds are projected onto x1/x2
    without contours).
    """
    cfg = load_config(run_dir)
    controls = load_controls(run_dir)
    traj = load_trajectory(run_dir)
    V = potential_fn(cfg["action"].get("potential_id"))
    rng = np.random.default_rng(style_seed)

    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(11.0, 5.0))
        lo, hi = _cloud_bbox(list(controls.frames) + list(traj.frames))
        mappable = _scatter_frames(axes[0], controls.times, controls.frames, rng, max_points)
        _scatter_frames(axes[1], traj.times, traj.frames, rng, max_points)
        if V is not None and traj.d == 2:
            for ax in axes:
                _overlay_contours(ax, V, lo, hi)
        axes[0].set_title(f"control points ({len(controls.times)} times)")
        axes[1].set_title(f"path ({len(traj.times)} times)")
        name = cfg["problem"].get("name", "run")
        fig.suptitle(f"{name}: pushforward along the optimized path")
        fig.colorbar(mappable, ax=axes, label="time", fraction=0.03)
        fig.savefig(out_path)
        plt.close(fig)
    return out_path


def count_high_potential(run_dir: str, frac: float = 0.5) -> tuple:
    """Exported trajectory points sitting above frac of the potential's peak.

    Returns (count, threshold, peak); peak is taken on a dense grid covering
    the exported cloud and the obstacle supports.
    """
    cfg = load_config(run_dir)
    pid = cfg["action"].get("potential_id")
    V = potential_fn(pid)
    if V is None:
        raise MalformedExportError(f"run dir {run_dir!r} has no potential to check")
    traj = load_trajectory(run_dir)
    if traj.d != 2:
        raise MalformedExportError(f"potential {pid!r} is planar; run has d={traj.d}")
    lo, hi = _cloud_bbox(traj.frames)
    # obstacle supports can sit outside the cloud's box; widen for the peak
    lo = np.minimum(lo, [-15.0, -15.0])
    hi = np.maximum(hi, [15.0, 15.0])
    peak = _grid_peak(V, lo, hi)
    threshold = frac * peak
    vals = V(traj.stacked())
    return int((vals > threshold).sum()), threshold, peak


def cosine_similarities(points: np.ndarray, n_pairs: int = 2000,
                        style_seed: int = 0) -> np.ndarray:
    """Cosine similarity for n_pairs random distinct sample pairs."""
    n = len(points)
    if n < 2:
        raise MalformedExportError("need at least two samples for pair similarity")
    rng = np.random.default_rng(style_seed)
    i = rng.integers(0, n, n_pairs)
    j = rng.integers(0, n - 1, n_pairs)
    j = j + (j >= i)
    a, b = points[i], points[j]
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return (a * b).sum(axis=1) / np.maximum(norms, 1e-12)


def _hist_panel(ax, terminal: np.ndarray, style_seed: int):
    sims = cosine_similarities(terminal, style_seed=style_seed)
    ax.hist(sims, bins=41, range=(-1.0, 1.0), color="tab:purple", alpha=0.8)
    ax.set_xlabel("cosine similarity of terminal pairs")
    ax.set_ylabel("pairs")
    ax.set_title("directional similarity")


def render_opinion_hist(run_dir: str, out_path: str, n_pairs: int = 2000,
                        style_seed: int = 0) -> str:
    """Histogram of pairwise cosine similarities at the terminal time."""
    traj = load_trajectory(run_dir)
    cfg = load_config(run_dir)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        sims = cosine_similarities(traj.terminal(), n_pairs, style_seed)
        ax.hist(sims, bins=41, range=(-1.0, 1.0), color="tab:purple", alpha=0.8)
        ax.set_xlabel("cosine similarity of terminal pairs")
        ax.set_ylabel("pairs")
        ax.set_title(f"{cfg['problem'].get('name', 'run')}: directional similarity")
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return out_path


_POTENTIAL_COLS = ("linear", "entropy", "interaction", "fisher")


def _group_runs(run_dirs):
    """Group runs for overlays: same problem and same warmup on/off setting."""
    groups = {}
    for rd in run_dirs:
        cfg = load_config(rd)
        warm = cfg.get("optim", {}).get("warmup_steps", 0) > 0
        key = (cfg["problem"].get("name", "run"), warm)
        groups.setdefault(key, []).append((rd, cfg, load_metrics(rd)))
    return dict(sorted(groups.items()))


def _group_label(key, keys) -> str:
    name, warm = key
    if len({k[1] for k in keys if k[0] == name}) > 1:
        return f"{name} ({'warmup' if warm else 'no warmup'})"
    return name


def _plot_group(ax, dfs, column, color, label):
    """One line per run; >= 2 runs get a mean line with a min/max band."""
    if len(dfs) == 1:
        ax.plot(dfs[0]["epoch"], dfs[0][column], color=color, label=label)
        return
    epochs = dfs[0]["epoch"].to_numpy()
    for df in dfs[1:]:
        n = min(len(epochs), len(df))
        epochs = epochs[:n]
    stack = np.stack([df[column].to_numpy()[: len(epochs)] for df in dfs])
    ax.fill_between(epochs, stack.min(axis=0), stack.max(axis=0), color=color, alpha=0.2)
    ax.plot(epochs, stack.mean(axis=0), color=color, label=f"{label} (n={len(dfs)})")


def render_metrics(run_dirs, out_path: str, style_seed: int = 0) -> str:
    """Action / kinetic / potential / boundary-W2 curves, overlaid per group.

    Runs of one problem at several seeds collapse into a mean line with a
    min/max band; warmup and no-warmup variants stay separate groups. A run
    in drift-mismatch kinetic mode adds a terminal-similarity histogram.
    """
    if isinstance(run_dirs, (str, os.PathLike)):
        run_dirs = [run_dirs]
    if not run_dirs:
        raise MalformedExportError("render_metrics needs at least one run dir")
    groups = _group_runs(run_dirs)

    opinion_run = None
    for rd in run_dirs:
        if load_config(rd)["action"].get("kinetic_mode") == "drift_mismatch":
            opinion_run = rd
            break

    n_panels = 5 if opinion_run is not None else 4
    with plt.rc_context(_STYLE):
        if n_panels == 4:
            fig, axs = plt.subplots(2, 2, figsize=(10.0, 7.0))
        else:
            fig, axs = plt.subplots(2, 3, figsize=(14.0, 7.0))
        axes = axs.ravel()
        palette = plt.get_cmap("tab10")
        for gi, (key, runs) in enumerate(groups.items()):
            dfs = [df.copy() for _, _, df in runs]
            for df in dfs:
                df["potential"] = sum(df[c] for c in _POTENTIAL_COLS if c in df)
                df["w2_mean"] = 0.5 * (df["w2_boundary0"] + df["w2_boundary1"])
            color = palette(gi % 10)
            label = _group_label(key, list(groups))
            for ax, col in zip(axes, ("total", "kinetic", "potential", "w2_mean")):
                _plot_group(ax, dfs, col, color, label)
        titles = ("total action", "kinetic", "potential terms", "boundary W2 (mean)")
        for ax, title in zip(axes, titles):
            ax.set_title(title)
            ax.set_xlabel("epoch")
            ax.legend(fontsize=7)
        if opinion_run is not None:
            _hist_panel(axes[4], load_trajectory(opinion_run).terminal(), style_seed)
            for extra in axes[5:]:
                extra.set_axis_off()
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return out_path
