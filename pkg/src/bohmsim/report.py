"""Report generation: tidy per-observable CSV files plus rendered figures.

Reads a persisted run bundle and writes one CSV per observable family with the
fixed headers (norm series, per-time snapshots, trajectory table), then renders
PNG overview figures next to them.
"""
from __future__ import annotations

import csv
import json
import os
from collections import defaultdict

import numpy as np

from .errors import ConfigurationError
from .io_utils import write_csv


def _read_csv(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"bundle is missing {os.path.basename(path)}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def _to_float(cell):
    return np.nan if cell == "" else float(cell)


def load_bundle(bundle_dir):
    """Parse the numeric tables of a bundle directory."""
    meta_path = os.path.join(bundle_dir, "metadata.json")
    if not os.path.exists(meta_path):
        raise ConfigurationError(f"{bundle_dir} is not a run bundle (no metadata.json)")
    with open(meta_path, encoding="utf-8") as fh:
        try:
            metadata = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"corrupt metadata.json: {err}") from err

    header, rows = _read_csv(os.path.join(bundle_dir, "series.csv"))
    if header != ["t", "norm", "survival_norm", "integrated_source"]:
        raise ConfigurationError(f"unexpected series.csv header: {header}")
    series = {name: np.array([_to_float(r[i]) for r in rows])
              for i, name in enumerate(header)}

    header, rows = _read_csv(os.path.join(bundle_dir, "snapshots.csv"))
    expected = ["t", "x", "R", "S", "Q_std", "Q_modified", "q_density", "source"]
    if header != expected:
        raise ConfigurationError(f"unexpected snapshots.csv header: {header}")
    by_time = defaultdict(list)
    for r in rows:
        by_time[r[0]].append([_to_float(c) for c in r[1:]])
    snapshots = {float(t): np.array(vals) for t, vals in by_time.items()}

    trajectories = None
    traj_path = os.path.join(bundle_dir, "trajectories.csv")
    if os.path.exists(traj_path):
        header, rows = _read_csv(traj_path)
        if header != ["particle_id", "t", "x"]:
            raise ConfigurationError(f"unexpected trajectories.csv header: {header}")
        trajectories = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
    return metadata, series, snapshots, trajectories


def _time_tag(t):
    return format(t, ".6g").replace("-", "m").replace(".", "p")


def write_report(bundle_dir, out_dir, render=True):
    """Emit the per-observable CSV files and (optionally) PNG figures."""
    metadata, series, snapshots, trajectories = load_bundle(bundle_dir)
    os.makedirs(out_dir, exist_ok=True)

    write_csv(os.path.join(out_dir, "norm_series.csv"),
              ["t", "norm", "survival_norm", "integrated_source"],
              list(zip(series["t"], series["norm"], series["survival_norm"],
                       series["integrated_source"])))

    snap_paths = []
    for t in sorted(snapshots):
        arr = snapshots[t]
        path = os.path.join(out_dir, f"snapshot_t{_time_tag(t)}.csv")
        write_csv(path, ["x", "R", "S", "Q_std", "Q_modified", "q_density", "source"],
                  [tuple(np.where(np.isnan(row), None, row)) for row in arr])
        snap_paths.append(path)

    if trajectories is not None:
        write_csv(os.path.join(out_dir, "trajectories.csv"),
                  ["particle_id", "t", "x"],
                  [(int(p), t, x) for p, t, x in trajectories])

    if render:
        render_figures(out_dir, metadata, series, snapshots, trajectories)
    return out_dir


def render_figures(out_dir, metadata, series, snapshots, trajectories):
    """PNG overview figures rendered alongside the delimited output."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(series["t"], series["norm"], label="norm")
    axes[0].plot(series["t"], series["survival_norm"], "--", label="survival norm")
    axes[0].set_ylabel("probability")
    axes[0].legend(loc="best", fontsize=9)
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(series["t"], series["integrated_source"], color="tab:red")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("integrated source")
    axes[1].grid(True, alpha=0.3)
    fig.suptitle(f"norm and source series ({metadata.get('mode', '?')} mode)")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "norm_series.png"), dpi=150)
    plt.close(fig)

    t_last = max(snapshots)
    arr = snapshots[t_last]
    x = arr[:, 0]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    axes[0, 0].plot(x, arr[:, 1] ** 2)
    axes[0, 0].set_title(f"density R^2 at t={t_last:g}")
    axes[0, 1].plot(x, arr[:, 2])
    axes[0, 1].set_title("phase action S")
    axes[1, 0].plot(x, arr[:, 3], label="standard")
    axes[1, 0].plot(x, arr[:, 4], "--", label="modified")
    axes[1, 0].set_title("quantum potential")
    axes[1, 0].legend(fontsize=8)
    lim = np.nanpercentile(np.abs(arr[:, 3]), 90) * 3 + 1e-12
    axes[1, 0].set_ylim(-lim, lim)
    axes[1, 1].plot(x, arr[:, 6], color="tab:red")
    axes[1, 1].set_title("continuity source")
    for ax in axes.flat:
        ax.grid(True, alpha=0.3)
        ax.set_xlabel("x")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "snapshot_final.png"), dpi=150)
    plt.close(fig)

    if trajectories is not None and trajectories.size:
        fig, ax = plt.subplots(figsize=(7, 5))
        ids = np.unique(trajectories[:, 0])
        shown = ids[:: max(1, len(ids) // 64)]
        for pid in shown:
            rows = trajectories[trajectories[:, 0] == pid]
            ax.plot(rows[:, 1], rows[:, 2], lw=0.6, alpha=0.7)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.set_title(f"trajectories ({len(shown)} of {len(ids)} shown)")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "trajectories.png"), dpi=150)
        plt.close(fig)
