#!/usr/bin/env python3
"""plotting

Static images from an episode bundle.

Every image is a pure function of the bundle files, drawn with the
non-interactive Agg backend.
"""
import os, glob, logging

import numpy as np
import yaml
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mgprl.harness import read_metrics_csv, write_csv
from mgprl.exceptions import EmptyBundleError

log = logging.getLogger(__name__)

CURVE_METRICS = ("ale_ap", "ale_r", "rmse", "uncertainty")
CURVE_LABELS = {
    "ale_ap": "AP localization error (m)",
    "ale_r": "relative robot error (m)",
    "rmse": "field RMSE (dB)",
    "uncertainty": "mean predictive std (dB)",
}
PNG_METADATA = {"Software": None}


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_" else "-" for c in str(name))


def load_bundle(bundle_dir):
    """Reads what the plots need from a bundle.

    Returns:
        dict. ``metrics`` rows, the last ``fields`` snapshot per robot and ``hulls``.

    Raises:
        EmptyBundleError: missing directory, metrics or field snapshots.
    """
    metrics_path = os.path.join(bundle_dir, "metrics.csv")
    if not os.path.isfile(metrics_path):
        raise EmptyBundleError("{0} holds no metrics.csv".format(bundle_dir))
    metrics = read_metrics_csv(metrics_path)
    if not metrics:
        raise EmptyBundleError("{0} has an empty metrics.csv".format(bundle_dir))
    snapshots = {}
    for path in sorted(glob.glob(os.path.join(bundle_dir, "fields", "cycle_*_*.npz"))):
        cycle, robot = os.path.basename(path)[len("cycle_"):-len(".npz")].split("_", 1)
        snapshots[robot] = (int(cycle), path)
    if not snapshots:
        raise EmptyBundleError("{0} holds no field snapshots".format(bundle_dir))
    fields = {}
    for robot, (cycle, path) in sorted(snapshots.items()):
        with np.load(path) as data:
            fields[robot] = {key: data[key] for key in data.files}
            fields[robot]["cycle"] = cycle
    hulls = []
    hull_path = os.path.join(bundle_dir, "hulls.yml")
    if os.path.isfile(hull_path):
        with open(hull_path) as f:
            hulls = yaml.safe_load(f) or []
    return {"metrics": metrics, "fields": fields, "hulls": hulls}


def _extent(snapshot):
    ox, oy = snapshot["origin"]
    cell = float(snapshot["cell_size"])
    w, h = snapshot["mean"].shape[1:]
    return (ox, ox + w * cell, oy, oy + h * cell)


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_field(snapshot, index, path):
    """Mean and variance heatmaps of one AP, in the robot's own frame."""
    ap_id = str(snapshot["ap_ids"][index])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, values, title, cmap in ((ax1, snapshot["mean"][index], "mean RSSI (dBm)", "viridis"),
                                    (ax2, snapshot["var"][index], "variance (dB^2)", "magma")):
        im = ax.imshow(values.T, origin="lower", extent=_extent(snapshot), cmap=cmap, aspect="equal")
        ax.set_title("{0}: {1}".format(ap_id, title))
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_fused(snapshot, robot, path):
    """Per-cell maximum of the AP mean fields. For display only."""
    fused = np.max(snapshot["mean"], axis=0)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(fused.T, origin="lower", extent=_extent(snapshot), cmap="viridis", aspect="equal")
    ax.set_title("{0}: fused RSSI field (max over APs)".format(robot))
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_hulls(records, robot, path):
    """Reference robot's AP hull with every neighbor's hull mapped into its frame."""
    fig, ax = plt.subplots(figsize=(6, 6))
    own = np.asarray(records[0]["hull_a"], dtype=float)
    closed = np.vstack([own, own[:1]])
    ax.plot(closed[:, 0], closed[:, 1], "k-o", label="{0} estimates".format(robot))
    for rec in records:
        hull = np.asarray(rec["hull_b_aligned"], dtype=float)
        closed = np.vstack([hull, hull[:1]])
        style = "--" if rec["accepted"] else ":"
        ax.plot(closed[:, 0], closed[:, 1], style, marker="x",
                label="{0} aligned{1}".format(rec["robot_b"], "" if rec["accepted"] else " (rejected)"))
    ax.set_aspect("equal")
    ax.set_title("AP hulls in {0}'s frame".format(robot))
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def curve_rows(metrics):
    """Per-cycle means of the curve metrics over successful rows."""
    cycles = sorted(set(r["cycle"] for r in metrics))
    rows = []
    for cycle in cycles:
        group = [r for r in metrics if r["cycle"] == cycle and not r["error"]]
        row = {"cycle": cycle, "samples": float(np.mean([r["samples"] for r in group])) if group else float("nan")}
        for metric in CURVE_METRICS:
            vals = [r[metric] for r in group if np.isfinite(r[metric])]
            row[metric] = float(np.mean(vals)) if vals else float("nan")
        rows.append(row)
    return rows


def plot_curves(rows, path):
    """Metric curves against the mean number of sampled waypoints."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    x = [r["samples"] for r in rows]
    for ax, metric in zip(axes.ravel(), CURVE_METRICS):
        ax.plot(x, [r[metric] for r in rows], "o-")
        ax.set_xlabel("samples per robot")
        ax.set_ylabel(CURVE_LABELS[metric])
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_bundle(bundle_dir, out_dir=None):
    """Draws every image for a bundle.

    Inputs are fully loaded and checked before anything is written, so an
    empty or broken bundle leaves no partial files.

    Args:
        bundle_dir (str): bundle written by a run.
        out_dir (str): image directory, defaults to ``<bundle>/plots``.

    Returns:
        list. Paths of the written files.

    Raises:
        EmptyBundleError: the bundle has nothing to plot.
    """
    bundle = load_bundle(bundle_dir)
    out_dir = out_dir or os.path.join(bundle_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for robot, snapshot in bundle["fields"].items():
        for index, ap_id in enumerate(snapshot["ap_ids"]):
            name = "field_{0}_{1}.png".format(_safe(robot), _safe(ap_id))
            written.append(plot_field(snapshot, index, os.path.join(out_dir, name)))
        written.append(plot_fused(snapshot, robot, os.path.join(out_dir, "fused_{0}.png".format(_safe(robot)))))
    by_reference = {}
    for rec in bundle["hulls"]:
        by_reference.setdefault(rec["robot_a"], []).append(rec)
    for robot, records in sorted(by_reference.items()):
        written.append(plot_hulls(records, robot, os.path.join(out_dir, "hulls_{0}.png".format(_safe(robot)))))
    rows = curve_rows(bundle["metrics"])
    columns = ["cycle", "samples"] + list(CURVE_METRICS)
    curves_csv = os.path.join(out_dir, "curves.csv")
    write_csv(curves_csv, columns, [["{0}".format(r[c]) for c in columns] for r in rows])
    written.append(curves_csv)
    written.append(plot_curves(rows, os.path.join(out_dir, "curves.png")))
    log.info("Wrote {0} plot files to {1}".format(len(written), out_dir))
    return written
