"""Static figures and summary tables from saved run directories."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..field import load_mesh  # noqa: E402
from ..flow import read_trace_csv  # noqa: E402
from .run import SUMMARY_COLUMNS, read_summary, write_summary  # noqa: E402


def find_runs(root):
    """Run directories under ``root`` (``root`` itself if it holds a trace)."""
    root = Path(root)
    if (root / "trace.csv").exists():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "trace.csv").exists()) if root.is_dir() else []


def _read_calls(path):
    import csv
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k] == "True") if r[k] in ("True", "False") else float(r[k])
                         for r in rows]) for k in (rows[0].keys() if rows else [])}


def plot_history(trace, path, title=""):
    """Adaptive time step and stopping indicator against fictitious time."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(trace["t"], trace["norm_psi"], "o-", ms=2, label=r"$\|\Psi\|$")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|\Psi\|$")
    ax2 = ax.twinx()
    ax2.plot(trace["t"], trace["dt"], "r.", ms=3, label=r"$\Delta t$")
    ax2.set_ylabel(r"$\Delta t$", color="r")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return len(trace["t"])


def plot_monitor(calls, path, title=""):
    """Wall time and CG iterations of every field evaluation."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = np.arange(len(calls.get("wall_s", [])))
    ax.plot(idx, calls.get("wall_s", []), "k-", lw=0.8)
    ax.set_xlabel("call")
    ax.set_ylabel("wall time per call (s)")
    ax2 = ax.twinx()
    ax2.plot(idx, calls.get("cg_iters", []), "b.", ms=3)
    ax2.set_ylabel("CG iterations", color="b")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_layout(mesh, design, path, title=""):
    """Interface and outer boundary of the mesh with the device positions."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for edges, style in ((mesh.hull_edges(), "k-"), (mesh.interface_edges(), "b-")):
        for a, b in edges:
            ax.plot(*mesh.nodes[[a, b]].T, style, lw=1)
    X = np.asarray(design["positions"])
    ax.plot(X[:, 0], X[:, 1], "ro", ms=5)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_controls(design, path, title=""):
    """Bar charts of the per-device damping and stiffness."""
    c = np.asarray(design["damping"])
    k = np.asarray(design["stiffness"])
    idx = np.arange(1, c.size + 1)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3))
    a1.bar(idx, c)
    a1.set_xlabel("device")
    a1.set_ylabel("damping (N s/m)")
    a2.bar(idx, k)
    a2.set_xlabel("device")
    a2.set_ylabel("stiffness (N/m)")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def format_table(rows):
    """Plain-text table with the summary columns."""
    cols = ("run", "status", "f_end", "g_end", "psi_end", "ncalls", "total_call_time_s")
    out = [" | ".join(cols), " | ".join("---" for _ in cols)]
    for r in rows:
        vals = []
        for c in cols:
            v = r[c]
            try:
                fv = float(v)
                vals.append(f"{fv:.4g}" if c not in ("ncalls",) else str(int(fv)))
            except (TypeError, ValueError):
                vals.append(str(v))
        out.append(" | ".join(vals))
    return "\n".join(out) + "\n"


def make_report(root, out_dir=None):
    """Write figures per run and a combined summary; returns the written paths."""
    runs = find_runs(root)
    if not runs:
        raise FileNotFoundError(f"no run traces found under {root}")
    out_dir = Path(out_dir or root)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, rows = [], []
    for run in runs:
        name = run.name
        trace = read_trace_csv(run / "trace.csv")
        p = out_dir / f"{name}-history.png"
        plot_history(trace, p, name)
        written.append(p)
        if (run / "calls.csv").exists():
            p = out_dir / f"{name}-monitor.png"
            plot_monitor(_read_calls(run / "calls.csv"), p, name)
            written.append(p)
        if (run / "design.json").exists():
            design = json.loads((run / "design.json").read_text())
            if (run / "mesh.txt").exists():
                p = out_dir / f"{name}-layout.png"
                plot_layout(load_mesh(run / "mesh.txt"), design, p, name)
                written.append(p)
            p = out_dir / f"{name}-controls.png"
            plot_controls(design, p, name)
            written.append(p)
        if (run / "summary.csv").exists():
            for row in read_summary(run / "summary.csv"):
                row["run"] = name
                rows.append(row)
    if rows:
        write_summary([{k: r.get(k, "") for k in SUMMARY_COLUMNS} for r in rows],
                      out_dir / "summary_all.csv")
        (out_dir / "summary.md").write_text(format_table(rows))
        written += [out_dir / "summary_all.csv", out_dir / "summary.md"]
    return written
