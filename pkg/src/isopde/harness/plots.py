"""Static SVG plots of an experiment record (matplotlib, Agg backend)."""

from __future__ import annotations

import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import ExperimentRecord, atomic_write, loglog_slope  # noqa: E402

# fixed ids and no timestamp keep the SVG text reproducible
matplotlib.rcParams["svg.hashsalt"] = "isopde"
SVG_METADATA = {"Date": None}


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return path


def _finite(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None and x > 0 and y > 0]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_profile(series, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(series["r"], series["u"], "k.-", ms=3)
    ax.set_xlabel("r")
    ax.set_ylabel("leaf average of u")
    ax.set_title("radial profile")
    fig.tight_layout()
    return _save(fig, path)


def plot_loglog(series, path, ylabel):
    h, v = _finite(series["h"], series["values"])
    slope = loglog_slope(h, v)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(h, v, "o-", label=series.get("label", ylabel))
    if series.get("reference") == "10 h^2":
        hh = np.array(h)
        ax.loglog(hh, 10 * hh**2, "k--", lw=0.8, label="10 h^2")
    ax.set_xlabel("h")
    ax.set_ylabel(ylabel)
    ax.set_title(f"least-squares slope {slope:.3f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_lambda1(series, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(series["h"], series["values"], "s-")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("h")
    ax.set_ylabel("lambda1(-L)")
    fig.tight_layout()
    return _save(fig, path)


def plot_threshold(series, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(series["r"], series["theta"], label="theta(s)")
    ax.plot(series["r"], series["phi"], label="phi(t)")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("r")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(record: ExperimentRecord, out_dir) -> list[str]:
    """Write ``<name>.<kind>.svg`` files and return their paths.

    A missing or empty convergence series is skipped with a note in the record.
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, record.name)
    s = record.series
    out = []
    if s.get("profile"):
        out.append(plot_profile(s["profile"], f"{stem}.profile.svg"))
    conv = s.get("convergence")
    if conv and len(_finite(conv["h"], conv["values"])[0]) >= 2:
        out.append(plot_loglog(conv, f"{stem}.convergence.svg", conv.get("label", "defect")))
    else:
        record.notes.append("defect series empty (all values zero or missing): slope plot omitted")
    for key, val in sorted(s.items()):
        if key.startswith("residual_") and len(_finite(val["h"], val["values"])[0]) >= 2:
            out.append(plot_loglog(dict(val, label=key), f"{stem}.{key}.svg", "residual"))
    if s.get("lambda1") and any(v is not None for v in s["lambda1"]["values"]):
        out.append(plot_lambda1(s["lambda1"], f"{stem}.lambda1.svg"))
    if s.get("threshold"):
        out.append(plot_threshold(s["threshold"], f"{stem}.threshold.svg"))
    return out
