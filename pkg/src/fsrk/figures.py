"""Matplotlib rendering of report artifacts to PNG files.

Every entry point takes data already computed by an owning module and
writes exactly one file; nothing here recomputes, searches, or decides.
The Agg backend is forced so the CLI works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stability import contour_segments, origin_component

MAG_CAP = 10.0  # color scale cap; |R| beyond this is "very unstable"


def save_region_png(r, path, title=""):
    """Render a RegionRaster: |R| field, |R| = 1 contour, shaded
    origin-connected stable component, pole cells hatched red."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=144)
    capped = np.minimum(r.magnitude, MAG_CAP)
    pc = ax.pcolormesh(
        r.xs, r.ys, capped.T, cmap="viridis", vmin=0.0, vmax=MAG_CAP, shading="auto"
    )
    fig.colorbar(pc, ax=ax, label=f"|R| (capped at {MAG_CAP:g})")

    comp = origin_component(r)
    if comp.any():
        shade = np.where(comp.T, 1.0, np.nan)
        ax.pcolormesh(
            r.xs, r.ys, shade, cmap="Greys", vmin=0.0, vmax=4.0,
            alpha=0.35, shading="auto",
        )
    for (xa, ya), (xb, yb) in contour_segments(r, level=1.0):
        ax.plot([xa, xb], [ya, yb], color="white", lw=1.2)
    if r.pole.any():
        pi, pj = np.nonzero(r.pole)
        ax.plot(r.xs[pi], r.ys[pj], "x", color="red", ms=4, mew=1.0)

    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.axvline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel(r"Re $z$  ($\lambda^{[R]}\Delta t$ units)")
    ax.set_ylabel(r"Im $z$")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_xhat_png(rows, path, title=""):
    """Bar chart of |xhat| per (label, xhat) row; xhat = None means
    stable through the scan depth and is drawn as an annotated gap."""
    labels = [lab for lab, _ in rows]
    fig, ax = plt.subplots(figsize=(6.4, 0.8 + 0.5 * len(rows)), dpi=144)
    ypos = np.arange(len(rows))
    for y, (_, xh) in zip(ypos, rows):
        if xh is None:
            ax.text(0.02, y, "stable to scan depth", va="center", fontsize=9)
        else:
            ax.barh(y, abs(xh), color="#1f77b4")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel(r"$|\hat{x}|$  ($\lambda^{[R]}\Delta t$ units)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_dt_star_png(rows, path, title=""):
    """Bar chart of the largest stable step per (label, dt_star) row;
    dt_star = None (bracket failure) is drawn as an annotated gap."""
    labels = [lab for lab, _ in rows]
    fig, ax = plt.subplots(figsize=(6.4, 0.8 + 0.5 * len(rows)), dpi=144)
    ypos = np.arange(len(rows))
    for y, (_, dt) in zip(ypos, rows):
        if dt is None:
            ax.text(0.02, y, "no stable step in bracket", va="center", fontsize=9)
        else:
            ax.barh(y, dt, color="#2ca02c")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("largest stable step (problem time units)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_trace_png(times, series, labels, path, title="", ylabel="value"):
    """Line plot of one or more sampled time series."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=144)
    for values, lab in zip(series, labels):
        ax.plot(times, values, lw=1.2, label=lab)
    ax.set_xlabel("t (problem time units)")
    ax.set_ylabel(ylabel)
    if labels:
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
