#!/usr/bin/env python3
"""Render figures from the primary CLI's CSV/JSON outputs.

Kinds (all inputs are files produced by the ``twopatch`` CLI):

* growth-curves:        one growth tabulation CSV -> two panels, growth rate
                        and best removal rate against concentration.
* phase-portrait:       one or more trajectory CSVs -> (s1, s2) plane with
                        the homogenization diagonal and the target square.
* level-sets:           one or more value-grid CSVs (with their JSON
                        sidecars) -> labeled contour plots, side by side.
* trajectory-controls:  one trajectory CSV -> stacked time histories of the
                        concentrations, the flow split, and the setpoint.
* full-vs-reduced:      full-model trajectory CSVs (one per epsilon, plus
                        optionally a reduced one) -> total pollutant
                        concentration against time.

The scripts never recompute model quantities; they render what the primary
component wrote.  Schema violations exit with code 2 and column diagnostics.
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from schemas import (
    FULL_TRAJECTORY_COLUMNS,
    GRID_COLUMNS,
    GROWTH_COLUMNS,
    TRAJECTORY_COLUMNS,
    SchemaError,
    die,
    read_json,
    read_table,
)


def plot_growth_curves(paths, args):
    tab = read_table(paths[0], GROWTH_COLUMNS)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(tab["sigma"], tab["mu"], color="tab:blue")
    ax1.set_xlabel("s [g/L]")
    ax1.set_ylabel("growth rate [1/h]")
    ax2.plot(tab["sigma"], tab["rate"], color="tab:red")
    ax2.set_xlabel("concentration [g/L]")
    ax2.set_ylabel("best removal rate [g/L/h]")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def _load_trajectory(path):
    return read_table(path, TRAJECTORY_COLUMNS, allow_extra_schema=FULL_TRAJECTORY_COLUMNS)


def plot_phase_portrait(paths, args):
    fig, ax = plt.subplots(figsize=(5.2, 5.0))
    hi = 0.0
    for path in paths:
        tab = _load_trajectory(path)
        s1, s2 = np.array(tab["s1"]), np.array(tab["s2"])
        hi = max(hi, s1.max(), s2.max())
        ax.plot(s1, s2, lw=1.4, label=path.rsplit("/", 1)[-1])
        ax.plot(s1[0], s2[0], "ko", ms=4)
    hi = 1.05 * max(hi, args.s_bar)
    ax.plot([0, hi], [0, hi], "k--", lw=0.8, alpha=0.6)
    ax.add_patch(
        plt.Rectangle((0, 0), args.s_bar, args.s_bar, facecolor="tab:green", alpha=0.25, edgecolor="k")
    )
    ax.set_xlim(0, hi)
    ax.set_ylim(0, hi)
    ax.set_xlabel("s1 [g/L]")
    ax.set_ylabel("s2 [g/L]")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def plot_level_sets(paths, args):
    fig, axes = plt.subplots(1, len(paths), figsize=(5.2 * len(paths), 4.4), squeeze=False)
    for ax, path in zip(axes[0], paths):
        tab = read_table(path, GRID_COLUMNS)
        meta = read_json(path[:-4] + ".json", required_keys=("resolution", "which"))
        n1, n2 = meta["resolution"]
        s1 = np.array(tab["s1"]).reshape(n1, n2)
        s2 = np.array(tab["s2"]).reshape(n1, n2)
        vals = np.array(tab["value"]).reshape(n1, n2)
        cs = ax.contour(s1, s2, vals, levels=10)
        ax.clabel(cs, fontsize=7, fmt="%.1f")
        sb = meta.get("s_bar")
        if sb:
            ax.add_patch(plt.Rectangle((0, 0), sb, sb, facecolor="tab:green", alpha=0.25, edgecolor="k"))
        ax.set_title(f"{meta['which']} (hours)")
        ax.set_xlabel("s1 [g/L]")
        ax.set_ylabel("s2 [g/L]")
    fig.tight_layout()
    return fig


def plot_trajectory_controls(paths, args):
    tab = _load_trajectory(paths[0])
    t = np.array(tab["t"])
    fig, (ax1, ax2, ax3) = plt.subplots(3, 1, figsize=(6.4, 7.0), sharex=True)
    ax1.plot(t, tab["s1"], label="s1")
    ax1.plot(t, tab["s2"], label="s2")
    ax1.axhline(args.s_bar, color="k", ls=":", lw=0.8)
    ax1.set_ylabel("concentration [g/L]")
    ax1.legend(fontsize=8)
    ax2.step(t, tab["alpha"], where="post", color="tab:purple")
    ax2.set_ylabel("flow split")
    ax2.set_ylim(-0.05, 1.05)
    ax3.plot(t, tab["sr_star"], color="tab:orange")
    ax3.set_ylabel("setpoint [g/L]")
    ax3.set_xlabel("t [h]")
    for ax in (ax1, ax2, ax3):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def plot_full_vs_reduced(paths, args):
    fig, ax = plt.subplots(figsize=(6.2, 4.2))
    for path in paths:
        tab = _load_trajectory(path)
        total = args.r * np.array(tab["s1"]) + (1.0 - args.r) * np.array(tab["s2"])
        ax.plot(tab["t"], total, label=path.rsplit("/", 1)[-1])
    ax.axhline(args.s_bar, color="k", ls=":", lw=0.8)
    ax.set_xlabel("t [h, slow time]")
    ax.set_ylabel("total pollutant concentration [g/L]")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


KINDS = {
    "growth-curves": plot_growth_curves,
    "phase-portrait": plot_phase_portrait,
    "level-sets": plot_level_sets,
    "trajectory-controls": plot_trajectory_controls,
    "full-vs-reduced": plot_full_vs_reduced,
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=sorted(KINDS), required=True)
    ap.add_argument("--in", dest="inputs", action="append", required=True, metavar="FILE")
    ap.add_argument("--out", required=True, help="output image path (png/pdf/svg)")
    ap.add_argument("--s-bar", type=float, default=1.0, help="target threshold for overlays")
    ap.add_argument("--r", type=float, default=0.3, help="patch-1 volume fraction for totals")
    args = ap.parse_args(argv)
    try:
        fig = KINDS[args.kind](args.inputs, args)
    except SchemaError as exc:
        die(exc)
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
