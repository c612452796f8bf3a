"""Render the three standard figure layouts from simulation output files.

This package consumes the CSV and JSON artifacts written by the rydosc
command line tool and only draws them; it never recomputes physics. A
figure is described by a small JSON spec:

    {"layout": "fig1", "inputs": {"coherent": "runs/c/coherent.csv"},
     "output": "fig1.png"}

Layouts:
    fig1 - oscillator excitations and negativity against time, with the
           closed-form / effective-model overlays when present.
    fig2 - per-site Rydberg populations and the negativity trace of one
           trajectory, plus a final-negativity histogram with the ensemble
           average marked by a vertical dashed line.
    fig3 - average final negativity against the lower decay rate on a
           logarithmic axis, with the fitted curve overlaid when given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

LAYOUTS = ("fig1", "fig2", "fig3")


class RenderError(RuntimeError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    layout: str
    inputs: dict = field(default_factory=dict)
    output: str = "figure.png"

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise RenderError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if not isinstance(self.inputs, dict):
            raise RenderError("spec inputs must be a mapping of role -> path")


def load_spec(path) -> FigureSpec:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"spec file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RenderError(f"spec file {path} is not valid JSON: {exc}") from exc
    unknown = set(raw) - {"layout", "inputs", "output"}
    if unknown:
        raise RenderError(f"unknown spec keys: {sorted(unknown)}")
    if "layout" not in raw:
        raise RenderError(f"spec file {path} is missing the layout key")
    return FigureSpec(layout=raw["layout"], inputs=raw.get("inputs", {}),
                      output=raw.get("output", "figure.png"))


def read_table(path) -> dict[str, np.ndarray]:
    """CSV -> column arrays; empty cells become NaN."""
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise RenderError(f"input file {path} has no header row")
        columns = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in columns:
                cell = row.get(name, "")
                if cell in ("", None):
                    columns[name].append(np.nan)
                    continue
                try:
                    columns[name].append(float(cell))
                except ValueError:
                    # non-numeric columns (e.g. labels) are not plotted
                    columns[name].append(np.nan)
    return {name: np.asarray(vals) for name, vals in columns.items()}


def require_columns(table: dict, needed, path) -> None:
    missing = [c for c in needed if c not in table]
    if missing:
        raise RenderError(f"{path}: missing column(s) {', '.join(missing)}")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input file not found: {path}")
    return json.loads(path.read_text())


def _input_path(spec: FigureSpec, role: str, required: bool = True):
    if role not in spec.inputs:
        if required:
            raise RenderError(f"layout {spec.layout} needs an input named {role!r}")
        return None
    return spec.inputs[role]


# ---------------------------------------------------------------------------
# layouts


def _render_fig1(spec: FigureSpec, fig) -> dict:
    path = _input_path(spec, "coherent")
    table = read_table(path)
    require_columns(table, ("time", "n_a", "n_b", "negativity"), path)
    ax_n, ax_neg = fig.subplots(2, 1, sharex=True)
    t = table["time"]
    ax_n.plot(t, table["n_a"], label=r"$\langle a^\dagger a\rangle$", color="C0")
    ax_n.plot(t, table["n_b"], label=r"$\langle b^\dagger b\rangle$", color="C1")
    ax_neg.plot(t, table["negativity"], label="negativity", color="C3")
    overlays = 0
    for column, ax, color in (
        ("n_a_analytic", ax_n, "C0"),
        ("n_b_analytic", ax_n, "C1"),
        ("negativity_analytic", ax_neg, "C3"),
        ("n_a_effective", ax_n, "C0"),
        ("n_b_effective", ax_n, "C1"),
        ("negativity_effective", ax_neg, "C3"),
    ):
        if column in table:
            style = "--" if column.endswith("_analytic") else ":"
            ax.plot(t, table[column], style, color=color, alpha=0.7, label=column)
            overlays += 1
    ax_n.set_ylabel("oscillator excitations")
    ax_neg.set_ylabel(r"$\mathcal{N}$")
    ax_neg.set_xlabel("time (1/J)")
    ax_n.legend(fontsize=7, ncols=2)
    ax_neg.legend(fontsize=7)
    return {"overlays": overlays, "points": len(t)}


def _render_fig2(spec: FigureSpec, fig) -> dict:
    traj_path = _input_path(spec, "trajectory")
    table = read_table(traj_path)
    require_columns(table, ("time", "n_a", "n_b", "negativity"), traj_path)
    sites = sorted(
        (c for c in table if c.startswith("p_up_")),
        key=lambda c: int(c.rsplit("_", 1)[1]),
    )
    if not sites:
        raise RenderError(f"{traj_path}: missing column(s) p_up_*")
    summary = read_json(_input_path(spec, "summary"))

    ax_strip, ax_neg, ax_hist = fig.subplots(3, 1)
    t = table["time"]
    for offset, column in enumerate(sites):
        ax_strip.plot(t, table[column] + offset, lw=0.9)
    ax_strip.set_yticks(
        range(len(sites)), [f"site {c.rsplit('_', 1)[1]}" for c in sites]
    )
    ax_strip.set_ylabel(r"$\langle P_\uparrow^{(i)}\rangle$ (offset)")

    ax_neg.plot(t, table["negativity"], color="C3")
    events_path = _input_path(spec, "events", required=False)
    n_events = 0
    if events_path:
        events = read_table(events_path)
        require_columns(events, ("time",), events_path)
        for jump_time in events["time"]:
            ax_neg.axvline(jump_time, color="0.7", lw=0.6, zorder=0)
        n_events = len(events["time"])
    ax_neg.set_ylabel(r"$\mathcal{N}$")
    ax_neg.set_xlabel("time (1/J)")

    avg_marker = _draw_histogram(ax_hist, summary)
    ax_hist.set_xlabel(r"final $\mathcal{N}$")
    ax_hist.set_ylabel("probability")
    return {"sites": len(sites), "events": n_events, "avg_marker": avg_marker}


def _draw_histogram(ax, summary: dict) -> float | None:
    """Probability histogram with a dashed line at the recorded average.

    Returns the marker position, or None for an empty selection (drawn as
    an annotation instead of bars).
    """
    if summary.get("n_trajectories", 0) == 0 or "histogram" not in summary:
        ax.annotate("no accepted trajectories", xy=(0.5, 0.5),
                    xycoords="axes fraction", ha="center", va="center")
        return None
    hist = summary["histogram"]
    edges = np.asarray(hist["edges"], dtype=float)
    probs = np.asarray(hist["probabilities"], dtype=float)
    if len(edges) != len(probs) + 1:
        raise RenderError("histogram edges/probabilities lengths are inconsistent")
    ax.bar(edges[:-1], probs, width=np.diff(edges), align="edge",
           color="C0", alpha=0.7, edgecolor="white")
    avg = summary.get("avg_negativity")
    if avg is not None:
        ax.axvline(avg, color="k", ls="--", lw=1.2)
    return avg


def _read_fit_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input file not found: {path}")
    values = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    for key in ("amplitude", "location", "width"):
        if key not in values:
            raise RenderError(f"{path}: missing fit parameter {key}")
    return values


def _render_fig3(spec: FigureSpec, fig) -> dict:
    scans = _input_path(spec, "scan")
    if isinstance(scans, (str, Path)):
        scans = [scans]
    fits = spec.inputs.get("fit", [])
    if isinstance(fits, (str, Path)):
        fits = [fits]

    ax = fig.subplots()
    drawn = 0
    for i, path in enumerate(scans):
        table = read_table(path)
        require_columns(table, ("gamma_down", "n_avg"), path)
        gamma = table["gamma_down"]
        avg = table["n_avg"]
        err = table.get("stderr", np.full_like(avg, np.nan))
        mask = np.isfinite(avg)
        if not mask.any():
            ax.annotate("no accepted trajectories", xy=(0.5, 0.5 - 0.1 * i),
                        xycoords="axes fraction", ha="center", va="center")
            continue
        yerr = np.where(np.isfinite(err[mask]), err[mask], 0.0)
        ax.errorbar(gamma[mask], avg[mask], yerr=yerr, fmt="o", ms=4,
                    color=f"C{i}", label=Path(path).stem)
        drawn += 1
    for i, path in enumerate(fits):
        params = _read_fit_file(path)
        amp = float(params["amplitude"])
        loc = float(params["location"])
        wid = float(params["width"])
        finite = [read_table(p)["gamma_down"] for p in scans]
        lo = min(g[np.isfinite(g)].min() for g in finite)
        hi = max(g[np.isfinite(g)].max() for g in finite)
        grid = np.logspace(np.log10(lo), np.log10(hi), 200)
        curve = (amp / grid) * np.exp(-((np.log(grid) - loc) ** 2) / (2 * wid**2))
        ax.plot(grid, curve, "-", color=f"C{i}", alpha=0.8, lw=1.0)
    ax.set_xscale("log")
    ax.set_xlabel(r"$\gamma_\downarrow$ (J)")
    ax.set_ylabel(r"$\mathcal{N}_\mathrm{avg}$")
    if drawn:
        ax.legend(fontsize=7)
    return {"scans_drawn": drawn, "fits_drawn": len(fits)}


_RENDERERS = {"fig1": _render_fig1, "fig2": _render_fig2, "fig3": _render_fig3}


def render(spec: FigureSpec, out=None) -> tuple[Path, dict]:
    """Draw the layout and write the image; returns (path, drawn metadata)."""
    out_path = Path(out) if out is not None else Path(spec.output)
    fig = plt.figure(figsize=(5.0, 6.0) if spec.layout != "fig3" else (5.0, 3.5))
    try:
        meta = _RENDERERS[spec.layout](spec, fig)
        fig.tight_layout()
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, dpi=150)
    finally:
        plt.close(fig)
    return out_path, meta


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rydosc-figures",
        description="render figure layouts from simulation CSV/JSON outputs",
    )
    parser.add_argument("--spec", required=True, help="figure spec JSON path")
    parser.add_argument("--out", help="output image path (overrides the spec)")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        out_path, _ = render(spec, args.out)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
