"""PNG figures drawn from the CSVs of finished runs.

Only the files on disk are read, so figures can be regenerated for any
output directory without rerunning the simulation.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURES_DIR = "figures"
COLORS = {"CPU": "tab:orange", "GPU": "tab:green", "AUTO": "tab:blue"}

plt.rcParams.update({
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def _read(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _column(path: Path, name: str) -> list[float]:
    header, rows = _read(path)
    i = header.index(name)
    return [float(r[i]) for r in rows]


def _label(run_dir: Path) -> str:
    header, _ = _read(run_dir / "cpu.csv")
    return header[1]


def _color(label: str) -> str:
    return COLORS.get(label, "tab:gray")


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _cost_by_backend(run_dir: Path) -> dict[str, float]:
    header, rows = _read(run_dir / "cost.csv")
    b, c = header.index("backend"), header.index("cost")
    out: dict[str, float] = {}
    for r in rows:
        if r[0] == "TOTAL":
            continue
        out[r[b]] = out.get(r[b], 0.0) + float(r[c])
    return out


def plot_response_times(run_dirs: Sequence[Path], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for d in run_dirs:
        label = _label(d)
        ax.plot(_column(d / "response_time.csv", "response_time"), lw=1, color=_color(label), label=label)
    ax.set_xlabel("request index")
    ax.set_ylabel("response time (ms)")
    ax.legend()
    return _save(fig, out)


def plot_boxplot(run_dirs: Sequence[Path], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    labels = [_label(d) for d in run_dirs]
    data = [_column(d / "response_time.csv", "response_time") for d in run_dirs]
    # whiskers at min and max
    ax.boxplot(data, whis=(0, 100), showfliers=False)
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_ylabel("response time (ms)")
    return _save(fig, out)


def plot_utilization(run_dirs: Sequence[Path], out: Path) -> Path:
    units = {"cpu": "cores", "ram": "GB", "gpu": "GPU %"}
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for ax, (series, unit) in zip(axes, units.items()):
        for d in run_dirs:
            label = _label(d)
            ax.plot(_column(d / f"{series}.csv", label), lw=1, color=_color(label), label=label)
        ax.set_ylabel(f"{series} ({unit})")
    axes[0].legend()
    axes[-1].set_xlabel("time (s)")
    return _save(fig, out)


def plot_cost(run_dirs: Sequence[Path], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    labels = [_label(d) for d in run_dirs]
    costs = [_cost_by_backend(d) for d in run_dirs]
    bottom = [0.0] * len(labels)
    for backend, hatch in (("cpu_backend", ""), ("gpu_backend", "//")):
        heights = [c.get(backend, 0.0) for c in costs]
        ax.bar(labels, heights, bottom=bottom, hatch=hatch, color=[_color(l) for l in labels],
               edgecolor="black", label=backend.replace("_backend", ""))
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_ylabel("cost")
    ax.legend(title="backend")
    return _save(fig, out)


def plot_run(run_dir: Union[str, Path]) -> list[Path]:
    """Figures for one output directory, written to its figures/ subdirectory."""
    run_dir = Path(run_dir)
    figs = run_dir / FIGURES_DIR
    return [
        plot_response_times([run_dir], figs / "response_time.png"),
        plot_utilization([run_dir], figs / "utilization.png"),
        plot_cost([run_dir], figs / "cost.png"),
    ]


def plot_comparison(run_dirs: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> list[Path]:
    """Side-by-side figures for several output directories of the same scenario."""
    dirs = [Path(d) for d in run_dirs]
    figs = Path(out_dir) / FIGURES_DIR
    return [
        plot_response_times(dirs, figs / "response_time.png"),
        plot_boxplot(dirs, figs / "boxplot.png"),
        plot_utilization(dirs, figs / "utilization.png"),
        plot_cost(dirs, figs / "cost.png"),
    ]
