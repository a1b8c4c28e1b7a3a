"""SVG plots of sweep results."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import MemoryPointResult, TrialPointResult, format_lengths  # noqa: E402

REFERENCE_GID = "reference"


def series_gid(lengths) -> str:
    return "series-L" + format_lengths(lengths)


def _groups(results):
    by: dict[tuple[int, ...], list] = {}
    for r in results:
        by.setdefault(tuple(r.lengths), []).append(r)
    return {k: sorted(v, key=lambda r: r.p) for k, v in sorted(by.items(), key=lambda kv: (max(kv[0]), kv[0]))}


def plot_failure_curves(results: Sequence[TrialPointResult], path, title: str | None = None) -> None:
    """Log-log logical failure rate against p, one series per size, and the line ``p_logical = p``.

    Each series is an SVG group with id ``series-L<lengths>``; the reference
    line has id ``reference``.
    """
    _svg_defaults()
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ps = []
    for lengths, rows in _groups(results).items():
        p = np.array([r.p for r in rows])
        y = np.array([r.p_logical for r in rows])
        lo = np.array([r.ci_low for r in rows])
        hi = np.array([r.ci_high for r in rows])
        keep = (p > 0) & (y > 0)
        ps.extend(p[p > 0].tolist())
        cont = ax.errorbar(p[keep], y[keep], yerr=np.clip([y[keep] - lo[keep], hi[keep] - y[keep]], 0, None),
                           marker="o", ms=3, capsize=2, label=f"L={format_lengths(lengths)}")
        _tag(cont, series_gid(lengths))
    if ps:
        grid = np.array([min(ps), max(ps)])
        (ref,) = ax.plot(grid, grid, "k:", label="p_logical = p")
        ref.set_gid(REFERENCE_GID)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("p")
    ax.set_ylabel("logical failure rate")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_memory_curves(results: Sequence[MemoryPointResult], path, title: str | None = None) -> None:
    """Mean memory time against p with the unencoded ``(1 - p) / p`` curve as reference."""
    _svg_defaults()
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ps = []
    for lengths, rows in _groups(results).items():
        p = np.array([r.p for r in rows])
        t = np.array([r.mean_cycles for r in rows])
        se = np.array([r.stderr for r in rows])
        keep = (p > 0) & (t > 0)
        ps.extend(p[p > 0].tolist())
        cont = ax.errorbar(p[keep], t[keep], yerr=se[keep], marker="o", ms=3, capsize=2,
                           label=f"L={format_lengths(lengths)}")
        _tag(cont, series_gid(lengths))
    if ps:
        grid = np.geomspace(min(ps), max(ps), 20)
        (ref,) = ax.plot(grid, (1 - grid) / grid, "k:", label="unencoded")
        ref.set_gid(REFERENCE_GID)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("p")
    ax.set_ylabel("memory time (cycles)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _tag(container, gid: str) -> None:
    line, caps, bars = container
    line.set_gid(gid)
    for i, art in enumerate(list(caps) + list(bars)):
        art.set_gid(f"{gid}-ci{i}")


def _svg_defaults() -> None:
    # stable element ids so identical inputs give identical files
    plt.rcParams["svg.hashsalt"] = "tesseract-rg"
