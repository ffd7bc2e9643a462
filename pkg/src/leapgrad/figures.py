"""Figure rendering for the schema'd CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .reports import read_csv

__all__ = ["render", "KINDS"]


def _converge_axes(ax, cols):
    h = cols["h"]
    ax.loglog(h, cols["err_vanilla"], "o-", label="vanilla")
    ax.loglog(h, cols["err_modified"], "s-", label="modified")
    ax.loglog(h, cols["err_euler"], "^-", label="euler")
    anchor = max(cols["err_modified"].max(), 1e-300)
    ax.loglog(h, anchor * (h / h.max()) ** 2, "k:", lw=0.8, label="h^2")
    ax.loglog(h, anchor * (h / h.max()), "k--", lw=0.8, label="h")
    ax.set_xlabel("h")
    ax.set_ylabel("max row error")
    ax.legend(fontsize=8)


def _oscillate_axes(ax, cols):
    ax.plot(cols["t"], cols["vanilla"], "-", lw=0.8, label="vanilla")
    ax.plot(cols["t"], cols["modified"], "-", lw=1.4, label="modified")
    ax.plot(cols["t"], cols["truth"], "k--", lw=1.0, label="truth")
    ax.set_xlabel("t")
    ax.set_ylabel("probe-projected gradient")
    ax.legend(fontsize=8)


def _train_axes(ax, cols):
    ax.semilogy(cols["step"], cols["loss"], "o-")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")


_PANELS = {"converge": _converge_axes, "oscillate": _oscillate_axes, "train": _train_axes}
KINDS = tuple(sorted(_PANELS))


def render(csv_path, kind: str, out_path=None) -> Path:
    """Render the figure for a CSV; returns the image path (PNG)."""
    if kind not in _PANELS:
        raise ValueError(f"unknown figure kind {kind!r}")
    csv_path = Path(csv_path)
    cols = read_csv(csv_path, kind)
    out_path = Path(out_path) if out_path is not None else csv_path.with_suffix(".png")
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    _PANELS[kind](ax, cols)
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
