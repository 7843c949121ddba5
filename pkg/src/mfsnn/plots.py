"""
Static SVG figures. Output is byte-stable: fixed canvas, text kept as text,
fixed id salt and no date metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .analysis import AlignmentTrace, BifurcationDiagram
from .engine import SpikeRecord

__all__ = ["raster_plot", "alignment_plot", "rate_profile_plot", "bifurcation_plot", "IC_COLORS"]

_RC = {
    "svg.hashsalt": "mfsnn",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "path.simplify": False,
}

TRACE_COLORS = {"A": "tab:blue", "B": "tab:orange", "C": "tab:green", "D": "tab:red"}
IC_COLORS = {"A": "tab:blue", "B": "tab:orange", "background": "black"}
ORACLE_STYLES = {"fp-from-A": "tab:blue", "fp-from-B": "tab:orange", "fp-symmetric": "black"}


def _figure(size=(6.4, 3.6)):
    fig = Figure(figsize=size, dpi=100)
    FigureCanvasSVG(fig)
    return fig


def _save(fig, path) -> None:
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def _shade(ax, events):
    for ev in events or ():
        name, onset, offset = ev
        ax.axvspan(onset, offset, color=TRACE_COLORS.get(name, "0.8"), alpha=0.15, lw=0)


def raster_plot(record: SpikeRecord, path, events=None, title: str | None = None) -> None:
    """Spike raster; ``events`` is an optional list of ``(symbol, onset, offset)`` shaded in the background."""
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        _shade(ax, events)
        if len(record):
            ax.scatter(record.times, record.neurons, s=2, marker="|", c="k", linewidths=0.6)
        ax.set_xlim(0, record.duration)
        ax.set_ylim(-0.5, max(record.n_neurons, 1) - 0.5)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("neuron")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def alignment_plot(alignment: AlignmentTrace, path, events=None, title: str | None = None) -> None:
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        _shade(ax, events)
        for k, name in enumerate(alignment.names):
            ax.plot(alignment.times, alignment.rho[:, k], color=TRACE_COLORS.get(name, None), lw=1.0, label=f"rho_{name}")
        ax.axhline(0, color="0.6", lw=0.5)
        ax.set_ylim(-1, 1)
        if alignment.times.size:
            ax.set_xlim(0, float(alignment.times[-1]))
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("alignment index")
        ax.legend(loc="upper right", ncol=4, frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def rate_profile_plot(cluster_rates, path, input_profile=None, title: str | None = None) -> None:
    """Output rate per cluster, with the scaled input profile dashed."""
    rates = np.asarray(cluster_rates, dtype=float)
    x = np.arange(rates.size)
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        ax.plot(x, rates, "o-", color="tab:blue", ms=3, lw=1.0, label="output")
        if input_profile is not None:
            prof = np.asarray(input_profile, dtype=float)
            scale = rates.max() / prof.max() if prof.max() > 0 and rates.max() > 0 else 1.0
            ax.plot(x, prof * scale, "k--", lw=1.0, label="input (scaled)")
        ax.set_xlabel("cluster")
        ax.set_ylabel("rate (Hz)")
        ax.set_xlim(-0.5, rates.size - 0.5)
        ax.legend(loc="upper right", frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def bifurcation_plot(diagram: BifurcationDiagram, path, oracle: BifurcationDiagram | None = None, alpha_star=None, title=None) -> None:
    """Projection vs alpha per initial condition (A blue, B orange, background black)."""
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        ics = sorted({p.ic for p in diagram.points}, key=lambda s: (s not in IC_COLORS, list(IC_COLORS).index(s) if s in IC_COLORS else 0, s))
        for ic in ics:
            pts = [(p.alpha, p.projection) for p in diagram.points if p.ic == ic]
            a, y = np.array(pts).T if pts else (np.empty(0), np.empty(0))
            ax.scatter(a, y, s=10, color=IC_COLORS.get(ic, "0.5"), label=ic, zorder=3)
        if oracle is not None:
            for ic, color in ORACLE_STYLES.items():
                pts = sorted((p.alpha, p.projection) for p in oracle.points if p.ic == ic)
                if pts:
                    a, y = np.array(pts).T
                    ax.plot(a, y, color=color, lw=0.8, ls=":", label=ic)
        if alpha_star is not None:
            ax.axvline(alpha_star, color="0.4", lw=0.8, ls="--")
        ax.axhline(0, color="0.6", lw=0.5)
        ax.set_xlabel("alpha")
        ax.set_ylabel("projection on v_max (Hz)")
        ax.legend(loc="upper left", frameon=False, fontsize=7)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
