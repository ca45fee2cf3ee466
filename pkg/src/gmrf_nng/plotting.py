"""Single-panel SVG line charts of the exponent grid."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def exponent_svg(series: dict[str, tuple[list[float], list[float]]], path) -> None:
    """Plot D against K in dB, one polyline per labelled series.

    ``series`` maps a legend label to ``(k_db, D)`` lists. Output is
    byte-stable: fixed hash salt and no date metadata.
    """
    with plt.rc_context({"svg.hashsalt": "gmrf-nng", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (x, y) in series.items():
            ax.plot(x, y, label=label, linewidth=1.2)
        ax.set_xlabel("K in dB")
        ax.set_ylabel("Error exponent D")
        ax.grid(True, linewidth=0.3)
        ax.legend(loc="upper left", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
