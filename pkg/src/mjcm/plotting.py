"""Figures written next to the CSV output of a simulation."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_run(path, times, tracked: dict, conserved: dict, reference: dict | None = None) -> None:
    """Two panels: tracked means over time and conserved-functional drifts.

    ``reference`` holds the exact-path columns drawn dashed for comparison.
    """
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True, constrained_layout=True)
    for lab, v in tracked.items():
        (line,) = top.plot(times, v, lw=1.2, label=lab)
        if reference and lab in reference:
            top.plot(times, reference[lab], ls="--", lw=0.8, color=line.get_color())
    top.set_ylabel("mean value")
    if tracked:
        top.legend(fontsize="small", ncol=2)
    for lab, v in conserved.items():
        if lab.startswith("cons_"):
            bottom.plot(times, v, lw=1.0, label=lab)
    bottom.set_xlabel("t")
    bottom.set_ylabel("functional drift")
    if any(k.startswith("cons_") for k in conserved):
        bottom.legend(fontsize="small", ncol=3)
    fig.savefig(path, dpi=120)
    plt.close(fig)
