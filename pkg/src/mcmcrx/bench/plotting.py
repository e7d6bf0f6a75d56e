"""Figure rendering for benchmark reports.

One figure per (scenario, metric), algorithms as error-bar curves over the
SNR grid, written next to the CSV they summarize.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 (backend must be set first)

__all__ = ["render_figures"]

_LOG_METRICS = {"ber", "ser", "fer", "bler"}
_AXIS_LABELS = {
    "ber": "Bit error rate",
    "ser": "Symbol error rate",
    "fer": "Frame error rate",
    "bler": "Block error rate",
    "nmse_db": "NMSE (dB)",
}
_MARKERS = ["o", "s", "^", "v", "d", "x", "*", "+"]


def render_figures(rows, csv_path: str) -> list[Path]:
    """Render one PNG per (scenario, metric) alongside the CSV."""
    csv_path = Path(csv_path)
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.scenario, r.metric), {}).setdefault(r.algorithm, []).append(r)
    written = []
    for (scenario, metric), by_algo in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for i, (algo, pts) in enumerate(sorted(by_algo.items())):
            pts = sorted(pts, key=lambda r: r.snr_db)
            snr = [p.snr_db for p in pts]
            val = [p.value for p in pts]
            err = [p.ci95 for p in pts]
            ax.errorbar(
                snr, val, yerr=err, label=algo,
                marker=_MARKERS[i % len(_MARKERS)], capsize=3, lw=1.2, ms=5,
            )
        xlabel = "Eb/N0 (dB)" if scenario == "decode_fer" else "SNR (dB)"
        ax.set_xlabel(xlabel)
        ax.set_ylabel(_AXIS_LABELS.get(metric, metric))
        if metric in _LOG_METRICS:
            ax.set_yscale("log")
        ax.grid(True, which="both", alpha=0.4)
        ax.legend()
        ax.set_title(scenario)
        fig.tight_layout()
        out = csv_path.with_name(f"{csv_path.stem}_{scenario}_{metric}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written
