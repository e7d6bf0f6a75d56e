"""Metric computation, aggregation with confidence intervals, CSV I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricRow",
    "NMSE_FLOOR_DB",
    "compute_metrics",
    "aggregate_trials",
    "write_csv",
    "read_csv",
]

NMSE_FLOOR_DB = -120.0
CSV_HEADER = "scenario,algorithm,snr_db,metric,value,ci95,n_trials,seed"


@dataclass(frozen=True)
class MetricRow:
    scenario: str
    algorithm: str
    snr_db: float
    metric: str  # ber | ser | nmse_db | bler | fer
    value: float
    ci95: float
    n_trials: int
    seed: int


def compute_metrics(truth: np.ndarray, estimate: np.ndarray, kind: str) -> float:
    """Per-trial metric value for one (truth, estimate) pair."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {estimate.shape}")
    if kind in ("ber", "ser"):
        return float(np.mean(truth != estimate))
    if kind in ("fer", "bler"):
        return 1.0 if np.any(truth != estimate) else 0.0
    if kind == "nmse_db":
        num = float(np.sum(np.abs(estimate - truth) ** 2))
        den = float(np.sum(np.abs(truth) ** 2))
        if den == 0:
            raise ValueError("truth has zero energy")
        if num == 0:
            return NMSE_FLOOR_DB
        return max(10.0 * math.log10(num / den), NMSE_FLOOR_DB)
    raise ValueError(f"unknown metric kind {kind!r}")


def aggregate_trials(values) -> tuple[float, float]:
    """Trial mean and normal-approximation 95% half-width."""
    arr = np.asarray(values, dtype=np.float64)
    n = arr.shape[0]
    mean = float(arr.mean())
    if n < 2:
        return mean, 0.0
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(n)
    return mean, half


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_csv(rows, path: str) -> None:
    """Deterministic CSV: fixed header, 6-significant-digit floats, sorted."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    rows.sort(key=lambda r: (r.scenario, r.algorithm, r.snr_db, r.metric))
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.scenario},{r.algorithm},{_fmt(r.snr_db)},{r.metric},"
            f"{_fmt(r.value)},{_fmt(r.ci95)},{r.n_trials},{r.seed}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str) -> list[MetricRow]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path!r}")
    rows = []
    for ln in lines[1:]:
        sc, alg, snr, met, val, ci, nt, seed = ln.split(",")
        rows.append(
            MetricRow(
                scenario=sc,
                algorithm=alg,
                snr_db=float(snr),
                metric=met,
                value=float(val),
                ci95=float(ci),
                n_trials=int(nt),
                seed=int(seed),
            )
        )
    return rows
