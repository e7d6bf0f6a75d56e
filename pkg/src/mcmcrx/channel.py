"""Seeded generators for channels, pilots, and noise.

All generators are pure functions of (spec, seed).  Seeds may be ints or
tuples of ints; tuples act as hierarchical split keys so concurrent trials
can derive independent streams without coordination.

SNR convention: with unit-energy symbols and unit mean per-element channel
energy, the complex per-entry noise variance is sigma^2 = n_tx / 10^(snr/10),
i.e. SNR is per receive antenna.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Constellation

__all__ = [
    "ChannelSpec",
    "Frame",
    "rng_from_key",
    "gen_channel",
    "gen_pilot_matrix",
    "apply_awgn",
    "noise_var_for_snr",
]


def rng_from_key(seed) -> np.random.Generator:
    """Generator keyed by an int or tuple of ints (splittable, deterministic)."""
    if isinstance(seed, (int, np.integer)):
        entropy = [int(seed) % (1 << 64)]
    else:
        entropy = [int(s) % (1 << 64) for s in seed]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def split_key(seed, *extra) -> tuple:
    """Extend a seed key with further components."""
    if isinstance(seed, (int, np.integer)):
        base = (int(seed),)
    else:
        base = tuple(int(s) for s in seed)
    return base + tuple(int(e) for e in extra)


@dataclass(frozen=True)
class ChannelSpec:
    """Synthetic channel family: dense i.i.d. Rayleigh or clustered-sparse."""

    kind: str  # "iid_rayleigh" | "clustered_sparse"
    n_rx: int
    n_tx: int
    sparsity: float = 1.0  # expected active fraction (clustered_sparse)
    n_clusters: int = 1
    coeff_var: float = 1.0  # slab variance of active coefficients

    def __post_init__(self):
        if self.kind not in ("iid_rayleigh", "clustered_sparse"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.n_rx < 1 or self.n_tx < 1:
            raise ValueError("n_rx and n_tx must be >= 1")
        if self.kind == "clustered_sparse":
            dim = self.n_rx * self.n_tx
            if not 0 < self.sparsity <= 1:
                raise ValueError("sparsity must lie in (0, 1]")
            if int(self.sparsity * dim) < 1:
                raise ValueError("sparsity * dimension must be >= 1")
            if self.n_clusters < 1:
                raise ValueError("n_clusters must be >= 1")
            if not self.coeff_var > 0:
                raise ValueError("coeff_var must be positive")


def _complex_normal(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def gen_channel(spec: ChannelSpec, seed) -> np.ndarray:
    """Draw an (n_rx, n_tx) channel matrix; unit mean per-element energy."""
    rng = rng_from_key(seed)
    shape = (spec.n_rx, spec.n_tx)
    if spec.kind == "iid_rayleigh":
        return _complex_normal(rng, shape)

    dim = spec.n_rx * spec.n_tx
    n_active = int(spec.sparsity * dim)
    n_clusters = min(spec.n_clusters, n_active)
    support = _clustered_support(rng, dim, n_active, n_clusters)
    h = np.zeros(dim, dtype=np.complex128)
    h[support] = _complex_normal(rng, n_active, var=spec.coeff_var)
    energy = np.sum(np.abs(h) ** 2)
    if energy > 0:
        h *= np.sqrt(dim / energy)
    return h.reshape(shape)


def _clustered_support(
    rng: np.random.Generator, dim: int, n_active: int, n_clusters: int
) -> np.ndarray:
    """Indices of n_clusters disjoint contiguous runs totaling n_active."""
    run_lens = np.full(n_clusters, n_active // n_clusters, dtype=np.int64)
    run_lens[: n_active % n_clusters] += 1
    free = dim - n_active
    interior = n_clusters - 1
    if free < interior:
        raise ValueError(
            f"cannot place {n_clusters} separated runs of total {n_active} in {dim}"
        )
    # Random composition of the leftover space into (n_clusters+1) gaps,
    # with at least one empty slot between consecutive runs.
    gaps = np.ones(n_clusters + 1, dtype=np.int64)
    gaps[0] = gaps[-1] = 0
    extra = free - interior
    if extra > 0:
        gaps += rng.multinomial(extra, np.full(n_clusters + 1, 1.0 / (n_clusters + 1)))
    idx = []
    pos = 0
    for g, ln in zip(gaps[:-1], run_lens):
        pos += g
        idx.append(np.arange(pos, pos + ln))
        pos += ln
    return np.concatenate(idx)


def gen_pilot_matrix(
    n_tx: int, n_pilot_slots: int, c: Constellation, seed
) -> np.ndarray:
    """(n_tx, n_pilot_slots) matrix of uniform random constellation symbols."""
    if n_pilot_slots < 1:
        raise ValueError("n_pilot_slots must be >= 1")
    rng = rng_from_key(seed)
    idx = rng.integers(0, c.n_points, size=(n_tx, n_pilot_slots))
    return c.points[idx]


def noise_var_for_snr(snr_db: float, n_tx: int) -> float:
    """Complex per-entry noise variance under the per-receive-antenna SNR."""
    return n_tx / 10.0 ** (snr_db / 10.0)


def apply_awgn(
    signal: np.ndarray, snr_db: float, n_tx: int, seed
) -> tuple[np.ndarray, float]:
    """Add circularly-symmetric complex Gaussian noise at the given SNR."""
    signal = np.asarray(signal, dtype=np.complex128)
    noise_var = noise_var_for_snr(snr_db, n_tx)
    rng = rng_from_key(seed)
    noise = _complex_normal(rng, signal.shape, var=noise_var)
    return signal + noise, noise_var


@dataclass(frozen=True)
class Frame:
    """Pilot + data slot layout within one coherence block."""

    n_pilot_slots: int
    n_data_slots: int

    def __post_init__(self):
        if self.n_pilot_slots < 1:
            raise ValueError("n_pilot_slots must be >= 1")
        if self.n_data_slots < 0:
            raise ValueError("n_data_slots must be >= 0")

    @property
    def coherence_length(self) -> int:
        return self.n_pilot_slots + self.n_data_slots
