"""Complex/real linear-algebra substrate and Gray-mapped constellations.

Everything downstream of the observation model ``y = H x + n`` runs on the
real-valued equivalent produced by :func:`to_real_model`, which doubles the
dimensions and makes the least-squares surface differentiable with plain
real gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RealModel",
    "Constellation",
    "to_real_model",
    "build_constellation",
    "modulate",
    "hard_demap",
]

SUPPORTED_CONSTELLATIONS = ("BPSK", "QPSK", "16QAM", "64QAM")


@dataclass(frozen=True)
class RealModel:
    """Real-valued stacking of a complex linear observation.

    ``h_r`` has the block structure ``[[Re H, -Im H], [Im H, Re H]]`` so that
    ``h_r @ [Re x; Im x] == [Re Hx; Im Hx]`` exactly.  ``noise_var_per_dim``
    is the variance of each real noise component, i.e. half the complex
    per-entry noise variance.
    """

    h_r: np.ndarray
    y_r: np.ndarray
    noise_var_per_dim: float


def to_real_model(h: np.ndarray, y: np.ndarray, noise_var: float) -> RealModel:
    """Lift a complex model ``y = H x + n`` to its doubled real equivalent."""
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if h.ndim != 2:
        raise ValueError(f"H must be a matrix, got ndim={h.ndim}")
    if y.ndim != 1 or y.shape[0] != h.shape[0]:
        raise ValueError(
            f"y length {y.shape} does not match H rows {h.shape[0]}"
        )
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    h_r = np.block([[h.real, -h.imag], [h.imag, h.real]])
    y_r = np.concatenate([y.real, y.imag])
    return RealModel(h_r=h_r, y_r=y_r, noise_var_per_dim=noise_var / 2.0)


def real_to_complex(v_r: np.ndarray) -> np.ndarray:
    """Inverse of the [Re; Im] stacking for vectors."""
    n = v_r.shape[0] // 2
    return v_r[:n] + 1j * v_r[n:]


def _gray_sequence(n_bits: int) -> np.ndarray:
    i = np.arange(1 << n_bits)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy alphabet with a fixed per-axis Gray labeling.

    Points are ordered row-major over (I level index, Q level index) with
    per-axis amplitude levels ascending.  Labels put I-axis bits before
    Q-axis bits; on each axis the binary-reflected Gray code is oriented so
    the all-zero pattern sits on the most positive amplitude (bit 0 favors
    positive, matching the LLR sign convention used downstream).
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int
    gray_labels: np.ndarray  # (n_points, bits_per_symbol) of {0,1}
    levels: np.ndarray  # per-axis amplitudes, ascending
    axis_bits: int  # bits per real axis (== bits_per_symbol for BPSK)
    # lookup tables, derived in build_constellation
    label_to_point: np.ndarray = field(repr=False, default=None)
    level_bits: np.ndarray = field(repr=False, default=None)  # (n_levels, axis_bits)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def has_quadrature(self) -> bool:
        return self.name != "BPSK"


def build_constellation(name: str) -> Constellation:
    """Construct one of the supported alphabets (BPSK/QPSK/16QAM/64QAM)."""
    if name not in SUPPORTED_CONSTELLATIONS:
        raise ValueError(
            f"unsupported constellation {name!r}; expected one of "
            f"{SUPPORTED_CONSTELLATIONS}"
        )
    if name == "BPSK":
        bits_per_symbol, axis_bits = 1, 1
    elif name == "QPSK":
        bits_per_symbol, axis_bits = 2, 1
    elif name == "16QAM":
        bits_per_symbol, axis_bits = 4, 2
    else:
        bits_per_symbol, axis_bits = 6, 3

    n_levels = 1 << axis_bits
    raw_levels = np.arange(-(n_levels - 1), n_levels, 2, dtype=np.float64)

    # Per-axis Gray labels: BRGC walked from the most positive level down, so
    # that pattern 0..0 lands on the most positive amplitude.
    level_gray = _gray_sequence(axis_bits)[::-1]  # indexed by ascending level

    if name == "BPSK":
        points_raw = raw_levels.astype(np.complex128)
        label_ints = level_gray
    else:
        ii, qq = np.meshgrid(raw_levels, raw_levels, indexing="ij")
        points_raw = (ii + 1j * qq).ravel()
        gi, gq = np.meshgrid(level_gray, level_gray, indexing="ij")
        label_ints = (gi << axis_bits | gq).ravel()

    scale = np.sqrt(np.mean(np.abs(points_raw) ** 2))
    points = points_raw / scale
    levels = raw_levels / scale

    labels = (
        (label_ints[:, None] >> np.arange(bits_per_symbol - 1, -1, -1)) & 1
    ).astype(np.uint8)
    label_to_point = np.empty(1 << bits_per_symbol, dtype=np.int64)
    label_to_point[label_ints] = np.arange(points.shape[0])
    level_bits = (
        (level_gray[:, None] >> np.arange(axis_bits - 1, -1, -1)) & 1
    ).astype(np.uint8)

    return Constellation(
        name=name,
        points=points,
        bits_per_symbol=bits_per_symbol,
        gray_labels=labels,
        levels=levels,
        axis_bits=axis_bits,
        label_to_point=label_to_point,
        level_bits=level_bits,
    )


def modulate(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map a bit vector onto constellation symbols under the Gray labeling."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    b = c.bits_per_symbol
    if bits.shape[0] % b != 0:
        raise ValueError(
            f"bit count {bits.shape[0]} not divisible by {b} bits/symbol"
        )
    groups = bits.reshape(-1, b)
    ints = groups @ (1 << np.arange(b - 1, -1, -1))
    return c.points[c.label_to_point[ints]]


def hard_demap(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest-point demapping; ties resolve to the lowest point index."""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    d2 = np.abs(symbols[:, None] - c.points[None, :]) ** 2
    idx = np.argmin(d2, axis=1)  # argmin takes the first minimum: tie-break
    return c.gray_labels[idx].ravel()
