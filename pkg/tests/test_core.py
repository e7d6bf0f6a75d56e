import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcmcrx.core import (
    SUPPORTED_CONSTELLATIONS,
    build_constellation,
    hard_demap,
    modulate,
    real_to_complex,
    to_real_model,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestToRealModel:
    def test_1x1_block_formula(self):
        m = to_real_model(np.array([[1 + 1j]]), np.array([2 - 1j]), 1.0)
        np.testing.assert_allclose(m.h_r, [[1, -1], [1, 1]])
        np.testing.assert_allclose(m.y_r, [2, -1])
        assert m.noise_var_per_dim == 0.5

    def test_real_h_is_block_diagonal(self):
        h = np.array([[2.0, 1.0], [0.5, 3.0]], dtype=complex)
        m = to_real_model(h, np.zeros(2, dtype=complex), 1.0)
        np.testing.assert_allclose(m.h_r[:2, 2:], 0)
        np.testing.assert_allclose(m.h_r[2:, :2], 0)
        np.testing.assert_allclose(m.h_r[:2, :2], h.real)
        np.testing.assert_allclose(m.h_r[2:, 2:], h.real)

    def test_exact_homomorphism_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h = crandn(rng, 4, 4)
            x = crandn(rng, 4)
            m = to_real_model(h, crandn(rng, 4), 1.0)
            x_r = np.concatenate([x.real, x.imag])
            err = np.linalg.norm(real_to_complex(m.h_r @ x_r) - h @ x)
            assert err < 1e-12

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            to_real_model(np.eye(2, dtype=complex), np.zeros(3, dtype=complex), 1.0)

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(ValueError):
            to_real_model(np.eye(2, dtype=complex), np.zeros(2, dtype=complex), 0.0)


class TestConstellations:
    @pytest.mark.parametrize("name", SUPPORTED_CONSTELLATIONS)
    def test_unit_energy(self, name):
        c = build_constellation(name)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    @pytest.mark.parametrize("name", SUPPORTED_CONSTELLATIONS)
    def test_labels_distinct(self, name):
        c = build_constellation(name)
        ints = {tuple(row) for row in c.gray_labels}
        assert len(ints) == c.n_points

    def test_qpsk_points(self):
        c = build_constellation("QPSK")
        expect = {(1 + 1j), (1 - 1j), (-1 + 1j), (-1 - 1j)}
        got = {complex(np.round(p * np.sqrt(2), 9)) for p in c.points}
        assert got == expect
        assert c.bits_per_symbol == 2

    def test_16qam_levels(self):
        c = build_constellation("16QAM")
        np.testing.assert_allclose(c.levels * np.sqrt(10), [-3, -1, 1, 3], atol=1e-12)

    def test_64qam_levels(self):
        c = build_constellation("64QAM")
        np.testing.assert_allclose(
            c.levels * np.sqrt(42), [-7, -5, -3, -1, 1, 3, 5, 7], atol=1e-12
        )

    def test_unsupported_name(self):
        with pytest.raises(ValueError, match="256QAM"):
            build_constellation("256QAM")

    @pytest.mark.parametrize("name", ["QPSK", "16QAM", "64QAM"])
    def test_lattice_neighbors_differ_in_one_bit(self, name):
        c = build_constellation(name)
        n_levels = c.levels.shape[0]
        labels = {}
        for idx, p in enumerate(c.points):
            i = int(np.argmin(np.abs(c.levels - p.real)))
            q = int(np.argmin(np.abs(c.levels - p.imag)))
            labels[(i, q)] = c.gray_labels[idx]
        for (i, q), lab in labels.items():
            for ni, nq in ((i + 1, q), (i, q + 1)):
                if ni < n_levels and nq < n_levels:
                    diff = int(np.sum(lab != labels[(ni, nq)]))
                    assert diff == 1


class TestModulateDemap:
    def test_qpsk_zero_bits_map_positive(self):
        c = build_constellation("QPSK")
        sym = modulate(np.array([0, 0]), c)
        np.testing.assert_allclose(sym, [(1 + 1j) / np.sqrt(2)], atol=1e-12)

    def test_16qam_length_contract(self):
        c = build_constellation("16QAM")
        assert modulate(np.zeros(8, dtype=np.uint8), c).shape == (2,)

    def test_length_not_divisible(self):
        c = build_constellation("16QAM")
        with pytest.raises(ValueError):
            modulate(np.zeros(6, dtype=np.uint8), c)

    def test_qpsk_roundtrip_all_byte_patterns(self):
        c = build_constellation("QPSK")
        for pattern in range(256):
            bits = np.array([(pattern >> k) & 1 for k in range(8)], dtype=np.uint8)
            assert np.array_equal(hard_demap(modulate(bits, c), c), bits)

    @pytest.mark.parametrize("name", SUPPORTED_CONSTELLATIONS)
    def test_roundtrip_every_label(self, name):
        c = build_constellation(name)
        bits = c.gray_labels.ravel()
        np.testing.assert_array_equal(hard_demap(modulate(bits, c), c), bits)

    def test_exact_point_maps_to_own_label(self):
        c = build_constellation("64QAM")
        np.testing.assert_array_equal(
            hard_demap(c.points, c), c.gray_labels.ravel()
        )

    def test_tie_breaks_to_lowest_index(self):
        c = build_constellation("QPSK")
        out = hard_demap(np.array([0 + 0j]), c)
        np.testing.assert_array_equal(out, c.gray_labels[0])

    def test_high_snr_ber_below_qfunction_bound(self):
        # QPSK at 30 dB: Q(sqrt(1000)) is astronomically small, so over 1e5
        # symbols the empirical BER must sit far below 1e-3
        c = build_constellation("QPSK")
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, size=2 * 10**5).astype(np.uint8)
        syms = modulate(bits, c)
        sigma2 = 10 ** (-3.0)
        noisy = syms + np.sqrt(sigma2 / 2) * (
            rng.standard_normal(syms.shape) + 1j * rng.standard_normal(syms.shape)
        )
        ber = np.mean(hard_demap(noisy, c) != bits)
        assert ber < 1e-3
        assert 0.5 * math.erfc(math.sqrt(1000.0 / 2.0) / math.sqrt(2.0)) < 1e-6

    @given(st.integers(0, 2**12 - 1))
    @settings(max_examples=50, deadline=None)
    def test_16qam_roundtrip_property(self, pattern):
        c = build_constellation("16QAM")
        bits = np.array([(pattern >> k) & 1 for k in range(12)], dtype=np.uint8)
        assert np.array_equal(hard_demap(modulate(bits, c), c), bits)
