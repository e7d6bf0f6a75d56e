import numpy as np
import pytest

from mcmcrx.channel import (
    ChannelSpec,
    Frame,
    apply_awgn,
    gen_channel,
    gen_pilot_matrix,
    noise_var_for_snr,
)
from mcmcrx.core import build_constellation


class TestChannelSpec:
    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError):
            ChannelSpec(kind="rician", n_rx=2, n_tx=2)

    def test_rejects_empty_support(self):
        with pytest.raises(ValueError):
            ChannelSpec(kind="clustered_sparse", n_rx=2, n_tx=2, sparsity=0.1)


class TestGenChannel:
    def test_iid_energy_near_unit(self):
        spec = ChannelSpec(kind="iid_rayleigh", n_rx=64, n_tx=8)
        acc = 0.0
        for s in range(100):
            h = gen_channel(spec, (11, s))
            acc += np.mean(np.abs(h) ** 2)
        assert 0.95 <= acc / 100 <= 1.05

    def test_clustered_exact_active_count(self):
        spec = ChannelSpec(
            kind="clustered_sparse", n_rx=256, n_tx=1, sparsity=0.125, n_clusters=4
        )
        h = gen_channel(spec, 3).ravel()
        active = np.nonzero(h)[0]
        assert active.size == 32
        # exactly 4 contiguous runs
        runs = 1 + int(np.sum(np.diff(active) > 1))
        assert runs == 4

    def test_clustered_unit_mean_energy(self):
        spec = ChannelSpec(
            kind="clustered_sparse", n_rx=64, n_tx=1, sparsity=0.25, n_clusters=2
        )
        h = gen_channel(spec, 5)
        assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 1e-12

    def test_deterministic(self):
        spec = ChannelSpec(kind="iid_rayleigh", n_rx=8, n_tx=4)
        np.testing.assert_array_equal(gen_channel(spec, 42), gen_channel(spec, 42))
        assert not np.array_equal(gen_channel(spec, 42), gen_channel(spec, 43))


class TestPilots:
    def test_qpsk_pilots_unit_modulus(self):
        c = build_constellation("QPSK")
        p = gen_pilot_matrix(8, 36, c, 0)
        assert p.shape == (8, 36)
        np.testing.assert_allclose(np.abs(p), 1 / np.sqrt(2) * np.sqrt(2), atol=1e-12)

    def test_pilot_gram_full_rank(self):
        c = build_constellation("QPSK")
        for s in range(100):
            p = gen_pilot_matrix(4, 8, c, (21, s))
            assert np.linalg.matrix_rank(p @ p.conj().T) == 4

    def test_deterministic(self):
        c = build_constellation("16QAM")
        np.testing.assert_array_equal(
            gen_pilot_matrix(4, 10, c, 9), gen_pilot_matrix(4, 10, c, 9)
        )


class TestAwgn:
    def test_noise_var_formula(self):
        assert abs(noise_var_for_snr(10.0, 4) - 0.4) < 1e-12

    def test_infinite_snr_is_noiseless(self):
        sig = np.array([1 + 1j, -1 - 1j])
        out, nv = apply_awgn(sig, np.inf, 2, 0)
        np.testing.assert_array_equal(out, sig)
        assert nv == 0.0

    def test_empirical_variance_within_2pct(self):
        sig = np.zeros(10**5, dtype=complex)
        out, nv = apply_awgn(sig, 7.0, 3, 12)
        emp = np.mean(np.abs(out) ** 2)
        assert abs(emp - nv) / nv < 0.02

    def test_snr_convention_at_dimension_32(self):
        # measured E||Hx||^2 / (M sigma^2) should match the linear SNR
        from mcmcrx.core import modulate

        c = build_constellation("QPSK")
        rng = np.random.default_rng(0)
        snr_db = 6.0
        num = 0.0
        n_rx, n_tx = 32, 32
        nv = noise_var_for_snr(snr_db, n_tx)
        for s in range(50):
            h = gen_channel(ChannelSpec(kind="iid_rayleigh", n_rx=n_rx, n_tx=n_tx), (31, s))
            bits = rng.integers(0, 2, size=2 * n_tx).astype(np.uint8)
            x = modulate(bits, c)
            num += np.sum(np.abs(h @ x) ** 2)
        measured = num / (50 * n_rx * nv)
        assert abs(measured - 10 ** (snr_db / 10)) / 10 ** (snr_db / 10) < 0.05


class TestFrame:
    def test_coherence_length(self):
        f = Frame(n_pilot_slots=30, n_data_slots=50)
        assert f.coherence_length == 80

    def test_requires_pilots(self):
        with pytest.raises(ValueError):
            Frame(n_pilot_slots=0, n_data_slots=5)
