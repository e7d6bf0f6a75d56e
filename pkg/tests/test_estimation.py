import numpy as np
import pytest

from mcmcrx.channel import ChannelSpec, apply_awgn, gen_channel, gen_pilot_matrix
from mcmcrx.core import build_constellation
from mcmcrx.estimation import (
    CEProblem,
    CoordinateStreams,
    HyperPriors,
    SpikeSlabState,
    baseline_lmmse_oracle,
    baseline_omp,
    estimate_gibbs,
    gibbs_ce_sweep,
    init_state,
    mmse_from_samples,
    update_hyperparams,
)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def make_problem(rng, m=24, j=16, k=4, snr_db=20.0, orthonormal=False):
    if orthonormal:
        a, _ = np.linalg.qr(crandn(rng, j, j) * np.sqrt(2))
        a = a[:m] if m <= j else a
    else:
        a = crandn(rng, m, j)
    h = np.zeros(j, dtype=complex)
    support = rng.choice(j, size=k, replace=False)
    h[support] = crandn(rng, k) * np.sqrt(j / k)
    noise_var = j / 10 ** (snr_db / 10)
    y = a @ h + crandn(rng, m) * np.sqrt(noise_var)
    return CEProblem(a=a, y=y, noise_var_init=noise_var), h, np.sort(support)


def _log_odds(problem, state, pos):
    """Closed-form inclusion odds for one coordinate given the others."""
    r = problem.y - problem.a @ state.h
    aj = problem.a[:, pos]
    q = (np.vdot(aj, r) + problem.col_sq[pos] * state.h[pos]) / state.noise_var
    big_s = problem.col_sq[pos] / state.noise_var
    denom = 1 + state.slab_var * big_s
    return (
        np.log(state.lam / (1 - state.lam))
        - np.log(denom)
        + state.slab_var * abs(q) ** 2 / denom
    )


class TestGibbsSweep:
    def test_zero_slab_variance_limit_gives_prior_odds(self):
        rng = np.random.default_rng(0)
        problem, h, support = make_problem(rng)
        state = init_state(problem)
        state.slab_var = 1e-300
        for pos in [0, 5, 11]:
            lo = _log_odds(problem, state, pos)
            assert abs(lo - np.log(state.lam / (1 - state.lam))) < 1e-6

    def test_high_snr_inclusion_probability_of_true_index(self):
        # noiseless-ish single active coefficient with orthogonal columns
        rng = np.random.default_rng(1)
        j = 8
        a, _ = np.linalg.qr(crandn(rng, j, j))
        h = np.zeros(j, dtype=complex)
        h[3] = 2.0
        noise_var = 1e-4  # 40 dB down
        y = a @ h
        problem = CEProblem(a=a, y=y, noise_var_init=noise_var)
        state = SpikeSlabState(
            s=np.zeros(j, dtype=np.uint8),
            h=np.zeros(j, dtype=complex),
            lam=0.5,
            slab_var=1.0,
            noise_var=noise_var,
        )
        lo = _log_odds(problem, state, 3)
        p_inc = 1 / (1 + np.exp(-lo))
        assert p_inc > 0.999

    def test_odds_monotone_in_signal_energy(self):
        # inclusion odds strictly increase in |q|^2 with everything else fixed
        rng = np.random.default_rng(2)
        a = crandn(rng, 12, 6)
        pos = 2
        odds = []
        for scale in [0.5, 1.0, 2.0, 4.0]:
            problem = CEProblem(a=a, y=scale * a[:, pos], noise_var_init=0.3)
            state = SpikeSlabState(
                s=np.zeros(6, dtype=np.uint8),
                h=np.zeros(6, dtype=complex),
                lam=0.5,
                slab_var=1.0,
                noise_var=0.3,
            )
            odds.append(_log_odds(problem, state, pos))
        assert all(b > a_ for a_, b in zip(odds, odds[1:]))

    def test_conditional_mean_matches_conjugate_oracle(self):
        # fixed support and hyperparameters, orthonormal A: the sampled
        # coefficient averages to nu*q
        rng = np.random.default_rng(3)
        j = 6
        a, _ = np.linalg.qr(crandn(rng, j, j))
        h_true = crandn(rng, j)
        noise_var = 0.1
        y = a @ h_true + crandn(rng, j) * np.sqrt(noise_var)
        problem = CEProblem(a=a, y=y, noise_var_init=noise_var)
        state = SpikeSlabState(
            s=np.ones(j, dtype=np.uint8),
            h=np.linalg.lstsq(a, y, rcond=None)[0],
            lam=0.999999999,  # keep every draw active
            slab_var=4.0,
            noise_var=noise_var,
        )
        n_sweeps = 10**4
        acc = np.zeros(j, dtype=complex)
        streams = CoordinateStreams.for_problem((3, 1), j)
        for _ in range(n_sweeps):
            state = gibbs_ce_sweep(problem, state, streams)
            acc += state.h
        mean = acc / n_sweeps
        # conjugate posterior mean per coordinate (orthonormal columns)
        big_s = problem.col_sq / noise_var
        nu = 4.0 / (1 + 4.0 * big_s)
        q = (a.conj().T @ y) / noise_var
        target = nu * q
        sd = np.sqrt(nu / 2 / n_sweeps)  # per-component standard error
        assert np.all(np.abs(mean - target) < 3 * np.sqrt(2) * sd + 1e-9)


class TestHyperparams:
    def test_all_zero_support_beta_params(self):
        rng = np.random.default_rng(4)
        problem, _, _ = make_problem(rng)
        j = problem.j
        state = init_state(problem)
        state.s[:] = 0
        state.h[:] = 0
        priors = HyperPriors(a0=2.0, b0=3.0)
        draws = [
            update_hyperparams(state, problem, priors, np.random.default_rng((4, i))).lam
            for i in range(4000)
        ]
        expect = 2.0 / (2.0 + 3.0 + j)  # Beta(a0, b0 + J) mean
        assert abs(np.mean(draws) - expect) < 0.01

    def test_noise_var_inverse_gamma_moment(self):
        rng = np.random.default_rng(5)
        problem, _, _ = make_problem(rng)
        state = init_state(problem)
        priors = HyperPriors()
        resid = problem.y - problem.a @ state.h
        expect = (priors.f0 + np.sum(np.abs(resid) ** 2)) / (
            priors.e0 + problem.m_obs - 1
        )
        draws = [
            update_hyperparams(
                state, problem, priors, np.random.default_rng((5, i))
            ).noise_var
            for i in range(10**4)
        ]
        assert abs(np.mean(draws) - expect) / expect < 0.02

    def test_all_active_lam_approaches_one(self):
        rng = np.random.default_rng(6)
        problem, _, _ = make_problem(rng, j=40)
        state = init_state(problem)
        state.s[:] = 1
        draws = [
            update_hyperparams(
                state, problem, HyperPriors(), np.random.default_rng((6, i))
            ).lam
            for i in range(2000)
        ]
        assert np.mean(draws) > 0.95


class TestMmseFromSamples:
    def test_even_split_across_chains(self):
        rng = np.random.default_rng(7)
        problem, _, _ = make_problem(rng, m=8, j=4)
        _, samples = estimate_gibbs(
            problem, n_chains=10, n_iters=40, burn_in=8, n_keep=320, seed=1
        )
        assert samples.n_chains == 10
        assert samples.n_per_chain == 32  # 320 = 10 chains x 32 samples

    def test_identical_samples_mean_is_that_sample(self):
        from mcmcrx.engine import SampleSet

        h = np.array([1 + 1j, 2.0, 0.0])
        st = SpikeSlabState(
            s=np.array([1, 1, 0], dtype=np.uint8), h=h, lam=0.5, slab_var=1.0,
            noise_var=0.1,
        )
        ss = SampleSet(samples=[(st, 0.0)] * 12, n_chains=3, burn_in=0)
        np.testing.assert_allclose(mmse_from_samples(ss, 6), h)

    def test_empty_set_rejected(self):
        from mcmcrx.engine import SampleSet

        with pytest.raises(ValueError):
            mmse_from_samples(SampleSet(samples=[], n_chains=1, burn_in=0), 1)

    def test_conjugate_case_approaches_lmmse(self):
        # lam pinned at ~1 and hyperparameters frozen: the Gibbs mean must
        # approach the full-support LMMSE solution
        rng = np.random.default_rng(8)
        j = 16
        a = crandn(rng, 24, j)
        h = crandn(rng, j)
        noise_var = 0.05
        y = a @ h + crandn(rng, 24) * np.sqrt(noise_var)
        problem = CEProblem(a=a, y=y, noise_var_init=noise_var)

        state0 = init_state(problem, slab_var=1.0, lam=1 - 1e-12)
        streams = CoordinateStreams.for_problem((8, 0), j)
        acc = np.zeros(j, dtype=complex)
        n = 4000
        st = state0
        for _ in range(n):
            st = gibbs_ce_sweep(problem, st, streams)
            acc += st.h
        gibbs_mean = acc / n
        lmmse = baseline_lmmse_oracle(problem, np.arange(j), 1.0)
        nmse = np.sum(np.abs(gibbs_mean - lmmse) ** 2) / np.sum(np.abs(lmmse) ** 2)
        assert nmse < 1e-2


class TestOracleLmmse:
    def test_zero_noise_limit_is_least_squares(self):
        rng = np.random.default_rng(9)
        problem, h, support = make_problem(rng, snr_db=200.0)
        est = baseline_lmmse_oracle(problem, support, slab_var=1e12)
        a_s = problem.a[:, support]
        ls = np.linalg.lstsq(a_s, problem.y, rcond=None)[0]
        np.testing.assert_allclose(est[support], ls, atol=1e-6)

    def test_orthonormal_shrinkage_matches_gibbs_conditional_mean(self):
        rng = np.random.default_rng(10)
        j = 8
        a, _ = np.linalg.qr(crandn(rng, j, j))
        y = crandn(rng, j)
        noise_var, slab = 0.2, 1.5
        problem = CEProblem(a=a, y=y, noise_var_init=noise_var)
        est = baseline_lmmse_oracle(problem, np.arange(j), slab)
        q = (a.conj().T @ y) / noise_var
        nu = slab / (1 + slab * problem.col_sq / noise_var)
        np.testing.assert_allclose(est, nu * q, atol=1e-10)

    def test_empty_support_rejected(self):
        rng = np.random.default_rng(11)
        problem, _, _ = make_problem(rng)
        with pytest.raises(ValueError):
            baseline_lmmse_oracle(problem, np.array([], dtype=int), 1.0)


class TestOmp:
    def test_noiseless_exact_recovery(self):
        rng = np.random.default_rng(12)
        m, j, k = 32, 64, 5
        a = crandn(rng, m, j)
        h = np.zeros(j, dtype=complex)
        support = rng.choice(j, size=k, replace=False)
        h[support] = crandn(rng, k) * 3
        problem = CEProblem(a=a, y=a @ h, noise_var_init=1e-12)
        est = baseline_omp(problem, k)
        nmse_db = 10 * np.log10(
            np.sum(np.abs(est - h) ** 2) / np.sum(np.abs(h) ** 2)
        )
        assert nmse_db < -60

    def test_k_zero_rejected(self):
        rng = np.random.default_rng(13)
        problem, _, _ = make_problem(rng)
        with pytest.raises(ValueError):
            baseline_omp(problem, 0)


class TestExchangeability:
    def test_estimator_is_permutation_equivariant(self):
        rng = np.random.default_rng(14)
        problem, h, _ = make_problem(rng, m=20, j=12, k=3)
        perm = np.random.default_rng(99).permutation(12)

        base, _ = estimate_gibbs(problem, n_chains=2, n_iters=30, burn_in=10,
                                 n_keep=20, seed=77)
        problem_p = CEProblem(
            a=problem.a[:, perm], y=problem.y, noise_var_init=problem.noise_var_init
        )
        est_p, _ = estimate_gibbs(
            problem_p, n_chains=2, n_iters=30, burn_in=10, n_keep=20, seed=77,
            labels=perm,
        )
        np.testing.assert_allclose(est_p, base[perm], atol=1e-12)


class TestBenchmarkOrdering:
    def test_gibbs_beats_omp_and_tracks_oracle(self):
        # small version of the estimation benchmark: clustered-sparse 64-dim
        # channel, 36 QPSK pilot slots, SNR 10 dB
        c = build_constellation("QPSK")
        spec = ChannelSpec(
            kind="clustered_sparse", n_rx=64, n_tx=1, sparsity=0.125, n_clusters=4
        )
        n_trials = 12
        nmse = {"gibbs": [], "omp": [], "oracle": []}
        for t in range(n_trials):
            h = gen_channel(spec, (500, t)).ravel()
            a = gen_pilot_matrix(64, 36, c, (501, t)).T
            y, nv = apply_awgn(a @ h, 10.0, 64, (502, t))
            problem = CEProblem(a=a, y=y, noise_var_init=nv)
            support = np.nonzero(h)[0]
            est_g, _ = estimate_gibbs(
                problem, n_chains=4, n_iters=160, burn_in=128, n_keep=128,
                seed=(503, t),
            )
            est_o = baseline_omp(problem, support.size)
            est_l = baseline_lmmse_oracle(problem, support, 64 / support.size)
            for name, est in (("gibbs", est_g), ("omp", est_o), ("oracle", est_l)):
                nmse[name].append(
                    10 * np.log10(np.sum(np.abs(est - h) ** 2) / np.sum(np.abs(h) ** 2))
                )
        gibbs, omp, oracle = (np.mean(nmse[k]) for k in ("gibbs", "omp", "oracle"))
        assert gibbs < omp
        assert gibbs <= oracle + 1.0
        assert oracle <= min(gibbs, omp)  # oracle is the floor
