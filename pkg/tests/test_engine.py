import numpy as np
import pytest

from mcmcrx.engine import (
    ChainError,
    ChainState,
    anneal_temperature,
    mh_accept,
    run_chains,
)


class TestMhAccept:
    def test_equal_density_symmetric_always_accepts(self):
        for u in (0.0, 0.3, 0.999999):
            assert mh_accept(-5.0, -5.0, -1.0, -1.0, u)

    def test_zero_density_proposal_never_accepts(self):
        for u in (0.0, 0.5, 0.999999):
            assert not mh_accept(-5.0, -np.inf, 0.0, 0.0, u)

    def test_nan_raises(self):
        with pytest.raises(ValueError):
            mh_accept(np.nan, 0.0, 0.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            mh_accept(-np.inf, -np.inf, 0.0, 0.0, 0.5)

    def test_half_ratio_monte_carlo(self):
        rng = np.random.default_rng(0)
        n = 10**5
        hits = sum(
            mh_accept(0.0, np.log(0.5), 0.0, 0.0, rng.random()) for _ in range(n)
        )
        assert abs(hits / n - 0.5) < 0.01


class TestAnneal:
    def test_start(self):
        assert anneal_temperature(2.0, 1.0, 0.9, 0) == 2.0

    def test_hand_value(self):
        assert anneal_temperature(2.0, 1.0, 0.9, 7) == max(1.0, 2.0 * 0.9**7)
        assert anneal_temperature(2.0, 1.0, 0.9, 7) == 1.0

    def test_floor(self):
        assert anneal_temperature(2.0, 0.5, 0.5, 10**6) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            anneal_temperature(1.0, 2.0, 0.9, 0)
        with pytest.raises(ValueError):
            anneal_temperature(2.0, 1.0, 1.5, 0)


def _counting_kernel(cs, rng):
    new = ChainState(state=cs.state + 1, log_density=0.0, iteration=cs.iteration)
    return new, 1, 1


def _counting_init(chain_index, rng):
    return ChainState(state=0, log_density=0.0)


class TestRunChains:
    def test_paper_budget_shapes(self):
        # 10 chains x 300 iterations: the channel-estimation run layout
        samples, diags = run_chains(10, 300, 250, _counting_kernel, _counting_init, 0)
        assert samples.n_chains == 10
        assert samples.n_per_chain == 50
        assert len(samples.samples) == 500
        assert len(diags) == 10

    def test_single_sample_when_burnin_is_iters_minus_1(self):
        samples, _ = run_chains(1, 10, 9, _counting_kernel, _counting_init, 0)
        assert len(samples.samples) == 1
        assert samples.samples[0][0] == 10  # state after the 10th step

    def test_burn_in_bounds(self):
        with pytest.raises(ValueError):
            run_chains(1, 5, 5, _counting_kernel, _counting_init, 0)

    def test_worker_count_does_not_change_result(self):
        def kernel(cs, rng):
            step = rng.standard_normal()
            return (
                ChainState(state=cs.state + step, log_density=-abs(cs.state)),
                1,
                1,
            )

        def init(chain_index, rng):
            return ChainState(state=rng.standard_normal(), log_density=0.0)

        s1, _ = run_chains(8, 50, 10, kernel, init, seed=123, n_workers=1)
        s8, _ = run_chains(8, 50, 10, kernel, init, seed=123, n_workers=8)
        assert [s for s, _ in s1.samples] == [s for s, _ in s8.samples]
        assert s1.log_densities().tolist() == s8.log_densities().tolist()

    def test_kernel_failure_carries_chain_index(self):
        def kernel(cs, rng):
            if cs.iteration == 3:
                raise RuntimeError("boom")
            return cs, 1, 1

        with pytest.raises(ChainError, match="chain 0"):
            run_chains(2, 10, 0, kernel, _counting_init, 0)

    def test_acceptance_rate_recorded(self):
        def kernel(cs, rng):
            acc = 1 if rng.random() < 0.25 else 0
            return ChainState(state=cs.state, log_density=0.0), acc, 1

        _, diags = run_chains(1, 4000, 0, kernel, _counting_init, 7)
        assert abs(diags[0].acceptance_rate - 0.25) < 0.03


class TestExactnessOnEnumerableTargets:
    def test_tv_distance_small_on_random_8_state_target(self):
        # generic MH over a fully-supported random proposal must reproduce
        # the enumerated target distribution
        rng_setup = np.random.default_rng(5)
        n_states = 8
        target = rng_setup.random(n_states) + 0.05
        target /= target.sum()
        proposal = rng_setup.random((n_states, n_states)) + 0.05
        proposal /= proposal.sum(axis=1, keepdims=True)
        log_t = np.log(target)
        log_q = np.log(proposal)

        def kernel(cs, rng):
            i = cs.state
            j = int(rng.choice(n_states, p=proposal[i]))
            if mh_accept(log_t[i], log_t[j], log_q[i, j], log_q[j, i], rng.random()):
                return ChainState(state=j, log_density=log_t[j]), 1, 1
            return cs, 0, 1

        def init(chain_index, rng):
            return ChainState(state=0, log_density=log_t[0])

        samples, _ = run_chains(1, 101000, 1000, kernel, init, seed=2)
        counts = np.bincount([s for s, _ in samples.samples], minlength=n_states)
        emp = counts / counts.sum()
        tv = 0.5 * np.abs(emp - target).sum()
        assert tv < 0.05

    def test_detailed_balance_flow_counts_4_states(self):
        rng_setup = np.random.default_rng(9)
        target = rng_setup.random(4) + 0.2
        target /= target.sum()
        log_t = np.log(target)

        def kernel(cs, rng):
            i = cs.state
            j = int(rng.integers(0, 4))
            if j != i and mh_accept(log_t[i], log_t[j], 0.0, 0.0, rng.random()):
                return ChainState(state=j, log_density=log_t[j]), 1, 1
            return cs, 0, 1

        def init(chain_index, rng):
            return ChainState(state=0, log_density=log_t[0])

        samples, _ = run_chains(1, 201000, 1000, kernel, init, seed=3)
        states = [s for s, _ in samples.samples]
        flows = np.zeros((4, 4))
        for a, b in zip(states[:-1], states[1:]):
            flows[a, b] += 1
        for a in range(4):
            for b in range(4):
                if a == b:
                    continue
                n_ab, n_ba = flows[a, b], flows[b, a]
                se = np.sqrt(n_ab + n_ba)
                assert abs(n_ab - n_ba) <= 3 * max(se, 1.0)
