"""Generic Metropolis-Hastings machinery and the parallel multi-chain runner.

A kernel is a step function ``kernel(state, rng) -> (new_state, accepted,
proposed)`` operating on :class:`ChainState`.  Kernels must be reentrant and
must not mutate states they have already returned; the runner records
returned states by reference.

Temperature semantics: kernels may sample from p(x)^(1/T) internally, but the
``log_density`` stored on states (and hence in :class:`SampleSet`) is always
the untempered T=1 value, which is what the downstream estimators consume.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .channel import rng_from_key, split_key

__all__ = [
    "ChainState",
    "SampleSet",
    "ChainDiagnostics",
    "ChainError",
    "mh_accept",
    "run_chains",
    "anneal_temperature",
]


@dataclass
class ChainState:
    state: Any
    log_density: float
    temperature: float = 1.0
    iteration: int = 0


@dataclass
class ChainDiagnostics:
    acceptance_rate: float
    energy_trace: np.ndarray  # log_density after every iteration (T=1 scale)
    best_log_density: float
    best_state: Any = None


@dataclass
class SampleSet:
    """Post-burn-in samples merged chain-major: chain 0 first, then chain 1, ..."""

    samples: list  # of (state, log_density)
    n_chains: int
    burn_in: int

    @property
    def n_per_chain(self) -> int:
        return len(self.samples) // self.n_chains

    def chain(self, i: int) -> list:
        n = self.n_per_chain
        return self.samples[i * n : (i + 1) * n]

    def states(self) -> list:
        return [s for s, _ in self.samples]

    def log_densities(self) -> np.ndarray:
        return np.array([ld for _, ld in self.samples])


class ChainError(RuntimeError):
    """Kernel failure, annotated with the chain that raised it."""

    def __init__(self, chain_index: int, cause: BaseException):
        super().__init__(f"chain {chain_index} failed: {cause!r}")
        self.chain_index = chain_index


def mh_accept(
    log_p_current: float,
    log_p_proposed: float,
    log_q_fwd: float,
    log_q_rev: float,
    uniform_draw: float,
) -> bool:
    """Metropolis-Hastings test: accept iff log(u) < min(0, ratio).

    NaN in any term signals a broken proposal and raises.
    """
    terms = (log_p_current, log_p_proposed, log_q_fwd, log_q_rev)
    if any(math.isnan(t) for t in terms):
        raise ValueError(f"NaN in MH log terms {terms}")
    log_ratio = (log_p_proposed - log_p_current) + (log_q_rev - log_q_fwd)
    if math.isnan(log_ratio):  # e.g. (-inf) - (-inf)
        raise ValueError(f"indeterminate MH ratio from terms {terms}")
    if log_ratio >= 0:
        return True
    return math.log(uniform_draw) < log_ratio if uniform_draw > 0 else log_ratio > -math.inf


def anneal_temperature(t0: float, t_min: float, ratio: float, iteration: int) -> float:
    """Geometric cooling with a floor: max(t_min, t0 * ratio**iteration)."""
    if not (t0 >= t_min > 0):
        raise ValueError("need t0 >= t_min > 0")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    return max(t_min, t0 * ratio**iteration)


def _run_one_chain(
    chain_index: int,
    n_iters: int,
    burn_in: int,
    kernel: Callable,
    init: Callable,
    seed,
) -> tuple[list, ChainDiagnostics]:
    rng = rng_from_key(split_key(seed, chain_index))
    try:
        state = init(chain_index, rng)
        samples = []
        trace = np.empty(n_iters)
        accepted = 0
        proposed = 0
        best_ld = state.log_density
        best_state = state.state
        for it in range(n_iters):
            state = replace(state, iteration=it)
            state, acc, prop = kernel(state, rng)
            accepted += acc
            proposed += prop
            trace[it] = state.log_density
            if state.log_density > best_ld:
                best_ld = state.log_density
                best_state = state.state
            if it >= burn_in:
                samples.append((state.state, state.log_density))
    except Exception as exc:  # noqa: BLE001 - annotate and re-raise
        raise ChainError(chain_index, exc) from exc
    diag = ChainDiagnostics(
        acceptance_rate=accepted / proposed if proposed else 0.0,
        energy_trace=trace,
        best_log_density=best_ld,
        best_state=best_state,
    )
    return samples, diag


def run_chains(
    n_chains: int,
    n_iters: int,
    burn_in: int,
    kernel: Callable,
    init: Callable,
    seed,
    n_workers: int = 1,
) -> tuple[SampleSet, list[ChainDiagnostics]]:
    """Run independent chains and merge their post-burn-in samples.

    Each chain owns the RNG stream keyed by (seed, chain_index), so the
    merged result is a pure function of (seed, config) regardless of
    ``n_workers``.
    """
    if not n_iters > burn_in >= 0:
        raise ValueError(f"need n_iters > burn_in >= 0, got {n_iters}, {burn_in}")
    args = [(i, n_iters, burn_in, kernel, init, seed) for i in range(n_chains)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda a: _run_one_chain(*a), args))
    else:
        results = [_run_one_chain(*a) for a in args]
    merged = []
    diags = []
    for samples, diag in results:
        merged.extend(samples)
        diags.append(diag)
    return SampleSet(samples=merged, n_chains=n_chains, burn_in=burn_in), diags
