"""Pilot-based sparse Bayesian channel estimation.

The estimator is a Gibbs sampler over a Bernoulli-Gaussian (spike-and-slab)
model of the coefficient vector h in ``y = A h + n``, with conjugate updates
for the inclusion probability, slab variance, and noise variance, so no
prior knowledge of the sparsity level is needed.  OMP and an oracle LMMSE
(true support known) serve as baselines.

Coordinate randomness is keyed by coordinate label, not by stream position:
relabeling the columns of A together with the labels permutes the estimate
exactly.  Sweeps visit coordinates in ascending label order by default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import rng_from_key, split_key
from .engine import ChainState, SampleSet, run_chains

__all__ = [
    "CEProblem",
    "SpikeSlabState",
    "HyperPriors",
    "CoordinateStreams",
    "gibbs_ce_sweep",
    "update_hyperparams",
    "mmse_from_samples",
    "baseline_lmmse_oracle",
    "baseline_omp",
    "estimate_gibbs",
]


@dataclass(frozen=True)
class CEProblem:
    """Observation y = A h + n with a known sensing/pilot matrix A."""

    a: np.ndarray  # (m_obs, j) complex
    y: np.ndarray  # (m_obs,) complex
    noise_var_init: float

    def __post_init__(self):
        if self.a.ndim != 2 or self.y.shape != (self.a.shape[0],):
            raise ValueError("y length must equal the number of rows of A")
        if not self.noise_var_init > 0:
            raise ValueError("noise_var_init must be positive")
        col_sq = np.sum(np.abs(self.a) ** 2, axis=0).real
        if np.any(col_sq == 0):
            raise ValueError("A has a zero column")
        object.__setattr__(self, "col_sq", col_sq)

    @property
    def m_obs(self) -> int:
        return self.a.shape[0]

    @property
    def j(self) -> int:
        return self.a.shape[1]


@dataclass
class SpikeSlabState:
    s: np.ndarray  # (j,) uint8 support indicators
    h: np.ndarray  # (j,) complex, zero where s == 0
    lam: float  # prior inclusion probability
    slab_var: float
    noise_var: float


@dataclass(frozen=True)
class HyperPriors:
    """Weak conjugate hyperpriors: Beta(a0,b0), InvGamma(c0,d0), InvGamma(e0,f0)."""

    a0: float = 1.0
    b0: float = 1.0
    c0: float = 1e-3
    d0: float = 1e-3
    e0: float = 1e-3
    f0: float = 1e-3


class CoordinateStreams:
    """Per-coordinate RNG streams keyed by (base key, coordinate label).

    One extra stream (label -1) serves whole-state draws such as the
    hyperparameter updates.
    """

    def __init__(self, key, labels):
        self._key = split_key(key)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.order = np.argsort(self.labels, kind="stable")
        self._gens = {int(l): rng_from_key(split_key(self._key, int(l))) for l in labels}
        self.hyper = rng_from_key(split_key(self._key, -1))

    @classmethod
    def for_problem(cls, key, n_coords: int, labels=None) -> "CoordinateStreams":
        return cls(key, np.arange(n_coords) if labels is None else labels)

    def uniform(self, label: int) -> float:
        return self._gens[int(label)].random()

    def cnormal(self, label: int) -> complex:
        g = self._gens[int(label)]
        return complex(g.standard_normal(), g.standard_normal())


def gibbs_ce_sweep(
    problem: CEProblem, state: SpikeSlabState, rng: CoordinateStreams
) -> SpikeSlabState:
    """One full spike-and-slab sweep over all coordinates.

    For coordinate j with residual r_j (y minus all other contributions):
    q_j = a_j^H r_j / sigma^2, S_j = ||a_j||^2 / sigma^2, and the inclusion
    odds are (lam/(1-lam)) * exp(nu_j |q_j|^2) / (1 + slab*S_j) with
    nu_j = slab / (1 + slab*S_j); active coefficients are redrawn from
    CN(nu_j q_j, nu_j).  The residual is maintained incrementally.
    """
    s = state.s.copy()
    h = state.h.copy()
    lam, slab, nv = state.lam, state.slab_var, state.noise_var
    a = problem.a
    col_sq = problem.col_sq
    r = problem.y - a @ h
    log_prior_odds = np.log(lam) - np.log1p(-lam)
    for pos in rng.order:
        aj = a[:, pos]
        # residual with coordinate pos excluded (h[pos] is 0 when inactive)
        q = (np.vdot(aj, r) + col_sq[pos] * h[pos]) / nv
        big_s = col_sq[pos] / nv
        denom = 1.0 + slab * big_s
        nu = slab / denom
        log_odds = log_prior_odds - np.log(denom) + nu * abs(q) ** 2
        # p = 1/(1+exp(-log_odds)) evaluated stably in the log domain
        if log_odds >= 0:
            p_inc = 1.0 / (1.0 + np.exp(-log_odds))
        else:
            p_inc = np.exp(log_odds) / (1.0 + np.exp(log_odds))
        label = rng.labels[pos]
        h_old = h[pos]
        if rng.uniform(label) < p_inc:
            draw = rng.cnormal(label)
            h_new = nu * q + np.sqrt(nu / 2.0) * draw
            s[pos] = 1
        else:
            h_new = 0.0
            s[pos] = 0
        if h_new != h_old:
            r += aj * (h_old - h_new)
            h[pos] = h_new
    return replace(state, s=s, h=h)


def update_hyperparams(
    state: SpikeSlabState,
    problem: CEProblem,
    priors: HyperPriors,
    rng: np.random.Generator,
) -> SpikeSlabState:
    """Conjugate redraw of (lam, slab_var, noise_var).

    Complex-variate convention: |h_j|^2 of a CN(0, v) coefficient is
    Exponential with mean v, so K active coefficients contribute shape K
    (not K/2) to the inverse-gamma update; likewise each complex
    observation contributes shape 1 to the noise update.
    """
    k = int(state.s.sum())
    j = problem.j
    lam = rng.beta(priors.a0 + k, priors.b0 + j - k)
    lam = min(max(lam, 1e-12), 1.0 - 1e-12)
    slab_scale = priors.d0 + float(np.sum(np.abs(state.h[state.s == 1]) ** 2))
    # weak-shape gamma draws can underflow to 0.0; clip to keep variances finite
    slab = np.clip(slab_scale / max(rng.gamma(priors.c0 + k), 1e-290), 1e-12, 1e12)
    resid = problem.y - problem.a @ state.h
    noise_scale = priors.f0 + float(np.sum(np.abs(resid) ** 2))
    noise = np.clip(
        noise_scale / max(rng.gamma(priors.e0 + problem.m_obs), 1e-290), 1e-12, 1e12
    )
    return replace(state, lam=lam, slab_var=slab, noise_var=noise)


def _log_joint(problem: CEProblem, state: SpikeSlabState) -> float:
    resid = problem.y - problem.a @ state.h
    k = int(state.s.sum())
    ll = -problem.m_obs * np.log(np.pi * state.noise_var)
    ll -= float(np.sum(np.abs(resid) ** 2)) / state.noise_var
    active = state.s == 1
    ll -= k * np.log(np.pi * state.slab_var)
    ll -= float(np.sum(np.abs(state.h[active]) ** 2)) / state.slab_var
    ll += k * np.log(state.lam) + (problem.j - k) * np.log1p(-state.lam)
    return ll


def init_state(problem: CEProblem, slab_var: float = 1.0, lam: float = 0.5) -> SpikeSlabState:
    """All-active warm start from the ridge least-squares solution."""
    a = problem.a
    j = problem.j
    gram = a.conj().T @ a + problem.noise_var_init * np.eye(j)
    h0 = np.linalg.solve(gram, a.conj().T @ problem.y)
    return SpikeSlabState(
        s=np.ones(j, dtype=np.uint8),
        h=h0,
        lam=lam,
        slab_var=slab_var,
        noise_var=problem.noise_var_init,
    )


def estimate_gibbs(
    problem: CEProblem,
    n_chains: int = 10,
    n_iters: int = 332,
    burn_in: int = 300,
    n_keep: int = 320,
    seed=0,
    priors: HyperPriors = HyperPriors(),
    sample_hyperparams: bool = True,
    labels=None,
    n_workers: int = 1,
) -> tuple[np.ndarray, SampleSet]:
    """Full Gibbs channel estimate: run chains, average kept samples.

    ``labels`` names each coordinate for RNG keying and sweep order
    (default: position index); relabeling columns of A together with their
    labels permutes the estimate exactly.
    """

    # Coordinate streams are keyed by (seed, chain_index, label) and travel
    # with the chain state so the kernel stays reentrant.
    def chain_init(chain_index, _rng):
        st = init_state(problem)
        streams = CoordinateStreams.for_problem(
            split_key(seed, chain_index), problem.j, labels=labels
        )
        return ChainState(
            state=(st, streams), log_density=_log_joint(problem, st)
        )

    def chain_kernel(cs: ChainState, rng: np.random.Generator):
        st, streams = cs.state
        st = gibbs_ce_sweep(problem, st, streams)
        if sample_hyperparams:
            st = update_hyperparams(st, problem, priors, streams.hyper)
        new = ChainState(
            state=(st, streams),
            log_density=_log_joint(problem, st),
            iteration=cs.iteration,
        )
        return new, 1, 1  # Gibbs: proposals always accepted

    samples, _diags = run_chains(
        n_chains, n_iters, burn_in, chain_kernel, chain_init, seed, n_workers=n_workers
    )
    return mmse_from_samples(samples, n_keep), samples


def mmse_from_samples(samples: SampleSet, n_keep: int, spacing: str = "even") -> np.ndarray:
    """Empirical MMSE estimate: mean of n_keep coefficient vectors drawn
    evenly across chains (or from each chain's tail with spacing="tail")."""
    if not samples.samples:
        raise ValueError("empty sample set")
    per_chain = samples.n_per_chain
    if n_keep > per_chain * samples.n_chains:
        raise ValueError(
            f"n_keep={n_keep} exceeds available {per_chain * samples.n_chains}"
        )
    base = n_keep // samples.n_chains
    extra = n_keep % samples.n_chains
    acc = None
    for c in range(samples.n_chains):
        k = base + (1 if c < extra else 0)
        if k == 0:
            continue
        chain = samples.chain(c)
        if spacing == "even":
            idx = np.linspace(0, len(chain) - 1, k).astype(int)
        elif spacing == "tail":
            idx = np.arange(len(chain) - k, len(chain))
        else:
            raise ValueError(f"unknown spacing {spacing!r}")
        for i in idx:
            h = _state_h(chain[i][0])
            acc = h.astype(np.complex128).copy() if acc is None else acc + h
    return acc / n_keep


def _state_h(state) -> np.ndarray:
    if isinstance(state, tuple):  # (SpikeSlabState, CoordinateStreams)
        state = state[0]
    return state.h


def baseline_lmmse_oracle(
    problem: CEProblem, true_support: np.ndarray, slab_var: float
) -> np.ndarray:
    """LMMSE restricted to the true support (oracle index information)."""
    support = np.asarray(true_support)
    if support.dtype == bool:
        support = np.nonzero(support)[0]
    if support.size == 0:
        raise ValueError("support must be nonempty")
    a_s = problem.a[:, support]
    ridge = problem.noise_var_init / slab_var
    gram = a_s.conj().T @ a_s + ridge * np.eye(support.size)
    h_s = np.linalg.solve(gram, a_s.conj().T @ problem.y)
    h = np.zeros(problem.j, dtype=np.complex128)
    h[support] = h_s
    return h


def baseline_omp(problem: CEProblem, k: int) -> np.ndarray:
    """Orthogonal matching pursuit with per-step least-squares refit."""
    if not 1 <= k <= min(problem.m_obs, problem.j):
        raise ValueError(f"k={k} out of range for {problem.m_obs}x{problem.j}")
    a = problem.a
    norms = np.sqrt(problem.col_sq)
    r = problem.y.copy()
    support: list[int] = []
    h_s = np.zeros(0, dtype=np.complex128)
    for _ in range(k):
        scores = np.abs(a.conj().T @ r) / norms
        scores[support] = -1.0
        jstar = int(np.argmax(scores))
        if scores[jstar] <= 1e-12 * np.linalg.norm(problem.y):
            break  # residual orthogonal to everything left: rank exhausted
        support.append(jstar)
        a_s = a[:, support]
        h_s, *_ = np.linalg.lstsq(a_s, problem.y, rcond=None)
        r = problem.y - a_s @ h_s
    h = np.zeros(problem.j, dtype=np.complex128)
    h[support] = h_s
    return h
