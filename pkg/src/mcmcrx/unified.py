"""Joint channel-and-symbol posterior sampling over a pilot+data frame.

One Markov chain alternates Metropolis-adjusted Langevin (MALA) updates of
the continuous channel coefficients with discrete-Langevin MH updates of
each data slot's symbols (systematic-scan Metropolis-within-Gibbs), so the
two blocks exchange information by conditioning on each other's current
sample.  The channel prior enters through a pluggable energy interface.

Channel parametrization: h = [Re(H).ravel(), Im(H).ravel()], a real vector
of 2*M*N coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import rng_from_key, split_key
from .core import Constellation, RealModel, to_real_model
from .detection import (
    DetectionProblem,
    SoftOutput,
    default_step_alpha,
    dlmc_iteration,
    llr_from_candidates,
    mmse_detect,
)
from .engine import SampleSet, mh_accept

__all__ = [
    "PriorEnergy",
    "GaussianPrior",
    "GaussianMixturePrior",
    "gm_prior_energy",
    "FrameData",
    "JointState",
    "UnifiedConfig",
    "UnifiedResult",
    "joint_log_target",
    "mala_channel_step",
    "run_unified",
    "lmmse_channel_from_pilots",
    "h_real_to_matrix",
    "h_matrix_to_real",
]


class PriorEnergy:
    """Interface: unnormalized -log prior of the real channel vector."""

    def energy(self, h: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianPrior(PriorEnergy):
    """Zero-mean isotropic Gaussian with the given per-component variance."""

    var: float

    def energy(self, h: np.ndarray) -> float:
        return float(h @ h) / (2.0 * self.var)

    def grad(self, h: np.ndarray) -> np.ndarray:
        return h / self.var


@dataclass(frozen=True)
class GaussianMixturePrior(PriorEnergy):
    """Two-component zero-mean mixture per complex coefficient pair.

    Each (Re, Im) pair shares one mixture indicator; variances are per real
    component, so lambda -> 1 degenerates to h^2/(2 slab_var) per dimension.
    """

    slab_var: float
    spike_var: float
    lam: float

    def _log_parts(self, h: np.ndarray):
        half = h.shape[0] // 2
        rho2 = h[:half] ** 2 + h[half:] ** 2  # per-pair squared radius
        log_slab = (
            np.log(self.lam)
            - np.log(2.0 * np.pi * self.slab_var)
            - rho2 / (2.0 * self.slab_var)
        )
        log_spike = (
            np.log1p(-self.lam)
            - np.log(2.0 * np.pi * self.spike_var)
            - rho2 / (2.0 * self.spike_var)
        )
        return log_slab, log_spike

    def energy(self, h: np.ndarray) -> float:
        log_slab, log_spike = self._log_parts(h)
        hi = np.maximum(log_slab, log_spike)
        return -float(np.sum(hi + np.log(np.exp(log_slab - hi) + np.exp(log_spike - hi))))

    def grad(self, h: np.ndarray) -> np.ndarray:
        log_slab, log_spike = self._log_parts(h)
        # responsibility of the slab component, computed stably
        resp = 1.0 / (1.0 + np.exp(np.clip(log_spike - log_slab, -700.0, 700.0)))
        inv_var = resp / self.slab_var + (1.0 - resp) / self.spike_var
        return h * np.concatenate([inv_var, inv_var])


def gm_prior_energy(slab_var: float, spike_var: float, lam: float) -> GaussianMixturePrior:
    """Analytic Gaussian-mixture channel prior (sparsity-inducing)."""
    if not slab_var > spike_var > 0:
        raise ValueError("need slab_var > spike_var > 0")
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    return GaussianMixturePrior(slab_var=slab_var, spike_var=spike_var, lam=lam)


@dataclass(frozen=True)
class FrameData:
    """Observations of one coherence block: pilots then data slots."""

    y_pilot: np.ndarray  # (M, P) complex
    pilots: np.ndarray  # (N, P) complex, known symbols
    y_data: np.ndarray  # (M, D) complex
    noise_var: float  # complex per-entry noise variance

    @property
    def n_rx(self) -> int:
        return self.y_pilot.shape[0]

    @property
    def n_tx(self) -> int:
        return self.pilots.shape[0]

    @property
    def n_data_slots(self) -> int:
        return self.y_data.shape[1]


def h_matrix_to_real(h: np.ndarray) -> np.ndarray:
    return np.concatenate([h.real.ravel(), h.imag.ravel()])


def h_real_to_matrix(h_real: np.ndarray, n_rx: int, n_tx: int) -> np.ndarray:
    half = h_real.shape[0] // 2
    return h_real[:half].reshape(n_rx, n_tx) + 1j * h_real[half:].reshape(n_rx, n_tx)


@dataclass
class JointState:
    h: np.ndarray  # real channel vector (2*M*N,)
    x_r: np.ndarray  # (2N, D) real lattice matrix, one column per data slot
    log_joint: float
    grad_h: np.ndarray  # cached gradient at h (given x_r)
    temperature: float = 1.0


def _x_complex(x_r: np.ndarray) -> np.ndarray:
    n = x_r.shape[0] // 2
    return x_r[:n] + 1j * x_r[n:]


def joint_log_target(
    h_real: np.ndarray,
    x_r: np.ndarray,
    frame: FrameData,
    prior: PriorEnergy,
) -> tuple[float, np.ndarray]:
    """Log joint density of (channel, symbols) and its channel gradient.

    value = -(||Y_p - H Xbar||^2 + sum_d ||y_d - H x_d||^2) / (2 nv_dim)
            - prior.energy(h);  nv_dim = noise_var / 2.
    """
    nv_dim = frame.noise_var / 2.0
    h = h_real_to_matrix(h_real, frame.n_rx, frame.n_tx)
    r_p = frame.y_pilot - h @ frame.pilots
    sq = float(np.sum(np.abs(r_p) ** 2))
    g_c = r_p @ frame.pilots.conj().T
    if frame.n_data_slots:
        x_c = _x_complex(x_r)
        r_d = frame.y_data - h @ x_c
        sq += float(np.sum(np.abs(r_d) ** 2))
        g_c = g_c + r_d @ x_c.conj().T
    value = -sq / (2.0 * nv_dim) - prior.energy(h_real)
    grad = (
        np.concatenate([g_c.real.ravel(), g_c.imag.ravel()]) / nv_dim
        - prior.grad(h_real)
    )
    return value, grad


def mala_channel_step(
    state: JointState,
    frame: FrameData,
    prior: PriorEnergy,
    step_tau: float,
    rng: np.random.Generator,
) -> tuple[JointState, bool]:
    """Metropolis-adjusted Langevin update of the channel block."""
    if not step_tau > 0:
        raise ValueError("step_tau must be positive")
    h = state.h
    drift = h + step_tau * state.grad_h
    h_prop = drift + np.sqrt(2.0 * step_tau) * rng.standard_normal(h.shape[0])
    val_p, grad_p = joint_log_target(h_prop, state.x_r, frame, prior)
    log_q_fwd = -float(np.sum((h_prop - drift) ** 2)) / (4.0 * step_tau)
    drift_rev = h_prop + step_tau * grad_p
    log_q_rev = -float(np.sum((h - drift_rev) ** 2)) / (4.0 * step_tau)
    if mh_accept(state.log_joint, val_p, log_q_fwd, log_q_rev, rng.random()):
        return (
            JointState(h=h_prop, x_r=state.x_r, log_joint=val_p, grad_h=grad_p,
                       temperature=state.temperature),
            True,
        )
    return state, False


def lmmse_channel_from_pilots(
    y_pilot: np.ndarray, pilots: np.ndarray, noise_var: float, prior_var: float = 1.0
) -> np.ndarray:
    """Classical per-row LMMSE channel estimate from the pilot block."""
    n = pilots.shape[0]
    gram = pilots @ pilots.conj().T + (noise_var / prior_var) * np.eye(n)
    return y_pilot @ pilots.conj().T @ np.linalg.inv(gram)


@dataclass(frozen=True)
class UnifiedConfig:
    outer_iters: int = 60
    inner_h_steps: int = 5
    inner_x_steps: int = 2
    chains: int = 2
    burn_in: int = 20  # outer iterations discarded (also the tuning window)
    step_tau: float = 1e-3  # initial MALA step, auto-tuned during burn-in
    target_accept: float = 0.57
    llr_clamp: float = 12.0
    seed: int | tuple = 0


@dataclass
class UnifiedResult:
    h_estimate: np.ndarray  # (M, N) complex
    soft_outputs: list  # per data slot SoftOutput
    diagnostics: dict


def run_unified(
    frame: FrameData,
    constellation: Constellation,
    prior: PriorEnergy,
    config: UnifiedConfig = UnifiedConfig(),
) -> UnifiedResult:
    """Alternating joint sampler over channels and per-slot symbols.

    Each outer iteration runs ``inner_h_steps`` MALA channel updates with the
    symbols fixed, then ``inner_x_steps`` discrete-Langevin MH updates per
    data slot with the channel fixed.  The MALA step size is tuned toward
    the target acceptance during burn-in and frozen afterwards.
    """
    if config.outer_iters <= config.burn_in:
        raise ValueError("outer_iters must exceed burn_in")
    if config.inner_h_steps < 1 or config.inner_x_steps < 1:
        raise ValueError("inner step counts must be >= 1")
    m, n, d = frame.n_rx, frame.n_tx, frame.n_data_slots
    h_samples = []
    slot_samples: list[list] = [[] for _ in range(d)]
    mala_acc = mala_prop = 0
    dlmc_acc = dlmc_prop = 0
    taus = []

    h_init_mat = lmmse_channel_from_pilots(frame.y_pilot, frame.pilots, frame.noise_var)

    for chain in range(config.chains):
        rng = rng_from_key(split_key(config.seed, chain))
        log_tau = np.log(config.step_tau)

        h_mat = h_init_mat
        model0 = to_real_model(h_mat, frame.y_data[:, 0], frame.noise_var)
        prob0 = DetectionProblem.from_constellation(model0, constellation, n)
        x_r = np.empty((2 * n, d))
        for slot in range(d):
            slot_model = RealModel(
                h_r=model0.h_r,
                y_r=np.concatenate([frame.y_data[:, slot].real, frame.y_data[:, slot].imag]),
                noise_var_per_dim=model0.noise_var_per_dim,
            )
            _, x_r[:, slot] = mmse_detect(
                DetectionProblem.from_constellation(slot_model, constellation, n)
            )
        h_real = h_matrix_to_real(h_mat)
        val, grad = joint_log_target(h_real, x_r, frame, prior)
        state = JointState(h=h_real, x_r=x_r, log_joint=val, grad_h=grad)
        step_alpha = default_step_alpha(prob0)

        for outer in range(config.outer_iters):
            tau = float(np.exp(log_tau))
            acc_h = 0
            for _ in range(config.inner_h_steps):
                state, acc = mala_channel_step(state, frame, prior, tau, rng)
                acc_h += int(acc)
            if outer < config.burn_in:
                rate = acc_h / config.inner_h_steps
                log_tau += 0.5 * (rate - config.target_accept)
            else:
                mala_acc += acc_h
                mala_prop += config.inner_h_steps

            # symbol block: per-slot discrete Langevin holding the channel
            h_mat = h_real_to_matrix(state.h, m, n)
            h_r = np.block([[h_mat.real, -h_mat.imag], [h_mat.imag, h_mat.real]])
            nv_dim = frame.noise_var / 2.0
            x_r = state.x_r.copy()
            slot_f = np.empty(d)
            for slot in range(d):
                y_r = np.concatenate(
                    [frame.y_data[:, slot].real, frame.y_data[:, slot].imag]
                )
                sp = DetectionProblem.from_constellation(
                    RealModel(h_r=h_r, y_r=y_r, noise_var_per_dim=nv_dim),
                    constellation,
                    n,
                )
                x = x_r[:, slot]
                for _ in range(config.inner_x_steps):
                    x, f, acc = dlmc_iteration(x, sp, step_alpha, 1.0, rng)
                    if outer >= config.burn_in:
                        dlmc_acc += int(acc)
                        dlmc_prop += 1
                x_r[:, slot] = x
                slot_f[slot] = f
            val, grad = joint_log_target(state.h, x_r, frame, prior)
            state = JointState(h=state.h, x_r=x_r, log_joint=val, grad_h=grad)

            if outer >= config.burn_in:
                h_samples.append(state.h.copy())
                for slot in range(d):
                    slot_samples[slot].append((x_r[:, slot].copy(), slot_f[slot]))
        taus.append(float(np.exp(log_tau)))

    h_mean = np.mean(h_samples, axis=0)
    h_estimate = h_real_to_matrix(h_mean, m, n)

    soft_outputs = []
    n_kept = config.outer_iters - config.burn_in
    ref_model = to_real_model(h_estimate, frame.y_data[:, 0], frame.noise_var)
    h_r_ref = ref_model.h_r
    nv_dim = frame.noise_var / 2.0
    for slot in range(d):
        # rescore candidates under the final channel estimate so the soft
        # outputs are consistent across samples drawn at different channels
        y_r = np.concatenate([frame.y_data[:, slot].real, frame.y_data[:, slot].imag])
        ref_prob = DetectionProblem.from_constellation(
            RealModel(h_r=h_r_ref, y_r=y_r, noise_var_per_dim=nv_dim),
            constellation, n,
        )
        rescored = []
        for x, _f in slot_samples[slot]:
            r = y_r - h_r_ref @ x
            rescored.append((x, -float(r @ r) / (2.0 * nv_dim)))
        ss = SampleSet(samples=rescored, n_chains=config.chains,
                       burn_in=config.burn_in)
        soft_outputs.append(llr_from_candidates(ss, ref_prob, clamp=config.llr_clamp))
    diagnostics = {
        "mala_acceptance": mala_acc / mala_prop if mala_prop else 0.0,
        "dlmc_acceptance": dlmc_acc / dlmc_prop if dlmc_prop else 0.0,
        "step_tau": taus,
        "n_samples": len(h_samples),
        "samples_per_chain": n_kept,
    }
    return UnifiedResult(h_estimate=h_estimate, soft_outputs=soft_outputs,
                         diagnostics=diagnostics)
