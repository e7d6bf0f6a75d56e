"""Monte Carlo experiment driver for the benchmark scenarios.

Seeding is hierarchical so results are reproducible and paired: trial data
(channel, bits, noise) depends only on (master_seed, snr index, trial
index) and is shared by every algorithm in the sweep, while each
algorithm's internal randomness is keyed additionally by a fixed algorithm
id, so adding or removing algorithms never shifts the others' streams.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import decoding
from ..channel import (
    ChannelSpec,
    apply_awgn,
    gen_channel,
    gen_pilot_matrix,
    noise_var_for_snr,
    rng_from_key,
)
from ..core import build_constellation, modulate, to_real_model
from ..detection import (
    DetectionProblem,
    bits_from_lattice,
    detect_mcmc,
    ml_bruteforce,
    mmse_detect,
)
from ..estimation import (
    CEProblem,
    baseline_lmmse_oracle,
    baseline_omp,
    estimate_gibbs,
)
from ..unified import (
    FrameData,
    UnifiedConfig,
    gm_prior_energy,
    lmmse_channel_from_pilots,
    run_unified,
)
from .config import ConfigError, ExperimentConfig
from .metrics import MetricRow, aggregate_trials, compute_metrics

__all__ = ["run_experiment", "SCENARIO_METRICS", "ALGO_IDS", "scenario_summaries"]

# stable ids so random streams never depend on which algorithms are enabled
ALGO_IDS = {
    "gibbs": 1,
    "omp": 2,
    "lmmse_oracle": 3,
    "mmse": 4,
    "ml": 5,
    "nag": 6,
    "dlmc": 7,
    "mcmc": 8,
    "bp": 9,
    "map": 10,
    "unified": 11,
    "pipeline": 12,
}

_DATA_TAG = 7001
_ALGO_TAG = 7002

SCENARIO_METRICS = {
    "ce_nmse": ("nmse_db",),
    "detect_ber": ("ber", "ser"),
    "decode_fer": ("fer", "ber"),
    "unified_ber": ("ber",),
}


def _data_key(config, snr_idx, trial_idx):
    return (config.master_seed, _DATA_TAG, snr_idx, trial_idx)

def _algo_key(config, snr_idx, trial_idx, algo):
    return (config.master_seed, _ALGO_TAG, snr_idx, trial_idx, ALGO_IDS[algo])


# ---------------------------------------------------------------------------
# ce_nmse: pilot-based sparse channel estimation


def _ce_setup(config):
    p = config.params
    return {
        "constellation": build_constellation(p["constellation"]),
        "spec": ChannelSpec(
            kind="clustered_sparse",
            n_rx=p["dim"],
            n_tx=1,
            sparsity=p["sparsity"],
            n_clusters=p["n_clusters"],
            coeff_var=p["coeff_var"],
        ),
    }


def _ce_trial(ctx, config, snr_idx, trial_idx):
    p = config.params
    key = _data_key(config, snr_idx, trial_idx)
    h = gen_channel(ctx["spec"], key + (1,)).ravel()
    a = gen_pilot_matrix(p["dim"], p["n_pilots"], ctx["constellation"], key + (2,)).T
    y, noise_var = apply_awgn(a @ h, config.snr_grid_db[snr_idx], p["dim"], key + (3,))
    problem = CEProblem(a=a, y=y, noise_var_init=noise_var)
    support = np.nonzero(h)[0]
    return {"h": h, "problem": problem, "support": support}


def _ce_run(ctx, data, algo, params, key):
    problem = data["problem"]
    if algo == "gibbs":
        est, _ = estimate_gibbs(
            problem,
            n_chains=params["chains"],
            n_iters=params["iters"],
            burn_in=params["burn_in"],
            n_keep=params["n_keep"],
            seed=key,
        )
    elif algo == "omp":
        k = params["k"] if params["k"] > 0 else data["support"].size
        est = baseline_omp(problem, k)
    elif algo == "lmmse_oracle":
        slab = problem.j / data["support"].size
        est = baseline_lmmse_oracle(problem, data["support"], slab)
    else:
        raise ValueError(f"unknown ce algorithm {algo!r}")
    return {"nmse_db": compute_metrics(data["h"], est, "nmse_db")}


# ---------------------------------------------------------------------------
# detect_ber: uncoded MIMO symbol detection


def _detect_setup(config):
    c = build_constellation(config.params["constellation"])
    if not c.has_quadrature:
        raise ConfigError("detect_ber requires a square QAM/QPSK constellation")
    return {"constellation": c}


def _detect_trial(ctx, config, snr_idx, trial_idx):
    p = config.params
    c = ctx["constellation"]
    key = _data_key(config, snr_idx, trial_idx)
    h = gen_channel(
        ChannelSpec(kind="iid_rayleigh", n_rx=p["n_rx"], n_tx=p["n_tx"]), key + (1,)
    )
    bits = rng_from_key(key + (2,)).integers(
        0, 2, size=p["n_tx"] * c.bits_per_symbol
    ).astype(np.uint8)
    x = modulate(bits, c)
    y, noise_var = apply_awgn(h @ x, config.snr_grid_db[snr_idx], p["n_tx"], key + (3,))
    problem = DetectionProblem.from_constellation(
        to_real_model(h, y, noise_var), c, p["n_tx"]
    )
    return {"bits": bits, "x": x, "problem": problem, "constellation": c}


def _detect_run(ctx, data, algo, params, key):
    problem = data["problem"]
    c = data["constellation"]
    if algo == "mmse":
        _, hard = mmse_detect(problem)
        bits_hat = bits_from_lattice(hard, problem)
    elif algo == "ml":
        bits_hat = bits_from_lattice(ml_bruteforce(problem), problem)
    elif algo in ("gibbs", "nag", "dlmc"):
        kwargs = dict(
            n_chains=params["chains"],
            n_iters=params["iters"],
            burn_in=params["burn_in"],
            seed=key,
        )
        if algo == "gibbs":
            kwargs["temperature"] = params["temperature"]
        if algo == "dlmc" and params.get("step_alpha", 0.0) > 0:
            kwargs["step_alpha"] = params["step_alpha"]
        soft, _ = detect_mcmc(problem, algo, **kwargs)
        bits_hat = soft.hard_bits
    else:
        raise ValueError(f"unknown detect algorithm {algo!r}")
    x_hat = modulate(bits_hat, c)
    return {
        "ber": compute_metrics(data["bits"], bits_hat, "ber"),
        "ser": compute_metrics(data["x"], x_hat, "ser"),
    }


# ---------------------------------------------------------------------------
# decode_fer: BPSK/AWGN frames of a seeded regular code; snr axis is Eb/N0


def _decode_setup(config):
    p = config.params
    pc = decoding.gen_regular_code(p["code_n"], 3, 6, seed=p["code_seed"])
    gen, perm = decoding.derive_generator(pc)
    k = gen.shape[0]
    codebook = None
    if "map" in config.algorithms:
        if k > 20:
            raise ConfigError(f"map enumeration infeasible for k={k}")
        msgs = ((np.arange(1 << k)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(
            np.uint8
        )
        codebook = np.array([decoding.encode(m, gen, perm) for m in msgs])
    return {"pc": pc, "gen": gen, "perm": perm, "k": k, "codebook": codebook}


def _decode_trial(ctx, config, snr_idx, trial_idx):
    pc, gen, perm, k = ctx["pc"], ctx["gen"], ctx["perm"], ctx["k"]
    key = _data_key(config, snr_idx, trial_idx)
    rng = rng_from_key(key)
    msg = rng.integers(0, 2, size=k).astype(np.uint8)
    cw = decoding.encode(msg, gen, perm)
    ebn0_lin = 10.0 ** (config.snr_grid_db[snr_idx] / 10.0)
    rate = k / pc.n
    noise_var = 1.0 / (2.0 * rate * ebn0_lin)  # real AWGN per dimension
    symbols = 1.0 - 2.0 * cw.astype(np.float64)
    y = symbols + np.sqrt(noise_var) * rng.standard_normal(pc.n)
    llr = 2.0 * y / noise_var
    return {"cw": cw, "llr": llr, "pc": pc}


def _decode_run(ctx, data, algo, params, key):
    pc, llr, cw = data["pc"], data["llr"], data["cw"]
    if algo == "mcmc":
        cfg = decoding.DecodeConfig(
            kernel=params["kernel"],
            iters=params["iters"],
            chains=params["chains"],
            t0=params["t0"],
            t_min=params["t_min"],
            ratio=params["ratio"],
            estimator=params["estimator"],
            seed=key,
        )
        bits, _ = decoding.mcmc_decode(llr, pc, cfg)
    elif algo == "bp":
        bits, _ = decoding.bp_decode(llr, pc, params["max_iters"])
    elif algo == "map":
        scores = ctx["codebook"] @ llr
        bits = ctx["codebook"][int(np.argmin(scores))]
    else:
        raise ValueError(f"unknown decode algorithm {algo!r}")
    return {
        "fer": compute_metrics(cw, bits, "fer"),
        "ber": compute_metrics(cw, bits, "ber"),
    }


# ---------------------------------------------------------------------------
# unified_ber: joint CE+detection over a pilot+data frame vs per-block pipeline


def _unified_setup(config):
    c = build_constellation(config.params["constellation"])
    if not c.has_quadrature:
        raise ConfigError("unified_ber requires a square QAM/QPSK constellation")
    return {"constellation": c}


def _unified_trial(ctx, config, snr_idx, trial_idx):
    p = config.params
    c = ctx["constellation"]
    key = _data_key(config, snr_idx, trial_idx)
    snr_db = config.snr_grid_db[snr_idx]
    h = gen_channel(
        ChannelSpec(kind="iid_rayleigh", n_rx=p["n_rx"], n_tx=p["n_tx"]), key + (1,)
    )
    pilots = gen_pilot_matrix(p["n_tx"], p["n_pilot_slots"], c, key + (2,))
    y_pilot, noise_var = apply_awgn(h @ pilots, snr_db, p["n_tx"], key + (3,))
    n_bits = p["n_data_slots"] * p["n_tx"] * c.bits_per_symbol
    bits = rng_from_key(key + (4,)).integers(0, 2, size=n_bits).astype(np.uint8)
    x_data = modulate(bits, c).reshape(p["n_data_slots"], p["n_tx"]).T
    y_data, _ = apply_awgn(h @ x_data, snr_db, p["n_tx"], key + (5,))
    frame = FrameData(y_pilot=y_pilot, pilots=pilots, y_data=y_data,
                      noise_var=noise_var)
    return {"bits": bits, "frame": frame, "constellation": c, "n_tx": p["n_tx"]}


def _unified_run(ctx, data, algo, params, key):
    frame: FrameData = data["frame"]
    c = data["constellation"]
    n_tx = data["n_tx"]
    if algo == "unified":
        prior = gm_prior_energy(
            params["prior_slab_var"], params["prior_spike_var"], params["prior_lam"]
        )
        result = run_unified(
            frame,
            c,
            prior,
            UnifiedConfig(
                outer_iters=params["outer_iters"],
                inner_h_steps=params["inner_h_steps"],
                inner_x_steps=params["inner_x_steps"],
                chains=params["chains"],
                burn_in=params["burn_in"],
                seed=key,
            ),
        )
        bits_hat = np.concatenate([so.hard_bits for so in result.soft_outputs])
    elif algo == "pipeline":
        h_hat = lmmse_channel_from_pilots(frame.y_pilot, frame.pilots, frame.noise_var)
        chunks = []
        for slot in range(frame.n_data_slots):
            model = to_real_model(h_hat, frame.y_data[:, slot], frame.noise_var)
            problem = DetectionProblem.from_constellation(model, c, n_tx)
            _, hard = mmse_detect(problem)
            chunks.append(bits_from_lattice(hard, problem))
        bits_hat = np.concatenate(chunks)
    else:
        raise ValueError(f"unknown unified algorithm {algo!r}")
    return {"ber": compute_metrics(data["bits"], bits_hat, "ber")}


# ---------------------------------------------------------------------------

_SCENARIOS = {
    "ce_nmse": (_ce_setup, _ce_trial, _ce_run),
    "detect_ber": (_detect_setup, _detect_trial, _detect_run),
    "decode_fer": (_decode_setup, _decode_trial, _decode_run),
    "unified_ber": (_unified_setup, _unified_trial, _unified_run),
}


def run_experiment(
    config: ExperimentConfig, n_workers: int = 1
) -> tuple[list[MetricRow], dict]:
    """Run the full sweep; returns (metric rows, per-algorithm failure counts).

    A failing algorithm in one trial is recorded and skipped from that
    algorithm's aggregate only; the sweep continues.
    """
    setup, make_trial, run_algo = _SCENARIOS[config.scenario]
    ctx = setup(config)
    n_snr = len(config.snr_grid_db)
    n_trials = config.n_trials

    def one_trial(task):
        snr_idx, trial_idx = task
        data = make_trial(ctx, config, snr_idx, trial_idx)
        out: dict = {}
        errors: dict = {}
        for algo, params in config.algorithms.items():
            key = _algo_key(config, snr_idx, trial_idx, algo)
            try:
                out[algo] = run_algo(ctx, data, algo, params, key)
            except Exception as exc:  # noqa: BLE001 - failure isolation
                errors[algo] = f"snr_idx={snr_idx} trial={trial_idx}: {exc!r}"
        return out, errors

    tasks = [(si, ti) for si in range(n_snr) for ti in range(n_trials)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one_trial, tasks))
    else:
        results = [one_trial(t) for t in tasks]

    by_index = {task: res for task, res in zip(tasks, results)}
    rows: list[MetricRow] = []
    failures: dict = {}
    for algo in config.algorithms:
        for snr_idx, snr_db in enumerate(config.snr_grid_db):
            values: dict = {m: [] for m in SCENARIO_METRICS[config.scenario]}
            for trial_idx in range(n_trials):
                out, errors = by_index[(snr_idx, trial_idx)]
                if algo in errors:
                    failures.setdefault(algo, []).append(errors[algo])
                    continue
                for m, v in out[algo].items():
                    values[m].append(v)
            for metric, vals in values.items():
                if not vals:
                    continue
                value, ci = aggregate_trials(vals)
                rows.append(
                    MetricRow(
                        scenario=config.scenario,
                        algorithm=algo,
                        snr_db=float(snr_db),
                        metric=metric,
                        value=value,
                        ci95=ci,
                        n_trials=len(vals),
                        seed=config.master_seed,
                    )
                )
    return rows, failures


def scenario_summaries() -> list[str]:
    from .config import SCENARIO_ALGORITHMS

    out = []
    for name in sorted(_SCENARIOS):
        algos = ", ".join(sorted(SCENARIO_ALGORITHMS[name]))
        metrics = ", ".join(SCENARIO_METRICS[name])
        out.append(f"{name}: metrics [{metrics}]; algorithms [{algos}]")
    return out
