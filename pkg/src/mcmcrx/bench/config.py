"""Experiment configuration: sectioned key=value text, strictly validated.

Grammar: blank lines and '#' comments are skipped; top-level keys come
first; '[name]' opens an algorithm section whose keys parameterize that
algorithm.  Values are typed scalars or comma-separated lists.  Unknown
keys and unknown algorithms are rejected by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "serialize_config", "SCENARIO_KEYS", "SCENARIO_ALGORITHMS"]


class ConfigError(ValueError):
    pass


def _typed(spec, raw, where):
    kind, _default = spec
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "float_list":
            return [float(t.strip()) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise ConfigError(f"{where}: unknown type {kind}")


# (type, default); default None means required
COMMON_KEYS = {
    "scenario": ("str", None),
    "snr_grid_db": ("float_list", None),
    "n_trials": ("int", None),
    "master_seed": ("int", 0),
    "output_path": ("str", "results.csv"),
}

SCENARIO_KEYS = {
    "ce_nmse": {
        "dim": ("int", 64),
        "n_pilots": ("int", 36),
        "sparsity": ("float", 0.125),
        "n_clusters": ("int", 4),
        "coeff_var": ("float", 1.0),
        "constellation": ("str", "QPSK"),
    },
    "detect_ber": {
        "n_rx": ("int", 4),
        "n_tx": ("int", 4),
        "constellation": ("str", "16QAM"),
    },
    "decode_fer": {
        "code_n": ("int", 96),
        "code_seed": ("int", 1),
    },
    "unified_ber": {
        "n_rx": ("int", 8),
        "n_tx": ("int", 4),
        "constellation": ("str", "QPSK"),
        "n_pilot_slots": ("int", 30),
        "n_data_slots": ("int", 50),
    },
}

SCENARIO_ALGORITHMS = {
    "ce_nmse": {
        "gibbs": {
            "chains": ("int", 10),
            "iters": ("int", 332),
            "burn_in": ("int", 300),
            "n_keep": ("int", 320),
        },
        "omp": {"k": ("int", 0)},  # 0: use the true sparsity count
        "lmmse_oracle": {},
    },
    "detect_ber": {
        "mmse": {},
        "ml": {},
        "gibbs": {
            "chains": ("int", 8),
            "iters": ("int", 40),
            "burn_in": ("int", 8),
            "temperature": ("float", 1.0),
        },
        "nag": {
            "chains": ("int", 16),
            "iters": ("int", 32),
            "burn_in": ("int", 4),
            "momentum": ("float", 0.9),
        },
        "dlmc": {
            "chains": ("int", 8),
            "iters": ("int", 40),
            "burn_in": ("int", 8),
            "step_alpha": ("float", 0.0),  # 0: spacing-scaled default
        },
    },
    "decode_fer": {
        "mcmc": {
            "kernel": ("str", "mh"),
            "chains": ("int", 4),
            "iters": ("int", 3000),
            "t0": ("float", 2.0),
            "t_min": ("float", 0.4),
            "ratio": ("float", 0.995),
            "estimator": ("str", "bit_count"),
        },
        "bp": {"max_iters": ("int", 50)},
        "map": {},
    },
    "unified_ber": {
        "unified": {
            "outer_iters": ("int", 60),
            "inner_h_steps": ("int", 5),
            "inner_x_steps": ("int", 2),
            "chains": ("int", 2),
            "burn_in": ("int", 20),
            "prior_lam": ("float", 0.9),
            "prior_slab_var": ("float", 0.5),
            "prior_spike_var": ("float", 0.01),
        },
        "pipeline": {},
    },
}


@dataclass
class ExperimentConfig:
    scenario: str
    snr_grid_db: list
    n_trials: int
    master_seed: int
    output_path: str
    params: dict = field(default_factory=dict)  # scenario-level keys
    algorithms: dict = field(default_factory=dict)  # name -> {key: value}


def parse_config(text: str) -> ExperimentConfig:
    top: dict = {}
    sections: dict = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section {current!r}")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key before '='")
        target = top if current is None else sections[current]
        if key in target:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        target[key] = (val, lineno)
    return _validate(top, sections)


def _validate(top: dict, sections: dict) -> ExperimentConfig:
    if "scenario" not in top:
        raise ConfigError("missing required key 'scenario'")
    scenario = top["scenario"][0]
    if scenario not in SCENARIO_KEYS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIO_KEYS)}"
        )
    schema = {**COMMON_KEYS, **SCENARIO_KEYS[scenario]}
    values: dict = {}
    for key, (raw, lineno) in top.items():
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _typed(schema[key], raw, f"line {lineno}: key {key!r}")
    for key, (kind, default) in schema.items():
        if key not in values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            values[key] = default

    algo_schema = SCENARIO_ALGORITHMS[scenario]
    algorithms: dict = {}
    for name, kv in sections.items():
        if name not in algo_schema:
            raise ConfigError(
                f"algorithm {name!r} is not implemented for scenario {scenario!r}; "
                f"expected one of {sorted(algo_schema)}"
            )
        params: dict = {}
        for key, (raw, lineno) in kv.items():
            if key not in algo_schema[name]:
                raise ConfigError(
                    f"line {lineno}: unknown key {key!r} in section [{name}]"
                )
            params[key] = _typed(algo_schema[name][key], raw, f"line {lineno}: key {key!r}")
        for key, (kind, default) in algo_schema[name].items():
            params.setdefault(key, default)
        algorithms[name] = params
    if not algorithms:
        # no sections: run every algorithm of the scenario at its defaults
        for name, keys in algo_schema.items():
            algorithms[name] = {k: d for k, (t, d) in keys.items()}

    if not values["snr_grid_db"]:
        raise ConfigError("snr_grid_db must be nonempty")
    if values["n_trials"] < 1:
        raise ConfigError("n_trials must be >= 1")

    params = {k: values[k] for k in SCENARIO_KEYS[scenario]}
    return ExperimentConfig(
        scenario=scenario,
        snr_grid_db=values["snr_grid_db"],
        n_trials=values["n_trials"],
        master_seed=values["master_seed"],
        output_path=values["output_path"],
        params=params,
        algorithms=algorithms,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text)


def _fmt_value(v) -> str:
    if isinstance(v, list):
        return ", ".join(_fmt_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form: fixed top-level key order, sorted sections/keys."""
    lines = [f"scenario = {config.scenario}"]
    for key in sorted(config.params):
        lines.append(f"{key} = {_fmt_value(config.params[key])}")
    lines.append(f"snr_grid_db = {_fmt_value(config.snr_grid_db)}")
    lines.append(f"n_trials = {config.n_trials}")
    lines.append(f"master_seed = {config.master_seed}")
    lines.append(f"output_path = {config.output_path}")
    for name in sorted(config.algorithms):
        lines.append("")
        lines.append(f"[{name}]")
        for key in sorted(config.algorithms[name]):
            lines.append(f"{key} = {_fmt_value(config.algorithms[name][key])}")
    return "\n".join(lines) + "\n"
