"""
Experiment configuration: YAML files, bundled presets and dotted overrides.

A config is a nested mapping. :func:`resolve` fills every default so the
result fully describes an experiment; :func:`build_scenario` turns it into a
:class:`~linksel.sim.Scenario`. Dumping a resolved config and loading it back
gives the same scenario.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .combine import SiParams
from .signals import GridModel, ParameterProcess, RegressorModel, WsnSignal, fixture_path, read_branch_list
from .sim import ALGORITHMS, Scenario
from .topology import Topology


class ConfigError(ValueError):
    """The configuration cannot be parsed or validated."""


class UnknownPreset(ConfigError):
    pass


class OverrideError(ConfigError):
    pass


DEFAULTS = {
    "name": "custom",
    "network": {"kind": "wsn", "topology": "wsn20"},
    "signal": {
        "M": 10,
        "noise_var": 0.001,
        "noisy_nodes": 4,
        "noise_factor": 10.0,
        "noise_vars": None,
        "ar_range": [0.0, 0.5],
        "layout_seed": 2024,
        "excitation": "gaussian",
        "process": {"mode": "static", "beta": 1.0, "sigma_z2": 0.0},
    },
    "algorithms": list(ALGORITHMS),
    "adapt": {"mu": 0.045, "lam": 0.97, "delta": 0.81},
    "si": {"rho": 4e-3, "eps": 10.0},
    "combine": {"degrees": "induced"},
    "run": {"n_iter": 1000, "runs": 100, "seed": 0, "batch_size": 50, "workers": 1,
            "trace_runs": 1, "steady_fraction": 0.1},
    "theory": {"coupling": "decoupled", "trace_factor": "length", "metric": "mse",
               "cross": "independent", "tolerance_db": 0.1},
    "sweep": {"snr_db": [0, 10, 20, 30]},
}

_WSN = {"network": {"kind": "wsn", "topology": "wsn20"}}

PRESETS = {
    "wsn-static": {
        "description": "20-node sensor network, static parameter, 4 noisy nodes",
        **_WSN,
        "run": {"runs": 100, "n_iter": 1000},
    },
    "wsn-timevarying": {
        "description": "20-node sensor network, first-order Markov parameter",
        **_WSN,
        "signal": {"process": {"mode": "markov", "beta": 0.98, "sigma_z2": 0.01}},
        "si": {"rho": 6e-3},
        "run": {"runs": 100, "n_iter": 1000},
    },
    "wsn-snr-sweep": {
        "description": "link-selection algorithms against SNR with closed-form predictions",
        **_WSN,
        "algorithms": ["es-lms", "es-rls", "si-lms", "si-rls"],
        "run": {"runs": 200, "n_iter": 1000},
        "theory": {"coupling": "coupled", "trace_factor": "trace", "metric": "mse_prior"},
    },
    "grid-ieee14": {
        "description": "IEEE 14-bus DC state estimation, all-ones angles",
        "network": {"kind": "grid", "topology": "ieee14"},
        "signal": {"M": 14, "noise_var": 0.001, "noisy_nodes": 0},
        "adapt": {"mu": 0.018, "lam": 0.945, "delta": 0.001},
        "si": {"rho": 0.07, "eps": 10.0},
        "run": {"runs": 100, "n_iter": 300},
    },
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def preset(name):
    """Resolved config of a bundled preset."""
    if name not in PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    body = {k: v for k, v in PRESETS[name].items() if k != "description"}
    return resolve({**body, "name": name})


def load(path):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    base = data.pop("preset", None)
    if base is not None:
        return resolve(_merge(preset(base), data))
    return resolve(data)


def dump(config, path=None):
    text = yaml.safe_dump(config, sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def _check_keys(data, ref, where=""):
    for key, val in data.items():
        if key not in ref:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(ref[key], dict) and isinstance(val, dict):
            _check_keys(val, ref[key], f"{where}{key}.")


def resolve(data):
    """Expand defaults and validate types; returns a new mapping."""
    _check_keys(data, DEFAULTS)
    cfg = _merge(DEFAULTS, data)
    algs = cfg["algorithms"]
    if isinstance(algs, str):
        algs = [a.strip() for a in algs.split(",") if a.strip()]
    bad = [a for a in algs if a not in ALGORITHMS]
    if bad or not algs:
        raise ConfigError(f"unknown algorithms {bad}; choose from {sorted(ALGORITHMS)}")
    cfg["algorithms"] = list(algs)
    if cfg["network"]["kind"] not in ("wsn", "grid"):
        raise ConfigError(f"unknown network kind {cfg['network']['kind']!r}")
    try:
        for key in ("n_iter", "runs", "seed", "batch_size", "workers", "trace_runs"):
            cfg["run"][key] = int(cfg["run"][key])
        cfg["run"]["steady_fraction"] = float(cfg["run"]["steady_fraction"])
        cfg["signal"]["M"] = int(cfg["signal"]["M"])
        for key in ("lam", "delta"):
            cfg["adapt"][key] = float(cfg["adapt"][key])
        for key in ("rho", "eps"):
            cfg["si"][key] = float(cfg["si"][key])
        cfg["sweep"]["snr_db"] = [float(s) for s in cfg["sweep"]["snr_db"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    return cfg


def apply_overrides(config, overrides):
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars/lists."""
    cfg = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise OverrideError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node, ref = cfg, DEFAULTS
        for key in keys[:-1]:
            if not isinstance(ref.get(key), dict):
                raise OverrideError(f"unknown config section {path!r}")
            node, ref = node.setdefault(key, {}), ref[key]
        if keys[-1] not in ref:
            raise OverrideError(f"unknown config key {path!r}")
        try:
            node[keys[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise OverrideError(f"cannot parse value in {item!r}") from None
    try:
        return resolve(cfg)
    except ConfigError as exc:
        raise OverrideError(str(exc)) from None


# --------------------------------------------------------------------------
# building objects

def build_topology(config):
    net = config["network"]
    name = net["topology"]
    if net["kind"] == "grid":
        path = fixture_path("ieee14_branches.txt") if name == "ieee14" else Path(name)
        try:
            branches = read_branch_list(path)
        except OSError as exc:
            raise ConfigError(f"cannot read branch list {path}: {exc}") from None
        n = max(max(a, b) for a, b in branches) + 1
        return Topology.from_edges(n, branches), branches
    path = fixture_path(f"{name}.txt") if name == "wsn20" else Path(name)
    try:
        return Topology.load(path), None
    except OSError as exc:
        raise ConfigError(f"cannot read topology {path}: {exc}") from None


def noise_profile(config, n_nodes, base_var=None):
    """Per-node noise variances and the indices of the elevated nodes."""
    sig = config["signal"]
    if sig["noise_vars"] is not None:
        v = np.asarray(sig["noise_vars"], dtype=float)
        if v.shape != (n_nodes,):
            raise ConfigError(f"noise_vars needs {n_nodes} entries")
        if base_var is not None:
            v = v * base_var / v.min()
        return v, np.flatnonzero(v > v.min())
    rng = np.random.default_rng(sig["layout_seed"])
    lo, hi = sig["ar_range"]
    rng.uniform(lo, hi, n_nodes)           # keeps the layout stream aligned with ar_coefficients
    if not 0 <= sig["noisy_nodes"] <= n_nodes:
        raise ConfigError("noisy_nodes out of range")
    noisy = np.sort(rng.choice(n_nodes, int(sig["noisy_nodes"]), replace=False))
    var = np.full(n_nodes, float(sig["noise_var"] if base_var is None else base_var))
    var[noisy] *= float(sig["noise_factor"])
    return var, noisy


def ar_coefficients(config, n_nodes):
    lo, hi = config["signal"]["ar_range"]
    return np.random.default_rng(config["signal"]["layout_seed"]).uniform(lo, hi, n_nodes)


def build_signal(config, topology, branches=None, base_var=None):
    sig = config["signal"]
    proc = ParameterProcess(**sig["process"])
    N = topology.n_nodes
    noise, _ = noise_profile(config, N, base_var)
    if config["network"]["kind"] == "grid":
        return GridModel(N, tuple(branches), noise_var=noise, excitation=sig["excitation"],
                         process=proc)
    return WsnSignal(RegressorModel(ar_coefficients(config, N), noise, sig["M"]), proc)


def build_scenario(config, algorithm=None, base_var=None):
    """Scenario for one algorithm; ``base_var`` replaces the nominal noise level."""
    topo, branches = build_topology(config)
    signal = build_signal(config, topo, branches, base_var)
    run, ad = config["run"], config["adapt"]
    mu = ad["mu"]
    if isinstance(mu, (list, tuple)):
        mu = np.asarray(mu, dtype=float)
    return Scenario(
        topology=topo, signal=signal,
        algorithm=algorithm or config["algorithms"][0],
        n_iter=run["n_iter"], runs=run["runs"], mu=mu, lam=ad["lam"], delta=ad["delta"],
        si=SiParams(config["si"]["rho"], config["si"]["eps"]),
        degrees=config["combine"]["degrees"], seed=run["seed"],
        batch_size=run["batch_size"], trace_runs=run["trace_runs"],
        steady_fraction=run["steady_fraction"], name=config["name"],
    )
