"""
Artifact writers. Column dictionaries live in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import analysis
from .topology import enumerate_candidate_sets, metropolis_weights


def node_labels(config, n_nodes):
    if config["network"]["kind"] == "grid":
        return [f"bus_{k + 1}" for k in range(n_nodes)]
    return [f"node_{k}" for k in range(n_nodes)]


def _db(v):
    return 10 * np.log10(v)


def write_mse_curve(path, results, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "iteration", "network_mse", "network_mse_db",
                    "network_mse_prior", "network_mse_prior_db", *labels])
        for alg, res in results.items():
            net, prior = res.network(), res.network("mse_prior")
            for i in range(res.mse.shape[0]):
                w.writerow([alg, i + 1, f"{net[i]:.10g}", f"{_db(net[i]):.6f}",
                            f"{prior[i]:.10g}", f"{_db(prior[i]):.6f}",
                            *(f"{v:.10g}" for v in res.mse[i])])


def write_gap_curve(path, results, labels):
    """Per-node ``||omega_k - omega_0||``; iteration 0 is the starting point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "iteration", "network_gap", *labels])
        for alg, res in results.items():
            rows = np.vstack([res.initial_gap()[None, :], res.gap()])
            for i, row in enumerate(rows):
                w.writerow([alg, i, f"{row.mean():.10g}", *(f"{v:.10g}" for v in row)])


def selection_rows(alg, res):
    """Yield ``(run, iteration, node, bitmask, members, weights)`` from a stored trace.

    ``bitmask`` has bit ``l`` set for every participating node ``l``.
    """
    tr = res.trace
    if "data" not in tr:
        return
    sc = res.scenario
    topo = sc.topology
    if tr["policy"] == "exhaustive":
        sets = [enumerate_candidate_sets(topo, k) for k in range(topo.n_nodes)]
        cache = {}
        for run, per_run in enumerate(tr["data"]):
            for i, choice in enumerate(per_run):
                for k, j in enumerate(choice):
                    key = (k, int(j))
                    if key not in cache:
                        s = sets[k][int(j)]
                        wts = metropolis_weights(topo, k, s, degrees=sc.degrees)[list(s.members)]
                        cache[key] = (s.bitmask(), " ".join(map(str, s.members)),
                                      " ".join(f"{v:.6g}" for v in wts))
                    yield (run, i + 1, k, *cache[key])
    elif tr["policy"] == "sparsity":
        for run, per_run in enumerate(tr["data"]):
            for i, W in enumerate(per_run):
                for k, row in enumerate(W):
                    nz = np.flatnonzero(row > 0)
                    yield (run, i + 1, k, int(sum(1 << int(j) for j in nz)), " ".join(map(str, nz)),
                           " ".join(f"{v:.6g}" for v in row[nz]))


def write_selection_trace(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "run", "iteration", "node", "bitmask", "members", "weights"])
        for alg, res in results.items():
            for row in selection_rows(alg, res):
                w.writerow([alg, *row])


def complexity_summary(res):
    """Tabulated and instrumented per-node counts for one run."""
    sc = res.scenario
    topo = sc.topology
    nodes = []
    last = None
    if sc.policy == "exhaustive" and "data" in res.trace:
        last = res.trace["data"][0, -1]
    for k in range(topo.n_nodes):
        T = topo.degree(k)
        entry = {"node": k, "T": T}
        if sc.policy == "exhaustive":
            t = len(enumerate_candidate_sets(topo, k)[int(last[k])]) if last is not None else T
            entry["t"] = t
            entry["formula"] = analysis.complexity_counts(sc.algorithm, sc.M, T=T, t=t)
        elif sc.policy == "sparsity":
            entry["formula"] = analysis.complexity_counts(sc.algorithm, sc.M, n_neighbors=T)
        else:
            entry["formula"] = analysis.complexity_counts(sc.adaptation, sc.M)
        entry["instrumented_combine"] = analysis.instrumented_combine_counts(
            topo, k, sc.policy, sc.M)
        nodes.append(entry)
    mean = np.mean([n["formula"] for n in nodes], axis=0)
    return {"mean_formula": mean.tolist(), "nodes": nodes}


def algorithm_summary(res):
    sc = res.scenario
    out = {
        "steady_state_mse": res.steady_state_network(),
        "steady_state_db": res.steady_state_db(),
        "steady_state_db_prior": res.steady_state_db("mse_prior"),
        "steady_state_msd_db": res.steady_state_db("msd"),
        "final_mse_db": float(res.network_db()[-1]),
        "per_node_db": _db(res.steady_state()).tolist(),
        "elapsed_s": res.elapsed,
        "complexity": complexity_summary(res),
    }
    if res.change_rate is not None:
        out["selection_change_rate"] = {"max": float(res.change_rate.max()),
                                        "per_node": res.change_rate.tolist()}
    if sc.policy != "fixed":
        out["steady_weight_mean"] = res.weight_mean.tolist()
    return out


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj)}")


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, default=_default) + "\n")


def text_table(header, rows):
    cols = [header, *rows]
    width = [max(len(str(r[j])) for r in cols) for j in range(len(header))]
    line = lambda r: "  ".join(str(v).rjust(width[j]) for j, v in enumerate(r))
    return "\n".join([line(header), line(["-" * n for n in width]), *map(line, rows)])
