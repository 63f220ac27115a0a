"""
Command-line front end.

Subcommands: ``simulate``, ``theory``, ``sweep`` and ``presets list``.
Exit codes are listed in :data:`EXIT`.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import report
from .adapt import DivergenceError
from .analysis import UnstableConfiguration
from .experiments import compare, link_selection_gains, sweep_snr
from .sim import ScenarioError, run_scenario
from .topology import TopologyError

EXIT = {
    "ok": 0,
    "config": 1,
    "divergence": 2,
    "tolerance": 3,
    "unknown_preset": 4,
    "override": 5,
    "output_dir": 6,
}
OUTPUT_ENV = "LINKSEL_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _add_common(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help="bundled experiment (see 'presets list')")
    src.add_argument("--config", help="YAML config file")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./linksel-out)")
    p.add_argument("--algs", help="comma-separated algorithms")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set si.rho=0.006 (repeatable)")


def _parser():
    ap = argparse.ArgumentParser(prog="linksel", description="Adaptive link selection for "
                                 "diffusion estimation: simulation and steady-state theory.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run Monte-Carlo simulations and write artifacts")
    _add_common(p)
    p.add_argument("--metric", choices=["mse", "phase-angle-gap"], default="mse",
                   help="phase-angle-gap also writes gap_curve.csv")

    for name, text in (("theory", "closed-form predictions against simulation"),
                       ("sweep", "steady-state MSE against SNR")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--snr", help="comma-separated SNR values in dB")
        p.add_argument("--tolerance", type=float, help="max |gap| in dB (theory exits 3 beyond it)")

    p = sub.add_parser("presets", help="list or show bundled presets")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    return ap


def resolve_config(args):
    try:
        if args.config:
            cfg = cfgmod.load(args.config)
        else:
            cfg = cfgmod.preset(args.preset or "wsn-static")
    except cfgmod.UnknownPreset as exc:
        raise CliError(str(exc), EXIT["unknown_preset"]) from None
    except (cfgmod.ConfigError, TopologyError) as exc:
        raise CliError(str(exc), EXIT["config"]) from None
    overrides = list(args.overrides)
    for flag, key in (("algs", "algorithms"), ("runs", "run.runs"), ("seed", "run.seed"),
                      ("iters", "run.n_iter"), ("workers", "run.workers")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides.append(f"{key}={val}")
    if getattr(args, "snr", None):
        overrides.append(f"sweep.snr_db=[{args.snr}]")
    if getattr(args, "tolerance", None) is not None:
        overrides.append(f"theory.tolerance_db={args.tolerance}")
    try:
        return cfgmod.apply_overrides(cfg, overrides)
    except cfgmod.OverrideError as exc:
        raise CliError(str(exc), EXIT["override"]) from None


def output_dir(args):
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "linksel-out")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to output directory {out}: {exc}", EXIT["output_dir"]) from None
    return out


def _seeds(cfg):
    return {"master": cfg["run"]["seed"], "runs": list(range(cfg["run"]["runs"])),
            "layout_seed": cfg["signal"]["layout_seed"],
            "streams": "Philox keyed by (master, run, stream, node)"}


def _run_all(cfg, log):
    results = {}
    for alg in cfg["algorithms"]:
        sc = cfgmod.build_scenario(cfg, alg)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            results[alg] = run_scenario(sc, workers=cfg["run"]["workers"])
        for w in caught:
            log(f"warning: {w.message}")
        log(f"{alg:>9}: steady-state MSE {results[alg].steady_state_db():8.3f} dB "
            f"({results[alg].elapsed:.1f} s)")
    return results


def cmd_simulate(args, cfg, out, log):
    results = _run_all(cfg, log)
    sc0 = next(iter(results.values())).scenario
    labels = report.node_labels(cfg, sc0.n_nodes)
    report.write_mse_curve(out / "mse_curve.csv", results, labels)
    report.write_selection_trace(out / "selection_trace.csv", results)
    if args.metric == "phase-angle-gap":
        report.write_gap_curve(out / "gap_curve.csv", results, labels)
    theory = {}
    for alg, res in results.items():
        try:
            theory[alg] = compare(res, cfg["theory"]).to_dict()
        except (UnstableConfiguration, ValueError) as exc:
            theory[alg] = {"error": str(exc)}
    gains = link_selection_gains(results)
    summary = {
        "scenario": cfg,
        "seeds": _seeds(cfg),
        "algorithms": {a: report.algorithm_summary(r) for a, r in results.items()},
        "gains_db": gains,
        "theory": theory,
    }
    report.write_json(out / "summary.json", summary)
    cfgmod.dump(cfg, out / "resolved_config.yaml")

    rows = []
    for alg, res in results.items():
        th = theory[alg]
        rows.append([alg, f"{res.steady_state_db():.3f}", f"{res.steady_state_db('mse_prior'):.3f}",
                     f"{gains[alg]:.3f}" if alg in gains else "-",
                     f"{th['predicted_db']:.3f}" if "predicted_db" in th else "-",
                     f"{th['gap_db']:.3f}" if "gap_db" in th else "-"])
    text = report.text_table(["algorithm", "mse_db", "mse_prior_db", "gain_db", "theory_db",
                              "gap_db"], rows)
    (out / "report.txt").write_text(f"{cfg['name']}\n\n{text}\n")
    log(text)
    return EXIT["ok"]


def _comparisons(cfg, log):
    def progress(snr, res):
        log(f"SNR {snr:5.1f} dB {res.scenario.algorithm:>9}: "
            f"{res.steady_state_db(cfg['theory']['metric']):8.3f} dB")
    return sweep_snr(cfg, cfg["sweep"]["snr_db"], on_result=progress)


def cmd_theory(args, cfg, out, log):
    comps = _comparisons(cfg, log)
    tol = cfg["theory"]["tolerance_db"]
    report.write_json(out / "predictions.json", {
        "scenario": cfg, "seeds": _seeds(cfg), "tolerance_db": tol,
        "predictions": [c.to_dict() for c in comps]})
    rows = [[c.algorithm, f"{c.snr_db:g}", f"{c.simulated_db:.3f}",
             f"{c.prediction.network_db:.3f}", f"{c.rule_prediction.network_db:.3f}",
             f"{10 * np.log10(c.prediction.tracking.mean()):.3f}" if c.prediction.tracking.any() else "-",
             f"{c.gap_db:+.3f}", "pass" if c.passes(tol) else "FAIL"] for c in comps]
    text = report.text_table(["algorithm", "snr_db", "simulated_db", "predicted_db", "rule_db",
                              "tracking_term_db", "gap_db", f"|gap|<={tol:g}"], rows)
    (out / "theory_report.txt").write_text(
        f"{cfg['name']}: metric={cfg['theory']['metric']} coupling={cfg['theory']['coupling']} "
        f"trace_factor={cfg['theory']['trace_factor']}\n\n{text}\n")
    cfgmod.dump(cfg, out / "resolved_config.yaml")
    log(text)
    return EXIT["ok"] if all(c.passes(tol) for c in comps) else EXIT["tolerance"]


def cmd_sweep(args, cfg, out, log):
    comps = _comparisons(cfg, log)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("algorithm,snr_db,metric,simulated_db,predicted_db,gap_db\n")
        for c in comps:
            fh.write(f"{c.algorithm},{c.snr_db:g},{c.metric},{c.simulated_db:.6f},"
                     f"{c.prediction.network_db:.6f},{c.gap_db:.6f}\n")
    report.write_json(out / "summary.json", {"scenario": cfg, "seeds": _seeds(cfg),
                                             "sweep": [c.to_dict() for c in comps]})
    cfgmod.dump(cfg, out / "resolved_config.yaml")
    return EXIT["ok"]


def cmd_presets(args, log):
    if args.action == "list":
        for name, body in cfgmod.PRESETS.items():
            log(f"{name:16s} {body['description']}")
        return EXIT["ok"]
    if not args.name:
        raise CliError("presets show needs a preset name", EXIT["config"])
    try:
        log(cfgmod.dump(cfgmod.preset(args.name)).rstrip())
    except cfgmod.UnknownPreset as exc:
        raise CliError(str(exc), EXIT["unknown_preset"]) from None
    return EXIT["ok"]


def main(argv=None):
    args = _parser().parse_args(argv)
    log = lambda msg: print(msg, flush=True)
    try:
        if args.command == "presets":
            return cmd_presets(args, log)
        cfg = resolve_config(args)
        out = output_dir(args)
        handler = {"simulate": cmd_simulate, "theory": cmd_theory, "sweep": cmd_sweep}[args.command]
        return handler(args, cfg, out, log)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT["divergence"]
    except (ScenarioError, TopologyError, cfgmod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT["config"]


if __name__ == "__main__":
    sys.exit(main())
