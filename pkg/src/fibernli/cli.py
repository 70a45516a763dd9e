"""Command-line front end.

    fibernli <command> [--config FILE] [--out DIR] [--workers N] [--seed S] [--set KEY=VALUE ...]

Commands: kernels, correlations, predict, simulate, sweep, plot. Every CSV
starts with a provenance comment carrying the package version and the hash
of the resolved config.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import config_hash, link_from, load_config, model_from, pulse_from, resolve_workers, WORKERS_ENV
from .errors import ConfigError, DataError, FiberNLIError, SchemaError, SimulationError
from .megn import _run as _run_tables
from .pipeline import (
    COV_COLUMNS,
    PSD_COLUMNS,
    SWEEP_COLUMNS,
    SweepSpec,
    run_model,
    run_simulation,
    run_sweep,
    scheme_from,
)
from .plots import plot_csv
from .shaping import generate_stream
from .stats import analytic_covariances, empirical_covariances
from .tables import CSVAppender, write_csv

log = logging.getLogger("fibernli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SIM = 4

SUMMARY_COLUMNS = ("config_hash", "p_ch_dbm", "eta", "eta_egn", "p_nli_w", "p_ase_w", "snr_eff_db", "snr_opt_db", "p_opt_dbm")
KERNEL_COLUMNS = ("kernel_id", "tau", "tau_prime", "f_hz", "value")


def _parse_set(items):
    """``section.key=value`` pairs (values parsed as YAML) into a nested dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", key=item)
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _setup(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    workers = resolve_workers(args.workers, cfg)
    os.makedirs(args.out, exist_ok=True)
    return cfg, config_hash(cfg), workers


def _path(args, name):
    return os.path.join(args.out, name)


def _dbm(p):
    return 10 * np.log10(p / 1e-3) if np.isfinite(p) and p > 0 else float("inf")


# --- commands ------------------------------------------------------------------------


def cmd_kernels(args):
    """Dump every kernel on the model frequency grid for tau <= kernels.max_tau."""
    cfg, h, workers = _setup(args)
    link, pulse, mcfg = link_from(cfg), pulse_from(cfg), model_from(cfg)
    kc = cfg["kernels"]
    M = int(kc["max_tau"])
    if M < 0:
        raise ConfigError("kernels.max_tau must be >= 0", key="kernels.max_tau")
    f = mcfg.frequencies(pulse)
    tables = _run_tables([(float(v), pulse, link, mcfg.quad, M, bool(kc["double"])) for v in f], workers)
    rows = []
    for fv, (phi, single, double) in zip(f, tables):
        for k, v in phi.items():
            rows.append((k, None, None, float(fv), float(v)))
        for k, arr in single.items():
            for t in range(arr.size):
                rows.append((k, t, None, float(fv), float(arr[t])))
        for k, arr in double.items():
            for t in range(1, arr.shape[0]):
                for tp in range(t + 1, arr.shape[1]):
                    rows.append((k, t, tp, float(fv), float(arr[t, tp])))
    path = _path(args, "kernels.csv")
    write_csv(path, KERNEL_COLUMNS, rows, h)
    print(path)
    return EXIT_OK


def cmd_correlations(args):
    """Analytic covariances, plus an empirical estimate when
    correlations.empirical_blocks > 0."""
    cfg, h, _ = _setup(args)
    if cfg["signal"]["source"] != "ccdm":
        raise ConfigError("correlations need signal.source: ccdm", key="signal.source")
    sch = scheme_from(cfg)
    cc = cfg["correlations"]
    T, Tp = int(cc["max_tau"]), int(cc["max_tau_prime"])
    if T < 1 or Tp < T:
        raise ConfigError("need 1 <= correlations.max_tau <= correlations.max_tau_prime", key="correlations.max_tau")
    cov = analytic_covariances(sch.composition, sch.mapping_h, T, Tp, power=sch.power_target)
    rows = [("analytic",) + r for r in cov.to_rows()]
    nb = int(cc["empirical_blocks"])
    if nb > 0:
        rng = np.random.default_rng(cfg["run"]["seed"])
        stream = generate_stream(sch, nb * sch.corr_length, rng)
        emp = empirical_covariances(stream, sch.corr_length, T, Tp)
        rows += [("empirical",) + r for r in emp.to_rows()]
    path = _path(args, "covariances.csv")
    write_csv(path, ("source",) + COV_COLUMNS, rows, h)
    print(path)
    return EXIT_OK


def cmd_predict(args):
    cfg, h, workers = _setup(args)
    m = run_model(cfg, workers)
    p_psd = _path(args, "psd.csv")
    write_csv(p_psd, PSD_COLUMNS, m.spectrum.to_rows(), h)
    r = m.result
    summary = [(h, cfg["signal"]["launch_power_dbm"], r.eta, m.result_egn.eta, r.p_nli, r.p_ase,
                r.snr_eff_db, r.snr_opt_db, float(_dbm(r.p_opt)))]
    p_sum = _path(args, "summary.csv")
    write_csv(p_sum, SUMMARY_COLUMNS, summary, h)
    print(p_psd)
    print(p_sum)
    return EXIT_OK


def cmd_simulate(args):
    cfg, h, workers = _setup(args)
    res = run_simulation(cfg, workers)
    s = cfg["signal"]
    p_sim = _path(args, "simulation.csv")
    write_csv(
        p_sim,
        ("config_hash", "source", "blocklength", "mapping", "launch_power_dbm", "num_runs", "num_symbols",
         "eta_sim", "eta_sim_stderr"),
        [(h, s["source"], s["blocklength"], s["mapping"], s["launch_power_dbm"], len(res.per_run),
          cfg["simulation"]["num_symbols"], res.eta, res.stderr)],
        h,
    )
    p_man = _path(args, "manifest.csv")
    write_csv(p_man, ("run", "seed", "error_power_x_w", "error_power_y_w", "eta"), res.manifest_rows(), h)
    p_json = _path(args, "manifest.json")
    manifest = dict(res.manifest, version=__version__, config=cfg,
                    per_run_error_power_w=res.per_run.tolist(), eta=res.eta, eta_stderr=res.stderr)
    with open(p_json, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    for p in (p_sim, p_man, p_json):
        print(p)
    return EXIT_OK


def cmd_sweep(args):
    cfg, h, workers = _setup(args)
    spec = SweepSpec.from_config(cfg)
    print(f"sweep: {spec.size} grid points ({' x '.join(f'{k}[{len(v)}]' for k, v in spec.axes.items())})",
          file=sys.stderr)
    spec.point_configs(cfg)  # validate every point before any work
    main_path = _path(args, "sweep.csv")
    sinks = {"main": CSVAppender(main_path, SWEEP_COLUMNS, h)}
    extra_cols = {
        "psd": ("point",) + PSD_COLUMNS,
        "covariances": ("point",) + COV_COLUMNS,
        "kernels": ("point",) + KERNEL_COLUMNS,
    }
    for name in spec.outputs:
        if name in extra_cols:
            sinks[name] = CSVAppender(_path(args, f"sweep_{name}.csv"), extra_cols[name], h)

    def sink(row, extra):
        sinks["main"].write([row[c] for c in SWEEP_COLUMNS])
        for name, rows in extra.items():
            for r in rows:
                sinks[name].write((row["point"],) + tuple(r))

    try:
        run_sweep(spec, cfg, sink, workers)
    finally:
        for s in sinks.values():
            s.close()
    print(main_path)
    return EXIT_OK


def cmd_plot(args):
    if not args.inputs:
        raise DataError("plot needs at least one CSV file")
    os.makedirs(args.out, exist_ok=True)
    for p in args.inputs:
        out = plot_csv(p, args.out, args.format)
        for o in out if isinstance(out, list) else [out]:
            print(o)
    return EXIT_OK


COMMANDS = {
    "kernels": (cmd_kernels, "dump kernel values on a (tau, f) lattice"),
    "correlations": (cmd_correlations, "symbol-energy covariances (analytic and optional empirical)"),
    "predict": (cmd_predict, "model NLI PSD, eta and SNR for one configuration"),
    "simulate": (cmd_simulate, "split-step simulation estimate of eta with a run manifest"),
    "sweep": (cmd_sweep, "model (and optional simulation) over a parameter grid"),
    "plot": (cmd_plot, "static figures from CSV tables"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="fibernli", description="NLI prediction for shaped symbol streams.")
    p.add_argument("--version", action="version", version=f"fibernli {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "plot":
            sp.add_argument("inputs", nargs="*", help="CSV files")
            sp.add_argument("--format", default="png", choices=("png", "pdf", "svg"))
            continue
        sp.add_argument("--config", help="YAML experiment config (merged over the packaged defaults)")
        sp.add_argument("--workers", type=int, help=f"worker processes (overrides {WORKERS_ENV} and run.workers)")
        sp.add_argument("--seed", type=int, help="base seed (overrides run.seed)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key, e.g. link.num_spans=5")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        return fn(args)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"schema error [column {exc.column}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimulationError as exc:
        print(f"simulation failed: {exc}; partial results kept in {args.out}", file=sys.stderr)
        return EXIT_SIM
    except FiberNLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
