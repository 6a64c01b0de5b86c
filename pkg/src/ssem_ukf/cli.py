"""Command-line front end: ``ssem-ukf {propagate,ensemble,fit-index,filter,report}``.

Exit codes: 0 success, 1 runtime error, 2 usage error (bad flags, bad
configuration, missing input artifacts).
"""
import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io as sio
from .config import (KEYS, RunConfig, build_ensemble_config, build_initial, build_integrator,
                     build_model, build_truth_config, build_ukf_config)
from .distfit import fit_index, summarize_index
from .ensemble import moment_stream, run_ensemble
from .errors import ConfigurationError, MissingArtifactError, SSEMError
from .model import PAIRS, SPECIES
from .reference import format_phi_table, load_phi_table, phi_table_from_means, write_phi_table, PhiTable
from .scenarios import noisy_measurements, truth_trajectory
from .ukf import run_filter

log = logging.getLogger("ssem_ukf")

COMMANDS = ("propagate", "ensemble", "fit-index", "filter", "report")


def _times(horizon, step):
    if horizon < 0 or not step > 0:
        raise ConfigurationError("horizon must be >= 0 and step > 0")
    n = round(horizon / step)
    return step * np.arange(n + 1)


def cmd_propagate(cfg):
    model = build_model(cfg)
    integ = build_integrator(cfg)
    pop0 = build_initial(cfg, model.grid).as_array().reshape(-1)
    times = _times(cfg["propagate.horizon"], cfg["propagate.step"])
    mode = cfg["propagate.mode"]
    n3 = 3 * model.n
    x = pop0 if mode == "populations" else np.concatenate([pop0, model.phi.reshape(-1)])
    traj = np.empty((times.size, 3, model.n))
    traj[0] = pop0.reshape(3, model.n)
    for k in range(1, times.size):
        if mode == "populations":
            x = model.propagate(x, times[k - 1], times[k], integ)
        else:
            x = model.propagate_augmented(x, times[k - 1], times[k], integ)
        traj[k] = x[:n3].reshape(3, model.n)
    path = os.path.join(cfg["out"], f"propagate_{mode}.csv")
    sio.write_trajectory_csv(path, times, traj)
    return [path]


def cmd_ensemble(cfg, threads=1):
    model = build_model(cfg)
    integ = build_integrator(cfg)
    econf = build_ensemble_config(cfg)
    pop0 = build_initial(cfg, model.grid).as_array()
    result = run_ensemble(econf, model, pop0, integ, threads=max(1, threads))
    records = moment_stream(result, cross_shell=cfg["ensemble.cross_shell"])
    out = cfg["out"]
    paths = [os.path.join(out, "moments.csv"), os.path.join(out, "ensemble_summary.json")]
    sio.write_moments_csv(paths[0], records)
    events = result.events.sum(axis=(0, 1))
    sio.write_json(paths[1], {
        "n_members": result.n_members, "excluded": result.excluded, "seed": econf.seed,
        "times": result.times, "events_per_pair": dict(zip(PAIRS, events.tolist())),
    })
    if cfg["ensemble.write_members"]:
        p = os.path.join(out, "members.csv")
        sio.write_members_csv(p, result)
        paths.append(p)
    return paths


def cmd_fit_index(cfg):
    members, times, _ = sio.read_members_csv(cfg.path("fit.members", "members.csv"))
    families = cfg.list("fit.families")
    species = cfg.list("fit.species")
    for f in families:
        if f not in ("gaussian", "gamma", "rician"):
            raise ConfigurationError(f"fit.families: unknown family {f!r}")
    for s in species:
        if s not in SPECIES:
            raise ConfigurationError(f"fit.species: unknown species {s!r}")
    reports, missing = fit_index(members, families, species, n_bins=cfg["fit.n_bins"], times=times)
    means, best = summarize_index(reports)
    out = cfg["out"]
    p_csv = os.path.join(out, "fit_index.csv")
    p_json = os.path.join(out, "fit_summary.json")
    sio.write_fit_index_csv(p_csv, reports)
    sio.write_json(p_json, _fit_summary(means, best, missing))
    return [p_csv, p_json]


def _fit_summary(means, best, missing=0):
    rows = [{"shell": sh, "species": sp, "family": fam, "mean_rmse": v}
            for (sh, sp, fam), v in sorted(means.items())]
    ranked = [{"shell": sh, "species": sp, "best": fam} for (sh, sp), fam in sorted(best.items())]
    wins = {}
    for (_, sp), fam in best.items():
        wins.setdefault(sp, {}).setdefault(fam, 0)
        wins[sp][fam] += 1
    return {"mean_index": rows, "best": ranked, "wins_by_species": wins, "missing_steps": missing}


def cmd_filter(cfg):
    model = build_model(cfg)
    integ = build_integrator(cfg)
    ucfg = build_ukf_config(cfg)
    tcfg = build_truth_config(cfg)
    if cfg["filter.moments"]:
        records = sio.read_moments_csv(cfg["filter.moments"])
        source = cfg["filter.moments"]
    else:
        truth_model = build_model(cfg, kind=cfg["truth.kind"])
        pop0 = build_initial(cfg, model.grid).as_array()
        truth = truth_trajectory(truth_model, pop0, tcfg.n_steps, tcfg.step, integ)
        records = noisy_measurements(truth, tcfg)
        source = "synthetic"
    trace = run_filter(model, records, ucfg, integ, n_steps=tcfg.n_steps,
                       freeze_phi=cfg["filter.freeze_phi"])
    out = cfg["out"]
    p_trace = os.path.join(out, "filter_trace.csv")
    p_json = os.path.join(out, "filter_summary.json")
    p_phi = os.path.join(out, "phi_table.csv")
    sio.write_trace_csv(p_trace, trace)
    table = phi_table_from_means(trace.steady_phi_means(), "ukf", ucfg.phi_unit)
    write_phi_table(table, p_phi)
    sio.write_json(p_json, {
        "source": source, "n_steps": len(trace), "n_shells": model.n,
        "measured_steps": int(trace.measured.sum()),
        "innovation_coverage_3sigma": trace.innovation_coverage(3.0),
        "min_eigenvalue": float(trace.min_eig.min()) if len(trace) else None,
        "max_asymmetry": float(trace.asymmetry.max()) if len(trace) else None,
        "steady_fraction": ucfg.steady_fraction, "phi_unit": ucfg.phi_unit,
        "steady_phi": {p: table.values[:, k, 0] for k, p in enumerate(PAIRS)},
    })
    return [p_trace, p_json, p_phi]


def cmd_report(cfg):
    p_fit = cfg.path("report.fit_index", "fit_index.csv")
    p_trace = cfg.path("report.trace", "filter_trace.csv")
    p_sum = cfg.path("report.summary", "filter_summary.json")
    missing = [p for p in (p_fit, p_trace, p_sum) if not os.path.exists(p)]
    if missing:
        raise MissingArtifactError("missing upstream artifact(s): " + ", ".join(missing))
    reports = sio.read_fit_index_csv(p_fit)
    summary = sio.read_json(p_sum)
    times, est, _ = sio.read_trace_csv(p_trace)
    dim = est.shape[1]
    if dim % 9:
        raise ConfigurationError(f"{p_trace}: state dimension {dim} is not a multiple of 9")
    n = dim // 9
    frac = float(summary.get("steady_fraction", 0.5))
    unit = float(summary.get("phi_unit", 1e-8))
    start = int(np.floor(times.size * (1.0 - frac)))
    phi = est[start:, 3 * n:].reshape(-1, 6, n).mean(axis=0) if times.size else np.full((6, n), np.nan)
    table = phi_table_from_means(phi, "ukf", unit)
    if n == 36:
        ref = load_phi_table()
        table = PhiTable(table.shells, ("ukf",) + ref.columns,
                         np.concatenate([table.values, ref.values], axis=2), unit)
    means, best = summarize_index(reports)
    out = cfg["out"]
    p_tab = os.path.join(out, "report_phi_table.csv")
    p_txt = os.path.join(out, "report_phi_table.txt")
    p_json = os.path.join(out, "report.json")
    write_phi_table(table, p_tab)
    with open(p_txt, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_phi_table(table) + "\n")
    sio.write_json(p_json, {
        "inputs": {"fit_index": p_fit, "trace": p_trace, "summary": p_sum},
        "fit": _fit_summary(means, best),
        "filter": summary,
        "phi_table": {"columns": list(table.columns), "unit": unit,
                      "rows": [[int(s)] + table.values[r].reshape(-1).tolist()
                               for r, s in enumerate(table.shells)]},
    })
    return [p_tab, p_txt, p_json]


def _key_epilog():
    lines = ["configuration keys (set with --set key=value or a JSON/TOML --config file):"]
    for k in KEYS:
        extra = f" {{{', '.join(k.choices)}}}" if k.choices else ""
        lines.append(f"  {k.name} = {k.default!r}{extra}\n      {k.help}")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(prog="ssem-ukf", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=_key_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="JSON or TOML configuration file")
        p.add_argument("--seed", type=int, metavar="U64", help="master random seed (key: seed)")
        p.add_argument("--out", metavar="DIR", help="output directory (key: out)")
        p.add_argument("--threads", type=int, metavar="N", help="worker thread cap (key: threads)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.resolve(args.config, args.set, seed=args.seed, out=args.out,
                                threads=args.threads)
        if not 0 <= cfg["seed"] < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if cfg["threads"] < 1:
            raise ConfigurationError("threads must be at least 1")
        os.makedirs(cfg["out"], exist_ok=True)
        start = time.perf_counter()
        if args.command == "propagate":
            paths = cmd_propagate(cfg)
        elif args.command == "ensemble":
            paths = cmd_ensemble(cfg, cfg["threads"])
        elif args.command == "fit-index":
            paths = cmd_fit_index(cfg)
        elif args.command == "filter":
            paths = cmd_filter(cfg)
        else:
            paths = cmd_report(cfg)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    except (ConfigurationError, MissingArtifactError) as exc:
        print(f"ssem-ukf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SSEMError, OSError, ValueError, ArithmeticError) as exc:
        print(f"ssem-ukf {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
