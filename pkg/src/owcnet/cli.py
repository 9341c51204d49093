"""Command-line entry point: ``owcnet {trace,experiment,pon,validate}``.

Exit codes: 0 success, 2 configuration or I/O error, 3 solver guard
violation, 4 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import allocator
from . import pon_topology as pon
from .channel import (WAVELENGTHS, build_channel_tensor, lambertian_order, load_channel,
                      los_gain, read_header, save_channel)
from .config import CONFIG_ENV, ConfigError, RunConfig, load_config
from .linkmetrics import receiver_noise_variance
from .scenario import FAILURES, DropPlan, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_VALIDATION = 4

CHANNEL_FILE = "channel.bin"

DROP_COLUMNS = ["n_users", "mode", "failure", "drop_id", "locations", "objective", "status",
                "avg_sinr_db", "user_sinr_db", "user_ap_count", "valid"]
LINK_COLUMNS = ["n_users", "mode", "failure", "drop_id", "user", "location", "branch", "ap",
                "wavelength", "sinr_linear", "sinr_db"]
USER_COLUMNS = ["n_users", "mode", "failure", "drop_id", "user_id", "location_index", "n_assigned_aps",
                "sinr_db", "assigned"]
HIST_COLUMNS = ["n_users", "mode", "failure", "ap_count", "frequency"]
SERIES_COLUMNS = ["n_users", "mode", "failure", "overall_avg_sinr_db", "ap_count_mode",
                  "max_ap_count", "unassigned_user_fraction"]
PAIR_COLUMNS = ["drop_id", "user", "location", "single_ap_sinr_db", "multi_ap_sinr_db",
                "delta_db", "single_ap_count", "multi_ap_count"]
FIG6_COLUMNS = ["n_users", "single_ap_avg_sinr_db", "multi_ap_avg_sinr_db", "delta_db",
                "multi_ap_count_mode", "multi_ap_max_count"]
FIG7_COLUMNS = ["failure", "n_users", "mode", "avg_sinr_db", "ap_count_mode", "unassigned_user_fraction"]
COMPARISON_COLUMNS = ["topology", "n_aps", "bisection_gbps", "endpoint_bound_gbps",
                      "max_single_failure_disconnected", "ap_to_olt_survival", "ap_pair_survival"]


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def conventions(cfg: RunConfig) -> dict:
    n_y = int(round(cfg.room.width / cfg.raw["grid"]["pitch"]))
    return {
        "tensor_index_order": "location, branch, ap, wavelength",
        "wavelength_order": list(WAVELENGTHS),
        "grid_layout": f"cell centres, index = ix * {n_y} + iy, z = receiver height",
        "ap_order": "ap k sits at aps.positions[k]",
        "user_sinr": f"{cfg.experiment.combiner} of linear SINR over the user's links, in dB",
        "drop_sinr": "arithmetic mean of per-user dB values",
        "unassigned_user_sinr_db": 0.0,
        "ap_count_mode_ties": "smallest count wins",
        "failed_ap_light": cfg.experiment.failed_ap_light,
        "illumination_scale": cfg.illumination_scale,
        "drop_rng": "splitmix64 + partial fisher-yates",
    }


def write_csv(path: Path, columns, rows, cfg: RunConfig, extra=()):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint={cfg.fingerprint}\n")
        fh.write(f"# conventions={json.dumps(conventions(cfg), sort_keys=True)}\n")
        for line in extra:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (Path, tuple)):
        return str(o)
    raise TypeError(f"cannot serialise {type(o)}")


def read_csv(path) -> tuple[dict, list[dict]]:
    """Parse a tool CSV into (comment metadata, rows)."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# ") and "=" in line and not lines:
                key, val = line[2:].rstrip("\n").split("=", 1)
                meta[key] = val
            elif not line.startswith("#"):
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def ensure_channel(cfg: RunConfig, log=print):
    path = cfg.output_dir / CHANNEL_FILE
    want = cfg.channel_fingerprint
    if path.exists():
        try:
            if read_header(path).get("fingerprint") == want:
                log(f"channel up to date ({want[:12]}), skipping trace")
                return load_channel(path), False
        except (ValueError, OSError):
            pass
    log("tracing channel ...")
    ch = build_channel_tensor(cfg.room, cfg.aps, cfg.receiver, cfg.grid,
                              illumination_scale=cfg.illumination_scale, workers=cfg.workers)
    save_channel(ch, path)
    log(f"wrote {path} dims {'x'.join(map(str, ch.R.shape))}")
    return ch, True


def cmd_trace(cfg: RunConfig, log=print) -> int:
    ensure_channel(cfg, log)
    return EXIT_OK


def run_grid(cfg: RunConfig, channel):
    exp = cfg.experiment
    stats = {}
    for failure in exp.failures:
        users = exp.n_users if failure == "none" else sorted(set(exp.n_users) | set(exp.failure_users))
        for n in users:
            plan = DropPlan(exp.seed, n, exp.n_drops, channel.R.shape[0])
            for mode in exp.modes:
                stats[(n, mode, failure)] = run_experiment(
                    channel, plan, FAILURES[failure], mode, sigma=cfg.sigma, params=cfg.sinr,
                    failed_ap_light=exp.failed_ap_light, combiner=exp.combiner, workers=cfg.workers)
    return stats


def _pair_rows(stats, n):
    single = stats.get((n, allocator.SINGLE_AP, "none"))
    multi = stats.get((n, allocator.MULTI_AP, "none"))
    if single is None or multi is None:
        return None
    rows = []
    for ds, dm in zip(single.drops, multi.drops):
        for u, loc in enumerate(ds.locations):
            s_db, m_db = ds.user_sinr_db[u], dm.user_sinr_db[u]
            rows.append([ds.drop_id, u, loc, s_db, m_db, m_db - s_db,
                         ds.user_ap_count[u], dm.user_ap_count[u]])
    return rows


def write_experiment(cfg: RunConfig, stats, channel) -> dict:
    out = cfg.output_dir
    keys = sorted(stats, key=lambda k: (list(FAILURES).index(k[2]), k[0], k[1]))
    drop_rows, user_rows, link_rows, hist_rows, series_rows = [], [], [], [], []
    n_solutions = n_valid = 0
    invalid = []
    for key in keys:
        n, mode, failure = key
        st = stats[key]
        for d in st.drops:
            n_solutions += 1
            n_valid += d.valid
            if not d.valid:
                invalid.append({"key": list(key), "drop_id": d.drop_id, "violations": d.violations})
            drop_rows.append([n, mode, failure, d.drop_id, " ".join(map(str, d.locations)), d.objective,
                              d.status, d.avg_sinr_db, " ".join(_fmt(x) for x in d.user_sinr_db),
                              " ".join(map(str, d.user_ap_count)), d.valid])
            for u, links in enumerate(d.user_links):
                # assigned links as branch:ap:wavelength, ';'-separated
                compact = ";".join(f"{f}:{a}:{WAVELENGTHS[lam]}" for f, a, lam, _ in links)
                user_rows.append([n, mode, failure, d.drop_id, u, d.locations[u], d.user_ap_count[u],
                                  d.user_sinr_db[u], compact])
                for f, a, lam, g in links:
                    link_rows.append([n, mode, failure, d.drop_id, u, d.locations[u], f, a,
                                      WAVELENGTHS[lam], g, 10 * math.log10(g)])
        for c, freq in st.ap_count_histogram.items():
            hist_rows.append([n, mode, failure, c, freq])
        max_count = max((c for c, f in st.ap_count_histogram.items() if f), default=0)
        series_rows.append([n, mode, failure, st.overall_avg_sinr_db, st.ap_count_mode, max_count,
                            st.unassigned_user_fraction])
    write_csv(out / "drops.csv", DROP_COLUMNS, drop_rows, cfg)
    write_csv(out / "users.csv", USER_COLUMNS, user_rows, cfg)
    write_csv(out / "links.csv", LINK_COLUMNS, link_rows, cfg)
    write_csv(out / "ap_histogram.csv", HIST_COLUMNS, hist_rows, cfg)
    write_csv(out / "series.csv", SERIES_COLUMNS, series_rows, cfg)

    figures = []
    for name, n in (("fig4", 1), ("fig5", 2)):
        rows = _pair_rows(stats, n)
        if rows is not None:
            write_csv(out / f"{name}.csv", PAIR_COLUMNS, rows, cfg, [f"n_users={n} failure=none"])
            figures.append(name)
    fig6 = []
    for n in cfg.experiment.n_users:
        s = stats.get((n, allocator.SINGLE_AP, "none"))
        m = stats.get((n, allocator.MULTI_AP, "none"))
        if s is None or m is None:
            continue
        fig6.append([n, s.overall_avg_sinr_db, m.overall_avg_sinr_db,
                     m.overall_avg_sinr_db - s.overall_avg_sinr_db, m.ap_count_mode,
                     max((c for c, f in m.ap_count_histogram.items() if f), default=0)])
    if fig6:
        write_csv(out / "fig6.csv", FIG6_COLUMNS, fig6, cfg, ["failure=none"])
        figures.append("fig6")
    fig7 = []
    for failure in cfg.experiment.failures:
        for n in cfg.experiment.failure_users:
            for mode in cfg.experiment.modes:
                st = stats[(n, mode, failure)]
                fig7.append([failure, n, mode, st.overall_avg_sinr_db, st.ap_count_mode,
                             st.unassigned_user_fraction])
    if fig7:
        write_csv(out / "fig7.csv", FIG7_COLUMNS, fig7, cfg)
        figures.append("fig7")

    summary = {
        "fingerprint": cfg.fingerprint,
        "channel_fingerprint": channel.fingerprint,
        "version": __version__,
        "conventions": conventions(cfg),
        "sigma_a2": cfg.sigma,
        "threshold_linear": cfg.sinr.Z,
        "n_solutions": n_solutions,
        "n_valid": n_valid,
        "invalid": invalid,
        "figures": figures,
        "series": [dict(zip(SERIES_COLUMNS, r)) for r in series_rows],
    }
    write_json(out / "summary.json", summary)
    return summary


def cmd_experiment(cfg: RunConfig, log=print) -> int:
    channel, _ = ensure_channel(cfg, log)
    try:
        stats = run_grid(cfg, channel)
    except allocator.GuardError as exc:
        raise CommandError(EXIT_GUARD, f"solver guard violated: {exc}") from exc
    summary = write_experiment(cfg, stats, channel)
    log(f"{summary['n_valid']}/{summary['n_solutions']} solutions validated; wrote {cfg.output_dir}")
    for row in summary["series"]:
        if row["failure"] == "none":
            log(f"  n={row['n_users']} {row['mode']:9s} avg {row['overall_avg_sinr_db']:.2f} dB "
                f"mode {row['ap_count_mode']} max {row['max_ap_count']}")
    if summary["invalid"]:
        raise CommandError(EXIT_VALIDATION, f"{len(summary['invalid'])} solutions failed validation")
    return EXIT_OK


def build_topologies(cfg: RunConfig):
    p = cfg.pon
    try:
        return [pon.build_awgr_pon(**p["awgr"]), pon.build_p2p_pon(**p["p2p"]),
                pon.build_switch_baseline(**p["switch"])]
    except (TypeError, ValueError) as exc:
        raise CommandError(EXIT_CONFIG, f"invalid PON shape: {exc}") from exc


def analyse_topology(topo):
    report = pon.failure_sweep(topo, pon.DEFAULT_SWEEPS[topo.name])
    ap_report = pon.failure_sweep(topo, ("ap",))
    n_aps = len(topo.ap_ids)
    row = [topo.name, n_aps, pon.bisection_bandwidth(topo), n_aps // 2 * topo.rate_gbps,
           report.max_disconnected, report.ap_to_olt_survival_fraction, report.ap_pair_survival_fraction]
    return row, report, ap_report


def cmd_pon(cfg: RunConfig, log=print) -> int:
    out = cfg.output_dir / "pon"
    rows, reports = [], []
    for topo in build_topologies(cfg):
        manifest = pon.save_manifest(topo, out / f"{topo.name}.manifest.json", cfg.fingerprint)
        row, report, _ = analyse_topology(topo)
        again, report2, _ = analyse_topology(pon.load_manifest(manifest))
        if again != row or report2 != report:
            raise CommandError(EXIT_VALIDATION, f"{topo.name}: re-imported manifest gives a different report")
        rows.append(row)
        reports.append(report)
        log(f"  {row[0]:16s} bisection {row[2]:.0f} Gbps, worst single failure cuts {row[4]} AP(s)")
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, rows, cfg)
    pon.write_report_csv(reports, out / "resilience.csv", [f"fingerprint={cfg.fingerprint}"])
    write_json(out / "summary.json", {
        "fingerprint": cfg.fingerprint, "version": __version__,
        "bisection": "min over balanced AP bipartitions of max-flow; APs uncapped terminals, OLT not transit",
        "comparison": [dict(zip(COMPARISON_COLUMNS, r)) for r in rows],
    })
    return EXIT_OK


def closed_form_checks(cfg: RunConfig) -> dict:
    """Hand-derivable quantities, each against its exact closed form (at rtol)
    and its rounded quoted value (at 1e-4)."""
    n = lambertian_order(60.0)
    axial = los_gain((0.0, 0.0, 3.0), (0.0, 0.0, -1.0), n, (0.0, 0.0, 1.0), (0.0, 0.0, 1.0), 20e-6, 25.0)
    sigma = receiver_noise_variance(cfg.receiver.noise_density, cfg.receiver.bandwidth)
    checks = {
        # (n + 1) A / (2 pi d^2) with n = 1, A = 20 mm^2, d = 2 m
        "axial_los_gain": (axial, 2 * 20e-6 / (2 * math.pi * 4.0), 1e-6, 1.5915e-6),
        "sigma_a2": (sigma, 4.47e-12**2 * 1.75e9, 1e-4, 3.4965e-14),
        "threshold_linear": (cfg.sinr.Z, 10**1.38, 1e-6, 23.988),
    }
    out = {}
    for k, (v, exact, rtol, quoted) in checks.items():
        ok = abs(v - exact) <= rtol * abs(exact) and abs(v - quoted) <= 1e-4 * abs(quoted)
        out[k] = {"value": v, "expected": exact, "quoted": quoted, "rtol": rtol, "ok": ok}
    return out


def cmd_validate(cfg: RunConfig, n_instances=500, seed=0, log=print) -> int:
    n, mismatches = allocator.oracle_equivalence(n_instances, seed, solver=allocator.solve_exact)
    closed = closed_form_checks(cfg)
    for name, c in closed.items():
        log(f"  {name}: {c['value']:.6g} (expected {c['expected']:.6g}) {'ok' if c['ok'] else 'FAIL'}")
    log(f"  oracle: {n - len(mismatches)}/{n} instances agree")
    write_json(cfg.output_dir / "validate.json", {
        "fingerprint": cfg.fingerprint, "oracle_instances": n, "oracle_seed": seed,
        "mismatches": mismatches, "closed_form": closed,
    })
    failed = [k for k, c in closed.items() if not c["ok"]]
    if mismatches or failed:
        for m in mismatches[:5]:
            print(json.dumps(m), file=sys.stderr)
        raise CommandError(EXIT_VALIDATION,
                           f"validation failed: {len(mismatches)} oracle mismatches, closed-form {failed}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owcnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config (default: ${CONFIG_ENV} or built-in defaults)")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--out", help="override output_dir")
    common.add_argument("--workers", type=int, help="parallel workers (-1 = all cores)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("trace", parents=[common], help="ray-trace the channel artifact")
    sub.add_parser("experiment", parents=[common], help="run the drop/mode/failure grid")
    sub.add_parser("pon", parents=[common], help="analyse backhaul topologies")
    v = sub.add_parser("validate", parents=[common], help="oracle and closed-form checks")
    v.add_argument("--instances", type=int, default=500)
    v.add_argument("--oracle-seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["experiment"] = {"seed": args.seed}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "trace":
            return cmd_trace(cfg)
        if args.command == "experiment":
            return cmd_experiment(cfg)
        if args.command == "pon":
            return cmd_pon(cfg)
        return cmd_validate(cfg, args.instances, args.oracle_seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(exc, file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
