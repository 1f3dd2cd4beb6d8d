"""Command-line front end: ``ehlink <command> [options]``.

Commands: analyze, fsmc, simulate, search, sweep. Every command writes one
CSV (stdout or ``--out``) whose ``#`` header echoes the resolved
configuration. Failures exit nonzero with a single JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__, analytic, fsmc, montecarlo
from .config import KEYS, build, fmt, read_settings, resolved_lines, set_value
from .model import ConfigError, tx_power_from_budget
from .policies import ReceiverMode, SourceKind

log = logging.getLogger("ehlink")

COMMANDS = ("analyze", "fsmc", "simulate", "search", "sweep")
METHODS = ("analyze", "fsmc", "simulate")

ANALYZE_COLUMNS = ["kind", "receiver", "p_s", "psi_s", "psi_d", "psi_joint", "phi",
                   "p_out_lower_bound", "optimal_p_s", "b_th", "c_const", "p_outage", "note"]
FSMC_COLUMNS = ["kind", "receiver", "p_s", "p_out", "tau", "n_states", "residual", "iterations",
                "costs_rounded"]
SIM_COLUMNS = ["replica", "seed", "n_slots", "n_packets", "p_out", "p_out_ci95", "tau", "tau_ci95",
               "psi_s", "psi_s_ci95", "psi_d", "psi_d_ci95", "psi_joint", "psi_joint_ci95"]
SEARCH_COLUMNS = ["row", "p_s", "p_tx", "p_out", "tau", "error"]
SWEEP_COLUMNS = ["param", "value", "method", "p_out", "p_out_stderr", "tau", "tau_stderr",
                 "psi_s", "psi_d", "psi_joint", "p_out_lower_bound", "note"]


class UsageError(Exception):
    pass


def parse_sweep(text):
    """``param:start:stop:step`` -> (param, [values]); stop is inclusive."""
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"--sweep: expected param:start:stop:step, got {text!r}")
    name = parts[0].strip()
    if name not in KEYS:
        raise UsageError(f"--sweep: unknown parameter {name!r}")
    try:
        start, stop, step = (float(p) for p in parts[1:])
    except ValueError:
        raise UsageError(f"--sweep: start, stop and step must be numbers in {text!r}") from None
    if not step > 0:
        raise UsageError(f"--sweep: step must be > 0 (got {step})")
    if stop < start:
        raise UsageError(f"--sweep: stop {stop} is below start {start}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return name, [round(start + k * step, 12) for k in range(count)]


def build_parser():
    p = argparse.ArgumentParser(prog="ehlink", description="Outage analysis of an energy-harvesting link.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file with [link], [energy], [policy] sections")
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.add_argument("--seed", type=int, default=1, help="base seed; replica r uses seed + r")
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--slots", type=int, default=10**6, help="measured slots per simulation")
    p.add_argument("--burn-in", type=int, default=montecarlo.BURN_IN)
    p.add_argument("--sweep", help="param:start:stop:step (inclusive)")
    p.add_argument("--methods", default="fsmc", help="comma list for sweep: analyze,fsmc,simulate")
    p.add_argument("--policy", choices=[k.value for k in SourceKind])
    p.add_argument("--receiver", choices=[m.value for m in ReceiverMode])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_settings(args):
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"--config: {exc}") from None
    settings = read_settings(text)
    if args.policy:
        settings = set_value(settings, "kind", args.policy)
    if args.receiver:
        settings = set_value(settings, "receiver", args.receiver)
    return settings


def _row(values):
    return [fmt(v) for v in values]


def cmd_analyze(settings, args):
    config, profile, policy = build(settings)
    r = analytic.analyze(config, profile, policy)
    return ANALYZE_COLUMNS, [_row([policy.source.value, policy.receiver.value, policy.p_s, r.psi_s, r.psi_d,
                                   r.psi_joint, r.phi, r.p_out_lower_bound, r.optimal_p_s, r.b_th,
                                   r.c_const, r.p_outage, r.note])]


def cmd_fsmc(settings, args):
    config, profile, policy = build(settings)
    r = fsmc.solve(config, profile, policy)
    return FSMC_COLUMNS, [_row([policy.source.value, policy.receiver.value, policy.p_s, r.p_out, r.tau,
                                r.n_states, r.residual, r.iterations, r.rounded])]


def _sim_row(label, seed, res):
    ci = res.ci_halfwidth_95
    return _row([label, seed, res.n_slots, res.n_packets, res.p_out_hat, ci["p_out"], res.tau_hat, ci["tau"],
                 res.psi_s_hat, ci["psi_s"], res.psi_d_hat, ci["psi_d"], res.psi_joint_hat, ci["psi_joint"]])


def cmd_simulate(settings, args):
    config, profile, policy = build(settings)
    if args.replicas < 1:
        raise UsageError("--replicas: must be >= 1")
    results = montecarlo.simulate_replicas(config, profile, policy, args.slots, args.seed, args.replicas,
                                           workers=args.workers, burn_in=args.burn_in)
    rows = [_sim_row(i, args.seed + i, res) for i, res in enumerate(results)]
    rows.append(_sim_row("all", args.seed, montecarlo.aggregate(results)))
    return SIM_COLUMNS, rows


def cmd_search(settings, args):
    config, profile, policy = build(settings)
    r = fsmc.search_threshold(config, profile, policy, workers=args.workers)
    rows = [_row(["optimum", r.p_s, r.p_tx, r.p_out, math.nan, ""])]
    for pt in r.curve:
        p_tx = tx_power_from_budget(pt.p_s, config.alpha, config.p_cs)
        rows.append(_row(["curve", pt.p_s, p_tx, pt.p_out, pt.tau, pt.error]))
    tau = next((pt.tau for pt in r.curve if pt.p_s == r.p_s), math.nan)
    rows[0][4] = fmt(tau)
    return SEARCH_COLUMNS, rows


def _sweep_point(job):
    settings, param, value, method, slots, seed, burn_in = job
    config, profile, policy = build(settings)
    blank = None
    if method == "analyze":
        r = analytic.analyze(config, profile, policy)
        return [param, value, method, blank, blank, blank, blank, r.psi_s, r.psi_d, r.psi_joint,
                r.p_out_lower_bound, r.note]
    if method == "fsmc":
        r = fsmc.solve(config, profile, policy)
        return [param, value, method, r.p_out, blank, r.tau, blank, blank, blank, blank, blank, ""]
    r = montecarlo.simulate(config, profile, policy, slots, seed, burn_in=burn_in)
    return [param, value, method, r.p_out_hat, r.stderr["p_out"], r.tau_hat, r.stderr["tau"],
            r.psi_s_hat, r.psi_d_hat, r.psi_joint_hat, blank, ""]


def cmd_sweep(settings, args):
    if not args.sweep:
        raise UsageError("sweep: --sweep param:start:stop:step is required")
    param, values = parse_sweep(args.sweep)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--methods: unknown {bad} (choose from {', '.join(METHODS)})")
    jobs = []
    problems = []
    for value in values:
        point = set_value(settings, param, value)
        try:
            build(point)
        except ConfigError as exc:
            problems.extend(f"{param}={fmt(value)}: {p}" for p in exc.problems)
            continue
        for method in methods:
            jobs.append((point, param, point[param], method, args.slots, args.seed, args.burn_in))
    if problems:
        raise ConfigError(problems)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    return SWEEP_COLUMNS, [_row(r) for r in rows]


HANDLERS = {"analyze": cmd_analyze, "fsmc": cmd_fsmc, "simulate": cmd_simulate,
            "search": cmd_search, "sweep": cmd_sweep}


def render(command, settings, columns, rows, args):
    buf = io.StringIO()
    buf.write(f"# ehlink {__version__} {command}\n")
    if command in ("simulate", "sweep"):
        buf.write(f"# seed = {args.seed}\n")
    for line in resolved_lines(settings):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def run(argv=None):
    """Parse arguments, run one command; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args)
        columns, rows = HANDLERS[args.command](settings, args)
        text = render(args.command, settings, columns, rows, args)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        _fail("config", exc.problems)
        return 2
    except UsageError as exc:
        _fail("usage", [str(exc)])
        return 2
    except (fsmc.StationaryError, fsmc.DegenerateChainError, fsmc.SearchError, analytic.NoClosedFormError,
            ValueError, OSError) as exc:
        _fail(type(exc).__name__, [str(exc)])
        return 1
    return 0


def _fail(kind, problems):
    sys.stderr.write(json.dumps({"error": kind, "problems": problems}, sort_keys=True) + "\n")


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
