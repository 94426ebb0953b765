"""Command line: ``offsetlag simulate | probe | analyze``.

Exit codes: 0 success, 2 usage/config, 3 I/O, 4 malformed input,
5 trace schema mismatch.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import typing
from pathlib import Path
from typing import Optional, Sequence

from offsetlag import __version__
from offsetlag.errors import DomainError, SchemaVersionError, TraceFormatError
from offsetlag.lag_dynamics import divergence_probe, fixed_point_lag, lemma1_bounds, parse_beta_rule
from offsetlag.simulator import (
    SimConfig,
    measure_chain_stats,
    run_simulation,
    summarize_lags,
    sweep,
    write_chains_csv,
)
from offsetlag import trace_analysis as ta

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MALFORMED, EXIT_VERSION = 0, 2, 3, 4, 5
OUT_ENV = "OFFSETLAG_OUT"

# flag -> config field, for the short spellings
ALIASES = {
    "n": "n_peers",
    "select": "selection",
    "pad": "padding",
    "interval": "arrival_interval",
    "width-mean": "width_mean",
}


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo_args(args) -> dict:
    # the output directory is left out so reruns elsewhere stay byte-identical
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("out", "command")}


def _meta(command: str, args: dict) -> dict:
    return {"tool": "offsetlag", "version": __version__, "command": command, "args": args}


# ---------------------------------------------------------------------------
# simulate


def _field_type(f: dataclasses.Field):
    hint = typing.get_type_hints(SimConfig)[f.name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    return args[0] if args else hint


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_simulate(sub) -> None:
    p = sub.add_parser("simulate", help="simulate a swarm's startup placements")
    p.add_argument("--config", type=Path, help="JSON or TOML file with SimConfig keys")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--sweep", help="seeds=A..B: run each seed into its own subdirectory")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for --sweep")
    inverse = {v: k for k, v in ALIASES.items()}
    for f in dataclasses.fields(SimConfig):
        typ = _field_type(f)
        names = ["--" + f.name.replace("_", "-")]
        if f.name in inverse and "--" + inverse[f.name] not in names:
            names.insert(0, "--" + inverse[f.name])
        conv = _parse_bool if typ is bool else typ
        p.add_argument(*names, dest=f.name, type=conv, default=None)
    p.add_argument("--tau-s", dest="tau", type=float, default=None, help=argparse.SUPPRESS)


def _load_config(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _parse_sweep(text: str) -> list[int]:
    key, _, rng = text.partition("=")
    lo, sep, hi = rng.partition("..")
    if key != "seeds" or not sep:
        raise UsageError(f"--sweep expects seeds=A..B, got {text!r}")
    try:
        a, b = int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"--sweep expects integer seeds, got {text!r}") from exc
    if b < a:
        raise UsageError("--sweep range is empty")
    return list(range(a, b + 1))


def _write_run(trace, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w") as fh:
        trace.write_jsonl(fh)
    with open(out / "summary.csv", "w") as fh:
        trace.write_summary_csv(fh)
    with open(out / "chains.csv", "w") as fh:
        write_chains_csv(measure_chain_stats(trace), fh)
    _dump_json(_meta("simulate", {"config": trace.config.to_dict(), "seed": trace.config.seed}), out / "meta.json")


def cmd_simulate(args) -> int:
    values = {}
    if args.config is not None:
        try:
            values.update(_load_config(args.config))
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValueError as exc:
            print(f"error: bad config file: {exc}", file=sys.stderr)
            return EXIT_USAGE
    for f in dataclasses.fields(SimConfig):
        v = getattr(args, f.name)
        if v is not None:
            values[f.name] = v
    if "n_peers" not in values:
        raise UsageError("--n is required (or n_peers in --config)")
    cfg = SimConfig.from_dict(values)
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    try:
        if args.sweep:
            seeds = _parse_sweep(args.sweep)
            traces = sweep(cfg, seeds, args.workers)
            for tr in traces:
                _write_run(tr, out / f"seed_{tr.config.seed}")
            merged = out / "summary.csv"
            with open(merged, "w") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["seed", "join_index", "theta", "lag", "width_at_place", "chain_len", "ref_peer",
                            "good_peer_flag"])
                for tr in traces:
                    for p in sorted(tr.peers, key=lambda p: p.peer):
                        w.writerow([tr.config.seed, p.peer, p.theta, p.lag, p.width_at_place, p.chain_len,
                                    p.ref_peer, int(p.good_peer)])
            _dump_json(_meta("simulate", {"config": cfg.to_dict(), "seeds": seeds}), out / "meta.json")
            trace = traces[-1]
        else:
            trace = run_simulation(cfg)
            _write_run(trace, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    stats = summarize_lags(trace)
    print(f"L* = {_fmt(stats.stable_lag) or 'n/a'}")
    print(f"convergence_index = {_fmt(stats.convergence_index) or 'none'}")
    print(f"final_lag = {_fmt(float(stats.lags[-1]) if stats.lags.size else None)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe


def _add_probe(sub) -> None:
    p = sub.add_parser("probe", help="iterate the width-based lag recurrence along one chain")
    p.add_argument("--beta", required=True, help="const:<omega> | harmonic | file:<path>")
    p.add_argument("--alpha", type=float, default=0.34)
    p.add_argument("--rtau", type=float, help="r*tau_s in chunks (overrides --rate/--tau)")
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=70.0)
    p.add_argument("--hops", type=int, default=1000)
    p.add_argument("--initial-lag", type=float, default=120.0, help="lag of the chain root (tracker window)")
    p.add_argument("--stride", type=int, default=1, help="write every k-th hop (the last hop always)")
    p.add_argument("--out", type=Path)


def cmd_probe(args) -> int:
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    if args.hops < 1 or args.stride < 1:
        raise UsageError("--hops and --stride must be >= 1")
    if args.rtau is not None:
        r, tau = 1.0, args.rtau
    else:
        r, tau = args.rate, args.tau
    if r <= 0 or tau <= 0:
        raise UsageError("rate and tau must be positive")
    rule = parse_beta_rule(args.beta)
    betas, lags = divergence_probe(rule, args.alpha, r, tau, args.hops, args.initial_lag)
    omega = float(betas.min())
    bounds = lemma1_bounds(args.alpha, omega, r, tau)
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "probe.csv", "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hop", "beta", "tau", "lag"])
            n = lags.size
            for k in range(0, n, args.stride):
                w.writerow([k + 1, repr(float(betas[k])), repr(float(tau)), repr(float(lags[k]))])
            if (n - 1) % args.stride:
                w.writerow([n, repr(float(betas[-1])), repr(float(tau)), repr(float(lags[-1]))])
        _dump_json(_meta("probe", _echo_args(args)), out / "meta.json")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"L* = {_fmt(fixed_point_lag(args.alpha, r, tau))}")
    print(f"bounds = [{_fmt(bounds.lower)}, {_fmt(bounds.upper)}] (omega = {_fmt(omega)})")
    print(f"final_lag = {_fmt(float(lags[-1]))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def _add_analyze(sub) -> None:
    p = sub.add_parser("analyze", help="run the trace estimators over a JSONL trace")
    p.add_argument("trace", type=Path)
    p.add_argument("--method", choices=("aa", "li"), default="li")
    p.add_argument("--occupation-threshold", type=int, default=100)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rate", type=float)
    g.add_argument("--infer-rate-from-tracker-width", type=float, metavar="W")
    p.add_argument("--availability-mode", choices=("v", "scope"), default="v")
    p.add_argument("--out", type=Path)


def cmd_analyze(args) -> int:
    try:
        with open(args.trace) as fh:
            events = ta.read_trace(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.rate is not None:
        r = args.rate
    elif args.infer_rate_from_tracker_width is not None:
        r = ta.tracker_rate(args.infer_rate_from_tracker_width)
    else:
        r = ta.infer_rate(events)
    if args.method == "li" and not r:
        raise UsageError("cannot determine the playback rate; pass --rate")

    setup_rows, raw, full = [], [], []
    counts = {s.value: 0 for s in ta.SetupStatus}
    for est, tau in ta.iter_setup_estimates(events, args.occupation_threshold, args.method, r):
        counts[est.status.value] += 1
        setup_rows.append([est.peer, est.status.value, est.first_seen, est.initial_occupation, est.change_time,
                           est.raw, tau])
        if est.status == ta.SetupStatus.OK:
            raw.append(est.raw)
            full.append(tau)

    hosts = ta.host_startups(events)
    coef_rows = [c for c in (ta.placement_coefficients(h) for _, h in sorted(hosts.items())) if c]

    mode = ta.AvailabilityMode(args.availability_mode)
    avail_rows = []
    classes = {c.value: 0 for c in ta.OffsetClass}
    for pid, h in sorted(hosts.items()):
        if h.placement is None:
            continue
        snaps = [s for s in (ta.response_snapshot(ev) for ev in h.responses) if s is not None]
        if not snaps:
            continue
        segs = ta.availability_segments(snaps, mode)
        theta = int(h.placement["theta"])
        cls = ta.classify_initial_offset(theta, segs)
        classes[cls.value] += 1
        avail_rows.append([pid, theta, segs.fp, segs.lmp, segs.ump, segs.ep, segs.most_availability, cls.value,
                           len(snaps)])

    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    summary = {
        "method": args.method, "occupation_threshold": args.occupation_threshold, "rate": r,
        "setup_status": counts, "raw_setup_time": ta.summarize(raw), "setup_time": ta.summarize(full),
        "alpha_w": {**ta.summarize([c["alpha_w"] for c in coef_rows]),
                    "mode": _nan_to_none(ta.distribution_mode([c["alpha_w"] for c in coef_rows]))},
        "alpha_l": {**ta.summarize([c["alpha_l"] for c in coef_rows]),
                    "mode": _nan_to_none(ta.distribution_mode([c["alpha_l"] for c in coef_rows]))},
        "availability_mode": mode.value, "offset_classes": classes,
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "setup_times.csv",
                   ["peer", "status", "first_seen", "initial_occupation", "change_time", "raw_setup_time",
                    "setup_time"], setup_rows)
        cols = ["peer", "ref_peer", "theta", "ref_width", "alpha_w", "alpha_l", "first_peer", "first_alpha_w",
                "first_alpha_l", "good_peer"]
        _write_csv(out / "coefficients.csv", cols, [[c[k] for k in cols] for c in coef_rows])
        _write_csv(out / "availability.csv",
                   ["peer", "theta", "fp", "lmp", "ump", "ep", "most_availability", "class", "n_snapshots"],
                   avail_rows)
        _dump_json(summary, out / "summary.json")
        _dump_json(_meta("analyze", _echo_args(args)), out / "meta.json")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    s = summary["setup_time"] if summary["setup_time"]["n"] else summary["raw_setup_time"]
    print(f"setup_time mean = {_fmt(s['mean'])} sd = {_fmt(s['sd'])} (n = {s['n']})")
    print(f"alpha_w mode = {_fmt(summary['alpha_w']['mode'])}")
    return EXIT_OK


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, bool) else int(v) for v in row])


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offsetlag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_probe(sub)
    _add_analyze(sub)
    return parser


COMMANDS = {"simulate": cmd_simulate, "probe": cmd_probe, "analyze": cmd_analyze}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaVersionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except TraceFormatError as exc:
        print(f"error: malformed trace, {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
