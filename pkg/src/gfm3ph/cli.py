"""Command-line front end.

    gfm3ph validate    <config>
    gfm3ph run         <config> [--out DIR]
    gfm3ph sweep-ks    <config> [--ks 0,0.1,1,...] [--out DIR]
    gfm3ph fault-study <config> [--controller generalized|standard] [--out DIR]

Exit codes: 0 success, 1 output error, 2 missing or invalid config,
3 simulation abort (partial outputs are written and flagged in metadata).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, config_to_dict, load_config
from .network import AssemblyError, ConfigurationError
from .scenarios import (
    CONTROLLERS,
    DEFAULT_KS_GRID,
    RunRecord,
    fault_config,
    fault_summary,
    ks_sweep,
    run_scenario,
    unbalanced_load_config,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_OUTPUT, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

RUN_COLUMNS = ("t", "va", "vb", "vc", "ia", "ib", "ic", "Va", "Vb", "Vc", "Ia", "Ib", "Ic",
               "Pa", "Pb", "Pc", "Qa", "Qb", "Qc", "lim_a", "lim_b", "lim_c")
SWEEP_COLUMNS = ("ks", "Vuf", "Puf", "Quf")
_RUN_CHANNELS = ("v", "i", "V", "I", "P", "Q")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_run_csv(record: RunRecord, path) -> None:
    """Per-sample terminal waveforms, phasor magnitudes, powers and limiter flags."""
    n = len(record.t)
    cols = [np.asarray(record.t, float).reshape(n, 1)]
    for name in _RUN_CHANNELS:
        cols.append(np.asarray(record.channels[name], float).reshape(n, 3))
    data = np.hstack(cols)
    lim = np.asarray(record.channels["lim"]).reshape(n, 3).astype(int)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RUN_COLUMNS) + "\n")
        for row, flags in zip(data, lim):
            fh.write(",".join(map(_fmt, row)) + "," + ",".join(map(str, flags)) + "\n")


def read_run_csv(path) -> dict:
    """Parse a run CSV back into arrays keyed like the record channels."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != RUN_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        body = fh.read()
    data = (np.loadtxt(body.splitlines(), delimiter=",", ndmin=2) if body.strip()
            else np.zeros((0, len(RUN_COLUMNS))))
    out = {"t": data[:, 0]}
    for k, name in enumerate(_RUN_CHANNELS):
        out[name] = data[:, 1 + 3 * k:4 + 3 * k]
    out["lim"] = data[:, 19:22].astype(bool)
    return out


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.ks), _fmt(r.Vuf), _fmt(r.Puf), _fmt(r.Quf)])


def write_metadata(path, config, wall_time: float, command: str, aborted: bool = False,
                   message: str = "", summary: dict | None = None) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "wall_time_s": round(wall_time, 3),
        "aborted": aborted,
        "message": message,
        "config_hash": config_hash(config),
        "config": config_to_dict(config),
    }
    if summary is not None:
        meta["summary"] = summary
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=False) + "\n")


def _parse_ks(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ks list {text!r}")
    if not vals or any(not math.isfinite(v) or v < 0 for v in vals):
        raise argparse.ArgumentTypeError("ks values must be finite and >= 0")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfm3ph", description="Per-phase grid-forming droop simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("validate", "check a config file"), ("run", "simulate one scenario"),
                       ("sweep-ks", "unbalanced-load sweep over ks"),
                       ("fault-study", "single line-to-ground fault study")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", type=Path)
        if name != "validate":
            sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        if name == "sweep-ks":
            sp.add_argument("--ks", type=_parse_ks, default=list(DEFAULT_KS_GRID),
                            help="comma-separated ks values")
        if name == "fault-study":
            sp.add_argument("--controller", choices=CONTROLLERS, default="generalized")
            sp.add_argument("--duration", type=float, default=3.0)
    return p


def _fail(stage: str, msg: str, code: int) -> int:
    print(f"error [{stage}]: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.command == "sweep-ks" and not config.network.load.enabled:
            config = unbalanced_load_config(config)
        if args.command == "fault-study":
            config = fault_config(config, args.controller, args.duration)
        config.validate()
    except (ConfigurationError, AssemblyError) as e:
        return _fail("config", str(e), EXIT_CONFIG)
    if args.command == "validate":
        print(f"{args.config}: ok ({config_hash(config)[:12]})")
        return EXIT_OK

    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return _fail("output", f"cannot create {args.out}: {e.strerror}", EXIT_OUTPUT)
    start = time.perf_counter()
    try:
        if args.command == "sweep-ks":
            return _sweep(args, config, start)
        return _single(args, config, start)
    except OSError as e:
        return _fail("output", str(e), EXIT_OUTPUT)


def _single(args, config, start) -> int:
    record = run_scenario(config)
    summary = None
    if args.command == "fault-study":
        stem = f"fault_{args.controller}"
        if not record.aborted:
            summary = fault_summary(record)
    else:
        stem = "run"
    write_run_csv(record, args.out / f"{stem}.csv")
    write_metadata(args.out / f"{stem}.json", config, time.perf_counter() - start,
                   args.command, record.aborted, record.message, summary)
    if record.aborted:
        return _fail("simulation", f"{record.message}; partial output in {args.out}", EXIT_ABORT)
    print(args.out / f"{stem}.csv")
    return EXIT_OK


def _sweep(args, config, start) -> int:
    rows = ks_sweep(config, args.ks)
    write_sweep_csv(rows, args.out / "sweep.csv")
    bad = [r.ks for r in rows if not math.isfinite(r.Vuf)]
    unsettled = [r.ks for r in rows if not r.converged]
    msg = ""
    if bad:
        msg = f"sweep points aborted: ks={bad}"
    elif unsettled:
        msg = f"not steady: ks={unsettled}"
    summary = {"rows": [{"ks": r.ks, "converged": r.converged, "P": list(r.P), "Q": list(r.Q)}
                        for r in rows]}
    write_metadata(args.out / "sweep.json", config, time.perf_counter() - start, args.command,
                   bool(bad), msg, summary)
    if bad:
        return _fail("simulation", f"{msg}; partial output in {args.out}", EXIT_ABORT)
    if unsettled:
        logger.warning(msg)
    print(args.out / "sweep.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
