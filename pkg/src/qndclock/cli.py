"""Command-line front end: ``qndclock {sensitivity,optimize,allan,witness,reproduce}``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence

import numpy as np

from . import __version__, config as cfg
from .allan import LaserNoiseModel, averaged_mse, averaged_mse_regularized, protocol_evaluator
from .errors import InvalidArgument, QndClockError, QuadratureError
from .estimator import sensitivity_curve
from .optimizer import ConstraintKind, ConstraintSet, best_operating_detuning, optimize_protocol
from .presets import REPRODUCE_CONFIG
from .protocol import reference_protocol
from .witness import witness_scan

log = logging.getLogger("qndclock")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SENSITIVITY_COLUMNS = ["delta_over_omega", "mse", "protocol_id"]
OPTIMIZE_COLUMNS = ["constraint_kind", "t2", "t3", "alpha1_sq", "alpha2_sq", "alpha3_sq",
                    "delta_opt_over_omega", "mse", "improvement_db"]
ALLAN_COLUMNS = ["gamma", "e_mse", "protocol_id", "method"]
WITNESS_COLUMNS = ["scan_value", "xi2", "axis_x", "axis_y", "axis_z", "scan_kind", "curve_id"]


def fmt(value) -> str:
    """17 significant digits, locale-independent."""
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, command: str, run: cfg.RunConfig, outputs: List[str],
                   started: float) -> str:
    manifest = {
        "tool": "qndclock",
        "version": __version__,
        "command": command,
        "config_sha256": run.digest(),
        "seed": run.seed,
        "started_utc": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_clock_s": time.time() - started,
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map, optionally on a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ids(section, key: str, run: cfg.RunConfig) -> List[str]:
    ids = section.get(key, list(run.protocols))
    if not isinstance(ids, list) or not ids:
        raise cfg.ConfigError(f"{key} must be a non-empty list of protocol ids")
    for pid in ids:
        run.protocol(pid)
    return ids


# ---------------------------------------------------------------- commands

def sensitivity_rows(run: cfg.RunConfig) -> list:
    sec = run.section("sensitivity")
    ids = _ids(sec, "protocols", run)
    ratios = cfg.grid(sec.get("delta_over_omega"), "sensitivity.delta_over_omega")

    def one(pid):
        spec = run.protocol(pid)
        curve = sensitivity_curve(spec, run.params, ratios * spec.omega, protocol_id=pid)
        return [(r, m, pid) for r, m in zip(ratios, curve.mse_values)]

    return [row for rows in _pmap(one, ids, run.threads) for row in rows]


def _sql(run: cfg.RunConfig, alpha_ref: float) -> float:
    ref = reference_protocol(run.omega_ref, run.interrogation_time, alpha_ref, run.n_atoms)
    return best_operating_detuning(ref, run.params)[1]


def optimize_rows(run: cfg.RunConfig) -> list:
    sec = run.section("optimize")
    regimes = sec.get("regimes", [k.value for k in ConstraintKind])
    try:
        kinds = [ConstraintKind(r) for r in regimes]
    except (ValueError, TypeError) as exc:
        raise cfg.ConfigError(f"optimize.regimes: {exc}") from exc
    if not kinds:
        raise cfg.ConfigError("optimize.regimes is empty")
    alpha = cfg.number(sec, "base_photons", 7.18e9)
    total = cfg.number(sec, "total_photons", 3 * alpha)
    photon_max = cfg.number(sec, "photon_max", 1e12)
    restarts = int(sec.get("restarts", 20))
    max_evals = int(sec.get("max_evals", 2000))
    if restarts < 1 or max_evals < 1:
        raise cfg.ConfigError("restarts and max_evals must be positive")
    omega, T = run.omega_3p, run.interrogation_time
    base = cfg.build_protocol({"id": "base", "kind": "three_pulse", "t2_over_pi": 1.0, "t3_over_pi": 3.0,
                               "photons": [alpha] * 3}, run.n_atoms, T, run.transverse_variance)
    sql = _sql(run, alpha)

    def one(kind):
        try:
            cons = ConstraintSet(kind, t_max=T, photon_max=photon_max,
                                 total_photons=total if kind is ConstraintKind.CAPPED_TOTAL_PHOTONS else None)
        except InvalidArgument as exc:
            raise cfg.ConfigError(str(exc)) from exc
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize_protocol(base, run.params, cons, n_restarts=restarts, max_evals=max_evals,
                                    seed=run.seed, mse_sql=sql)
        if not res.converged:
            log.warning("%s: best restart did not converge within the budget", kind.value)
        t, a = res.best_spec.times, res.best_spec.photons
        return (kind.value, t[1], t[2], a[0], a[1], a[2], res.delta_opt / omega, res.mse_opt,
                res.improvement_db)

    return _pmap(one, kinds, run.threads)


def allan_rows(run: cfg.RunConfig) -> list:
    sec = run.section("allan")
    ids = _ids(sec, "protocols", run)
    gammas = cfg.grid(sec.get("gamma_over_omega_ref"), "allan.gamma_over_omega_ref") * run.omega_ref
    if np.any(gammas <= 0):
        raise cfg.ConfigError("allan gammas must be positive")
    cap = cfg.number(sec, "cap", 4.0)

    def one(pid):
        spec = run.protocol(pid)
        delta_est, _ = best_operating_detuning(spec, run.params)
        f = protocol_evaluator(spec, run.params)
        rows = []
        for g in gammas:
            for method in ("windowed", "regularized"):
                try:
                    if method == "windowed":
                        v = averaged_mse(f, delta_est, LaserNoiseModel.for_rabi(g, spec.omega))
                    else:
                        v = averaged_mse_regularized(f, delta_est, g, cap=cap)
                except QuadratureError as exc:
                    log.warning("%s %s gamma=%.6g: %s %s", pid, method, g, exc, exc.diagnostics)
                    v = math.nan
                rows.append((g, v, pid, method))
        return rows

    return [row for rows in _pmap(one, ids, run.threads) for row in rows]


def witness_rows(run: cfg.RunConfig) -> list:
    sec = run.section("witness")
    spec = run.protocol(sec.get("protocol", "timings"))
    if spec.n_pulses < 2:
        raise cfg.ConfigError("witness protocol needs at least two pulses")
    scans = sec.get("scans")
    if not isinstance(scans, list) or not scans:
        raise cfg.ConfigError("witness.scans must be a non-empty list")
    conditional = bool(sec.get("conditional", True))

    def one(scan):
        kind, cid = scan.get("kind"), str(scan.get("id", scan.get("kind")))
        if kind == "detuning":
            ratios = cfg.grid(scan.get("values_over_omega"), f"witness.{cid}.values_over_omega")
            s = spec
            if "photons" in scan:
                s = spec.with_pulses((t, cfg.number(scan, "photons", positive=False)) for t in spec.times)
            curve = witness_scan(s, run.params, "detuning", ratios * spec.omega, conditional=conditional)
            values = ratios
        elif kind == "photons":
            values = cfg.grid(scan.get("values"), f"witness.{cid}.values")
            delta = cfg.number(scan, "delta_over_omega", positive=False) * spec.omega
            curve = witness_scan(spec, run.params, "photons", values, delta=delta, conditional=conditional)
        else:
            raise cfg.ConfigError(f"witness scan {cid!r}: kind must be 'detuning' or 'photons'")
        return [(v, x, *axis, kind, cid) for v, x, axis in zip(values, curve.xi2, curve.axes)]

    return [row for rows in _pmap(one, scans, run.threads) for row in rows]


COMMANDS = {
    "sensitivity": ("sensitivity.csv", SENSITIVITY_COLUMNS, sensitivity_rows),
    "optimize": ("optimize.csv", OPTIMIZE_COLUMNS, optimize_rows),
    "allan": ("allan.csv", ALLAN_COLUMNS, allan_rows),
    "witness": ("witness.csv", WITNESS_COLUMNS, witness_rows),
}


def run_commands(run: cfg.RunConfig, names: Sequence[str], out_dir: str, label: str) -> List[str]:
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for name in names:
        filename, columns, producer = COMMANDS[name]
        rows = producer(run)
        outputs.append(write_csv(os.path.join(out_dir, filename), columns, rows))
        log.info("wrote %s (%d rows)", filename, len(rows))
    outputs.append(write_manifest(out_dir, label, run, outputs, started))
    return outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qndclock", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "reproduce"):
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", required=name != "reproduce")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--threads", type=int, metavar="N")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_flags(run: cfg.RunConfig, args) -> cfg.RunConfig:
    if args.threads is not None:
        if args.threads < 1:
            raise cfg.ConfigError("--threads must be at least 1")
        run.threads = args.threads
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise cfg.ConfigError("--seed must be an unsigned 64-bit integer")
        run.seed = args.seed
        run.raw["seed"] = args.seed
    if args.out:
        run.output_dir = args.out
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "reproduce":
            run = cfg.load(args.config) if args.config else cfg.from_dict(REPRODUCE_CONFIG)
            names = list(COMMANDS)
        else:
            run = cfg.load(args.config)
            names = [args.command]
        run = _apply_flags(run, args)
        outputs = run_commands(run, names, run.output_dir, args.command)
    except InvalidArgument as exc:
        print(f"qndclock: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QndClockError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qndclock: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
