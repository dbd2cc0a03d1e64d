"""Command-line entry point: ``curveflow simulate | check | fuzz | report``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
sentinel (blow-up or failed step during a simulation).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments, flows, inequalities
from .geometry import CurveError, make_curve, read_curve_csv, resample_uniform_arclength

log = logging.getLogger("curveflow")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
OUT_ENV = "CURVEFLOW_OUT"
DEFAULT_OUT = "curveflow-out"

# key -> (required, accepted types)
CONFIG_SCHEMA = {
    "kind": (True, (str,)),
    "initial": (True, (dict, str)),
    "N": (False, (int,)),
    "dt": (True, (int, float)),
    "T_end": (True, (int, float)),
    "record_every": (False, (int,)),
    "seed": (False, (int,)),
    "renormalize": (False, (bool,)),
    "scheme": (False, (str,)),
    "out": (False, (str,)),
}
CONFIG_DEFAULTS = {"N": 256, "record_every": 1, "seed": 0, "renormalize": False,
                   "scheme": flows.DEFAULT_SCHEME.value}


class ConfigError(ValueError):
    pass


def validate_config(raw: dict) -> dict:
    """Check keys and types and fill defaults; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    for key, (required, types) in CONFIG_SCHEMA.items():
        if key not in raw:
            if required:
                raise ConfigError(f"missing required key {key!r}")
            continue
        value = raw[key]
        if isinstance(value, bool) and bool not in types:
            raise ConfigError(f"{key!r} must be {types[0].__name__}, got {value!r}")
        if not isinstance(value, types):
            raise ConfigError(f"{key!r} must be {types[0].__name__}, got {value!r}")
    cfg = {**CONFIG_DEFAULTS, **raw}
    try:
        cfg["kind"] = flows.FlowKind(cfg["kind"]).value
        cfg["scheme"] = flows.Scheme(cfg["scheme"]).value
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg["dt"] > 0 or not cfg["T_end"] >= 0:
        raise ConfigError("need dt > 0 and T_end >= 0")
    if cfg["record_every"] < 1:
        raise ConfigError("record_every must be >= 1")
    n = cfg["N"]
    if n < 16 or n & (n - 1):
        raise ConfigError(f"N must be a power of two >= 16, got {n}")
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(raw)


def build_initial(cfg: dict, base: Path | None = None):
    """The initial curve named by a validated config."""
    init = cfg["initial"]
    try:
        if isinstance(init, str):
            path = Path(init)
            if base is not None and not path.is_absolute():
                path = base / path
            return resample_uniform_arclength(read_curve_csv(path), cfg["N"])
        desc = dict(init)
        desc.setdefault("N", cfg["N"])
        if desc.get("type") == "random_fourier":
            desc.setdefault("seed", cfg["seed"])
        return make_curve(desc)
    except (CurveError, OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid initial curve: {exc}") from None


def _output_root(args_out: str | None) -> Path:
    return Path(args_out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def simulate_one(cfg: dict, out: Path, base: Path | None = None) -> int:
    """Run one validated configuration and write its report; returns an exit code."""
    initial = build_initial(cfg, base)
    try:
        series = flows.run(initial, cfg["kind"], float(cfg["T_end"]), float(cfg["dt"]),
                           cfg["record_every"], scheme=cfg["scheme"],
                           renormalize=cfg["renormalize"], config=cfg)
    except flows.FlowError as exc:
        raise ConfigError(str(exc)) from None
    experiments.emit_report(series, out)
    if not series.healthy:
        print(f"{out}: {series.status}: {series.reason}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _simulate_job(job):
    cfg, out, base = job
    try:
        return simulate_one(cfg, out, base)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate needs at least one --config file")
    jobs = []
    root = _output_root(args.out)
    for path in args.config:
        cfg = load_config(path)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.renormalize:
            cfg["renormalize"] = True
        if args.out is None and "out" in cfg:
            out = Path(cfg["out"])
        elif len(args.config) > 1:
            out = root / Path(path).stem
        else:
            out = root
        jobs.append((cfg, out, Path(path).parent))
    for cfg, _, base in jobs:
        build_initial(cfg, base)
    if args.workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(args.workers) as pool:
            codes = list(pool.map(_simulate_job, jobs))
    else:
        codes = [_simulate_job(j) for j in jobs]
    return max(codes)


def _parse_checks(items) -> tuple:
    if not items:
        return inequalities.DEFAULT_CHECKS
    try:
        return tuple(inequalities.parse_check(c) for c in items)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_check(args) -> int:
    checks = _parse_checks(args.checks)
    try:
        curve = read_curve_csv(args.curve)
    except (CurveError, OSError) as exc:
        raise ConfigError(f"cannot load curve: {exc}") from None
    ok = True
    try:
        for spec in checks:
            for rep in inequalities.run_check(curve, spec):
                print(rep.to_json())
                ok &= rep.satisfied
    except (CurveError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return EXIT_OK if ok else EXIT_NUMERICAL


def _parse_generator(text: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        try:
            gen = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid generator JSON: {exc}") from None
    else:
        gen = {"type": text}
    if not isinstance(gen, dict) or "type" not in gen:
        raise ConfigError("generator must name a curve type")
    return gen


def cmd_fuzz(args) -> int:
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    gen = _parse_generator(args.generator)
    checks = _parse_checks(args.checks)
    out = _output_root(args.out)
    try:
        result = inequalities.fuzz_inequalities(gen, args.trials, checks,
                                                seed=args.seed or 0, workers=args.workers,
                                                out_dir=out)
    except inequalities.FuzzAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CurveError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    for e in result.estimates:
        print(f"{e.check}: sup ratio {e.sup_ratio:.6g} over {e.trials} curves")
    if result.violations:
        print(f"{len(result.violations)} violations, see {out / 'violations.csv'}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    csv_path = run_dir / "timeseries.csv" if run_dir.is_dir() else run_dir
    try:
        series = experiments.TimeSeries.from_csv(csv_path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read time series {csv_path}: {exc}") from None
    summary = csv_path.parent / "summary.json"
    if summary.exists():
        try:
            prev = json.loads(summary.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{summary}: invalid JSON ({exc})") from None
        series.config = prev.get("run_config") or {}
        series.status = prev.get("status", "healthy")
        series.reason = prev.get("reason", "")
    out = Path(args.out) if args.out else csv_path.parent
    experiments.emit_report(series, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curveflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", action="append", metavar="JSON",
                            help="run configuration (repeat for a batch)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--workers", type=int, default=1, help="parallel workers (default 1)")

    sim = sub.add_parser("simulate", help="run a flow and write a report")
    common(sim)
    sim.add_argument("--renormalize", action="store_true",
                     help="rescale each step to restore the conserved quantity")
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("check", help="evaluate the inequalities on one curve CSV")
    chk.add_argument("curve", help="CSV file with header x,y")
    chk.add_argument("--checks", nargs="*", metavar="NAME[:ARGS]",
                     help="e.g. deficit_chain gn_J:1,3,2 (default: all)")
    chk.set_defaults(func=cmd_check)

    fz = sub.add_parser("fuzz", help="run the inequalities over random curves")
    common(fz, config=False)
    fz.add_argument("--trials", type=int, default=100)
    fz.add_argument("--generator", default="random_fourier",
                    help="curve type or JSON descriptor (default random_fourier)")
    fz.add_argument("--checks", nargs="*", metavar="NAME[:ARGS]")
    fz.set_defaults(func=cmd_fuzz)

    rep = sub.add_parser("report", help="rebuild the report of a finished run")
    rep.add_argument("run", help="run directory or timeseries.csv")
    rep.add_argument("--out", help="output directory (default: next to the CSV)")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
