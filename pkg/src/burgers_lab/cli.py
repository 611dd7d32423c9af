"""burgers-lab <command> [--config FILE] [--key value ...] --out DIR

Exit status: 0 contract holds, 1 contract violated, 2 usage error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments, kernels
from .action import OptimizationError
from .field import EvaluationError, ParameterError
from .inviscid import AmbiguityError, DivergenceError, write_shocks_csv
from .periodic import ConvergenceError
from .viscous import NumericRangeError

log = logging.getLogger("burgers_lab")

EXIT_OK, EXIT_CONTRACT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


# key -> (parser, default, admissible check, help)
KEYS = {
    "potential": (str, "forced", lambda v: v in ("forced", "zero") or v.startswith("constant:"),
                  "forced | zero | constant:<c>"),
    "phi": (str, "one_minus_cos", lambda v: v in ("zero", "one_minus_cos"), "initial cost"),
    "grid": (int, 256, lambda v: 8 <= v <= 4096, "grid points"),
    "eps": (_floats, [0.4, 0.2, 0.1, 0.05], lambda v: len(v) > 0 and all(0 < e <= 1 for e in v),
            "comma-separated viscosities"),
    "t": (float, 1.0, lambda v: v > 0, "time"),
    "x": (float, 0.5, math.isfinite, "position"),
    "y": (float, 4.0, math.isfinite, "second position (sync)"),
    "dx": (float, 1e-3, lambda v: 0 < v < 0.5, "finite-difference step"),
    "level": (int, 8, lambda v: 0 <= v <= 12, "S_n level"),
    "restarts": (int, 32, lambda v: 0 <= v <= 10_000, "optimizer restarts"),
    "seed": (int, 0, lambda v: v >= 0, "master seed"),
    "n_paths": (int, 200_000, lambda v: v >= 2, "Monte-Carlo paths"),
    "relax_periods": (int, 50, lambda v: 1 <= v <= 10_000, "relaxation periods"),
    "n_periods": (int, 3, lambda v: 1 <= v <= 20, "periods N in the action comparison"),
    "cfl": (float, 0.5, lambda v: 0 < v < 1, "CFL number"),
    "samples": (int, 32, lambda v: v >= 1, "backward characteristics"),
    "horizon": (float, 40 * math.pi, lambda v: v > 0, "backward horizon"),
    "k": (int, 1, lambda v: 1 <= v <= 8, "first synchronization multiplier"),
    "margin": (float, 1.0, lambda v: v >= 0, "verdict margin per period"),
    "gap_tol": (float, 0.1, lambda v: v > 0, "varadhan gap tolerance at the smallest eps"),
    "el_dt": (float, 1e-3, lambda v: 0 < v <= 0.1, "EL integration step"),
    "q_seeds": (int, 64, lambda v: v >= 1, "seed grid in q"),
    "p_seeds": (int, 64, lambda v: v >= 1, "seed grid in p"),
    "pairs": (int, 10, lambda v: v >= 1, "random pairs in the stability check"),
    "t_end": (float, math.pi, lambda v: v > 0, "final time for solves"),
    "dt_out": (float, 0.05, lambda v: v > 0, "output interval"),
    "save_every": (int, 10, lambda v: v >= 1, "slice stride for viscous output"),
    "u0": (str, "sin", lambda v: v in ("sin", "zero"), "initial data for inviscid-solve"),
}

# per-command overrides of the global defaults
COMMAND_DEFAULTS = {
    "counterexample": {},
    "varadhan": {},
    "laplace": {"level": 2, "eps": [0.4, 0.2, 0.1], "phi": "zero", "restarts": 8},
    "rh-shock": {},
    "periodic-orbits": {},
    "sync": {"x": 0.3},
    "bounds": {"eps": [0.5, 0.2]},
    "value-gradient": {"restarts": 8},
    "viscous-solve": {"eps": [0.5], "phi": "zero"},
    "inviscid-solve": {"t_end": 3.0},
    "periodic-find": {"eps": [0.5, 0.2]},
}

RUNNERS = {
    "counterexample": lambda c: experiments.run_counterexample(c).to_dict(),
    "varadhan": experiments.run_varadhan,
    "laplace": experiments.run_laplace,
    "rh-shock": experiments.run_rh_shock,
    "periodic-orbits": experiments.run_periodic_orbits,
    "sync": experiments.run_sync,
    "bounds": experiments.run_bounds,
    "value-gradient": experiments.run_value_gradient,
    "viscous-solve": experiments.run_viscous_solve,
    "inviscid-solve": experiments.run_inviscid_solve,
    "periodic-find": experiments.run_periodic_find,
}

NUMERIC_ERRORS = (NumericRangeError, DivergenceError, ConvergenceError, OptimizationError,
                  EvaluationError, AmbiguityError, FloatingPointError)


class UsageError(Exception):
    pass


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(command: str, file_values: dict, cli_values: dict) -> dict:
    cfg = {k: spec[1] for k, spec in KEYS.items()}
    cfg.update(COMMAND_DEFAULTS[command])
    for source in (file_values, cli_values):
        for key, raw in source.items():
            parse, _, ok, _ = KEYS[key]
            try:
                value = parse(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
            if not ok(value):
                raise UsageError(f"value for {key} out of range: {raw!r}")
            cfg[key] = value
    cfg["command"] = command
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _split_artifacts(result: dict):
    """Pull non-serializable objects (runs, fields, shock records) out of
    the result so they can be written as CSV."""
    artifacts = {}
    for key in ("run", "records", "fields", "inviscid_u0"):
        if key in result:
            artifacts[key] = result.pop(key)
    return artifacts


def _write_field_csv(path, fields: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "x", "u"])
        for label, f in fields.items():
            for x, u in zip(f.grid.nodes, f.values):
                w.writerow([label, repr(float(x)), repr(float(u))])


def write_artifacts(out: Path, command: str, artifacts: dict):
    written = []
    run = artifacts.get("run")
    if run is not None:
        p = out / f"{command}-slices.csv"
        run.write_csv(p)
        written.append(p.name)
    rec = artifacts.get("records")
    if isinstance(rec, dict):
        for label, r in rec.items():
            p = out / f"{command}-shocks-{label}.csv"
            write_shocks_csv(r, p)
            written.append(p.name)
    elif rec is not None:
        p = out / f"{command}-shocks.csv"
        write_shocks_csv(rec, p)
        written.append(p.name)
    fields = artifacts.get("fields")
    if fields:
        f = {f"eps={k}": v for k, v in fields.items()}
        if "inviscid_u0" in artifacts:
            f["eps=0"] = artifacts["inviscid_u0"]
        p = out / f"{command}-u0.csv"
        _write_field_csv(p, f)
        written.append(p.name)
    return sorted(written)


def write_fixed_points_csv(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "winding", "residual"])
        for f in points:
            w.writerow([repr(float(f["q"])), repr(float(f["p"])), int(f["winding"]),
                        repr(float(f["residual"]))])


def report_document(cfg: dict, result: dict, status: str, files) -> dict:
    return {"config": _jsonable(cfg), "result": _jsonable(result), "status": status,
            "files": list(files), "backend": kernels.backend_name()}


def write_report(out: Path, command: str, doc: dict):
    """Report body in <command>.json (deterministic); timestamp kept apart
    in <command>.header.json."""
    body = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (out / f"{command}.json").write_text(body, encoding="utf-8")
    header = {"command": command,
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    (out / f"{command}.header.json").write_text(json.dumps(header, sort_keys=True) + "\n",
                                                encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="burgers-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(RUNNERS))
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    for key, (_, default, _, helptext) in KEYS.items():
        ap.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                        help=f"{helptext} (default {default})")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cli_values = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_values, cli_values)
    except (UsageError, OSError) as exc:
        print(f"burgers-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = RUNNERS[args.command](cfg)
    except experiments.StageError as exc:
        print(f"burgers-lab: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ParameterError):
            return EXIT_USAGE
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"burgers-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"burgers-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    artifacts = _split_artifacts(result)
    files = write_artifacts(out, args.command, artifacts)
    if "fixed_points" in result:
        write_fixed_points_csv(out / f"{args.command}-points.csv", result["fixed_points"])
        files = sorted(files + [f"{args.command}-points.csv"])
    if args.command == "counterexample":
        passed = bool(result["verdict"])
        status = result["status"]
    else:
        passed = bool(result.get("passed"))
        status = "pass" if passed else "fail"
    write_report(out, args.command, report_document(cfg, result, status, files))
    print(f"{args.command}: {status} -> {out / (args.command + '.json')}")
    return EXIT_OK if passed else EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
