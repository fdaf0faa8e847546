"""Command-line harness: run bundled or custom scenarios, sweep knobs, compare modes.

Exit codes: 0 success, 2 configuration error, 3 an embedded expectation failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import canonical_json
from .simnet.config import (
    ConfigError,
    Expectation,
    ScenarioBundle,
    load_bundle,
    parse_bundle,
    parse_config,
    resolve_knob,
    set_path,
)
from .simnet.engine import direct_broadcast_baseline, run, write_trace
from .simnet.metrics import RunMetrics

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPECTATION = 3
SEED_ENV = "GOSSIPMESH_SEED"
MAX_SEED = 2**64 - 1

# Sweep summaries report these scalars per cell.
SWEEP_METRICS = ("rounds_to_full_max", "messages_total", "max_load", "coverage_min")


def bundled_names() -> list[str]:
    root = resources.files("gossipmesh") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario(spec: str) -> ScenarioBundle:
    """Load a scenario from a file path, or by bundled name such as ``four_agents``."""
    path = Path(spec)
    if path.exists():
        return load_bundle(path)
    if spec in bundled_names():
        text = (resources.files("gossipmesh") / "scenarios" / f"{spec}.json").read_text()
        return parse_bundle(json.loads(text), spec)
    raise ConfigError("scenario", f"no such file or bundled scenario: {spec!r}")


def parse_seed(text: str, where: str = "seed") -> int:
    try:
        seed = int(text)
    except ValueError:
        raise ConfigError(where, f"expected an unsigned integer, got {text!r}") from None
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(where, f"{seed} is outside [0, 2^64)")
    return seed


def _base_seed(args: argparse.Namespace, bundle: ScenarioBundle) -> int:
    if args.seed is not None:
        return parse_seed(args.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        return parse_seed(env, SEED_ENV)
    return bundle.config.seed


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_sweep(spec: str) -> tuple[str, list[Any]]:
    """``loss_p=0,0.1,0.2`` -> ("loss_p", [0, 0.1, 0.2])."""
    name, sep, values = spec.partition("=")
    if not sep or not name:
        raise ConfigError("sweep", f"expected KEY=V1,V2,... got {spec!r}")
    vals = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if not vals:
        raise ConfigError("sweep", f"no values given for {name}")
    return name, vals


def check_expectations(m: RunMetrics, expected: Sequence[Expectation]) -> list[str]:
    """Return one message per failed expectation; unknown metric names are config errors."""
    failures = []
    for e in expected:
        try:
            actual = m.get(e.metric)
        except KeyError:
            raise ConfigError(f"expected.{e.metric}", "no such metric") from None
        if not _holds(actual, e):
            delta = ""
            if isinstance(actual, (int, float)) and isinstance(e.value, (int, float)) and not isinstance(actual, bool):
                delta = f" (delta {actual - e.value:+g})"
            failures.append(f"{e.metric}: got {actual!r}, want {e.op} {e.value!r}{delta}")
    return failures


def _holds(actual: Any, e: Expectation) -> bool:
    if actual is None or e.value is None or isinstance(actual, bool) or isinstance(e.value, bool):
        return e.op == "==" and actual == e.value
    if isinstance(actual, str) or isinstance(e.value, str):
        return e.op == "==" and actual == e.value
    tol = e.tolerance
    a, v = float(actual), float(e.value)
    if e.op == "==":
        return abs(a - v) <= tol
    if e.op == "<=":
        return a <= v + tol
    if e.op == ">=":
        return a >= v - tol
    if e.op == "<":
        return a < v + tol
    return a > v - tol


def _scalars_csv(rows: list[dict[str, Any]]) -> str:
    cols: list[str] = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: "" if row.get(k) is None else row.get(k) for k in cols})
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    bundle = resolve_scenario(args.scenario)
    overrides: dict[str, Any] = {"seed": _base_seed(args, bundle)}
    if args.mode:
        overrides["mode"] = args.mode
    cfg = bundle.config.with_overrides(**overrides)
    metrics, trace = run(cfg)
    if args.trace:
        write_trace(trace, args.trace)
    if args.format == "csv":
        _emit(_scalars_csv([metrics.scalars()]), args.out)
    else:
        _emit(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    failures = check_expectations(metrics, bundle.expected) if cfg.mode == bundle.config.mode else []
    if failures:
        print(f"{bundle.name}: {len(failures)} expectation(s) failed", file=sys.stderr)
        for f in failures:
            print("  " + f, file=sys.stderr)
        return EXIT_EXPECTATION
    return EXIT_OK


def summarize(values: list[Any]) -> dict[str, Any]:
    nums = [float(v) for v in values if v is not None and not isinstance(v, bool)]
    if not nums:
        return {"median": None, "p05": None, "p95": None}
    arr = np.asarray(nums)
    return {
        "median": float(np.median(arr)),
        "p05": float(np.percentile(arr, 5)),
        "p95": float(np.percentile(arr, 95)),
    }


def log2_fit(ns: Sequence[float], rounds: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``rounds = a * log2(N) + b``; returns (a, b, R^2)."""
    x = np.log2(np.asarray(ns, dtype=float))
    y = np.asarray(rounds, dtype=float)
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


def sweep(bundle: ScenarioBundle, knob: str, values: list[Any], seeds: int, base_seed: int) -> list[dict[str, Any]]:
    raw = bundle.config.to_dict()
    path = resolve_knob(raw, knob)
    rows = []
    for value in values:
        cell = json.loads(json.dumps(raw))
        set_path(cell, path, value)
        runs = []
        for s in range(seeds):
            cell["seed"] = base_seed + s
            try:
                cfg = parse_config(cell)
            except ConfigError as exc:
                raise ConfigError(f"sweep {knob}={value}: {exc.field}", str(exc).split(": ", 1)[-1]) from None
            runs.append(run(cfg)[0])
        row: dict[str, Any] = {knob: value, "runs": seeds}
        row["full_coverage_fraction"] = sum(m.rounds_to_full_max is not None for m in runs) / seeds
        for name in SWEEP_METRICS:
            for stat, v in summarize([getattr(m, name) for m in runs]).items():
                row[f"{name}_{stat}"] = v
        rows.append(row)
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    bundle = resolve_scenario(args.scenario)
    knob, values = parse_sweep(args.sweep)
    if args.seeds < 1:
        raise ConfigError("seeds", "must be >= 1")
    rows = sweep(bundle, knob, values, args.seeds, _base_seed(args, bundle))
    _emit(_scalars_csv(rows), args.out)
    if resolve_knob({}, knob) == "n_agents" and len(rows) >= 2:
        pts = [(r[knob], r["rounds_to_full_max_median"]) for r in rows if r["rounds_to_full_max_median"] is not None]
        if len(pts) >= 2:
            a, b, r2 = log2_fit([p[0] for p in pts], [p[1] for p in pts])
            print(f"rounds_to_full ~ {a:.3f} * log2(N) + {b:.3f}  (R^2 = {r2:.4f})", file=sys.stderr)
    return EXIT_OK


def compare(bundle: ScenarioBundle, seed: int) -> dict[str, dict[str, Any]]:
    cfg = bundle.config.with_overrides(seed=seed)
    gossip = run(cfg.with_overrides(mode="gossip"))[0]
    broadcast = direct_broadcast_baseline(cfg)
    keys = ("max_load", "mean_load", "messages_total", "coverage_min", "rounds_to_full_max", "redundancy_ratio")
    return {
        "gossip": {k: gossip.scalars()[k] for k in keys},
        "broadcast": {k: broadcast.scalars()[k] for k in keys},
    }


def cmd_compare(args: argparse.Namespace) -> int:
    bundle = resolve_scenario(args.scenario)
    result = compare(bundle, _base_seed(args, bundle))
    if args.format == "csv":
        rows = [{"mode": mode, **vals} for mode, vals in result.items()]
        _emit(_scalars_csv(rows), args.out)
    else:
        _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name in bundled_names():
        print(f"{name:16s} {resolve_scenario(name).description}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    bundle = resolve_scenario(args.scenario)
    print(canonical_json(bundle.config.to_dict()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossipmesh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
        p.add_argument("--seed", help=f"master seed (default: ${SEED_ENV}, then the scenario's own)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("run", help="run one scenario and write its metrics")
    common(p)
    p.add_argument("--trace", help="also write the line-delimited JSON trace here")
    p.add_argument("--mode", choices=("gossip", "broadcast"))
    p.add_argument("--sweep", help="KEY=V1,V2,... runs a sweep instead (see the sweep command)")
    p.add_argument("--seeds", type=int, default=1, help="seeds per sweep cell")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario over several values of one knob")
    common(p)
    p.add_argument("--sweep", required=True, help="KEY=V1,V2,...")
    p.add_argument("--seeds", type=int, default=30, help="seeds per cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="gossip versus direct broadcast on one scenario")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("validate", help="parse a scenario and print its normalized config")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("--") and argv[0] not in ("-h", "--help"):
        argv.insert(0, "run")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    if args.command == "run" and args.sweep:
        args.func = cmd_sweep
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
