"""Command-line entry point: run experiments, aggregate reports, serve sessions.

``askd run`` executes one run or a sweep grid (optionally in parallel
worker processes), ``askd report`` aggregates finished run directories
into mean/std tables and long-format metric series, and ``askd serve``
exposes a live session to a remote teacher.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from askdagger.config import (
    ConfigError,
    ExperimentConfig,
    echo_config,
    load_config,
)
from askdagger.simbench import CSV_COLUMNS, run_experiment

# Flags that override config keys (flag name -> config field).
_OVERRIDE_FLAGS = {
    "mode": "mode",
    "sigma_des": "sigma_des",
    "p_rand": "p_rand",
    "n_min": "n_min",
    "n_rep": "n_rep",
    "alpha": "alpha",
    "beta": "beta",
    "lam": "lam",
    "base": "base",
    "seed": "seed",
    "episodes": "episodes",
    "ablate": "ablate",
    "phases": "phases",
    "out": "out",
    "run_id": "run_id",
    "relabel_probability": "relabel_probability",
    "steps_per_episode": "steps_per_episode",
    "noise": "noise",
    "port": "port",
    "timeout": "timeout",
    "fallback": "fallback",
    "eval_every_demos": "eval_every_demos",
    "eval_episodes": "eval_episodes",
}


class SchemaError(ValueError):
    """A run artifact is missing expected columns or fields."""


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--mode", choices=["sensitivity", "specificity", "success"])
    parser.add_argument("--sigma-des", dest="sigma_des", type=float)
    parser.add_argument("--p-rand", dest="p_rand", type=float)
    parser.add_argument("--n-min", dest="n_min", type=int)
    parser.add_argument("--n-rep", dest="n_rep", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--base", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--ablate", help="comma-separated ablation flags")
    parser.add_argument("--phases", help="phase schedule, e.g. seen:1000,unseen:500")
    parser.add_argument("--out")
    parser.add_argument("--run-id", dest="run_id")
    parser.add_argument("--relabel-probability", dest="relabel_probability", type=float)
    parser.add_argument("--steps-per-episode", dest="steps_per_episode", type=int)
    parser.add_argument("--noise", type=float)
    parser.add_argument("--eval-every-demos", dest="eval_every_demos", type=int)
    parser.add_argument("--eval-episodes", dest="eval_episodes", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="askd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment or a sweep")
    _add_override_flags(run)
    run.add_argument("--seeds", type=int, default=1, help="number of seeds (seed..seed+n-1)")
    run.add_argument("--sweep", nargs=2, metavar=("KEY", "START:STOP:STEP"),
                     help="sweep a numeric config key over an inclusive grid")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    report = sub.add_parser("report", help="aggregate finished run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", default="report")

    serve = sub.add_parser("serve", help="serve a live teaching session")
    _add_override_flags(serve)
    serve.add_argument("--port", type=int, dest="port")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--timeout", type=float, dest="timeout")
    serve.add_argument("--fallback", choices=["block", "oracle_after_timeout"], dest="fallback")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file plus flag overrides; ASKD_OUT beats --out."""
    config = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    for attr, field in _OVERRIDE_FLAGS.items():
        value = getattr(args, attr, None)
        if value is not None:
            config = dataclasses.replace(config, **{field: value})
    env_out = os.environ.get("ASKD_OUT")
    if env_out:
        config = dataclasses.replace(config, out=env_out)
    return config


def _sweep_values(spec: str) -> list[float]:
    try:
        start, stop, step = (float(part) for part in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad sweep spec {spec!r} (want start:stop:step)") from exc
    if step <= 0:
        raise ConfigError("sweep step must be positive")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 10))
        v += step
    return values


def _worker(config: ExperimentConfig) -> str:
    out_dir = Path(config.out) / config.effective_run_id()
    result = run_experiment(config, out_dir=out_dir)
    return str(result.out_dir)


def cmd_run(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    warnings = base.validate()
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)

    grids: list[tuple[ExperimentConfig, str]] = []
    if args.sweep:
        key, spec = args.sweep
        field = "lam" if key in ("lambda", "lam") else key.replace("-", "_")
        if field not in {f.name for f in dataclasses.fields(ExperimentConfig)}:
            raise ConfigError(f"unknown sweep key {key!r}")
        for value in _sweep_values(spec):
            cfg = dataclasses.replace(base, **{field: value})
            grids.append((cfg, f"{cfg.mode}_{field}{value:g}"))
    else:
        grids.append((base, ""))

    single = len(grids) == 1 and args.seeds == 1
    runs: list[ExperimentConfig] = []
    for cfg, label in grids:
        for offset in range(args.seeds):
            seed = cfg.seed + offset
            if single:
                run_id = cfg.run_id  # possibly user-supplied; empty means derived
            else:
                # grids need ids unique per swept value and seed
                run_id = f"{label}_s{seed}" if label else ""
            run_cfg = dataclasses.replace(cfg, seed=seed, run_id=run_id)
            run_cfg.validate()
            runs.append(run_cfg)

    if args.jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for path in pool.map(_worker, runs):
                print(path)
    else:
        for cfg in runs:
            print(_worker(cfg))
    return 0


def _load_run(run_dir: Path) -> tuple[dict, list[dict]]:
    summary_path = run_dir / "summary.json"
    csv_path = run_dir / "steps.csv"
    if not summary_path.exists():
        raise SchemaError(f"{summary_path}: missing summary")
    if not csv_path.exists():
        raise SchemaError(f"{csv_path}: missing step log")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    with open(csv_path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{csv_path}: missing columns {missing}")
        rows = list(reader)
    return summary, rows


def cmd_report(args: argparse.Namespace) -> int:
    """Aggregate runs into per-target mean/std tables and long-format series."""
    groups: dict[tuple[str, str], list[dict]] = {}
    series_rows: list[list] = []
    for raw in args.run_dirs:
        run_dir = Path(raw)
        summary, _ = _load_run(run_dir)
        key = (summary["config"]["mode"], summary["config"]["sigma_des"])
        groups.setdefault(key, []).append(summary)
        for metric, values in summary["series"].items():
            for step, value in enumerate(values):
                series_rows.append([summary["run_id"], metric, step, value])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    metric_for_mode = {
        "sensitivity": "sensitivity_final_two_thirds",
        "specificity": "specificity_final_two_thirds",
        "success": "system_success_final_two_thirds",
    }
    with open(out_dir / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mode", "sigma_des", "n", "metric", "mean", "std"])
        for (mode, sigma), summaries in sorted(groups.items()):
            key = metric_for_mode[mode]
            values = [s["aggregates"][key] for s in summaries]
            writer.writerow(
                [mode, sigma, len(values), key,
                 repr(float(np.mean(values))), repr(float(np.std(values)))]
            )
    with open(out_dir / "series.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", "metric", "step", "value"])
        writer.writerows(series_rows)
    print(out_dir / "aggregate.csv")
    print(out_dir / "series.csv")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from askdagger import serve as serve_mod

    config = resolve_config(args)
    config.validate()
    if not 0 < config.port < 65536:
        raise ConfigError(f"invalid port {config.port}")
    serve_mod.serve_forever(config, host=args.host)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "serve":
            return cmd_serve(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
