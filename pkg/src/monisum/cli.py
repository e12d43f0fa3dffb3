"""Command-line surface: gen, run, sweep, monitor, corr.

Config precedence is defaults < config file < explicit flags; every run
writes a manifest with the merged effective configuration. Exit codes:
0 success, 2 usage error, 1 runtime error. MONISUM_THREADS caps the
per-resource parallelism of the central phase.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

import numpy as np

from monisum import evaluation as ev
from monisum import pipeline as pl
from monisum import report
from monisum.trace import SyntheticSpec, TraceFormatError, generate_synthetic, load_csv, write_csv

_INT_FIELDS = {"k", "m", "m_prime", "h_max", "window", "order", "w_init", "w_retrain", "seed"}
_FLOAT_FIELDS = {"budget", "v0", "gamma"}
_STR_FIELDS = {"mode", "forecaster", "transmitter", "clustering", "similarity"}
_BOOL_FIELDS = {"project_queue"}


def _parse_horizons(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(x) for x in text.split(","))


def read_config_file(path: str) -> dict:
    """Flat key = value text mirroring the experiment config field names."""
    known = {f.name for f in fields(pl.ExperimentConfig)}
    out: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in _INT_FIELDS:
                out[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                out[key] = float(raw)
            elif key in _BOOL_FIELDS:
                out[key] = raw.lower() in ("1", "true", "yes", "on")
            elif key == "horizons":
                out[key] = _parse_horizons(raw)
            else:
                out[key] = raw
    return out


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--budget", type=float)
    p.add_argument("--v0", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--mprime", type=int, dest="m_prime")
    p.add_argument("--horizons", type=_parse_horizons, help="comma-separated, e.g. 1,5,10")
    p.add_argument("--hmax", type=int, dest="h_max")
    p.add_argument("--window", type=int)
    p.add_argument("--mode", choices=pl.VALID_MODES)
    p.add_argument("--forecaster")
    p.add_argument("--order", type=int)
    p.add_argument("--winit", type=int, dest="w_init")
    p.add_argument("--wretrain", type=int, dest="w_retrain")
    p.add_argument("--transmitter", choices=pl.VALID_TRANSMITTERS)
    p.add_argument("--clustering", choices=pl.VALID_CLUSTERINGS)
    p.add_argument("--similarity", choices=pl.VALID_SIMILARITIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--project-queue", action="store_true", default=None, dest="project_queue")


def build_config(args: argparse.Namespace) -> pl.ExperimentConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for f in fields(pl.ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    return pl.ExperimentConfig(**merged)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="monisum",
        description="Online collection, summarization, and forecasting of utilization traces",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic trace CSV")
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--resources", type=int, default=1)
    g.add_argument("--groups", type=int, default=1)
    g.add_argument("--switch-prob", type=float, default=0.0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True, help="trace CSV path")

    r = sub.add_parser("run", help="run the full online pipeline on a trace")
    r.add_argument("--trace", required=True)
    _add_config_flags(r)
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.add_argument("--no-figures", action="store_true")
    r.add_argument("--dump-assignments", action="store_true")
    r.add_argument("--dump-forecasts", action="store_true")

    s = sub.add_parser("sweep", help="run one experiment per value of one axis")
    s.add_argument("--trace", required=True)
    _add_config_flags(s)
    s.add_argument("--axis", required=True, help="one of B, K, h, M, M' (or field names)")
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--no-figures", action="store_true")

    m = sub.add_parser("monitor", help="train/test monitor-selection experiment")
    m.add_argument("--trace", required=True)
    _add_config_flags(m)
    m.add_argument("--train-len", type=int, default=500)
    m.add_argument("--test-len", type=int, default=500)
    m.add_argument("-o", "--output", required=True)
    m.add_argument("--no-figures", action="store_true")

    c = sub.add_parser("corr", help="pairwise-correlation CDF of a trace resource")
    c.add_argument("--trace", required=True)
    c.add_argument("--resource", default=None, help="resource name (default: first)")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--no-figures", action="store_true")
    return ap


def _cmd_gen(args) -> int:
    spec = SyntheticSpec(
        n_nodes=args.nodes,
        n_steps=args.steps,
        n_resources=args.resources,
        n_groups=args.groups,
        switch_probability=args.switch_prob,
        noise_std=args.noise,
        seed=args.seed,
    )
    dataset, _ = generate_synthetic(spec)
    write_csv(dataset, args.output)
    print(f"wrote {args.output}: {dataset.n_nodes} nodes x {dataset.n_steps} steps "
          f"x {dataset.n_resources} resources")
    return 0


def _cmd_run(args) -> int:
    config = build_config(args)
    dataset = load_csv(args.trace)
    result = pl.run(
        config,
        dataset,
        dump_assignments=args.dump_assignments,
        dump_forecasts=args.dump_forecasts,
    )
    report.write_run_outputs(result, args.output, figures=not args.no_figures)
    for name in dataset.resource_names:
        key = (0, name)
        print(f"time_avg_rmse(h=0, {name}) = {result.aggregate.time_avg_rmse[key]:.6g}")
    print(f"outputs in {args.output}")
    return 0


def _cmd_sweep(args) -> int:
    config = build_config(args)
    dataset = load_csv(args.trace)
    axis = args.axis
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if pl.SWEEP_AXES.get(axis) == "budget":
        values = [float(v) for v in raw_values]
    else:
        values = [int(v) for v in raw_values]
    rows = pl.sweep(config, dataset, axis, values)
    report.write_sweep_outputs(axis, rows, args.output, figures=not args.no_figures)
    print(f"swept {axis} over {values}; outputs in {args.output}")
    return 0


def _cmd_monitor(args) -> int:
    config = build_config(args)
    dataset = load_csv(args.trace)
    rmse_by_resource = pl.monitor_mode(
        config, dataset, train_len=args.train_len, test_len=args.test_len
    )
    report.write_monitor_outputs(rmse_by_resource, args.output, figures=not args.no_figures)
    for name, val in sorted(rmse_by_resource.items()):
        print(f"monitor test_rmse({name}) = {val:.6g}")
    return 0


def _cmd_corr(args) -> int:
    dataset = load_csv(args.trace)
    if args.resource is None:
        resource = 0
    else:
        if args.resource not in dataset.resource_names:
            raise ValueError(
                f"unknown resource {args.resource!r}; trace has {dataset.resource_names}"
            )
        resource = dataset.resource_names.index(args.resource)
    values, cdf, excluded = ev.correlation_cdf(dataset, resource)
    report.write_corr_outputs(
        values, cdf, excluded, dataset.resource_names[resource], args.output,
        figures=not args.no_figures,
    )
    print(f"{len(values)} pairs, {excluded} constant series excluded; outputs in {args.output}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "monitor": _cmd_monitor,
    "corr": _cmd_corr,
}


def dispatch(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename else exc
        print(f"error: file not found: {name}", file=sys.stderr)
        return 1
    except (ValueError, TraceFormatError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
