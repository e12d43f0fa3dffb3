"""Run artifacts: manifest, delimited outputs, and rendered figures.

Every run directory gets a flat key-value manifest sufficient to reproduce
the run, the metrics CSVs, and (unless disabled) PNG figures rendered from
the same data that went into the CSVs. Floats are written with shortest
round-trip precision so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from monisum.evaluation import AggregateMetrics
from monisum.pipeline import ExperimentConfig, RunResult


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def write_manifest(manifest: list[tuple[str, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in manifest:
            f.write(f"{key} = {value}\n")


def write_run_outputs(result: RunResult, out_dir: str, figures: bool = True) -> None:
    """Populate out_dir with manifest, metrics.csv, aggregate.csv,
    frequencies.csv, optional dumps, and figures/."""
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(result.manifest, os.path.join(out_dir, "manifest"))

    _write_csv(
        os.path.join(out_dir, "metrics.csv"),
        ["t", "h", "resource", "rmse"],
        ((m.t, m.h, m.resource, _fmt(m.rmse)) for m in result.metrics),
    )

    agg = result.aggregate
    resources = _resource_order(result)
    agg_rows = []
    for (h, name) in sorted(agg.time_avg_rmse, key=lambda k: (k[0], resources.index(k[1]))):
        val = agg.time_avg_rmse[(h, name)]
        contrib = _fmt(val**2 / (agg.h_max + 1)) if h <= agg.h_max else ""
        agg_rows.append((h, name, _fmt(val), contrib))
    _write_csv(
        os.path.join(out_dir, "aggregate.csv"),
        ["h", "resource", "time_avg_rmse", "objective_contrib"],
        agg_rows,
    )

    _write_csv(
        os.path.join(out_dir, "frequencies.csv"),
        ["node", "frequency", "slack"],
        (
            (i, _fmt(agg.frequencies[i]), _fmt(agg.budget_slack[i]))
            for i in range(len(agg.frequencies))
        ),
    )

    if result.assignment_rows is not None:
        _write_csv(
            os.path.join(out_dir, "assignments.csv"),
            ["t", "node", "resource", "label"],
            result.assignment_rows,
        )
    if result.forecast_rows is not None:
        _write_csv(
            os.path.join(out_dir, "forecasts.csv"),
            ["t", "h", "node", "resource", "forecast", "true"],
            ((t, h, i, name, _fmt(fc), _fmt(tr)) for t, h, i, name, fc, tr in result.forecast_rows),
        )

    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        _render_frequency_figure(result.config, agg, os.path.join(fig_dir, "frequencies.png"))
        _render_rmse_timeseries(result, os.path.join(fig_dir, "rmse_timeseries.png"))
        _render_aggregate_figure(agg, resources, os.path.join(fig_dir, "rmse_by_horizon.png"))


def _resource_order(result: RunResult) -> list[str]:
    seen: list[str] = []
    for m in result.metrics:
        if m.resource not in seen:
            seen.append(m.resource)
    return seen


def _render_frequency_figure(config: ExperimentConfig, agg: AggregateMetrics, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    nodes = np.arange(len(agg.frequencies))
    ax.bar(nodes, agg.frequencies, color="tab:blue", width=0.8, label="empirical")
    ax.axhline(config.budget, color="tab:red", linestyle="--", label=f"budget B={config.budget}")
    ax.set_xlabel("node")
    ax.set_ylabel("transmission frequency")
    ax.set_title("Per-node transmission frequency")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _render_rmse_timeseries(result: RunResult, path: str) -> None:
    by_series: dict[tuple[int, str], tuple[list[int], list[float]]] = {}
    for m in result.metrics:
        ts, vals = by_series.setdefault((m.h, m.resource), ([], []))
        ts.append(m.t)
        vals.append(m.rmse)
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    for (h, name), (ts, vals) in sorted(by_series.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        ax.plot(ts, vals, linewidth=0.8, label=f"{name}, h={h}")
    ax.set_xlabel("time step")
    ax.set_ylabel("RMSE")
    ax.set_title("Per-step RMSE")
    ax.legend(loc="best", fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _render_aggregate_figure(agg: AggregateMetrics, resources: list[str], path: str) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for name in resources:
        hs = sorted(h for (h, res) in agg.time_avg_rmse if res == name)
        vals = [agg.time_avg_rmse[(h, name)] for h in hs]
        ax.plot(hs, vals, marker="o", label=name)
    ax.set_xlabel("forecast horizon h")
    ax.set_ylabel("time-averaged RMSE")
    ax.set_title("Time-averaged RMSE by horizon")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_sweep_outputs(
    axis: str,
    rows: list[tuple[object, AggregateMetrics]],
    out_dir: str,
    figures: bool = True,
) -> None:
    """Tidy long-form sweep CSV plus a metric-vs-axis figure."""
    os.makedirs(out_dir, exist_ok=True)
    tidy: list[tuple] = []
    for value, agg in rows:
        for (h, name), val in sorted(agg.time_avg_rmse.items()):
            tidy.append((axis, value, name, f"rmse_h{h}", _fmt(val)))
        for name, val in sorted(agg.intermediate.items()):
            tidy.append((axis, value, name, "intermediate", _fmt(val)))
        for name, val in sorted(agg.intermediate_true.items()):
            tidy.append((axis, value, name, "intermediate_true", _fmt(val)))
        for name, val in sorted(agg.objective.items()):
            if val is not None:
                tidy.append((axis, value, name, "objective", _fmt(val)))
        tidy.append((axis, value, "", "frequency_mean", _fmt(agg.frequencies.mean())))
    _write_csv(
        os.path.join(out_dir, "sweep.csv"),
        ["axis", "value", "resource", "metric", "result"],
        tidy,
    )
    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        series: dict[str, tuple[list, list]] = {}
        for value, agg in rows:
            for (h, name), val in agg.time_avg_rmse.items():
                xs, ys = series.setdefault(f"{name}, h={h}", ([], []))
                xs.append(value)
                ys.append(val)
        for label, (xs, ys) in sorted(series.items()):
            ax.plot(xs, ys, marker="o", label=label)
        ax.set_xlabel(axis)
        ax.set_ylabel("time-averaged RMSE")
        ax.set_title(f"RMSE vs {axis}")
        ax.legend(loc="best", fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(os.path.join(fig_dir, "sweep.png"), dpi=130)
        plt.close(fig)


def write_corr_outputs(
    values: np.ndarray,
    cdf: np.ndarray,
    excluded: int,
    resource: str,
    out_dir: str,
    figures: bool = True,
) -> None:
    """Sorted correlation values with CDF, plus the CDF step plot."""
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "corr_cdf.csv"),
        ["value", "cdf"],
        ((_fmt(v), _fmt(c)) for v, c in zip(values, cdf)),
    )
    with open(os.path.join(out_dir, "corr_excluded.txt"), "w", encoding="utf-8") as f:
        f.write(f"excluded_constant_series = {excluded}\n")
    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.step(values, cdf, where="post")
        ax.set_xlabel("pairwise correlation")
        ax.set_ylabel("CDF")
        ax.set_xlim(-1.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_title(f"Correlation CDF ({resource})")
        fig.tight_layout()
        fig.savefig(os.path.join(fig_dir, "corr_cdf.png"), dpi=130)
        plt.close(fig)


def write_monitor_outputs(
    rmse_by_resource: dict[str, float], out_dir: str, figures: bool = True
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "monitor.csv"),
        ["resource", "test_rmse"],
        ((name, _fmt(val)) for name, val in sorted(rmse_by_resource.items())),
    )
    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        names = sorted(rmse_by_resource)
        ax.bar(names, [rmse_by_resource[n] for n in names], color="tab:blue")
        ax.set_ylabel("test-phase RMSE")
        ax.set_title("Monitor-selection test RMSE")
        fig.tight_layout()
        fig.savefig(os.path.join(fig_dir, "monitor.png"), dpi=130)
        plt.close(fig)
