"""Trace ingestion, validation, and synthesis.

The canonical on-disk trace format is a long-form CSV with header
``t,node,<resource...>``: one row per (time step, node), UTF-8, ``.`` decimal
separator. Node ids may be arbitrary strings; they are remapped to contiguous
0..N-1. Time steps must be non-decreasing across rows and (t, node) pairs must
be unique. Missing (t, node) cells are repaired by carrying the node's last
observed value forward (a leading gap is filled with the node's first
observation), matching the sample-and-hold semantics used for stale data
downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class TraceDataset:
    """Dense per-node utilization series, indexed (time step, node, resource)."""

    n_nodes: int
    n_steps: int
    n_resources: int
    values: np.ndarray  # shape (n_steps, n_nodes, n_resources), normalized to [0, 1]
    resource_names: list[str]
    step_seconds: float = 1.0

    def __post_init__(self) -> None:
        if self.n_nodes <= 0 or self.n_steps <= 0 or self.n_resources <= 0:
            raise ValueError("dataset dimensions must all be positive")
        if self.step_seconds <= 0:
            raise ValueError("step_seconds must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n_steps, self.n_nodes, self.n_resources):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"({self.n_steps}, {self.n_nodes}, {self.n_resources})"
            )
        if len(self.resource_names) != self.n_resources:
            raise ValueError("resource_names length must equal n_resources")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dataset contains non-finite values")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("dataset values must lie in [0, 1]")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.n_steps == other.n_steps
            and self.n_resources == other.n_resources
            and self.resource_names == other.resource_names
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the deterministic synthetic trace generator."""

    n_nodes: int
    n_steps: int
    n_resources: int = 1
    n_groups: int = 1
    switch_probability: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_nodes <= 0 or self.n_steps <= 0 or self.n_resources <= 0:
            raise ValueError("n_nodes, n_steps, n_resources must be positive")
        if self.n_groups <= 0:
            raise ValueError("n_groups must be positive")
        if self.n_groups > self.n_nodes:
            raise ValueError("n_groups cannot exceed n_nodes")
        if not 0.0 <= self.switch_probability < 1.0:
            raise ValueError("switch_probability must be in [0, 1)")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be nonnegative")


class TraceFormatError(ValueError):
    """Raised for malformed or inconsistent trace files."""


def load_csv(
    path: str,
    schema: dict[str, str] | None = None,
    clamp: bool = False,
    normalize: str = "none",
) -> TraceDataset:
    """Load a long-form trace CSV into a dense dataset.

    schema optionally maps the canonical column names ("t", "node") to the
    actual header names; every remaining column is treated as a resource.
    normalize="max" divides each resource column by its maximum (after optional
    pre-clamping to nonnegative via clamp=True). With normalize="none", values
    outside [0, 1] raise unless clamp=True, which clips them.
    """
    if normalize not in ("none", "max"):
        raise ValueError(f"unknown normalize mode: {normalize!r}")
    schema = schema or {}
    t_col = schema.get("t", "t")
    node_col = schema.get("node", "node")

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if t_col not in header or node_col not in header:
            raise TraceFormatError(
                f"{path}: header must contain {t_col!r} and {node_col!r} columns"
            )
        t_idx = header.index(t_col)
        node_idx = header.index(node_col)
        resource_cols = [
            (i, name) for i, name in enumerate(header) if i not in (t_idx, node_idx)
        ]
        if not resource_cols:
            raise TraceFormatError(f"{path}: no resource columns in header")

        rows: list[tuple[int, str, list[float]]] = []
        prev_t: int | None = None
        seen: set[tuple[int, str]] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise TraceFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                t = int(row[t_idx])
            except ValueError:
                raise TraceFormatError(
                    f"{path}:{lineno}: time step {row[t_idx]!r} is not an integer"
                ) from None
            node = row[node_idx].strip()
            try:
                vals = [float(row[i]) for i, _ in resource_cols]
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: non-numeric value") from None
            if any(not np.isfinite(v) for v in vals):
                raise TraceFormatError(f"{path}:{lineno}: non-finite value")
            if not clamp:
                lo, hi = (0.0, 1.0) if normalize == "none" else (0.0, np.inf)
                for v, (_, name) in zip(vals, resource_cols):
                    if not lo <= v <= hi:
                        raise TraceFormatError(
                            f"{path}:{lineno}: value {v!r} in column {name!r} out of "
                            f"range (enable clamping or normalization)"
                        )
            if prev_t is not None and t < prev_t:
                raise TraceFormatError(
                    f"{path}:{lineno}: time step {t} decreases (previous was {prev_t})"
                )
            key = (t, node)
            if key in seen:
                raise TraceFormatError(f"{path}:{lineno}: duplicate (t={t}, node={node})")
            seen.add(key)
            prev_t = t
            rows.append((t, node, vals))

    if not rows:
        raise TraceFormatError(f"{path}: no data rows")

    steps = sorted({t for t, _, _ in rows})
    step_of = {t: k for k, t in enumerate(steps)}
    node_ids = sorted({n for _, n, _ in rows}, key=_node_sort_key)
    node_of = {n: k for k, n in enumerate(node_ids)}

    n_steps, n_nodes, d = len(steps), len(node_ids), len(resource_cols)
    values = np.full((n_steps, n_nodes, d), np.nan)
    for t, node, vals in rows:
        values[step_of[t], node_of[node]] = vals

    # Gap repair: carry forward, leading gaps take the first observation.
    for i in range(n_nodes):
        col = values[:, i, :]
        observed = np.where(np.isfinite(col[:, 0]))[0]
        first = observed[0]
        col[:first] = col[first]
        for k in range(first + 1, n_steps):
            if not np.isfinite(col[k, 0]):
                col[k] = col[k - 1]

    if clamp:
        np.clip(values, 0.0, None if normalize == "max" else 1.0, out=values)
    if normalize == "max":
        for r in range(d):
            col_max = values[:, :, r].max()
            if col_max > 0:
                values[:, :, r] /= col_max

    if len(steps) >= 2:
        gaps = np.diff(steps)
        step_seconds = float(gaps[0]) if np.all(gaps == gaps[0]) and gaps[0] > 1 else 1.0
    else:
        step_seconds = 1.0

    return TraceDataset(
        n_nodes=n_nodes,
        n_steps=n_steps,
        n_resources=d,
        values=values,
        resource_names=[name for _, name in resource_cols],
        step_seconds=step_seconds,
    )


def _node_sort_key(node: str):
    try:
        return (0, int(node), node)
    except ValueError:
        return (1, 0, node)


def write_csv(dataset: TraceDataset, path: str, precision: int | None = None) -> None:
    """Write a dataset in the canonical long form.

    precision=None emits shortest round-trip floats so load_csv(write_csv(d))
    reproduces d bit-exactly; precision=9 gives the 9-significant-digit form.
    """
    if precision is None:
        fmt = lambda v: repr(float(v))
    else:
        fmt = lambda v: f"{float(v):.{precision}g}"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "node"] + list(dataset.resource_names))
        for t in range(dataset.n_steps):
            for i in range(dataset.n_nodes):
                w.writerow([t + 1, i] + [fmt(v) for v in dataset.values[t, i]])


# Fixed base-signal family for the synthetic generator: per-group sinusoid with
# group-specific phase/period, bounded random walk, and occasional level jumps.
# Group base levels are evenly spaced with disjoint excursion bands so groups
# never cross, which keeps cluster recovery well-posed for noiseless traces.
_JUMP_PROBABILITY = 0.005


def generate_synthetic(spec: SyntheticSpec) -> tuple[TraceDataset, np.ndarray]:
    """Generate a trace plus per-step ground-truth group labels (n_steps, n_nodes)."""
    rng = np.random.default_rng(spec.seed)
    T, N, d, G = spec.n_steps, spec.n_nodes, spec.n_resources, spec.n_groups

    if G > 1:
        spacing = 0.7 / (G - 1)
        base = 0.15 + spacing * np.arange(G)
        band = min(0.45 * spacing, 0.14)  # bands disjoint and inside (0, 1)
    else:
        base = np.array([0.5])
        band = 0.14

    # Group signals, drawn first so the stream layout is independent of noise
    # and switching settings.
    signals = np.empty((T, G, d))
    t_axis = np.arange(T)
    for g in range(G):
        for r in range(d):
            period = rng.uniform(40.0, 120.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wave = 0.35 * band * np.sin(2.0 * np.pi * t_axis / period + phase)
            walk = np.clip(
                np.cumsum(rng.normal(0.0, 0.02 * band, size=T)),
                -0.3 * band,
                0.3 * band,
            )
            jump_hits = rng.random(T) < _JUMP_PROBABILITY
            jump_targets = rng.uniform(-0.3 * band, 0.3 * band, size=T)
            jumps = np.zeros(T)
            for t in np.where(jump_hits)[0]:
                jumps[t:] = jump_targets[t]
            sig = base[g] + wave + walk + jumps
            signals[:, g, r] = np.clip(sig, base[g] - band, base[g] + band)

    labels = np.empty((T, N), dtype=np.int64)
    labels[0] = np.arange(N) % G
    switch_draw = rng.random((T, N))
    switch_to = rng.integers(0, max(G - 1, 1), size=(T, N))
    for t in range(1, T):
        labels[t] = labels[t - 1]
        movers = switch_draw[t] < spec.switch_probability
        if G > 1 and movers.any():
            # Uniform over the other G-1 groups.
            dest = switch_to[t, movers]
            dest = np.where(dest >= labels[t, movers], dest + 1, dest)
            labels[t, movers] = dest

    noise = rng.standard_normal((T, N, d)) * spec.noise_std
    values = np.clip(signals[t_axis[:, None], labels] + noise, 0.0, 1.0)

    names = ["cpu", "mem", "disk", "net"][:d] + [f"r{k}" for k in range(4, d)]
    dataset = TraceDataset(
        n_nodes=N,
        n_steps=T,
        n_resources=d,
        values=values,
        resource_names=names[:d],
    )
    return dataset, labels
