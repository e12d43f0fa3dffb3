"""Online simulation loop: per-step transmission decisions, stored-view
maintenance, per-resource (or joint) dynamic clustering, forecasting at the
configured horizons, and metric logging.

Node-side decisions see only the node's own current measurement; the central
phase sees only the stored view. Ground truth is consulted exclusively for
evaluation. Because there is no feedback from the central phase to the node
agents, the transmission timeline is simulated first and the per-resource
central pipelines then run independently (and in parallel when
MONISUM_THREADS allows).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from monisum import __version__
from monisum import clustering as cl
from monisum import evaluation as ev
from monisum import forecasting as fc
from monisum import transmission as tx
from monisum.trace import TraceDataset

VALID_TRANSMITTERS = ("adaptive", "uniform")
VALID_CLUSTERINGS = ("dynamic", "static", "min-distance")
VALID_MODES = ("scalar", "joint")
VALID_SIMILARITIES = ("count", "jaccard")


@dataclass(frozen=True)
class ExperimentConfig:
    budget: float = 0.3
    v0: float = 1e-12
    gamma: float = 0.65
    k: int = 3
    m: int = 1
    m_prime: int = 5
    horizons: tuple[int, ...] = (1, 5, 10)
    h_max: int = 1
    window: int = 1
    mode: str = "scalar"
    forecaster: str = "hold"
    order: int = 3
    w_init: int = 1000
    w_retrain: int = 288
    transmitter: str = "adaptive"
    clustering: str = "dynamic"
    similarity: str = "count"
    seed: int = 0
    project_queue: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.budget <= 1.0:
            raise ValueError("budget must be in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.m_prime < 0:
            raise ValueError("m_prime must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if any(h < 0 for h in self.horizons):
            raise ValueError("horizons must be >= 0")
        if self.h_max < 0:
            raise ValueError("h_max must be >= 0")
        if self.w_init < 1 or self.w_retrain < 1:
            raise ValueError("w_init and w_retrain must be >= 1")
        if self.transmitter not in VALID_TRANSMITTERS:
            raise ValueError(f"transmitter must be one of {VALID_TRANSMITTERS}")
        if self.clustering not in VALID_CLUSTERINGS:
            raise ValueError(f"clustering must be one of {VALID_CLUSTERINGS}")
        if self.mode not in VALID_MODES:
            raise ValueError(f"mode must be one of {VALID_MODES}")
        if self.similarity not in VALID_SIMILARITIES:
            raise ValueError(f"similarity must be one of {VALID_SIMILARITIES}")
        if self.forecaster not in fc.FORECASTERS:
            raise ValueError(f"unknown forecaster {self.forecaster!r}")
        if self.forecaster == "ar" and self.w_init < self.order + 1:
            raise ValueError("w_init must be >= order+1 for AR training")
        object.__setattr__(self, "horizons", tuple(sorted({h for h in self.horizons if h >= 1})))

    def fields_text(self) -> list[tuple[str, str]]:
        out = []
        for name in (
            "budget", "v0", "gamma", "k", "m", "m_prime", "horizons", "h_max",
            "window", "mode", "forecaster", "order", "w_init", "w_retrain",
            "transmitter", "clustering", "similarity", "seed", "project_queue",
        ):
            val = getattr(self, name)
            if name == "horizons":
                val = ",".join(str(h) for h in val)
            out.append((name, str(val)))
        return out


@dataclass
class StoredView:
    """The controller's possibly-stale copy of all node measurements."""

    values: np.ndarray  # (N, d)
    age: np.ndarray  # (N,) steps since the node's last transmission

    def update(self, transmitted: np.ndarray, x: np.ndarray) -> None:
        self.age += 1
        self.age[transmitted] = 0
        self.values[transmitted] = x[transmitted]


@dataclass
class RunDetails:
    """Per-step internals kept for auditing (budget, hygiene, clamp checks)."""

    beta: np.ndarray  # (T, N) transmission indicators
    ages: np.ndarray  # (T, N)
    stored: np.ndarray  # (T, N, d)
    assignments: dict[str, np.ndarray] = field(default_factory=dict)  # (T, N)
    centroids: dict[str, np.ndarray] = field(default_factory=dict)  # (T, K)
    memberships: dict[str, np.ndarray] = field(default_factory=dict)  # (T, N), -1 if unset


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list[ev.MetricsRecord]
    aggregate: ev.AggregateMetrics
    manifest: list[tuple[str, str]]
    details: RunDetails | None = None
    assignment_rows: list[tuple] | None = None
    forecast_rows: list[tuple] | None = None


def thread_count() -> int:
    raw = os.environ.get("MONISUM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def simulate_transmission(
    config: ExperimentConfig, dataset: TraceDataset
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the node agents over the trace.

    Returns (beta, stored, ages): the (T, N) transmission indicators and the
    controller's stored view and staleness age at every step. Every node's
    first step transmits (there is no stored value before it), for the
    uniform schedule as well as the adaptive controller.
    """
    T, N, d = dataset.n_steps, dataset.n_nodes, dataset.n_resources
    values = dataset.values
    beta = np.zeros((T, N), dtype=bool)
    stored = np.empty((T, N, d))
    ages = np.zeros((T, N), dtype=np.int64)
    view = StoredView(values=np.zeros((N, d)), age=np.zeros(N, dtype=np.int64))
    adaptive = config.transmitter == "adaptive"
    states = [
        tx.TransmitterState(
            budget=config.budget,
            v0=config.v0,
            gamma=config.gamma,
            project_queue=config.project_queue,
        )
        for _ in range(N)
    ]
    for ti in range(T):
        t = ti + 1
        x_t = values[ti]
        row = beta[ti]
        uniform_now = None if adaptive else tx.uniform_schedule(config.budget, t)
        for i in range(N):
            st = states[i]
            if adaptive:
                b = tx.decide(st, x_t[i], t).transmit
            else:
                b = uniform_now or st.last_sent is None
            states[i] = tx.update_queue(st, b, x_t[i], t)
            row[i] = b
        view.update(row, x_t)
        stored[ti] = view.values
        ages[ti] = view.age
    return beta, stored, ages


@dataclass
class _PipeResult:
    resources: list[int]
    assignments: np.ndarray  # (T, N)
    centroids_meas: np.ndarray  # (T, K, n_comp)
    memberships: np.ndarray  # (T, N)
    horizon_rmse: dict[tuple[int, int], list[tuple[int, float]]]  # (h, resource) -> [(t, rmse)]
    intermediate: dict[int, float]  # resource -> stored-vs-centroid, Eq.-4 aggregated
    intermediate_true: dict[int, float]
    forecast_rows: list[tuple] | None


def _offsets(
    membership: np.ndarray,
    window_parts: list,
    stored_win: list[np.ndarray],
    m_prime: int,
    proj: np.ndarray,
) -> np.ndarray:
    """Scaled-deviation offsets for all nodes at once.

    Matches fc.offset term for term; the scalar alpha clamp is only invoked
    for nodes whose stored value is not already nearest its predicted
    cluster (everywhere else alpha is exactly 1).
    """
    n = membership.shape[0]
    count = min(m_prime + 1, len(window_parts))
    raw = np.zeros((n, len(proj)))
    for m in range(count):
        part = window_parts[-1 - m]
        z = stored_win[-1 - m]
        cents = part.centroids
        d2 = ((z[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        alphas = np.ones(n)
        for i in np.where(nearest != membership)[0]:
            alphas[i] = fc.alpha_clamp(z[i], int(membership[i]), cents)
        dev = z[:, proj] - cents[membership][:, proj]
        raw += alphas[:, None] * dev
    return raw / count


def _pipe_features(stored: np.ndarray, resources: list[int], window: int, ti: int) -> np.ndarray:
    n = stored.shape[1]
    if window == 1:
        return stored[ti][:, resources]
    idx = np.clip(np.arange(ti - window + 1, ti + 1), 0, None)
    block = stored[idx][:, :, resources]  # (w, N, f), oldest first
    return block.transpose(1, 0, 2).reshape(n, window * len(resources))


def _run_pipe(
    config: ExperimentConfig,
    dataset: TraceDataset,
    stored: np.ndarray,
    resources: list[int],
    seed_seq: np.random.SeedSequence,
    dump_forecasts: bool,
) -> _PipeResult:
    T, N = dataset.n_steps, dataset.n_nodes
    values = dataset.values
    k, w = config.k, config.window
    n_comp = len(resources)
    proj = np.arange((w - 1) * n_comp, w * n_comp)
    rng = np.random.default_rng(seed_seq)

    history = cl.PartitionHistory(capacity=max(config.m, config.m_prime) + 1, m=config.m)
    series: dict[tuple[int, int], fc.CentroidSeries] = {
        (j, c): fc.CentroidSeries(cluster=j, resource=dataset.resource_names[resources[c]])
        for j in range(k)
        for c in range(n_comp)
    }
    models: dict[tuple[int, int], fc.ForecasterModel] = {}

    static_assignment = None
    if config.clustering == "static":
        static_assignment = cl.static_baseline(
            dataset, k, rng, resource=None if config.mode == "joint" else resources[0]
        )

    assignments = np.empty((T, N), dtype=np.int64)
    centroids_meas = np.empty((T, k, n_comp))
    memberships = np.full((T, N), -1, dtype=np.int64)
    inter_steps = np.empty((T, n_comp))
    inter_true_steps = np.empty((T, n_comp))
    horizon_rmse: dict[tuple[int, int], list[tuple[int, float]]] = {
        (h, r): [] for h in config.horizons for r in resources
    }
    recent_stored: list[np.ndarray] = []
    forecast_rows: list[tuple] | None = [] if dump_forecasts else None

    for ti in range(T):
        t = ti + 1
        feats = _pipe_features(stored, resources, w, ti)
        if config.clustering == "dynamic":
            part = cl.dynamic_step(
                feats, history, k, config.m, rng, t=t,
                normalized_similarity=config.similarity == "jaccard",
            )
        elif config.clustering == "static":
            cents = cl.cluster_means(feats, static_assignment, k)
            part = cl.Partition(assignment=static_assignment.copy(), centroids=cents, k=k, t=t)
            history.append(part)
        else:
            part = cl.min_distance_baseline(feats, k, rng, t=t)
            history.append(part)

        assignments[ti] = part.assignment
        cent_meas = part.centroids[:, proj]
        centroids_meas[ti] = cent_meas
        recent_stored.append(feats)
        if len(recent_stored) > config.m_prime + 1:
            del recent_stored[0]

        assigned_cents = cent_meas[part.assignment]
        for c, r in enumerate(resources):
            inter_steps[ti, c] = ev.rmse(assigned_cents[:, c], stored[ti][:, r])
            inter_true_steps[ti, c] = ev.rmse(assigned_cents[:, c], values[ti][:, r])

        for j in range(k):
            for c in range(n_comp):
                series[(j, c)].append(cent_meas[j, c])

        if t >= config.w_init and (t - config.w_init) % config.w_retrain == 0:
            for key, s in series.items():
                models[key] = fc.fit(config.forecaster, s, config.order)

        live = [h for h in config.horizons if t + h <= T]
        if not live:
            continue
        membership = fc.predict_membership(history, config.m_prime)
        memberships[ti] = membership
        window_parts = history.recent(config.m_prime + 1)
        stored_win = recent_stored[-len(window_parts):]
        raw_off = _offsets(membership, window_parts, stored_win, config.m_prime, proj)
        for h in live:
            cent_fc = np.empty((k, n_comp))
            for j in range(k):
                for c in range(n_comp):
                    model = models.get((j, c))
                    if model is None:
                        cent_fc[j, c] = series[(j, c)].values[-1]
                    else:
                        cent_fc[j, c] = fc.forecast(model, series[(j, c)], h)
            node_fc = np.clip(cent_fc[membership] + raw_off, 0.0, 1.0)
            truth = values[ti + h]
            for c, r in enumerate(resources):
                horizon_rmse[(h, r)].append((t, ev.rmse(node_fc[:, c], truth[:, r])))
                if forecast_rows is not None:
                    name = dataset.resource_names[r]
                    for i in range(N):
                        forecast_rows.append(
                            (t, h, i, name, float(node_fc[i, c]), float(truth[i, r]))
                        )

    intermediate = {
        r: ev.time_avg_rmse(inter_steps[:, c]) for c, r in enumerate(resources)
    }
    intermediate_true = {
        r: ev.time_avg_rmse(inter_true_steps[:, c]) for c, r in enumerate(resources)
    }
    return _PipeResult(
        resources=resources,
        assignments=assignments,
        centroids_meas=centroids_meas,
        memberships=memberships,
        horizon_rmse=horizon_rmse,
        intermediate=intermediate,
        intermediate_true=intermediate_true,
        forecast_rows=forecast_rows,
    )


def run(
    config: ExperimentConfig,
    dataset: TraceDataset,
    collect_details: bool = False,
    dump_assignments: bool = False,
    dump_forecasts: bool = False,
    threads: int | None = None,
) -> RunResult:
    """Execute the full online loop and aggregate metrics.

    Forecasts issued at t for horizon h are scored against truth at t+h;
    targets beyond the trace are dropped. Aggregates for h >= 1 exclude
    warm-up issue steps (t <= w_init); h = 0 covers the full trace.
    """
    max_h = max(config.horizons, default=0)
    if config.horizons and dataset.n_steps < config.w_init + 1 + max_h:
        raise ValueError(
            f"dataset with {dataset.n_steps} steps is too short: need at least "
            f"w_init+1+max(h) = {config.w_init + 1 + max_h} steps for horizons "
            f"{config.horizons}"
        )
    T, N, d = dataset.n_steps, dataset.n_nodes, dataset.n_resources
    if config.k > N:
        raise ValueError(f"k={config.k} exceeds n_nodes={N}")

    beta, stored, ages = simulate_transmission(config, dataset)
    frequencies = beta.sum(axis=0) / T
    slack = frequencies - config.budget

    # h=0: staleness error of the stored view, over the full trace.
    diff = stored - dataset.values
    per_resource_rmse0 = np.sqrt((diff**2).mean(axis=1))  # (T, d)

    if config.mode == "scalar":
        pipe_resources = [[r] for r in range(d)]
    else:
        pipe_resources = [list(range(d))]
    seed_children = np.random.SeedSequence(config.seed).spawn(len(pipe_resources))

    workers = thread_count() if threads is None else max(1, threads)
    if workers > 1 and len(pipe_resources) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pipe_results = list(
                pool.map(
                    lambda args: _run_pipe(config, dataset, stored, *args, dump_forecasts),
                    list(zip(pipe_resources, seed_children)),
                )
            )
    else:
        pipe_results = [
            _run_pipe(config, dataset, stored, res, child, dump_forecasts)
            for res, child in zip(pipe_resources, seed_children)
        ]

    metrics: list[ev.MetricsRecord] = []
    for ti in range(T):
        for r in range(d):
            metrics.append(
                ev.MetricsRecord(
                    t=ti + 1, h=0, resource=dataset.resource_names[r],
                    rmse=float(per_resource_rmse0[ti, r]),
                )
            )
    for pr in pipe_results:
        for (h, r), rows in sorted(pr.horizon_rmse.items()):
            name = dataset.resource_names[r]
            for t, val in rows:
                metrics.append(ev.MetricsRecord(t=t, h=h, resource=name, rmse=val))
    resource_order = {name: i for i, name in enumerate(dataset.resource_names)}
    metrics.sort(key=lambda rec: (rec.t, rec.h, resource_order[rec.resource]))

    warmup = min(config.w_init, T)
    time_avg: dict[tuple[int, str], float] = {}
    for r in range(d):
        name = dataset.resource_names[r]
        time_avg[(0, name)] = ev.time_avg_rmse(per_resource_rmse0[:, r])
    for pr in pipe_results:
        for (h, r), rows in pr.horizon_rmse.items():
            kept = np.array([val for t, val in rows if t > warmup])
            if kept.size:
                time_avg[(h, dataset.resource_names[r])] = ev.time_avg_rmse(kept)

    objective: dict[str, float | None] = {}
    for name in dataset.resource_names:
        by_h = {h: v for (h, res), v in time_avg.items() if res == name}
        try:
            objective[name] = ev.objective(by_h, config.h_max)
        except ValueError:
            objective[name] = None

    intermediate = {}
    intermediate_true = {}
    for pr in pipe_results:
        for r, v in pr.intermediate.items():
            intermediate[dataset.resource_names[r]] = v
        for r, v in pr.intermediate_true.items():
            intermediate_true[dataset.resource_names[r]] = v

    aggregate = ev.AggregateMetrics(
        time_avg_rmse=time_avg,
        objective=objective,
        intermediate=intermediate,
        intermediate_true=intermediate_true,
        frequencies=frequencies,
        budget_slack=slack,
        h_max=config.h_max,
        warmup_steps=warmup,
    )

    details = None
    if collect_details:
        details = RunDetails(beta=beta, ages=ages, stored=stored)
        for pr in pipe_results:
            for r in pr.resources:
                name = dataset.resource_names[r]
                details.assignments[name] = pr.assignments
                details.memberships[name] = pr.memberships
                comp = pr.resources.index(r)
                details.centroids[name] = pr.centroids_meas[:, :, comp]

    assignment_rows = None
    if dump_assignments:
        assignment_rows = []
        for pr in pipe_results:
            for r in pr.resources:
                name = dataset.resource_names[r]
                for ti in range(T):
                    for i in range(N):
                        assignment_rows.append((ti + 1, i, name, int(pr.assignments[ti, i])))
        assignment_rows.sort(key=lambda row: (row[0], row[1], resource_order[row[2]]))

    forecast_rows = None
    if dump_forecasts:
        forecast_rows = []
        for pr in pipe_results:
            if pr.forecast_rows:
                forecast_rows.extend(pr.forecast_rows)
        forecast_rows.sort(key=lambda row: (row[0], row[1], row[2], resource_order[row[3]]))

    manifest = _build_manifest(config, dataset, aggregate, workers)
    return RunResult(
        config=config,
        metrics=metrics,
        aggregate=aggregate,
        manifest=manifest,
        details=details,
        assignment_rows=assignment_rows,
        forecast_rows=forecast_rows,
    )


def _build_manifest(
    config: ExperimentConfig,
    dataset: TraceDataset,
    aggregate: ev.AggregateMetrics,
    workers: int,
) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = [
        ("manifest_version", "1"),
        ("package_version", __version__),
        ("n_nodes", str(dataset.n_nodes)),
        ("n_steps", str(dataset.n_steps)),
        ("n_resources", str(dataset.n_resources)),
        ("resources", ",".join(dataset.resource_names)),
    ]
    rows.extend(config.fields_text())
    rows.append(("threads", str(workers)))
    rows.append(("warmup_excluded_through", str(aggregate.warmup_steps)))
    for name in dataset.resource_names:
        obj = aggregate.objective.get(name)
        rows.append((f"objective.{name}", "none" if obj is None else repr(obj)))
        rows.append((f"intermediate_rmse.{name}", repr(aggregate.intermediate[name])))
        rows.append(
            (f"intermediate_rmse_true.{name}", repr(aggregate.intermediate_true[name]))
        )
    rows.append(("frequency_mean", repr(float(aggregate.frequencies.mean()))))
    rows.append(("max_abs_budget_slack", repr(float(np.abs(aggregate.budget_slack).max()))))
    return rows


def monitor_mode(
    config: ExperimentConfig,
    dataset: TraceDataset,
    train_len: int = 500,
    test_len: int = 500,
) -> dict[str, float]:
    """Train/test monitor selection: cluster nodes on their training series,
    pick one monitor per cluster, and during testing estimate every node as
    its cluster's monitor.

    The proposed variant picks the member nearest its cluster centroid; the
    min-distance variant (config.clustering == "min-distance") picks monitors
    uniformly at random and assigns nodes to the nearest monitor's series.
    Returns the test-phase time-averaged RMSE per resource.
    """
    T, N, d = dataset.n_steps, dataset.n_nodes, dataset.n_resources
    if train_len + test_len > T:
        raise ValueError(f"train_len+test_len={train_len + test_len} exceeds T={T}")
    if train_len < 1 or test_len < 1:
        raise ValueError("train_len and test_len must be >= 1")
    if config.k > N:
        raise ValueError(f"k={config.k} exceeds n_nodes={N}")

    values = dataset.values
    if config.mode == "scalar":
        groups = [[r] for r in range(d)]
    else:
        groups = [list(range(d))]
    rng = np.random.default_rng(config.seed)

    out: dict[str, float] = {}
    for resources in groups:
        train = values[:train_len][:, :, resources]  # (train_len, N, f)
        series = train.transpose(1, 0, 2).reshape(N, -1)
        if config.clustering == "min-distance":
            monitors = rng.choice(N, size=config.k, replace=False)
            d2 = ((series[:, None, :] - series[monitors][None, :, :]) ** 2).sum(axis=2)
            assignment = np.argmin(d2, axis=1)
        else:
            part = cl.kmeans(series, config.k, rng)
            assignment = part.assignment
            monitors = np.empty(config.k, dtype=np.int64)
            for j in range(config.k):
                members = part.members(j)
                dist = ((series[members] - part.centroids[j]) ** 2).sum(axis=1)
                monitors[j] = members[np.argmin(dist)]
        monitor_of_node = monitors[assignment]

        test = values[train_len : train_len + test_len]
        per_step = np.empty(test_len)
        for s in range(test_len):
            est = test[s][monitor_of_node][:, resources]
            per_step[s] = ev.rmse(est, test[s][:, resources])
        key = (
            dataset.resource_names[resources[0]]
            if len(resources) == 1
            else "+".join(dataset.resource_names[r] for r in resources)
        )
        out[key] = ev.time_avg_rmse(per_step)
    return out


SWEEP_AXES = {
    "B": "budget",
    "budget": "budget",
    "K": "k",
    "k": "k",
    "h": "h",
    "M": "m",
    "m": "m",
    "M'": "m_prime",
    "mprime": "m_prime",
    "m_prime": "m_prime",
}


def sweep(
    config: ExperimentConfig,
    dataset: TraceDataset,
    axis: str,
    values: list,
) -> list[tuple[object, ev.AggregateMetrics]]:
    """One run per axis value with a shared seed; returns (value, aggregate) rows."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(set(SWEEP_AXES))}")
    field_name = SWEEP_AXES[axis]
    out = []
    for value in values:
        if field_name == "h":
            cfg = replace(config, horizons=(int(value),))
        elif field_name == "budget":
            cfg = replace(config, budget=float(value))
        else:
            cfg = replace(config, **{field_name: int(value)})
        result = run(cfg, dataset)
        out.append((value, result.aggregate))
    return out
