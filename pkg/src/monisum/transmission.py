"""Per-node adaptive transmission control with a long-run frequency budget.

Each node keeps a virtual queue that accumulates budget violation; the
per-step transmit/silent choice minimizes a weighted sum of staleness penalty
and queue pressure (drift-plus-penalty). A deterministic uniform-sampling
schedule is provided as the baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TransmitterState:
    """One node's controller-side transmission state.

    last_sent is the latest measurement the controller holds for the node;
    it is None until the node's first (forced) transmission. The queue has no
    nonnegativity projection by default; set project_queue=True to clip at 0.
    """

    budget: float = 0.3
    v0: float = 1e-12
    gamma: float = 0.65
    queue: float = 0.0
    last_sent: np.ndarray | None = None
    last_sent_step: int = -1
    sent_count: int = 0
    project_queue: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.budget <= 1.0:
            raise ValueError("budget must be in (0, 1]")
        if self.v0 <= 0.0:
            raise ValueError("v0 must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")


@dataclass(frozen=True)
class TransmissionDecision:
    transmit: bool
    penalty_if_silent: float  # staleness cost of staying silent this step
    v_t: float


def penalty(state: TransmitterState, x: np.ndarray) -> float:
    """Mean squared gap between the stored and the current measurement."""
    if state.last_sent is None:
        raise ValueError("penalty undefined before the first transmission")
    x = np.asarray(x, dtype=float)
    if x.shape != state.last_sent.shape:
        raise ValueError(
            f"dimension mismatch: measurement {x.shape} vs stored {state.last_sent.shape}"
        )
    diff = state.last_sent - x
    return float(np.dot(diff, diff)) / x.size


def v_schedule(v0: float, gamma: float, t: int) -> float:
    """Penalty weight v0 * (t+1)**gamma, strictly increasing in t."""
    if v0 <= 0.0:
        raise ValueError("v0 must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    if t < 1:
        raise ValueError("t must be >= 1")
    return v0 * (t + 1) ** gamma


def argmin_decision(queue: float, v_t: float, penalty_silent: float, budget: float) -> bool:
    """Two-branch argmin of v_t*F(beta) + queue*(beta - budget); ties stay silent.

    Equivalent closed form: transmit iff queue < v_t * penalty_silent.
    """
    objective_silent = v_t * penalty_silent + queue * (0.0 - budget)
    objective_transmit = queue * (1.0 - budget)
    return bool(objective_transmit < objective_silent)


def decide(state: TransmitterState, x: np.ndarray, t: int) -> TransmissionDecision:
    """Choose whether to transmit the current measurement at step t.

    The very first step for a node always transmits (no stored value exists);
    its reported silent penalty is +inf so even the literal two-branch argmin
    picks transmission.
    """
    v_t = v_schedule(state.v0, state.gamma, t)
    if state.last_sent is None:
        return TransmissionDecision(transmit=True, penalty_if_silent=math.inf, v_t=v_t)
    f0 = penalty(state, x)
    return TransmissionDecision(
        transmit=argmin_decision(state.queue, v_t, f0, state.budget),
        penalty_if_silent=f0,
        v_t=v_t,
    )


def update_queue(
    state: TransmitterState, transmit: bool, x: np.ndarray | None = None, t: int = -1
) -> TransmitterState:
    """Advance the virtual queue by (beta - budget) and record a transmission."""
    q = state.queue + (1.0 if transmit else 0.0) - state.budget
    if state.project_queue:
        q = max(q, 0.0)
    if transmit:
        if x is None:
            raise ValueError("transmitting requires the measurement")
        return replace(
            state,
            queue=q,
            last_sent=np.array(x, dtype=float, copy=True),
            last_sent_step=t,
            sent_count=state.sent_count + 1,
        )
    return replace(state, queue=q)


def uniform_schedule(budget: float, t: int) -> bool:
    """Fixed-interval schedule with long-run frequency equal to budget."""
    if not 0.0 < budget <= 1.0:
        raise ValueError("budget must be in (0, 1]")
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.floor(t * budget) > math.floor((t - 1) * budget)
