"""Per-step upper confidence bounds on candidate-model risk.

At decision time t each live candidate gets a Hoeffding upper confidence
bound computed from the monitoring batches in a trailing window, at level
alpha/t so the union over candidates miscovers with probability at most
alpha.  The newest candidate, which was trained on part of the latest
batch, is scored on the held-out part instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AugmentedLossConfig, ModelRegistry, MonitoringBatch

__all__ = [
    "BoundConfig",
    "RiskBoundTable",
    "window_start",
    "hoeffding_ucb",
    "build_bound_table",
]


@dataclass(frozen=True)
class BoundConfig:
    """Settings for bound construction.

    alpha is the total per-step miscoverage budget (split across candidates
    by a Bonferroni correction); window is how many trailing batches may be
    pooled; validation_fraction is the share of the newest batch held out
    for the newest candidate; drift_margin records the assumed bound on
    per-step distribution drift (reporting only, it does not change the
    intervals).
    """

    alpha: float = 0.1
    window: int = 3
    validation_fraction: float = 0.5
    drift_margin: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.drift_margin < 0.0:
            raise ValueError("drift_margin must be >= 0")


@dataclass(frozen=True)
class RiskBoundTable:
    """Upper confidence bounds for every live candidate at one time step.

    Index 0 is the abstain option, whose cost is known exactly, so
    ``bounds[0]`` equals the abstain cost.  Bounds are left unclipped; the
    feasibility comparison downstream uses the raw values.
    """

    time_index: int
    bounds: np.ndarray
    window_starts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "window_starts", np.asarray(self.window_starts, dtype=int))
        if len(self.bounds) != self.time_index + 1:
            raise ValueError("bounds must have length time_index + 1")
        if len(self.window_starts) != len(self.bounds):
            raise ValueError("window_starts must match bounds length")

    def feasible(self, abstain_cost: float, step_margin: float) -> np.ndarray:
        """Mask of candidates whose bound is within the per-step margin.

        The abstain entry always qualifies, so the mask is never all-false.
        """
        mask = self.bounds <= abstain_cost + step_margin + 1e-12
        mask[0] = True
        return mask


def window_start(t: int, j: int, window: int) -> int:
    """First batch index pooled for candidate j at decision time t.

    Candidates older than the newest pool the trailing ``window`` batches
    back to their birth time; the newest candidate is scored on (a held-out
    part of) the single latest batch.
    """
    if not 1 <= j <= t:
        raise ValueError("candidate index must satisfy 1 <= j <= t")
    if j == t:
        return t - 1
    return max(j, t - window)


def hoeffding_ucb(losses: Sequence[float], alpha: float) -> float:
    """mean + sqrt(ln(1/alpha) / (2 N)) for losses bounded in [0, 1]."""
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise ValueError("need at least one loss")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    half_width = math.sqrt(math.log(1.0 / alpha) / (2.0 * losses.size))
    return float(losses.mean()) + half_width


def build_bound_table(
    t: int,
    registry: ModelRegistry,
    history: Sequence[MonitoringBatch],
    newest_split: tuple[MonitoringBatch, MonitoringBatch],
    cfg: BoundConfig,
    loss_cfg: AugmentedLossConfig,
) -> RiskBoundTable:
    """Construct the bound table for decision time t.

    ``history`` holds the monitoring batches 1..t-1 (prospective for every
    candidate older than the newest).  ``newest_split`` is the
    (train, validation) partition of the latest available batch; only its
    validation part is prospective for the newest candidate.  Each bound is
    a Hoeffding UCB at level alpha/t, so simultaneous coverage holds at
    level alpha by the union bound.  Batches are pooled with equal weight
    per observation, matching a uniform mixture when batch sizes are equal.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if registry.latest_id != t:
        raise ValueError(f"registry must hold candidates 1..{t}")
    if len(history) != t - 1:
        raise ValueError(f"history must hold batches 1..{t - 1}")
    level = cfg.alpha / t
    base = loss_cfg.base

    bounds = np.empty(t + 1)
    starts = np.empty(t + 1, dtype=int)
    bounds[0] = loss_cfg.abstain_cost
    starts[0] = max(0, t - cfg.window)

    for j in range(1, t):
        tau = window_start(t, j, cfg.window)
        pooled = [
            base.of_array(registry[j].predict(batch.features), batch.labels)
            for batch in history[tau - 1 : t - 1]
        ]
        losses = np.concatenate(pooled)
        if losses.size == 0:
            raise ValueError(f"candidate {j} has an empty evaluation window")
        bounds[j] = hoeffding_ucb(losses, level)
        starts[j] = tau

    _, validation = newest_split
    val_losses = base.of_array(registry[t].predict(validation.features), validation.labels)
    bounds[t] = hoeffding_ucb(val_losses, level)
    starts[t] = window_start(t, t, cfg.window)
    return RiskBoundTable(t, bounds, starts)
