"""Non-stationary stream generators, the model developer, and the full loop.

Four synthetic scenarios drive a binary-classification stream whose
label law is logistic in the features.  Distribution shifts perturb the
generating coefficients and are rejection-checked against the drift
budget, measured as the largest risk change over the live candidate
models (a finite-class stand-in for the worst case over all predictors).

The experiment loop wires everything together: propose a model, build
the bound table, let every strategy and the meta-forecaster deploy,
observe a fresh batch, update.  Everything is deterministic given
(seed, replicate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundConfig, build_bound_table
from .core import (
    ApprovalStatus,
    AugmentedLossConfig,
    CandidateModel,
    LossFunction,
    ModelRegistry,
    MonitoringBatch,
    cumulative_average_risk,
)
from .meta import (
    RiskBoundInputs,
    combine,
    init_meta,
    max_learning_rate,
    meta_advance,
    strategy_statuses,
)
from .strategy import (
    SpecialStrategy,
    constraint_mask,
    advance as strategy_advance,
    init_state,
    make_special,
    optimistic_step,
)

__all__ = [
    "ScenarioKind",
    "FitConfig",
    "ScenarioConfig",
    "MetaConfig",
    "DeveloperPolicy",
    "GeneratorState",
    "LogisticModel",
    "ReplicateTrace",
    "DriftReport",
    "GRID4",
    "GRID12",
    "sigmoid",
    "bayes_hinge_risk",
    "solve_signal_scale",
    "logistic_objective",
    "fit_logistic",
    "developer_propose",
    "policy_for_scenario",
    "generate_batch",
    "split_batch",
    "apply_shift",
    "empirical_mmd",
    "verify_drift",
    "run_experiment",
    "run_replicate",
]

#: Strategy grids searched by the meta-forecaster.  Row 0 is the fail-safe.
GRID4: tuple[tuple[float, float, float], ...] = (
    (0.0, 0.0, 0.0),
    (0.0, 0.0, 0.99),
    (0.5, 10000.0, 0.0),
    (0.3, 0.0, 1.5),
)

GRID12: tuple[tuple[float, float, float], ...] = (
    (0.0, 0.0, 0.0),
    (0.0, 0.0, 0.99),
    (0.5, 10000.0, 0.0),
    (0.3, 0.0, 10.0),
    (0.3, 10.0, 10.0),
    (0.3, 100.0, 10.0),
    (0.5, 0.0, 10.0),
    (0.5, 10.0, 10.0),
    (0.5, 100.0, 10.0),
    (0.8, 0.0, 10.0),
    (0.8, 10.0, 10.0),
    (0.8, 100.0, 10.0),
)

# Shift proposals are scaled to this fraction of the drift budget so the
# post-hoc empirical certification has headroom over sampling noise.  The
# windowed budget check at proposal time already accounts for earlier
# shifts still inside the lookback window; the gap only rules out
# back-to-back moves.
SHIFT_SAFETY = 0.85
MIN_SHIFT_GAP = 2
WARMUP_STEPS = 4
MMD_PROBE = 20000


class ScenarioKind(Enum):
    ADAPTIVE_SHIFTS = "adaptive_shifts"
    SMALL_FREQUENT_SHIFTS = "small_frequent_shifts"
    IID_GOOD_MODELS = "iid_good_models"
    IID_RANDOM_MODELS = "iid_random_models"
    INGESTED = "ingested"


@dataclass(frozen=True)
class FitConfig:
    """Gradient-descent settings for the developer's logistic refits."""

    step_size: float = 1.0
    iterations: int = 400
    l2: float = 1e-3


@dataclass(frozen=True)
class ScenarioConfig:
    """Stream settings for one scenario.

    ``drift`` of None means the budget is set to the realized abstain cost
    once the initial model has been scored.  ``bayes_risk`` fixes the
    clipped-hinge risk of the best-in-class predictor; the generating
    coefficients are scaled to hit it exactly.  The initial model is fit
    on ``initial_batches`` worth of pre-deployment data with its own,
    deliberately conservative, settings: a heavier ridge penalty keeps the
    realized abstain cost stable across replicates.
    """

    kind: ScenarioKind
    horizon: int = 50
    batch_size: int = 75
    dim: int = 10
    drift: Optional[float] = None
    window: int = 3
    seed: int = 0
    eval_size: int = 100_000
    bayes_risk: float = 0.10
    fit: FitConfig = field(default_factory=FitConfig)
    initial_batches: int = 2
    initial_fit: FitConfig = field(default_factory=lambda: FitConfig(l2=0.065))

    def __post_init__(self):
        if self.horizon < 1 or self.batch_size < 1 or self.dim < 1:
            raise ValueError("horizon, batch_size and dim must be >= 1")
        if self.drift is not None and self.drift < 0:
            raise ValueError("drift must be >= 0")
        if self.initial_batches < 1:
            raise ValueError("initial_batches must be >= 1")


@dataclass(frozen=True)
class MetaConfig:
    """Approval-side settings shared by every replicate of a run."""

    rows: tuple[tuple[float, float, float], ...] = GRID12
    bound: BoundConfig = field(default_factory=BoundConfig)
    margin_mult: float = 0.6
    step_margin_mult: float = 0.2
    rate_mode: str = "solve"
    rate: float = 1.6
    loss: LossFunction = field(default_factory=LossFunction)

    def __post_init__(self):
        if self.rate_mode not in ("solve", "fixed"):
            raise ValueError("rate_mode must be 'solve' or 'fixed'")
        if self.margin_mult < 0 or self.step_margin_mult < 0:
            raise ValueError("margin multipliers must be >= 0")
        if self.rate <= 0:
            raise ValueError("rate must be > 0")


def sigmoid(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.dtype.kind != "f":
        m = m.astype(float)
    # exp may overflow to inf for very negative margins; 1/(1+inf) is the
    # correct 0, so just silence the warning instead of branching
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-m))


@lru_cache(maxsize=64)
def bayes_hinge_risk(signal_scale: float, nodes: int = 64) -> float:
    """Clipped-hinge risk of the true-coefficient predictor.

    For standard-normal features and logistic labels the margin is
    Gaussian with standard deviation equal to the coefficient norm, and
    the risk reduces to E[1 / (2 cosh^2(m/2))], evaluated by quadrature.
    """
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    vals = 1.0 / (2.0 * np.cosh(signal_scale * x / 2.0) ** 2)
    return float(np.sum(w * vals) / math.sqrt(2.0 * math.pi))


@lru_cache(maxsize=64)
def solve_signal_scale(target_risk: float) -> float:
    """Coefficient norm whose best-in-class clipped-hinge risk hits the target."""
    if not 0.0 < target_risk < 0.5:
        raise ValueError("target risk must lie in (0, 0.5)")
    lo, hi = 0.0, 60.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if bayes_hinge_risk(mid) > target_risk:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


class LogisticModel:
    """Linear-logistic scorer mapping features to a signed score in (-1, 1)."""

    def __init__(self, coef: np.ndarray):
        self.coef = np.asarray(coef, dtype=float)  # last entry is the intercept

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        margin = x @ self.coef[:-1] + self.coef[-1]
        return 2.0 * sigmoid(margin) - 1.0


def logistic_objective(
    coef: np.ndarray,
    features: np.ndarray,
    labels01: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray]:
    """Mean logistic negative log-likelihood with an L2 penalty (intercept free).

    Returns (value, gradient); the analytic gradient is checked against
    central finite differences in the test suite.
    """
    coef = np.asarray(coef, dtype=float)
    n = len(labels01)
    margin = features @ coef[:-1] + coef[-1]
    value = float(np.mean(np.logaddexp(0.0, margin) - labels01 * margin))
    value += 0.5 * l2 * float(coef[:-1] @ coef[:-1])
    resid = sigmoid(margin) - labels01
    grad = np.empty_like(coef)
    grad[:-1] = features.T @ resid / n + l2 * coef[:-1]
    grad[-1] = float(resid.mean())
    return value, grad


def fit_logistic(features: np.ndarray, labels: np.ndarray, cfg: FitConfig) -> LogisticModel:
    """Deterministic full-batch gradient descent from zero initialisation.

    Labels may be {-1, +1} or {0, 1}.  Single-class training data falls
    back to an intercept-only model at the smoothed class rate.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if len(labels) == 0:
        raise ValueError("training set must be nonempty")
    y01 = np.where(labels > 0, 1.0, 0.0)
    d = features.shape[1]
    if y01.min() == y01.max():
        rate = (y01.sum() + 1.0) / (len(y01) + 2.0)
        coef = np.zeros(d + 1)
        coef[-1] = math.log(rate / (1.0 - rate))
        return LogisticModel(coef)
    n = len(y01)
    coef = np.zeros(d + 1)
    grad = np.empty_like(coef)
    for _ in range(cfg.iterations):
        resid = sigmoid(features @ coef[:-1] + coef[-1]) - y01
        grad[:-1] = features.T @ resid / n + cfg.l2 * coef[:-1]
        grad[-1] = resid.mean()
        coef -= cfg.step_size * grad
    return LogisticModel(coef)


@dataclass(frozen=True)
class DeveloperPolicy:
    """Which trailing batches the developer refits on at each step.

    kind:
      last_k        the most recent ``k`` batches
      cycling       window length cycles 1..cycle with step index
      all_data      every batch so far
      mostly_last2  last two batches, except every fourth step uses all
    """

    kind: str
    k: int = 4
    cycle: int = 5

    def window(self, t: int) -> range:
        """Batch indices (1-based) used to train the proposal at time t."""
        if t < 2:
            raise ValueError("proposals from monitoring data start at t = 2")
        if self.kind == "last_k":
            lo = max(1, t - self.k)
        elif self.kind == "cycling":
            length = ((t - 1) % self.cycle) + 1
            lo = max(1, t - length)
        elif self.kind == "all_data":
            lo = 1
        elif self.kind == "mostly_last2":
            lo = 1 if t % 4 == 0 else max(1, t - 2)
        else:
            raise ValueError(f"unknown developer policy {self.kind!r}")
        return range(lo, t)


def policy_for_scenario(kind: ScenarioKind) -> DeveloperPolicy:
    return {
        ScenarioKind.ADAPTIVE_SHIFTS: DeveloperPolicy("last_k", k=4),
        ScenarioKind.SMALL_FREQUENT_SHIFTS: DeveloperPolicy("cycling"),
        ScenarioKind.IID_GOOD_MODELS: DeveloperPolicy("all_data"),
        ScenarioKind.IID_RANDOM_MODELS: DeveloperPolicy("mostly_last2"),
        ScenarioKind.INGESTED: DeveloperPolicy("all_data"),
    }[kind]


@dataclass
class Split:
    train: MonitoringBatch
    validation: MonitoringBatch


def split_batch(batch: MonitoringBatch, validation_fraction: float, rng: np.random.Generator) -> Split:
    """Random train/validation partition; validation gets floor(fraction * n)."""
    n = batch.size
    n_val = int(validation_fraction * n)
    if not 0 < n_val < n:
        raise ValueError("validation fraction leaves an empty part")
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    mk = lambda idx: MonitoringBatch(batch.time_index, batch.features[idx], batch.labels[idx])
    return Split(train=mk(train_idx), validation=mk(val_idx))


def developer_propose(
    policy: DeveloperPolicy,
    history: Sequence[MonitoringBatch],
    splits: Sequence[Split],
    t: int,
    cfg: FitConfig,
) -> CandidateModel:
    """Refit on the policy's window; the newest batch contributes only its
    training slice (its validation slice stays prospective for the bound)."""
    if len(history) < 1:
        raise ValueError("developer needs at least one monitoring batch")
    window = policy.window(t)
    feats, labels = [], []
    for idx in window:
        if idx == t - 1:
            part = splits[idx - 1].train
        else:
            part = history[idx - 1]
        feats.append(part.features)
        labels.append(part.labels)
    model = fit_logistic(np.vstack(feats), np.concatenate(labels), cfg)
    return CandidateModel(t, model, birth_time=t)


# ---------------------------------------------------------------------------
# Stream generation and drift


@dataclass
class GeneratorState:
    """Mutable state of the data-generating process for one replicate."""

    coeff_history: list[np.ndarray]
    rng: np.random.Generator
    budget: float = 0.0
    shift_count: int = 0
    last_shift_time: int = -(10**9)
    pending_shift: bool = False
    shadow_top: int = 0

    @property
    def coefficients(self) -> np.ndarray:
        return self.coeff_history[-1]


def generate_batch(gen: GeneratorState, cfg: ScenarioConfig, time_index: int) -> MonitoringBatch:
    """Draw IID observations from the distribution realized at ``time_index``."""
    beta = gen.coeff_history[min(time_index, len(gen.coeff_history) - 1)]
    x = gen.rng.standard_normal((cfg.batch_size, cfg.dim))
    p = sigmoid(x @ beta)
    y = np.where(gen.rng.random(cfg.batch_size) < p, 1.0, -1.0)
    return MonitoringBatch(time_index, x, y)


def _class_risks(beta: np.ndarray, probe: np.ndarray, loss_plus: np.ndarray, loss_minus: np.ndarray) -> np.ndarray:
    """Risk of each probed model under the label law of ``beta``; the label
    expectation is analytic, only the feature average is Monte Carlo."""
    p = sigmoid(probe @ beta)
    return p @ loss_plus / len(probe) + (1.0 - p) @ loss_minus / len(probe)


def _probe_losses(models: Sequence[CandidateModel], probe: np.ndarray, loss: LossFunction):
    real = [m for m in models if m.predictor is not None]
    if not real:
        return np.zeros((len(probe), 0)), np.zeros((len(probe), 0))
    scores = np.column_stack([m.predict(probe) for m in real])
    ones = np.ones(scores.shape[1])
    loss_plus = loss.of_array(scores, ones)
    loss_minus = loss.of_array(scores, -ones)
    return loss_plus, loss_minus


class _WindowMMD:
    """Windowed discrepancy of a candidate coefficient vector against the
    recent history, with the per-history risks precomputed once."""

    def __init__(self, gen: GeneratorState, t_new: int, window: int, probe, loss_plus, loss_minus):
        self.probe = probe
        self.loss_plus = loss_plus
        self.loss_minus = loss_minus
        history_risks = {}
        self.window_means = []
        for w in range(1, window + 1):
            lo = max(0, t_new - w)
            members = []
            for s in range(lo, t_new):
                # a short history means the distribution has been sitting
                # at its latest value since then
                beta = gen.coeff_history[min(s, len(gen.coeff_history) - 1)]
                key = id(beta)
                if key not in history_risks:
                    history_risks[key] = _class_risks(beta, probe, loss_plus, loss_minus)
                members.append(history_risks[key])
            self.window_means.append(np.mean(members, axis=0))

    def __call__(self, beta_new: np.ndarray) -> float:
        new = _class_risks(beta_new, self.probe, self.loss_plus, self.loss_minus)
        return max(float(np.max(np.abs(new - mean))) for mean in self.window_means)


def _budgeted_move(
    gen: GeneratorState,
    path,
    target: float,
    t_new: int,
    window: int,
    models: Sequence[CandidateModel],
    loss: LossFunction,
    cfg: ScenarioConfig,
) -> Optional[np.ndarray]:
    """Furthest point along ``path`` (a map [0, 1] -> coefficients) whose
    windowed risk change stays at or below ``target``, by bisection."""
    probe = gen.rng.standard_normal((MMD_PROBE, cfg.dim))
    loss_plus, loss_minus = _probe_losses(models, probe, loss)
    if loss_plus.shape[1] == 0:
        return None  # no models to measure against: stay put
    mmd = _WindowMMD(gen, t_new, window, probe, loss_plus, loss_minus)

    if mmd(path(1.0)) <= target:
        return path(1.0)
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2.0
        if mmd(path(mid)) <= target:
            lo = mid
        else:
            hi = mid
    return path(lo) if lo > 0 else None


def _rotation_path(beta: np.ndarray, rng: np.random.Generator, max_angle: float = math.pi / 2):
    """Rotate the coefficients toward a random tangent direction.

    Rotation preserves the coefficient norm, so the best-in-class risk is
    unchanged and only the alignment of existing models degrades.
    """
    norm = float(np.linalg.norm(beta))
    unit = beta / norm
    raw = rng.standard_normal(len(beta))
    tang = raw - (raw @ unit) * unit
    tn = float(np.linalg.norm(tang))
    if tn < 1e-12:
        tang = np.zeros_like(beta)
        tang[0] = 1.0
        tang -= (tang @ unit) * unit
        tn = float(np.linalg.norm(tang))
    tang /= tn

    def path(s: float) -> np.ndarray:
        angle = s * max_angle
        return norm * (math.cos(angle) * unit + math.sin(angle) * tang)

    return path


def _flip_subset(
    gen: GeneratorState,
    target: float,
    t_new: int,
    window: int,
    models: Sequence[CandidateModel],
    loss: LossFunction,
    cfg: ScenarioConfig,
    victim: Optional[CandidateModel] = None,
) -> Optional[np.ndarray]:
    """Sign-flip the largest coordinate subset that fits the budget.

    Full flips preserve the coefficient norm; when even one whole
    coordinate overshoots, that coordinate is flipped partially instead.
    Given a ``victim`` (the model whose approval triggered the shift),
    coordinates it leans on hardest are flipped first, so the budget is
    spent where it hurts that model most.
    """
    beta = gen.coefficients
    probe = gen.rng.standard_normal((MMD_PROBE, cfg.dim))
    loss_plus, loss_minus = _probe_losses(models, probe, loss)
    if loss_plus.shape[1] == 0:
        return None
    mmd = _WindowMMD(gen, t_new, window, probe, loss_plus, loss_minus)
    if victim is not None and isinstance(victim.predictor, LogisticModel):
        alignment = victim.predictor.coef[: cfg.dim] * beta
        order = np.argsort(-alignment)
    else:
        order = gen.rng.permutation(cfg.dim)

    def flipped(k: int) -> np.ndarray:
        out = beta.copy()
        out[order[:k]] = -out[order[:k]]
        return out

    best = 0
    for k in range(1, cfg.dim + 1):
        if mmd(flipped(k)) <= target:
            best = k
        else:
            break
    if best > 0:
        return flipped(best)

    coord = order[0]

    def path(s: float) -> np.ndarray:
        out = beta.copy()
        out[coord] = (1.0 - 2.0 * s) * out[coord]
        return out

    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2.0
        if mmd(path(mid)) <= target:
            lo = mid
        else:
            hi = mid
    return path(lo) if lo > 0 else None


def apply_shift(
    gen: GeneratorState,
    cfg: ScenarioConfig,
    t_new: int,
    feedback: bool,
    models: Sequence[CandidateModel],
    loss: LossFunction,
) -> None:
    """Realize the distribution for time ``t_new`` and append its coefficients.

    Called at the start of step ``t_new``, before any data from that step
    is drawn: the shift function may depend on everything observed so far,
    including the decision the shadow tester is about to deploy.  IID
    scenarios never move.  The small-shift scenario rotates the
    coefficients by a random amount every fourth step; the adaptive
    scenario sign-flips a budget-sized coordinate subset the moment the
    shadow tester approves a new candidate, so the approved model walks
    straight into the shifted distribution.  A warm-up and a minimum gap
    keep early steps stationary and rule out back-to-back moves.
    """
    beta = gen.coefficients
    shifted = None
    if cfg.kind is ScenarioKind.SMALL_FREQUENT_SHIFTS and t_new % 4 == 0:
        # small relative to the budget: trackable by short-window refits
        target = gen.rng.uniform(0.1, 0.35) * SHIFT_SAFETY * gen.budget
        path = _rotation_path(beta, gen.rng)
        shifted = _budgeted_move(gen, path, target, t_new, cfg.window, models, loss, cfg)
    elif cfg.kind is ScenarioKind.ADAPTIVE_SHIFTS:
        if feedback:
            gen.pending_shift = True
        allowed = t_new > WARMUP_STEPS and t_new - gen.last_shift_time >= MIN_SHIFT_GAP
        if gen.pending_shift and allowed:
            target = SHIFT_SAFETY * gen.budget
            victim = None
            if 0 < gen.shadow_top < len(models):
                victim = models[gen.shadow_top]
            shifted = _flip_subset(gen, target, t_new, cfg.window, models, loss, cfg, victim)
            gen.pending_shift = False
    if shifted is not None and not np.array_equal(shifted, beta):
        gen.coeff_history.append(shifted)
        gen.shift_count += 1
        gen.last_shift_time = t_new
    else:
        gen.coeff_history.append(beta)


def empirical_mmd(
    sample_a: MonitoringBatch,
    sample_b: MonitoringBatch,
    models: Sequence[CandidateModel],
    loss_cfg: AugmentedLossConfig,
) -> float:
    """Largest absolute risk difference over the model class between two samples.

    A finite-class lower bound on the population discrepancy: models that
    always abstain contribute nothing and are skipped.
    """
    real = [m for m in models if m.predictor is not None]
    if not real:
        raise ValueError("need at least one predicting model")
    worst = 0.0
    for m in real:
        la = loss_cfg.base.of_array(m.predict(sample_a.features), sample_a.labels)
        lb = loss_cfg.base.of_array(m.predict(sample_b.features), sample_b.labels)
        worst = max(worst, abs(float(la.mean()) - float(lb.mean())))
    return worst


@dataclass(frozen=True)
class DriftReport:
    """Outcome of certifying a generator trace against the drift budget."""

    budget: float
    tolerance: float
    max_value: float
    violations: tuple[tuple[int, int, float], ...]
    values: np.ndarray  # (T, window) matrix of windowed discrepancies

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_drift(
    coeff_history: Sequence[np.ndarray],
    budget: float,
    window: int,
    models: Sequence[CandidateModel],
    loss_cfg: AugmentedLossConfig,
    n_check: int = 20000,
    tolerance: float = 0.02,
    seed: int = 1234,
) -> DriftReport:
    """Empirically check every windowed discrepancy against the budget.

    For each time t and lookback w, draws ``n_check`` labelled samples from
    the realized distribution at t and the same number (split equally) from
    the pooled window, and compares their finite-class discrepancy against
    budget + tolerance.  The tolerance is the pre-registered allowance for
    sampling noise at the default ``n_check``.
    """
    rng = np.random.default_rng(seed)
    horizon = len(coeff_history) - 1
    values = np.zeros((horizon, window))
    violations = []

    def draw(beta: np.ndarray, count: int, time_index: int) -> MonitoringBatch:
        x = rng.standard_normal((count, len(beta)))
        y = np.where(rng.random(count) < sigmoid(x @ beta), 1.0, -1.0)
        return MonitoringBatch(time_index, x, y)

    for t in range(1, horizon + 1):
        current = draw(coeff_history[t], n_check, t)
        for w in range(1, window + 1):
            lo = max(0, t - w)
            members = list(range(lo, t))
            per = max(1, n_check // len(members))
            pooled = [draw(coeff_history[s], per, s) for s in members]
            mixed = MonitoringBatch(
                t,
                np.vstack([b.features for b in pooled]),
                np.concatenate([b.labels for b in pooled]),
            )
            val = empirical_mmd(current, mixed, models, loss_cfg)
            values[t - 1, w - 1] = val
            if val > budget + tolerance:
                violations.append((t, w, val))
    return DriftReport(
        budget=budget,
        tolerance=tolerance,
        max_value=float(values.max()) if values.size else 0.0,
        violations=tuple(violations),
        values=values,
    )


# ---------------------------------------------------------------------------
# The experiment loop


@dataclass
class ReplicateTrace:
    """Per-step record of one replicate.

    Arrays are indexed by step (0-based for step t = index + 1).  The
    ``strategy_*`` blocks track each candidate strategy deployed on its
    own, which is what the forecaster's weights respond to.
    """

    replicate: int
    abstain_cost: float
    meta_rate: float
    true_risk: np.ndarray
    emp_risk: np.ndarray
    abstain_prob: np.ndarray
    meta_weights: np.ndarray
    meta_top: np.ndarray
    strategy_true_risk: np.ndarray
    strategy_abstain: np.ndarray
    strategy_top: np.ndarray
    coeff_history: np.ndarray
    shift_times: tuple[int, ...]
    model_coefs: np.ndarray  # fitted (dim + 1, n_models) columns, for audits

    @property
    def horizon(self) -> int:
        return len(self.true_risk)

    def cum_avg_true(self) -> np.ndarray:
        return np.cumsum(self.true_risk) / np.arange(1, self.horizon + 1)

    def strategy_cum_avg_true(self) -> np.ndarray:
        steps = np.arange(1, self.horizon + 1)[:, None]
        return np.cumsum(self.strategy_true_risk, axis=0) / steps

    def final_cum_risk(self) -> float:
        return cumulative_average_risk(self.true_risk.tolist())


def _status_risks(
    pred_matrix: np.ndarray,
    labels: np.ndarray,
    statuses: Sequence[ApprovalStatus],
    loss_cfg: AugmentedLossConfig,
) -> np.ndarray:
    """Deployed risks of several statuses on one sample in a single pass."""
    delta = loss_cfg.abstain_cost
    out = np.full(len(statuses), delta)
    live = [k for k, s in enumerate(statuses) if s.model_mass > 0.0]
    if not live:
        return out
    cols = np.column_stack(
        [statuses[k].weights[1:] / statuses[k].model_mass for k in live]
    ).astype(pred_matrix.dtype)
    scores = pred_matrix @ cols
    ens = loss_cfg.base.of_array(scores, labels[:, None]).mean(axis=0, dtype=np.float64)
    for i, k in enumerate(live):
        p0 = statuses[k].abstain_prob
        out[k] = p0 * delta + (1.0 - p0) * float(ens[i])
    return out


def _prediction_matrix(registry: ModelRegistry, x: np.ndarray) -> np.ndarray:
    """Scores of all candidates; one fused matmul when all are logistic.

    The computation runs in the dtype of ``x``, so callers can pass
    float32 features for the wide evaluation samples.
    """
    models = [registry[j] for j in range(1, len(registry))]
    if models and all(isinstance(m.predictor, LogisticModel) for m in models):
        coefs = np.column_stack([m.predictor.coef for m in models]).astype(x.dtype)
        margins = x @ coefs[:-1] + coefs[-1]
        return 2.0 * sigmoid(margins) - 1.0
    return registry.prediction_matrix(x)


def run_replicate(
    scenario: ScenarioConfig,
    meta_cfg: MetaConfig,
    replicate: int,
    batches: Optional[Sequence[MonitoringBatch]] = None,
    fixed_abstain_cost: Optional[float] = None,
) -> ReplicateTrace:
    """Run one replicate end to end.

    For generated scenarios the per-step true risk is measured on a fresh
    evaluation sample from the realized distribution; for ingested streams
    (``batches`` given) the batch itself is the only evidence and the true
    risk column equals the empirical one.
    """
    rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, replicate]))
    ingested = batches is not None
    loss = meta_cfg.loss
    policy = policy_for_scenario(scenario.kind)

    if ingested:
        if len(batches) < 2:
            raise ValueError("an ingested stream needs at least two batches")
        horizon = len(batches) - 1
        initial = batches[0]
        dim = initial.dim
    else:
        horizon = scenario.horizon
        dim = scenario.dim
        scale = solve_signal_scale(scenario.bayes_risk)
        b0 = rng.standard_normal(dim)
        beta0 = scale * b0 / np.linalg.norm(b0)
        gen = GeneratorState(coeff_history=[beta0], rng=rng)
        x0 = rng.standard_normal((scenario.initial_batches * scenario.batch_size, dim))
        y0 = np.where(rng.random(len(x0)) < sigmoid(x0 @ beta0), 1.0, -1.0)
        initial = MonitoringBatch(0, x0, y0)

    split0 = split_batch(initial, meta_cfg.bound.validation_fraction, rng)
    first = fit_logistic(split0.train.features, split0.train.labels, scenario.initial_fit)
    registry = ModelRegistry()
    registry.add(CandidateModel(1, first, birth_time=1))

    if fixed_abstain_cost is not None:
        delta = fixed_abstain_cost
    elif ingested:
        delta = float(np.mean(loss.of_array(first(batches[1].features), batches[1].labels)))
    else:
        # the first deployment distribution equals the initial one (shifts
        # cannot fire inside the warm-up), so score the initial model there
        x_cal = rng.standard_normal((scenario.eval_size, dim))
        y_cal = np.where(rng.random(scenario.eval_size) < sigmoid(x_cal @ beta0), 1.0, -1.0)
        delta = float(np.mean(loss.of_array(first(x_cal), y_cal)))
        del x_cal, y_cal
    delta = min(max(delta, 1e-6), 1.0 - 1e-6)
    loss_cfg = AugmentedLossConfig(loss, delta)

    margin = meta_cfg.margin_mult * delta
    step_margin = meta_cfg.step_margin_mult * margin
    if not ingested:
        gen.budget = scenario.drift if scenario.drift is not None else delta

    if meta_cfg.rate_mode == "fixed":
        rate = meta_cfg.rate
    else:
        n = scenario.batch_size if not ingested else min(b.size for b in batches[1:])
        inputs = RiskBoundInputs(
            abstain_cost=delta,
            step_margin=step_margin,
            drift=(scenario.drift if scenario.drift is not None else delta),
            rate=1.0,
            cover_alpha=meta_cfg.bound.alpha,
            n_strategies=len(meta_cfg.rows),
            horizon=horizon,
            batch_size=n,
            holdout_size=int(meta_cfg.bound.validation_fraction * n),
        )
        rate = max_learning_rate(delta + margin, inputs)

    meta = init_meta(meta_cfg.rows, rate, delta, step_margin)
    shadow_params, shadow_prior = make_special(SpecialStrategy.REPEATED_TTEST, delta, step_margin)
    shadow = init_state(shadow_params, shadow_prior)

    m = len(meta_cfg.rows)
    trace = ReplicateTrace(
        replicate=replicate,
        abstain_cost=delta,
        meta_rate=rate,
        true_risk=np.zeros(horizon),
        emp_risk=np.zeros(horizon),
        abstain_prob=np.zeros(horizon),
        meta_weights=np.zeros((horizon, m)),
        meta_top=np.zeros(horizon, dtype=int),
        strategy_true_risk=np.zeros((horizon, m)),
        strategy_abstain=np.zeros((horizon, m)),
        strategy_top=np.zeros((horizon, m), dtype=int),
        coeff_history=np.zeros((0, dim)),
        shift_times=(),
        model_coefs=np.zeros((dim + 1, 0)),
    )

    history: list[MonitoringBatch] = []
    splits: list[Split] = []
    shift_times: list[int] = []

    for t in range(1, horizon + 1):
        if t >= 2:
            registry.add(developer_propose(policy, history, splits, t, scenario.fit))
        newest = split0 if t == 1 else splits[t - 2]
        table = build_bound_table(
            t, registry, history, (newest.train, newest.validation), meta_cfg.bound, loss_cfg
        )

        # the distribution for step t is realized now, before any data from
        # step t is drawn; the shift function may react to the approval the
        # shadow tester is about to make, since that decision only uses
        # data through t - 1
        shadow_changed = False
        if not ingested and scenario.kind is ScenarioKind.ADAPTIVE_SHIFTS:
            shadow_status = optimistic_step(shadow, table)
            top = shadow_status.top_model()
            shadow_changed = top > 0 and top != gen.shadow_top
            if top > 0:
                gen.shadow_top = top
        if not ingested:
            before = gen.shift_count
            apply_shift(gen, scenario, t, shadow_changed, registry.models, loss)
            if gen.shift_count > before:
                shift_times.append(t)

        weights = meta.weights
        statuses = strategy_statuses(meta, table)
        combined = combine(statuses, weights)

        if ingested:
            eval_feats, eval_labels = batches[t].features, batches[t].labels
        else:
            # float32 is plenty for a Monte Carlo risk estimate and halves
            # the cost of the widest arrays in the loop
            beta_t = gen.coeff_history[t]
            eval_feats = rng.standard_normal((scenario.eval_size, dim), dtype=np.float32)
            probs = sigmoid(eval_feats @ beta_t.astype(np.float32))
            eval_labels = np.where(
                rng.random(scenario.eval_size) < probs, np.float32(1.0), np.float32(-1.0)
            )
        eval_preds = _prediction_matrix(registry, eval_feats)

        eval_risks = _status_risks(eval_preds, eval_labels, statuses + [combined], loss_cfg)
        trace.true_risk[t - 1] = eval_risks[-1]
        trace.abstain_prob[t - 1] = combined.abstain_prob
        trace.meta_weights[t - 1] = weights
        trace.meta_top[t - 1] = combined.top_model()
        trace.strategy_true_risk[t - 1] = eval_risks[:-1]
        for j, status in enumerate(statuses):
            trace.strategy_abstain[t - 1, j] = status.abstain_prob
            trace.strategy_top[t - 1, j] = status.top_model()
        del eval_preds, eval_feats, eval_labels

        batch = batches[t] if ingested else generate_batch(gen, scenario, t)
        history.append(batch)
        splits.append(split_batch(batch, meta_cfg.bound.validation_fraction, rng))

        batch_preds = _prediction_matrix(registry, batch.features)
        blosses = np.empty(t + 1)
        blosses[0] = delta
        per_model = loss.of_array(batch_preds, batch.labels[:, None])
        blosses[1:] = per_model.mean(axis=0)
        batch_risks = _status_risks(batch_preds, batch.labels, statuses + [combined], loss_cfg)
        trace.emp_risk[t - 1] = batch_risks[-1]
        strat_risks = batch_risks[:-1]

        if t < horizon:
            meta = meta_advance(meta, table, blosses, strat_risks)
            if not ingested and scenario.kind is ScenarioKind.ADAPTIVE_SHIFTS:
                shadow = strategy_advance(shadow, blosses, constraint_mask(table, shadow_params))

    trace.coeff_history = (
        np.stack(gen.coeff_history[: horizon + 1]) if not ingested else np.zeros((0, dim))
    )
    trace.shift_times = tuple(shift_times)
    fitted = [registry[j].predictor for j in range(1, len(registry))]
    if all(isinstance(p, LogisticModel) for p in fitted):
        trace.model_coefs = np.column_stack([p.coef for p in fitted])
    return trace


def run_experiment(
    scenario: ScenarioConfig,
    meta_cfg: MetaConfig,
    replicates: int,
    batches: Optional[Sequence[MonitoringBatch]] = None,
    fixed_abstain_cost: Optional[float] = None,
) -> list[ReplicateTrace]:
    """Run ``replicates`` independent replicates of one scenario."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    return [
        run_replicate(scenario, meta_cfg, r, batches=batches, fixed_abstain_cost=fixed_abstain_cost)
        for r in range(replicates)
    ]
