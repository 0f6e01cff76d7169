"""modelgate: sequential approval of model updates under bounded drift.

The package gates a stream of candidate model updates: each step it
builds confidence bounds on every candidate's risk, lets a family of
approval strategies propose soft approvals (with an abstain option at a
fixed cost), and aggregates them with a meta-forecaster whose learning
rate is certified by an average-risk guarantee.
"""

from .core import (
    ABSTAIN,
    Action,
    ApprovalStatus,
    AugmentedLossConfig,
    CandidateModel,
    InvalidEnsembleError,
    LossFunction,
    ModelRegistry,
    MonitoringBatch,
    Observation,
    augmented_loss,
    batch_model_losses,
    cumulative_average_risk,
    deployed_risk,
    empirical_risk,
    ensemble_predict,
    sample_action,
)
from .bounds import BoundConfig, RiskBoundTable, build_bound_table, hoeffding_ucb, window_start
from .strategy import (
    MarkovPrior,
    SpecialStrategy,
    StrategyParams,
    StrategyState,
    advance,
    brute_force_status,
    init_state,
    loss_update,
    make_special,
    optimistic_step,
    step,
    strategy_from_row,
    transition_matrix,
)
from .meta import (
    InfeasibleRateError,
    MetaState,
    RiskBoundInputs,
    classical_ewaf_bound,
    combine,
    init_meta,
    max_learning_rate,
    meta_advance,
    meta_update,
    mgf_rate,
    optimize_slack,
    risk_bound,
    tail_alpha,
)
from .sim import (
    GRID4,
    GRID12,
    DeveloperPolicy,
    DriftReport,
    FitConfig,
    LogisticModel,
    MetaConfig,
    ReplicateTrace,
    ScenarioConfig,
    ScenarioKind,
    apply_shift,
    developer_propose,
    empirical_mmd,
    fit_logistic,
    generate_batch,
    run_experiment,
    run_replicate,
    verify_drift,
)
from .cli import ConfigError, IngestedStream, RunConfig, bound_curves, ingest, load_config, run

__version__ = "0.1.0"
