"""Distributed genetic-algorithm framework with rule-based scheduling.

A master partitions each generation's population into jobs, workers
evaluate them, and a watchdog recovers stalled jobs through resume/suspend
decisions made by a replayable rule engine.  Runs execute on a
deterministic simulated cluster (or real sockets), persist every accepted
evaluation and every decision to append-only JSONL files, and emit
per-generation load metrics.
"""

from .errors import (
    AllWorkersSuspendedError,
    DimensionMismatchError,
    DuplicateJobIdError,
    DuplicateRuleIdError,
    EvaluationError,
    GaloadshedError,
    InvalidConfigError,
    LivelockError,
    MalformedDecisionError,
    NoApplicableRuleError,
    NonFiniteObjectiveError,
    NoResultsError,
    OverConstrainedError,
    ProtocolError,
    SchemaError,
    StorageError,
    UnevaluatedPopulationError,
    UnknownProblemError,
    UnknownRuleIdError,
)
from .experiment import (
    ExperimentConfig,
    GenerationMetrics,
    RunMetrics,
    RunOutcome,
    bench,
    run_experiment,
)
from .ga import (
    Evaluation,
    EvaluationProvider,
    GaConfig,
    GenerationStats,
    Individual,
    LocalEvaluator,
    Population,
    RunResult,
)
from .moo import (
    FeasibilityReport,
    Problem,
    Violation,
    builtin_problem,
    check_feasibility,
    degrees_of_freedom,
    evaluate_objectives,
    scalarize_weighted_sum,
)
from .reasoning import (
    Decision,
    FixedRules,
    LogEntry,
    Rule,
    Trigger,
    default_rules,
    infer,
    load_rules_file,
    match,
    replay_log,
    select_fitness_function,
)
from .simulation import FaultSpec, SimCluster, SimConfig, VirtualClock

__version__ = "0.1.0"

__all__ = [
    "AllWorkersSuspendedError",
    "DimensionMismatchError",
    "DuplicateJobIdError",
    "DuplicateRuleIdError",
    "EvaluationError",
    "GaloadshedError",
    "InvalidConfigError",
    "LivelockError",
    "MalformedDecisionError",
    "NoApplicableRuleError",
    "NonFiniteObjectiveError",
    "NoResultsError",
    "OverConstrainedError",
    "ProtocolError",
    "SchemaError",
    "StorageError",
    "UnevaluatedPopulationError",
    "UnknownProblemError",
    "UnknownRuleIdError",
    "ExperimentConfig",
    "GenerationMetrics",
    "RunMetrics",
    "RunOutcome",
    "bench",
    "run_experiment",
    "Evaluation",
    "EvaluationProvider",
    "GaConfig",
    "GenerationStats",
    "Individual",
    "LocalEvaluator",
    "Population",
    "RunResult",
    "FeasibilityReport",
    "Problem",
    "Violation",
    "builtin_problem",
    "check_feasibility",
    "degrees_of_freedom",
    "evaluate_objectives",
    "scalarize_weighted_sum",
    "Decision",
    "FixedRules",
    "LogEntry",
    "Rule",
    "Trigger",
    "default_rules",
    "infer",
    "load_rules_file",
    "match",
    "replay_log",
    "select_fitness_function",
    "FaultSpec",
    "SimCluster",
    "SimConfig",
    "VirtualClock",
    "__version__",
]
