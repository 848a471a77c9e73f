"""End-to-end experiment runs: wire the GA to the simulated cluster,
persist everything, and emit load metrics.

A run is a pure function of its configuration: the run id is a hash of the
config, and repeating the run rewrites byte-identical results, decisions,
and metrics files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import ga
from .distribution import MasterNode
from .errors import StorageError
from .ga import GaConfig, Individual, effective_weights
from .moo import builtin_problem
from .persistence import (
    DECISIONS_FILENAME,
    RESULTS_FILENAME,
    DecisionStore,
    ResultStore,
    read_decisions,
    read_results,
    write_run_metadata,
)
from .reasoning import (
    FixedRules,
    default_rules,
    problem_descriptor,
    select_fitness_function,
)
from .simulation import SimCluster, SimConfig, one_worker_baseline_ms

logger = logging.getLogger(__name__)

METRICS_FILENAME = "metrics.csv"
SUMMARY_FILENAME = "summary.json"
RUN_FILENAME = "run.json"
LEARNER_FILENAME = "learner.json"

METRICS_HEADER = (
    "generation,best_fitness,mean_fitness,jobs_dispatched,jobs_reassigned,"
    "resumes,suspends,makespan_ms"
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run, and therefore its run id."""

    problem: str
    ga: GaConfig
    sim: SimConfig
    job_timeout_ms: int | None = None
    generation_budget_ms: int | None = None
    buffered: bool = False
    transport: str = "sim"

    def __post_init__(self) -> None:
        if self.transport not in ("sim", "tcp"):
            raise ValueError(f"unknown transport {self.transport!r}")


@dataclass(frozen=True)
class GenerationMetrics:
    generation: int
    best_fitness: float
    mean_fitness: float
    jobs_dispatched: int
    jobs_reassigned: int
    resumes: int
    suspends: int
    makespan_ms: int


@dataclass(frozen=True)
class RunMetrics:
    rows: tuple[GenerationMetrics, ...]
    summary: dict


@dataclass(frozen=True)
class RunOutcome:
    run_id: str
    out_dir: Path
    metrics: RunMetrics
    best: Individual


def run_id_for(config: ExperimentConfig) -> str:
    """Deterministic run id: a hash of the canonicalized configuration."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return "run-" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path, rules: FixedRules | None = None
) -> RunOutcome:
    """Run one full experiment into ``out_dir``.

    Writes results.jsonl, decisions.jsonl, metrics.csv, summary.json,
    run.json, and learner.json, truncating any previous run in the same
    directory.  Deterministic given (config.ga.seed, config.sim.sim_seed).
    """
    problem = builtin_problem(config.problem)
    config.ga.validate(problem)
    weights = effective_weights(problem, config.ga)
    if rules is None:
        rules = default_rules()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = run_id_for(config)

    result_store = ResultStore(
        out_dir / RESULTS_FILENAME, fresh=True, buffered=config.buffered
    )
    decision_store = DecisionStore(
        out_dir / DECISIONS_FILENAME, fresh=True, buffered=config.buffered
    )
    try:
        descriptor = problem_descriptor(problem.num_objectives, problem.constrained)
        fitness_id = select_fitness_function(rules, descriptor, decision_store)
        master = MasterNode(
            run_id=run_id,
            rules=rules,
            decision_log=decision_store,
            result_store=result_store,
            job_timeout_ms=config.job_timeout_ms,
            generation_budget_ms=config.generation_budget_ms,
        )
        if config.transport == "tcp":
            from .transport_tcp import TcpCluster

            stall_plan = {
                f.worker: f.stall_on_ordinal
                for f in config.sim.fault_plan
                if f.stall_on_ordinal is not None
            }
            cluster = TcpCluster(
                problem,
                weights,
                fitness_id,
                config.sim.workers,
                config.sim.per_eval_cost_ms,
                master,
                stall_plan,
            )
            try:
                ga_result = ga.run(problem, config.ga, cluster)
            finally:
                cluster.close()
        else:
            cluster = SimCluster(problem, weights, fitness_id, config.sim, master)
            ga_result = ga.run(problem, config.ga, cluster)
        best = master.best_solution()
        decisions_logged = decision_store.next_sequence_no - 1
        records_written = result_store.next_record_id - 1
    finally:
        result_store.close()
        decision_store.close()

    rows = tuple(
        GenerationMetrics(
            generation=stats.generation,
            best_fitness=stats.best_fitness,
            mean_fitness=stats.mean_fitness,
            jobs_dispatched=batch.jobs_dispatched,
            jobs_reassigned=batch.jobs_reassigned,
            resumes=batch.resumes,
            suspends=batch.suspends,
            makespan_ms=batch.makespan_ms,
        )
        for stats, batch in zip(ga_result.history, cluster.batch_stats)
    )
    # Wall-clock runs compare against the zero-latency serial cost model;
    # simulated runs replay the exact single-worker latency draws.
    baseline_sim = (
        config.sim
        if config.transport == "sim"
        else replace(config.sim, latency_ms=(0, 0), fault_plan=())
    )
    summary = build_summary(
        run_id=run_id,
        problem=config.problem,
        workers=config.sim.workers,
        population_size=config.ga.population_size,
        generations=config.ga.generations,
        total_sim_time_ms=cluster.total_sim_time_ms,
        baseline_ms=one_worker_baseline_ms(
            config.ga.generations, config.ga.population_size, baseline_sim
        ),
        decisions_logged=decisions_logged,
        records_written=records_written,
        best=best,
    )
    metrics = RunMetrics(rows=rows, summary=summary)
    emit_metrics(metrics, out_dir / METRICS_FILENAME)
    write_run_metadata(
        out_dir / RUN_FILENAME,
        {
            "run_id": run_id,
            "problem": config.problem,
            "fitness_id": fitness_id,
            "transport": config.transport,
            "ga": asdict(config.ga),
            "sim": asdict(config.sim),
            "job_timeout_ms": config.job_timeout_ms,
            "generation_budget_ms": config.generation_budget_ms,
            "rules": {"revision": rules.revision, "rules": rules.to_list()},
        },
    )
    _write_learner(out_dir / LEARNER_FILENAME, out_dir / DECISIONS_FILENAME)
    logger.info("run %s complete: %s", run_id, summary["best"]["fitness"])
    return RunOutcome(run_id=run_id, out_dir=out_dir, metrics=metrics, best=best)


def build_summary(
    *,
    run_id: str,
    problem: str,
    workers: int,
    population_size: int,
    generations: int,
    total_sim_time_ms: int,
    baseline_ms: int,
    decisions_logged: int,
    records_written: int,
    best: Individual,
) -> dict:
    """The run summary, built identically by the run and by ``report``."""
    if total_sim_time_ms > 0:
        speedup = baseline_ms / total_sim_time_ms
    else:
        speedup = 1.0
    return {
        "run_id": run_id,
        "problem": problem,
        "workers": workers,
        "population_size": population_size,
        "generations": generations,
        "total_sim_time_ms": total_sim_time_ms,
        "speedup_vs_one_worker": speedup,
        "decisions_logged": decisions_logged,
        "records_written": records_written,
        "best": {
            "genome": list(best.genome),
            "fitness": best.fitness,
            "feasible": best.feasible,
            "violation": best.violation,
            "generation": best.birth_generation,
        },
    }


def emit_metrics(metrics: RunMetrics, path: str | Path) -> None:
    """Write the per-generation CSV and the sibling summary.json."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRICS_HEADER.split(","))
            for row in metrics.rows:
                writer.writerow(
                    [
                        row.generation,
                        row.best_fitness,
                        row.mean_fitness,
                        row.jobs_dispatched,
                        row.jobs_reassigned,
                        row.resumes,
                        row.suspends,
                        row.makespan_ms,
                    ]
                )
        summary_path = path.parent / SUMMARY_FILENAME
        summary_path.write_text(
            json.dumps(metrics.summary, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise StorageError(f"cannot write metrics to {path}: {exc}") from exc


def _write_learner(path: Path, decisions_path: Path) -> None:
    """Persist how often each rule fired: the hook a future learner reads."""
    fires = Counter(entry.rule_id for entry in read_decisions(decisions_path))
    payload = {"rule_fires": {rule_id: fires[rule_id] for rule_id in sorted(fires)}}
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def bench(
    config: ExperimentConfig, sweep: list[int], out_dir: str | Path
) -> list[dict]:
    """Repeat the run across worker counts; emit a speedup table.

    Each sweep entry runs in its own subdirectory; the table lands in
    ``bench.csv`` with one row per worker count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = []
    for workers in sweep:
        sub = replace(config, sim=replace(config.sim, workers=workers))
        outcome = run_experiment(sub, out_dir / f"workers-{workers}")
        summary = outcome.metrics.summary
        table.append(
            {
                "workers": workers,
                "total_sim_time_ms": summary["total_sim_time_ms"],
                "speedup_vs_one_worker": summary["speedup_vs_one_worker"],
            }
        )
    try:
        with open(out_dir / "bench.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["workers", "total_sim_time_ms", "speedup_vs_one_worker"])
            for row in table:
                writer.writerow(
                    [row["workers"], row["total_sim_time_ms"], row["speedup_vs_one_worker"]]
                )
    except OSError as exc:
        raise StorageError(f"cannot write bench table: {exc}") from exc
    return table


def rebuild_summary(out_dir: str | Path) -> dict:
    """Recompute the run summary from the persisted files alone.

    Uses run.json for configuration, results.jsonl for records and the best
    individual, decisions.jsonl for the decision count, and metrics.csv for
    simulated time; never summary.json itself.
    """
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / RUN_FILENAME).read_text(encoding="utf-8"))
    records = read_results(out_dir / RESULTS_FILENAME)
    decisions = read_decisions(out_dir / DECISIONS_FILENAME)
    # The run ends at the final acceptance, which stamped the last records.
    total = max(record.sim_time_ms for record in records) if records else 0

    best_record = None
    best_key = None
    # Records land in acceptance order; the tie-break contract wants
    # (generation, job, genome index) order.  Within one job, record ids
    # follow genome order, so this sort restores it.
    for record in sorted(records, key=lambda r: (r.generation, r.job_id, r.record_id)):
        key = (0, record.fitness) if record.feasible else (1, record.violation)
        if best_key is None or key < best_key:
            best_key = key
            best_record = record
    if best_record is None:
        raise StorageError(f"no records found under {out_dir}")
    best = Individual(
        genome=best_record.genome,
        objectives=best_record.objectives,
        fitness=best_record.fitness,
        feasible=best_record.feasible,
        violation=best_record.violation,
        birth_generation=best_record.generation,
    )
    sim = meta["sim"]
    latency = (0, 0) if meta.get("transport") == "tcp" else tuple(sim["latency_ms"])
    sim_config = SimConfig(
        workers=int(sim["workers"]),
        per_eval_cost_ms=int(sim["per_eval_cost_ms"]),
        latency_ms=latency,
        fault_plan=(),
        sim_seed=int(sim["sim_seed"]),
    )
    return build_summary(
        run_id=meta["run_id"],
        problem=meta["problem"],
        workers=sim_config.workers,
        population_size=int(meta["ga"]["population_size"]),
        generations=int(meta["ga"]["generations"]),
        total_sim_time_ms=total,
        baseline_ms=one_worker_baseline_ms(
            int(meta["ga"]["generations"]),
            int(meta["ga"]["population_size"]),
            sim_config,
        ),
        decisions_logged=len(decisions),
        records_written=len(records),
        best=best,
    )
