"""End-to-end guarantees of the whole stack, one test per criterion.

Each test prints a single ``criterion NN PASS/FAIL`` verdict line (visible
with ``pytest -rA`` or on failure) and asserts it, so ``pytest -v`` yields
one pass/fail line per criterion.
"""

from __future__ import annotations

import json
import random
import statistics
import time
from collections import Counter, defaultdict

import pytest

from galoadshed import ga
from galoadshed.distribution import ACCEPTED
from galoadshed.errors import AllWorkersSuspendedError, OverConstrainedError
from galoadshed.experiment import (
    ExperimentConfig,
    bench,
    rebuild_summary,
    run_experiment,
)
from galoadshed.ga import GaConfig, LocalEvaluator
from galoadshed.moo import (
    Problem,
    builtin_problem,
    check_feasibility,
    degrees_of_freedom,
    evaluate_objectives,
    fitness_value,
)
from galoadshed.persistence import (
    DecisionStore,
    ResultStore,
    read_decisions,
    read_results,
)
from galoadshed.reasoning import ACTIONS, Decision, FixedRules, Trigger, replay_log
from galoadshed.report import report, write_summary_check
from galoadshed.simulation import FaultSpec, SimCluster, SimConfig, worker_name
from helpers import make_master


def _verdict(number: int, ok: bool, detail: str) -> None:
    print(f"criterion {number:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {number:02d}: {detail}"


def test_criterion_01_worker_count_invariance(tmp_path):
    t0 = time.perf_counter()
    bests = []
    multisets = []
    for k in (1, 2, 4, 8):
        out_dir = tmp_path / f"k{k}"
        outcome = run_experiment(
            ExperimentConfig(
                problem="sphere-5",
                ga=GaConfig(population_size=40, generations=5, elitism_count=1, seed=42),
                sim=SimConfig(workers=k, sim_seed=7),
            ),
            out_dir,
        )
        bests.append((outcome.best.genome, outcome.best.fitness))
        multisets.append(
            Counter(r.fitness for r in read_results(out_dir / "results.jsonl"))
        )
    elapsed = time.perf_counter() - t0
    ok = (
        all(b == bests[0] for b in bests)
        and all(m == multisets[0] for m in multisets)
        and bests[0][1] == 4.120733919416471
        and elapsed < 5.0
    )
    _verdict(
        1,
        ok,
        f"best fitness {bests[0][1]!r} identical for workers 1/2/4/8, "
        f"fitness multisets identical ({sum(multisets[0].values())} records each), "
        f"{elapsed:.2f}s",
    )


def test_criterion_02_exactly_once_under_faults():
    t0 = time.perf_counter()
    rng = random.Random(0xC2)
    problem = builtin_problem("sphere-3")
    population, generations = 20, 3
    completed = failed = 0
    for _ in range(1000):
        workers = rng.randint(2, 5)
        cost = rng.randint(2, 20)
        lo = rng.randint(0, 5)
        hi = rng.randint(lo, 10)
        wids = [worker_name(i) for i in range(1, workers + 1)]
        victims = rng.sample(wids, rng.randint(0, 3) if workers >= 3 else rng.randint(0, workers))
        plan = []
        for wid in victims:
            if rng.random() < 0.5:
                plan.append(FaultSpec(worker=wid, stall_on_ordinal=rng.randint(1, 4)))
            else:
                plan.append(
                    FaultSpec(worker=wid, stall_at_ms=rng.randint(1, 3 * population * cost))
                )
        sim = SimConfig(
            workers=workers,
            per_eval_cost_ms=cost,
            latency_ms=(lo, hi),
            fault_plan=tuple(plan),
            sim_seed=rng.randrange(2**32),
        )
        config = GaConfig(
            population_size=population, generations=generations, seed=rng.randrange(2**32)
        )
        h = make_master()
        cluster = SimCluster(problem, (1.0,), "scalar-direct", sim, h.master)
        try:
            ga.run(problem, config, cluster)
        except AllWorkersSuspendedError:
            failed += 1
            # a run may die only when every worker was set up to stall
            assert {f.worker for f in plan} == set(wids)
            continue
        completed += 1
        assert len(h.results.records) == population * (generations + 1)
        table = h.master.table
        assert set(table.state.values()) == {ACCEPTED}
        assert sorted(table.accepted) == sorted(table.jobs)
        per_job = defaultdict(set)
        counts = Counter()
        for record in h.results.records:
            per_job[record.job_id].add(record.attempt)
            counts[record.job_id] += 1
        for job_id, attempts in per_job.items():
            assert len(attempts) == 1, f"{job_id} accepted under {len(attempts)} attempts"
            assert counts[job_id] == len(table.jobs[job_id].genomes)
    elapsed = time.perf_counter() - t0
    ok = completed + failed == 1000 and completed > 0 and failed > 0 and elapsed < 60.0
    _verdict(
        2,
        ok,
        f"1000 randomized schedules: {completed} completed exactly-once, "
        f"{failed} died with every worker stalled, {elapsed:.1f}s",
    )


def test_criterion_03_elitism_keeps_best_monotone():
    problem = builtin_problem("sphere-5")
    evaluator = LocalEvaluator(problem, (1.0,), "scalar-direct")
    violations = 0
    for seed in range(20):
        result = ga.run(
            problem, GaConfig(population_size=50, generations=100, seed=seed), evaluator
        )
        best = [s.best_fitness for s in result.history]
        violations += sum(1 for a, b in zip(best, best[1:]) if b > a)
    _verdict(
        3,
        violations == 0,
        f"20 seeds x 100 generations: {violations} increases in per-generation best",
    )


def test_criterion_04_convergence_on_sphere():
    t0 = time.perf_counter()
    problem = builtin_problem("sphere-5")
    evaluator = LocalEvaluator(problem, (1.0,), "scalar-direct")
    finals = [
        ga.run(
            problem, GaConfig(population_size=50, generations=200, seed=seed), evaluator
        ).best.fitness
        for seed in range(20)
    ]
    median = statistics.median(finals)
    elapsed = time.perf_counter() - t0
    ok = median <= 1e-2 and elapsed < 30.0
    _verdict(4, ok, f"20-seed median best fitness {median:.3g} <= 1e-2, {elapsed:.1f}s")


def test_criterion_05_weighted_sum_matches_brute_force():
    problem = builtin_problem("constrained-box")
    grid = [i * 0.3 for i in range(11)]
    genomes = [(x1, x2) for x1 in grid for x2 in grid]
    rng = random.Random(123)
    mismatches = 0
    for _ in range(10):
        weights = (rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))
        h = make_master()
        cluster = SimCluster(
            problem, weights, "weighted-sum-feasibility", SimConfig(workers=4, sim_seed=0), h.master
        )
        cluster.evaluate(genomes, 0)
        best = h.master.best_solution()
        expected_key = expected = None
        for genome in genomes:
            objectives = evaluate_objectives(problem, genome)
            fitness = fitness_value("weighted-sum-feasibility", weights, objectives)
            feasibility = check_feasibility(problem, genome)
            key = (
                (0, fitness) if feasibility.feasible else (1, feasibility.total_violation)
            )
            if expected_key is None or key < expected_key:
                expected_key, expected = key, (genome, fitness)
        if (best.genome, best.fitness) != expected:
            mismatches += 1
    _verdict(
        5,
        mismatches == 0,
        f"10 weight vectors on the 11x11 grid: {mismatches} disagreements with "
        "the exhaustive argmin",
    )


def test_criterion_06_over_constrained_guard():
    failures = []
    for n_vars, n_eq in ((3, 3), (2, 5)):
        with pytest.raises(OverConstrainedError):
            degrees_of_freedom(n_vars, n_eq)
        with pytest.raises(OverConstrainedError):
            Problem(
                name="overdone",
                n_vars=n_vars,
                bounds=((0.0, 1.0),) * n_vars,
                objectives=(lambda x: x[0],),
                equality_constraints=tuple(
                    (lambda x: x[0]) for _ in range(n_eq)
                ),
            )
    dof = degrees_of_freedom(5, 2)
    if dof != 3:
        failures.append(f"dof(5,2) = {dof}")
    _verdict(
        6,
        not failures,
        "3 eq over 3 vars and 5 eq over 2 vars both rejected; dof(5,2) = 3",
    )


def test_criterion_07_load_relief_law(tmp_path):
    ga_config = GaConfig(population_size=40, generations=3, seed=11)
    makespans = {}
    for k in (1, 4):
        outcome = run_experiment(
            ExperimentConfig(
                problem="sphere-5",
                ga=ga_config,
                sim=SimConfig(
                    workers=k, per_eval_cost_ms=100, latency_ms=(0, 0), sim_seed=2
                ),
            ),
            tmp_path / f"exact-k{k}",
        )
        makespans[k] = [row.makespan_ms for row in outcome.metrics.rows]
    exact_ok = all(m == 4000 for m in makespans[1]) and all(
        m == 1000 for m in makespans[4]
    )

    table = bench(
        ExperimentConfig(
            problem="sphere-5",
            ga=ga_config,
            sim=SimConfig(workers=1, per_eval_cost_ms=100, latency_ms=(1, 5), sim_seed=2),
        ),
        [1, 4],
        tmp_path / "bench",
    )
    speedup = {row["workers"]: row["speedup_vs_one_worker"] for row in table}
    total = {row["workers"]: row["total_sim_time_ms"] for row in table}
    sweep_ok = (
        speedup[1] == 1.0
        and speedup[4] >= 10 / 3
        and total[4] <= 0.3 * total[1]
    )
    _verdict(
        7,
        exact_ok and sweep_ok,
        f"zero-latency makespans {sorted(set(makespans[1]))}/{sorted(set(makespans[4]))} ms "
        f"at k=1/k=4; default-latency speedup {speedup[4]:.2f}x at k=4",
    )


def test_criterion_08_watchdog_resume_then_suspend():
    problem = builtin_problem("sphere-5")
    h = make_master()
    cluster = SimCluster(
        problem,
        (1.0,),
        "scalar-direct",
        SimConfig(
            workers=3,
            per_eval_cost_ms=10,
            latency_ms=(1, 5),
            fault_plan=(FaultSpec(worker="w002", stall_on_ordinal=1),),
            sim_seed=6,
        ),
        h.master,
    )
    ga.run(problem, GaConfig(population_size=20, generations=3, seed=5), cluster)
    overdue_actions = [
        entry.decision.action
        for entry in h.log.entries
        if entry.trigger.kind == "job-overdue"
        and entry.trigger.attributes.get("worker") == "w002"
    ]
    resumes = sum(s.resumes for s in cluster.batch_stats)
    suspends = sum(s.suspends for s in cluster.batch_stats)
    reassigned = sum(s.jobs_reassigned for s in cluster.batch_stats)
    ok = (
        overdue_actions == ["resume", "suspend-reassign"]
        and (resumes, suspends, reassigned) == (1, 1, 1)
        and len(h.results.records) == 80
    )
    _verdict(
        8,
        ok,
        f"stalled worker got {overdue_actions}; {suspends} suspend for 1 injected "
        f"stall; all 80 records accepted",
    )


def test_criterion_09_audit_log_replays(tmp_path):
    run_experiment(
        ExperimentConfig(
            problem="sphere-3",
            ga=GaConfig(population_size=12, generations=2, seed=7),
            sim=SimConfig(
                workers=2,
                per_eval_cost_ms=10,
                fault_plan=(FaultSpec(worker="w002", stall_on_ordinal=1),),
                sim_seed=3,
            ),
        ),
        tmp_path,
    )
    entries = read_decisions(tmp_path / "decisions.jsonl")
    meta = json.loads((tmp_path / "run.json").read_text())
    rules = FixedRules.from_list(meta["rules"]["rules"], revision=meta["rules"]["revision"])
    mismatches = replay_log(rules, entries)
    triples_ok = all(
        isinstance(e.trigger, Trigger)
        and e.rule_id
        and isinstance(e.decision, Decision)
        and e.decision.action in ACTIONS
        for e in entries
    )
    sequence_ok = [e.sequence_no for e in entries] == list(range(1, len(entries) + 1))
    ok = mismatches == [] and triples_ok and sequence_ok and len(entries) > 0
    _verdict(
        9,
        ok,
        f"{len(entries)} trigger-rule-decision entries replay with "
        f"{len(mismatches)} mismatches under recorded revision {rules.revision}",
    )


def test_criterion_10_persistence_round_trip(tmp_path):
    population, generations = 10, 3
    run_experiment(
        ExperimentConfig(
            problem="sphere-3",
            ga=GaConfig(population_size=population, generations=generations, seed=8),
            sim=SimConfig(workers=2, per_eval_cost_ms=5, sim_seed=1),
        ),
        tmp_path,
    )
    expected = population * (generations + 1)

    with ResultStore(tmp_path / "results.jsonl") as store:
        next_id = store.next_record_id
    records = read_results(tmp_path / "results.jsonl")
    ids_ok = [r.record_id for r in records] == list(range(1, expected + 1))

    with DecisionStore(tmp_path / "decisions.jsonl") as log:
        decisions_next = log.next_sequence_no
    decisions = read_decisions(tmp_path / "decisions.jsonl")

    stored_summary = json.loads((tmp_path / "summary.json").read_text())
    text = report(tmp_path, figures=False)
    ok = (
        next_id == expected + 1
        and ids_ok
        and decisions_next == len(decisions) + 1
        and rebuild_summary(tmp_path) == stored_summary
        and write_summary_check(tmp_path) is True
        and f"records      {expected}" in text
    )
    _verdict(
        10,
        ok,
        f"reopened store continues at id {next_id} after {expected} gap-free records; "
        "summary rebuilt from files matches the stored one",
    )
