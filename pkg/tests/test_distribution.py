"""Master/worker distribution: partitioning, the job table, scheduling,
watchdog recovery, exactly-once collection."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from galoadshed.distribution import (
    JobTable,
    Job,
    JobResult,
    WorkerNode,
    compute_results,
    decode_message,
    encode_message,
    partition_population,
)
from galoadshed.errors import (
    AllWorkersSuspendedError,
    DuplicateJobIdError,
    NoResultsError,
    NonFiniteObjectiveError,
    ProtocolError,
)
from galoadshed.ga import LocalEvaluator
from galoadshed.moo import Problem, builtin_problem
from helpers import make_master

SPHERE2 = builtin_problem("sphere-2")
WEIGHTS = (1.0,)


def _genomes(n):
    return [(float(i), float(-i)) for i in range(n)]


def _reply(assign, worker_id, problem=SPHERE2, weights=WEIGHTS):
    return WorkerNode(worker_id, problem, weights).do_job(assign)


# --- wire protocol -----------------------------------------------------------


def test_message_round_trip():
    msg = {"type": "REGISTER", "worker_id": "w001"}
    assert decode_message(encode_message(msg)) == msg


def test_decode_rejects_garbage_and_unknown_types():
    with pytest.raises(ProtocolError):
        decode_message("{not json")
    with pytest.raises(ProtocolError):
        decode_message('{"type": "EXPLODE"}')
    with pytest.raises(ProtocolError):
        decode_message('"just a string"')


def test_decode_ignores_unknown_fields():
    msg = decode_message('{"type": "HEARTBEAT", "worker_id": "w001", "shiny": 1}')
    assert msg["type"] == "HEARTBEAT"


# --- partitioning ------------------------------------------------------------


def test_partition_examples():
    genomes = _genomes(10)
    assert [len(s) for s in partition_population(genomes, 4)] == [3, 3, 2, 2]
    assert [len(s) for s in partition_population(genomes, 1)] == [10]
    assert len(partition_population(_genomes(3), 8)) == 3
    with pytest.raises(ValueError):
        partition_population([], 2)
    with pytest.raises(ValueError):
        partition_population(genomes, 0)


@given(n=st.integers(1, 60), k=st.integers(1, 10))
def test_partition_properties(n, k):
    genomes = [(float(i),) for i in range(n)]
    slices = partition_population(genomes, k)
    sizes = [len(s) for s in slices]
    assert len(slices) == min(k, n)
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)  # earlier slices take the remainder
    assert [g for s in slices for g in s] == genomes


# --- job table ---------------------------------------------------------------


def _job(job_id="j000001", attempt=1):
    return Job(
        job_id=job_id,
        generation=0,
        slice_index=0,
        genomes=((1.0, 2.0),),
        fitness_id="scalar-direct",
        attempt=attempt,
    )


def _result(job_id="j000001", attempt=1, worker_id="w001"):
    assign = {
        "job_id": job_id,
        "attempt": attempt,
        "generation": 0,
        "fitness_id": "scalar-direct",
        "genomes": [[1.0, 2.0]],
    }
    return JobResult.from_message(_reply(assign, worker_id))


def test_job_table_lifecycle():
    table = JobTable()
    table.enqueue(_job())
    with pytest.raises(DuplicateJobIdError):
        table.enqueue(_job())
    assert table.next_queued() == "j000001"
    job = table.mark_dispatched("j000001", deadline_ms=100)
    assert job.deadline_ms == 100
    with pytest.raises(RuntimeError):
        table.mark_dispatched("j000001", deadline_ms=200)
    result = _result()
    assert table.is_fresh(result)
    table.accept(result)
    assert table.next_queued() is None
    with pytest.raises(RuntimeError):
        table.accept(result)  # only one acceptance, ever


def test_job_table_requeue_bumps_attempt_and_rejects_stale():
    table = JobTable()
    table.enqueue(_job())
    table.mark_dispatched("j000001", deadline_ms=100)
    retry = table.cancel_and_requeue("j000001")
    assert retry.attempt == 2
    assert retry.deadline_ms == 0
    assert table.next_queued() == "j000001"
    table.mark_dispatched("j000001", deadline_ms=300)
    stale = _result(attempt=1)
    assert not table.is_fresh(stale)
    with pytest.raises(RuntimeError):
        table.accept(stale)
    fresh = _result(attempt=2, worker_id="w002")
    assert table.is_fresh(fresh)
    table.accept(fresh)
    with pytest.raises(RuntimeError):
        table.cancel_and_requeue("j000001")


def test_job_validation():
    with pytest.raises(ValueError):
        Job(job_id="j1", generation=0, slice_index=0, genomes=(), fitness_id="x")
    with pytest.raises(ValueError):
        _job(attempt=0)


# --- workers -----------------------------------------------------------------


def test_compute_results_and_do_job_agree_with_local_evaluator():
    genomes = _genomes(4)
    direct = compute_results(SPHERE2, WEIGHTS, "scalar-direct", genomes)
    local = LocalEvaluator(SPHERE2, WEIGHTS, "scalar-direct").evaluate(genomes, 0)
    assert [(r.objectives, r.fitness, r.feasible, r.violation) for r in direct] == [
        (e.objectives, e.fitness, e.feasible, e.violation) for e in local
    ]
    assign = {
        "job_id": "j000009",
        "attempt": 3,
        "generation": 2,
        "fitness_id": "scalar-direct",
        "genomes": [list(g) for g in genomes],
    }
    reply = _reply(assign, "w007")
    assert reply["type"] == "JOB_RESULT"
    assert (reply["job_id"], reply["attempt"], reply["worker_id"]) == ("j000009", 3, "w007")
    assert [r["fitness"] for r in reply["results"]] == [e.fitness for e in local]


def test_compute_results_propagates_non_finite():
    bad = Problem(
        name="t", n_vars=1, bounds=((0.0, 1.0),), objectives=(lambda x: float("inf"),)
    )
    with pytest.raises(NonFiniteObjectiveError):
        compute_results(bad, (1.0,), "scalar-direct", [(0.5,)])


# --- master scheduling -------------------------------------------------------


def test_begin_batch_dispatches_to_lowest_ids_first():
    h = make_master()
    for wid in ("w003", "w001", "w002"):
        h.master.register_worker(wid)
    envelopes = h.master.begin_batch(_genomes(6), 0, "scalar-direct", 0, 10)
    assert [wid for wid, _ in envelopes] == ["w001", "w002", "w003"]
    assert [msg["job_id"] for _, msg in envelopes] == ["j000001", "j000002", "j000003"]
    assert all(msg["type"] == "JOB_ASSIGN" and msg["attempt"] == 1 for _, msg in envelopes)
    # routing is connection-level: assignments carry no worker id
    assert all("worker_id" not in msg for _, msg in envelopes)


def test_collect_realigns_results_to_input_order():
    h = make_master()
    h.master.register_worker("w001")
    h.master.register_worker("w002")
    genomes = _genomes(6)
    envelopes = h.master.begin_batch(genomes, 0, "scalar-direct", 0, 10)
    replies = {wid: _reply(msg, wid) for wid, msg in envelopes}
    assert h.master.handle_message(replies["w002"], 40) == []
    assert not h.master.batch_done()
    h.master.handle_message(replies["w001"], 55)
    assert h.master.batch_done()
    evaluations = h.master.collect_batch()
    expected = LocalEvaluator(SPHERE2, WEIGHTS, "scalar-direct").evaluate(genomes, 0)
    assert evaluations == expected
    assert h.master.stats.completed_at_ms == 55
    assert h.master.stats.makespan_ms == 55
    # accepted records carry the master's acceptance times
    assert sorted({r.sim_time_ms for r in h.results.records}) == [40, 55]
    assert len(h.results.records) == 6


def test_duplicate_result_rejected_and_logged():
    h = make_master()
    h.master.register_worker("w001")
    envelopes = h.master.begin_batch(_genomes(2), 0, "scalar-direct", 0, 10)
    reply = _reply(envelopes[0][1], "w001")
    h.master.handle_message(reply, 20)
    assert len(h.results.records) == 2
    assert h.master.handle_message(reply, 25) == []
    assert len(h.results.records) == 2  # nothing double-counted
    last = h.log.entries[-1]
    assert last.decision.action == "reject-duplicate"
    assert last.trigger.attributes["fresh"] == "false"


def test_batch_lifecycle_errors():
    h = make_master()
    h.master.register_worker("w001")
    h.master.begin_batch(_genomes(2), 0, "scalar-direct", 0, 10)
    with pytest.raises(RuntimeError):
        h.master.begin_batch(_genomes(2), 1, "scalar-direct", 0, 10)
    with pytest.raises(RuntimeError):
        h.master.collect_batch()


def test_begin_batch_requires_active_workers():
    h = make_master()
    h.master.register_worker("w001")
    h.master.workers["w001"].status = "suspended"
    with pytest.raises(AllWorkersSuspendedError):
        h.master.begin_batch(_genomes(2), 0, "scalar-direct", 0, 10)


def test_handle_message_register_heartbeat_and_unknown():
    h = make_master()
    assert h.master.handle_message({"type": "REGISTER", "worker_id": "w009"}, 0) == []
    assert "w009" in h.master.workers
    assert h.master.handle_message({"type": "HEARTBEAT", "worker_id": "w009"}, 1) == []
    with pytest.raises(ProtocolError):
        h.master.handle_message({"type": "SUSPEND", "worker_id": "w009"}, 2)


def test_job_ids_monotonic_across_batches():
    h = make_master()
    h.master.register_worker("w001")
    for generation in range(3):
        envelopes = h.master.begin_batch(_genomes(2), generation, "scalar-direct", 0, 1)
        h.master.handle_message(_reply(envelopes[0][1], "w001"), 5)
        h.master.collect_batch()
    assert sorted(h.master.table.jobs) == ["j000001", "j000002", "j000003"]


# --- watchdog ----------------------------------------------------------------


def test_watchdog_resume_then_suspend_reassign():
    h = make_master(job_timeout_ms=100, generation_budget_ms=10_000)
    h.master.register_worker("w001")
    h.master.register_worker("w002")
    envelopes = h.master.begin_batch(_genomes(4), 0, "scalar-direct", 0, 1000)
    assigns = dict(envelopes)

    assert h.master.on_watchdog_tick(50) == []  # nobody overdue yet

    resumed = h.master.on_watchdog_tick(101)
    assert [(wid, msg["type"]) for wid, msg in resumed] == [
        ("w001", "RESUME"),
        ("w002", "RESUME"),
    ]
    assert all(msg["new_deadline_ms"] == 200 for _, msg in resumed)
    assert h.master.stats.resumes == 2

    # w002 answers inside its extension; w001 stays silent
    h.master.handle_message(_reply(assigns["w002"], "w002"), 150)

    recovered = h.master.on_watchdog_tick(201)
    assert [(wid, msg["type"]) for wid, msg in recovered] == [
        ("w001", "SUSPEND"),
        ("w002", "JOB_ASSIGN"),
    ]
    reassigned = recovered[1][1]
    assert reassigned["job_id"] == assigns["w001"]["job_id"]
    assert reassigned["attempt"] == 2
    assert h.master.workers["w001"].status == "suspended"
    assert h.master.stats.suspends == 1
    assert h.master.stats.jobs_reassigned == 1

    # the stalled worker's stale attempt-1 answer is rejected...
    assert h.master.handle_message(_reply(assigns["w001"], "w001"), 210) == []
    assert h.log.entries[-1].decision.action == "reject-duplicate"
    assert not h.master.batch_done()
    # ...and the reassigned attempt-2 answer completes the batch
    h.master.handle_message(_reply(reassigned, "w002"), 260)
    assert h.master.batch_done()
    evaluations = h.master.collect_batch()
    expected = LocalEvaluator(SPHERE2, WEIGHTS, "scalar-direct").evaluate(_genomes(4), 0)
    assert evaluations == expected
    assert len(h.results.records) == 4


def test_watchdog_budget_exhaustion_skips_the_extension():
    h = make_master(job_timeout_ms=10, generation_budget_ms=15)
    h.master.register_worker("w001")
    h.master.register_worker("w002")
    h.master.begin_batch(_genomes(4), 0, "scalar-direct", 0, 1000)
    # elapsed 11 + timeout 10 > budget 15: straight to suspension for both,
    # and with no active worker left the batch cannot finish
    with pytest.raises(AllWorkersSuspendedError):
        h.master.on_watchdog_tick(11)
    assert h.master.stats.resumes == 0
    assert h.master.stats.suspends == 2


def test_watchdog_all_workers_suspended_raises():
    h = make_master(job_timeout_ms=10, generation_budget_ms=10_000)
    h.master.register_worker("w001")
    h.master.begin_batch(_genomes(2), 0, "scalar-direct", 0, 1000)
    assert [m["type"] for _, m in h.master.on_watchdog_tick(11)] == ["RESUME"]
    with pytest.raises(AllWorkersSuspendedError):
        h.master.on_watchdog_tick(21)


def test_watchdog_without_open_batch_is_a_no_op():
    h = make_master()
    h.master.register_worker("w001")
    assert h.master.on_watchdog_tick(1000) == []


# --- best solution -----------------------------------------------------------


def _synthetic_reply(assign, worker_id, per_genome):
    return {
        "type": "JOB_RESULT",
        "job_id": assign["job_id"],
        "attempt": assign["attempt"],
        "worker_id": worker_id,
        "results": [
            {
                "objectives": [fitness],
                "fitness": fitness,
                "feasible": feasible,
                "violation": violation,
            }
            for fitness, feasible, violation in per_genome
        ],
    }


def test_best_solution_prefers_feasible_over_better_scalar():
    h = make_master()
    h.master.register_worker("w001")
    h.master.register_worker("w002")
    envelopes = h.master.begin_batch(
        [(0.0, 0.0), (2.0, 2.0)], 0, "weighted-sum-feasibility", 0, 1
    )
    # job 1: infeasible with the lower scalar; job 2: feasible
    h.master.handle_message(
        _synthetic_reply(envelopes[0][1], "w001", [(0.0, False, 1.0)]), 5
    )
    h.master.handle_message(
        _synthetic_reply(envelopes[1][1], "w002", [(4.0, True, 0.0)]), 6
    )
    best = h.master.best_solution()
    assert best.feasible and best.fitness == 4.0 and best.genome == (2.0, 2.0)


def test_best_solution_tie_breaks_to_earliest_job():
    h = make_master()
    h.master.register_worker("w001")
    h.master.register_worker("w002")
    envelopes = h.master.begin_batch([(1.0, 1.0), (9.0, 9.0)], 0, "scalar-direct", 0, 1)
    h.master.handle_message(
        _synthetic_reply(envelopes[1][1], "w002", [(2.0, True, 0.0)]), 5
    )
    h.master.handle_message(
        _synthetic_reply(envelopes[0][1], "w001", [(2.0, True, 0.0)]), 6
    )
    assert h.master.best_solution().genome == (1.0, 1.0)


def test_best_solution_falls_back_to_lowest_violation():
    h = make_master()
    h.master.register_worker("w001")
    envelopes = h.master.begin_batch(
        [(0.0, 0.0), (0.5, 0.5)], 0, "weighted-sum-feasibility", 0, 1
    )
    h.master.handle_message(
        _synthetic_reply(
            envelopes[0][1], "w001", [(0.0, False, 1.0), (1.0, False, 0.25)]
        ),
        5,
    )
    best = h.master.best_solution()
    assert best.feasible is False
    assert best.violation == 0.25
    assert best.genome == (0.5, 0.5)


def test_best_solution_requires_results():
    h = make_master()
    with pytest.raises(NoResultsError):
        h.master.best_solution()
