"""Master/worker job distribution with watchdog-driven recovery.

The master owns the job table, the worker registry, and all scheduling
state; workers are stateless evaluators reached only through messages.
Time never comes from a clock here (every entry point takes ``now_ms``),
so the same master runs unchanged on a simulated or a wall clock.

Message schema (one JSON object per line when carried over a byte stream):

    {"type":"REGISTER","worker_id":string}
    {"type":"JOB_ASSIGN","job_id":string,"attempt":int,"generation":int,
     "fitness_id":string,"genomes":[[number,...],...]}
    {"type":"JOB_RESULT","job_id":string,"attempt":int,"worker_id":string,
     "results":[{"objectives":[...],"fitness":number,"feasible":bool,
                 "violation":number},...]}
    {"type":"SUSPEND","worker_id":string}
    {"type":"RESUME","job_id":string,"new_deadline_ms":int}
    {"type":"HEARTBEAT","worker_id":string,"sim_time_ms":int}

Unknown fields are ignored; an unknown type is a protocol error.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import (
    AllWorkersSuspendedError,
    DuplicateJobIdError,
    NoResultsError,
    ProtocolError,
)
from .ga import Evaluation, Individual
from .moo import (
    DecisionVector,
    Problem,
    WeightVector,
    check_feasibility,
    evaluate_objectives,
    fitness_value,
)
from .reasoning import FixedRules, Trigger, infer_and_log

logger = logging.getLogger(__name__)

MESSAGE_TYPES = frozenset(
    {"REGISTER", "JOB_ASSIGN", "JOB_RESULT", "SUSPEND", "RESUME", "HEARTBEAT"}
)

# (recipient worker_id, message); routing is connection-level, so JOB_ASSIGN
# and RESUME carry no worker_id of their own.
Envelope = tuple[str, dict]


def encode_message(msg: dict) -> str:
    return json.dumps(msg, ensure_ascii=False, separators=(",", ":"))


def decode_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("message must be a JSON object")
    if msg.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg.get('type')!r}")
    return msg


def partition_population(
    genomes: Sequence[DecisionVector], k: int
) -> list[list[DecisionVector]]:
    """Split genomes into min(k, n) contiguous slices, sizes differing by
    at most 1, earlier slices taking the remainder."""
    n = len(genomes)
    if n < 1 or k < 1:
        raise ValueError("need at least one genome and one worker")
    s = min(k, n)
    base, remainder = divmod(n, s)
    slices = []
    start = 0
    for i in range(s):
        size = base + (1 if i < remainder else 0)
        slices.append(list(genomes[start : start + size]))
        start += size
    return slices


@dataclass(frozen=True)
class GenomeResult:
    """One genome's evaluation as carried in a JOB_RESULT."""

    objectives: tuple[float, ...]
    fitness: float
    feasible: bool
    violation: float

    def to_dict(self) -> dict:
        return {
            "objectives": list(self.objectives),
            "fitness": self.fitness,
            "feasible": self.feasible,
            "violation": self.violation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GenomeResult:
        return cls(
            objectives=tuple(float(v) for v in data["objectives"]),
            fitness=float(data["fitness"]),
            feasible=bool(data["feasible"]),
            violation=float(data["violation"]),
        )


@dataclass(frozen=True)
class Job:
    """One dispatchable slice of a generation's population."""

    job_id: str
    generation: int
    slice_index: int
    genomes: tuple[DecisionVector, ...]
    fitness_id: str
    deadline_ms: int = 0
    attempt: int = 1

    def __post_init__(self) -> None:
        if not self.genomes:
            raise ValueError("job must carry at least one genome")
        if self.attempt < 1:
            raise ValueError("attempt starts at 1")


@dataclass(frozen=True)
class JobResult:
    job_id: str
    attempt: int
    worker_id: str
    results: tuple[GenomeResult, ...]
    completed_at_ms: int = 0

    @classmethod
    def from_message(cls, msg: dict, completed_at_ms: int = 0) -> JobResult:
        return cls(
            job_id=msg["job_id"],
            attempt=int(msg["attempt"]),
            worker_id=msg["worker_id"],
            results=tuple(GenomeResult.from_dict(r) for r in msg["results"]),
            completed_at_ms=completed_at_ms,
        )


@dataclass
class WorkerRecord:
    """Master-side view of one worker."""

    worker_id: str
    status: str = "idle"  # idle | busy | suspended
    current_job: str | None = None
    assigned_at_ms: int = 0
    deadline_ms: int = 0
    extensions_used: int = 0


QUEUED = "queued"
DISPATCHED = "dispatched"
ACCEPTED = "accepted"
CANCELLED = "cancelled"


class JobTable:
    """Job lifecycle ledger enforcing queued → dispatched → accepted or
    cancelled, with cancelled jobs re-queued as the next attempt.

    At most one result is ever accepted per job_id, across all attempts.
    """

    def __init__(self) -> None:
        self.jobs: dict[str, Job] = {}
        self.state: dict[str, str] = {}
        self.queue: deque[str] = deque()
        self.accepted: dict[str, JobResult] = {}

    def enqueue(self, job: Job) -> str:
        if job.job_id in self.jobs:
            raise DuplicateJobIdError(job.job_id)
        self.jobs[job.job_id] = job
        self.state[job.job_id] = QUEUED
        self.queue.append(job.job_id)
        return job.job_id

    def next_queued(self) -> str | None:
        return self.queue[0] if self.queue else None

    def mark_dispatched(self, job_id: str, deadline_ms: int) -> Job:
        if self.state.get(job_id) != QUEUED:
            raise RuntimeError(f"cannot dispatch job in state {self.state.get(job_id)}")
        self.queue.remove(job_id)
        job = replace(self.jobs[job_id], deadline_ms=deadline_ms)
        self.jobs[job_id] = job
        self.state[job_id] = DISPATCHED
        return job

    def is_fresh(self, result: JobResult) -> bool:
        """True iff the result is for the live attempt of a dispatched job."""
        return (
            self.state.get(result.job_id) == DISPATCHED
            and result.attempt == self.jobs[result.job_id].attempt
        )

    def accept(self, result: JobResult) -> Job:
        if not self.is_fresh(result):
            raise RuntimeError(f"cannot accept result for job {result.job_id}")
        if result.job_id in self.accepted:
            raise RuntimeError(f"job {result.job_id} already has an accepted result")
        self.state[result.job_id] = ACCEPTED
        self.accepted[result.job_id] = result
        return self.jobs[result.job_id]

    def cancel_and_requeue(self, job_id: str) -> Job:
        """Cancel a dispatched job and queue its next attempt (same job_id)."""
        if self.state.get(job_id) != DISPATCHED:
            raise RuntimeError(f"cannot cancel job in state {self.state.get(job_id)}")
        self.state[job_id] = CANCELLED
        retry = replace(self.jobs[job_id], attempt=self.jobs[job_id].attempt + 1, deadline_ms=0)
        self.jobs[job_id] = retry
        self.state[job_id] = QUEUED
        self.queue.append(job_id)
        return retry

    def extend_deadline(self, job_id: str, new_deadline_ms: int) -> Job:
        job = replace(self.jobs[job_id], deadline_ms=new_deadline_ms)
        self.jobs[job_id] = job
        return job


def compute_results(
    problem: Problem,
    weights: WeightVector,
    fitness_id: str,
    genomes: Sequence[DecisionVector],
) -> list[GenomeResult]:
    """Evaluate a batch of genomes; pure given (problem, weights, genomes)."""
    out = []
    for genome in genomes:
        objectives = evaluate_objectives(problem, tuple(genome))
        fitness = fitness_value(fitness_id, weights, objectives)
        report = check_feasibility(problem, tuple(genome))
        out.append(
            GenomeResult(
                objectives=objectives,
                fitness=fitness,
                feasible=report.feasible,
                violation=report.total_violation,
            )
        )
    return out


class WorkerNode:
    """Stateless evaluator; owns no scheduling state beyond its identity."""

    def __init__(self, worker_id: str, problem: Problem, weights: WeightVector):
        self.worker_id = worker_id
        self.problem = problem
        self.weights = tuple(weights)

    def register_message(self) -> dict:
        return {"type": "REGISTER", "worker_id": self.worker_id}

    def do_job(self, assign: dict) -> dict:
        """Evaluate a JOB_ASSIGN payload into a JOB_RESULT message.

        Evaluation errors propagate to the caller: under the simulated and
        socket transports a failed worker simply never answers, and the
        master's deadline machinery recovers the job.
        """
        results = compute_results(
            self.problem,
            self.weights,
            assign["fitness_id"],
            [tuple(g) for g in assign["genomes"]],
        )
        return {
            "type": "JOB_RESULT",
            "job_id": assign["job_id"],
            "attempt": assign["attempt"],
            "worker_id": self.worker_id,
            "results": [r.to_dict() for r in results],
        }


@dataclass
class _BatchState:
    generation: int
    job_ids: tuple[str, ...]  # in slice order
    start_ms: int
    job_timeout_ms: int
    generation_budget_ms: int


@dataclass
class BatchStats:
    """Counters for one generation's distribution round."""

    generation: int
    jobs_dispatched: int = 0
    jobs_reassigned: int = 0
    resumes: int = 0
    suspends: int = 0
    completed_at_ms: int = 0
    start_ms: int = 0

    @property
    def makespan_ms(self) -> int:
        return self.completed_at_ms - self.start_ms


class MasterNode:
    """Single-owner scheduler: partitions generations into jobs, dispatches
    to idle workers, adjudicates overdue and duplicate events through the
    rule engine, and persists accepted records.

    Every public method takes the current time and returns the outbound
    envelopes it produced; the transport delivers them.
    """

    def __init__(
        self,
        run_id: str,
        rules: FixedRules,
        decision_log,
        result_store=None,
        job_timeout_ms: int | None = None,
        generation_budget_ms: int | None = None,
    ):
        self.run_id = run_id
        self.rules = rules
        self.decision_log = decision_log
        self.result_store = result_store
        self._timeout_override = job_timeout_ms
        self._budget_override = generation_budget_ms
        self.workers: dict[str, WorkerRecord] = {}
        self.table = JobTable()
        self.batch: _BatchState | None = None
        self.stats: BatchStats | None = None
        self._job_seq = 0

    # -- registry ----------------------------------------------------------

    def register_worker(self, worker_id: str) -> None:
        if worker_id not in self.workers:
            self.workers[worker_id] = WorkerRecord(worker_id=worker_id)

    def active_worker_count(self) -> int:
        return sum(1 for w in self.workers.values() if w.status != "suspended")

    def _sorted_workers(self) -> list[WorkerRecord]:
        return [self.workers[k] for k in sorted(self.workers)]

    # -- batch lifecycle ----------------------------------------------------

    def begin_batch(
        self,
        genomes: Sequence[DecisionVector],
        generation: int,
        fitness_id: str,
        now_ms: int,
        per_eval_cost_ms: int,
    ) -> list[Envelope]:
        """Partition a generation over the active workers and dispatch.

        The per-batch job timeout defaults to 4x the largest slice's
        simulated evaluation time; the generation budget to 10x the timeout.
        """
        if self.batch is not None:
            raise RuntimeError("previous batch still open")
        active = self.active_worker_count()
        if active == 0:
            raise AllWorkersSuspendedError("no active workers to partition over")
        slices = partition_population(list(genomes), active)
        max_slice = max(len(s) for s in slices)
        timeout = (
            self._timeout_override
            if self._timeout_override is not None
            else 4 * max_slice * per_eval_cost_ms
        )
        budget = (
            self._budget_override
            if self._budget_override is not None
            else 10 * timeout
        )
        job_ids = []
        for index, chunk in enumerate(slices):
            self._job_seq += 1
            job_id = f"j{self._job_seq:06d}"
            self.table.enqueue(
                Job(
                    job_id=job_id,
                    generation=generation,
                    slice_index=index,
                    genomes=tuple(tuple(g) for g in chunk),
                    fitness_id=fitness_id,
                )
            )
            job_ids.append(job_id)
        self.batch = _BatchState(
            generation=generation,
            job_ids=tuple(job_ids),
            start_ms=now_ms,
            job_timeout_ms=timeout,
            generation_budget_ms=budget,
        )
        self.stats = BatchStats(generation=generation, start_ms=now_ms)
        return self.dispatch(now_ms)

    def batch_done(self) -> bool:
        if self.batch is None:
            return False
        return all(self.table.state[j] == ACCEPTED for j in self.batch.job_ids)

    def collect_batch(self) -> list[Evaluation]:
        """Close the batch and return evaluations realigned to input order."""
        if self.batch is None or not self.batch_done():
            raise RuntimeError("batch is not complete")
        out: list[Evaluation] = []
        for job_id in self.batch.job_ids:
            for r in self.table.accepted[job_id].results:
                out.append(Evaluation(r.objectives, r.fitness, r.feasible, r.violation))
        self.batch = None
        return out

    # -- scheduling ---------------------------------------------------------

    def dispatch(self, now_ms: int) -> list[Envelope]:
        """Pair idle workers (lowest id first) with queued jobs (FIFO)."""
        envelopes: list[Envelope] = []
        for record in self._sorted_workers():
            if record.status != "idle":
                continue
            job_id = self.table.next_queued()
            if job_id is None:
                break
            deadline = now_ms + (self.batch.job_timeout_ms if self.batch else 0)
            job = self.table.mark_dispatched(job_id, deadline)
            record.status = "busy"
            record.current_job = job_id
            record.assigned_at_ms = now_ms
            record.deadline_ms = deadline
            record.extensions_used = 0
            if self.stats is not None:
                self.stats.jobs_dispatched += 1
            envelopes.append(
                (
                    record.worker_id,
                    {
                        "type": "JOB_ASSIGN",
                        "job_id": job.job_id,
                        "attempt": job.attempt,
                        "generation": job.generation,
                        "fitness_id": job.fitness_id,
                        "genomes": [list(g) for g in job.genomes],
                    },
                )
            )
        return envelopes

    def handle_message(self, msg: dict, now_ms: int) -> list[Envelope]:
        kind = msg.get("type")
        if kind == "REGISTER":
            self.register_worker(msg["worker_id"])
            return []
        if kind == "JOB_RESULT":
            return self._collect_result(JobResult.from_message(msg, now_ms), now_ms)
        if kind == "HEARTBEAT":
            return []
        raise ProtocolError(f"master cannot handle message type {kind!r}")

    def _collect_result(self, result: JobResult, now_ms: int) -> list[Envelope]:
        """Accept exactly one result per job; reject everything else.

        Both outcomes go through the rule engine so the audit log carries
        every collection decision.
        """
        fresh = self.table.is_fresh(result)
        trigger = Trigger(
            kind="result-received",
            attributes={
                "fresh": "true" if fresh else "false",
                "job": result.job_id,
                "worker": result.worker_id,
            },
        )
        decision, _, _ = infer_and_log(self.rules, trigger, self.decision_log, now_ms)
        if decision.action != "accept-result":
            logger.debug("rejected result for job %s from %s", result.job_id, result.worker_id)
            return []
        job = self.table.accept(result)
        record = self.workers.get(result.worker_id)
        if record is not None and record.current_job == result.job_id:
            record.status = "idle"
            record.current_job = None
            record.extensions_used = 0
        if self.result_store is not None:
            for genome, r in zip(job.genomes, result.results):
                self.result_store.insert(
                    run_id=self.run_id,
                    generation=job.generation,
                    job_id=job.job_id,
                    attempt=result.attempt,
                    worker_id=result.worker_id,
                    genome=genome,
                    objectives=r.objectives,
                    fitness=r.fitness,
                    feasible=r.feasible,
                    violation=r.violation,
                    sim_time_ms=now_ms,
                )
        if self.stats is not None and self.batch_done():
            self.stats.completed_at_ms = now_ms
        return self.dispatch(now_ms)

    def on_watchdog_tick(self, now_ms: int) -> list[Envelope]:
        """Adjudicate every overdue worker, then redispatch.

        A worker past its deadline raises a job-overdue trigger whose budget
        attribute is "available" only on the first overrun of an attempt and
        only while one more extension still fits the generation budget;
        the rules then pick resume (one deadline extension) or
        suspend-reassign (worker out, job requeued as the next attempt).
        """
        if self.batch is None:
            return []
        envelopes: list[Envelope] = []
        for record in self._sorted_workers():
            if record.status != "busy" or now_ms <= record.deadline_ms:
                continue
            elapsed = now_ms - self.batch.start_ms
            available = (
                record.extensions_used == 0
                and elapsed + self.batch.job_timeout_ms <= self.batch.generation_budget_ms
            )
            trigger = Trigger(
                kind="job-overdue",
                attributes={
                    "budget": "available" if available else "exhausted",
                    "worker": record.worker_id,
                    "job": record.current_job or "",
                },
            )
            decision, _, _ = infer_and_log(self.rules, trigger, self.decision_log, now_ms)
            if decision.action == "resume":
                new_deadline = record.deadline_ms + self.batch.job_timeout_ms
                record.deadline_ms = new_deadline
                record.extensions_used = 1
                self.table.extend_deadline(record.current_job, new_deadline)
                if self.stats is not None:
                    self.stats.resumes += 1
                envelopes.append(
                    (
                        record.worker_id,
                        {
                            "type": "RESUME",
                            "job_id": record.current_job,
                            "new_deadline_ms": new_deadline,
                        },
                    )
                )
            elif decision.action == "suspend-reassign":
                job_id = record.current_job
                record.status = "suspended"
                record.current_job = None
                self.table.cancel_and_requeue(job_id)
                if self.stats is not None:
                    self.stats.suspends += 1
                    self.stats.jobs_reassigned += 1
                envelopes.append(
                    (record.worker_id, {"type": "SUSPEND", "worker_id": record.worker_id})
                )
        envelopes.extend(self.dispatch(now_ms))
        if not self.batch_done() and self.active_worker_count() == 0:
            raise AllWorkersSuspendedError(
                f"generation {self.batch.generation} stuck with all workers suspended"
            )
        return envelopes

    # -- results ------------------------------------------------------------

    def best_solution(self) -> Individual:
        """The best accepted individual across the whole run.

        Feasible individuals rank by fitness; if none are feasible the
        lowest total violation wins.  Ties break to the earliest
        (generation, job_id, genome index).
        """
        best: Individual | None = None
        best_key: tuple[int, float] | None = None
        for job_id in sorted(self.table.accepted):
            job = self.table.jobs[job_id]
            result = self.table.accepted[job_id]
            for genome, r in zip(job.genomes, result.results):
                key = (0, r.fitness) if r.feasible else (1, r.violation)
                if best_key is None or key < best_key:
                    best_key = key
                    best = Individual(
                        genome=genome,
                        objectives=r.objectives,
                        fitness=r.fitness,
                        feasible=r.feasible,
                        violation=r.violation,
                        birth_generation=job.generation,
                    )
        if best is None:
            raise NoResultsError("no accepted results")
        return best
