"""Deterministic discrete-event simulation of a worker cluster.

Everything runs on a virtual clock: message deliveries, evaluation
completions, and watchdog ticks are events ordered by (time, insertion
order), so equal-time events fire in the order they were scheduled and a
run is a pure function of its seeds.  Latency draws come from a dedicated
generator that never touches the GA's randomness, which keeps the GA
trajectory identical across worker counts.
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .distribution import Envelope, MasterNode, WorkerNode, BatchStats
from .errors import EvaluationError, LivelockError
from .ga import Evaluation
from .moo import DecisionVector, Problem, WeightVector

logger = logging.getLogger(__name__)

DEFAULT_EVENT_CAP = 10_000_000

# Message kinds that cross the simulated network and therefore pay latency.
# Registration happens during setup at time zero and is latency-free.
_LATENCY_KINDS = frozenset({"JOB_ASSIGN", "JOB_RESULT", "SUSPEND", "RESUME"})


class VirtualClock:
    """Event queue ordered by (time_ms, insertion order); time never runs
    backwards."""

    def __init__(self) -> None:
        self.now_ms = 0
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0

    def schedule(self, at_ms: int, callback: Callable[[], None]) -> None:
        if at_ms < self.now_ms:
            raise ValueError(f"cannot schedule at {at_ms} before now {self.now_ms}")
        heapq.heappush(self._heap, (at_ms, self._seq, callback))
        self._seq += 1

    def step(self) -> bool:
        """Fire the next event; False when the queue is empty."""
        if not self._heap:
            return False
        at_ms, _, callback = heapq.heappop(self._heap)
        self.now_ms = at_ms
        callback()
        return True

    def clear(self) -> None:
        self._heap.clear()

    def pending(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class FaultSpec:
    """A permanent worker stall: from a wall of simulated time onward, or
    starting with the n-th assignment the worker receives (1-based)."""

    worker: str
    stall_at_ms: int | None = None
    stall_on_ordinal: int | None = None

    def __post_init__(self) -> None:
        if (self.stall_at_ms is None) == (self.stall_on_ordinal is None):
            raise ValueError("specify exactly one of stall_at_ms, stall_on_ordinal")


@dataclass(frozen=True)
class SimConfig:
    workers: int = 4
    per_eval_cost_ms: int = 100
    latency_ms: tuple[int, int] = (1, 5)
    fault_plan: tuple[FaultSpec, ...] = ()
    sim_seed: int = 0
    event_cap: int = DEFAULT_EVENT_CAP

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("need at least one worker")
        if self.per_eval_cost_ms < 0:
            raise ValueError("per_eval_cost_ms must be >= 0")
        lo, hi = self.latency_ms
        if not 0 <= lo <= hi:
            raise ValueError("latency bounds must satisfy 0 <= min <= max")


def worker_name(index: int) -> str:
    """1-based worker index to its id ("w001", "w002", ...)."""
    return f"w{index:03d}"


class _SimWorker:
    """Event-queue actor wrapping a stateless WorkerNode."""

    def __init__(self, node: WorkerNode, faults: list[FaultSpec]):
        self.node = node
        self.assignments_received = 0
        self.stalled = False
        self.suspended = False
        self._stall_at_ms = min(
            (f.stall_at_ms for f in faults if f.stall_at_ms is not None), default=None
        )
        self._stall_ordinals = {
            f.stall_on_ordinal for f in faults if f.stall_on_ordinal is not None
        }


class SimCluster:
    """Evaluation provider that plays one generation per call through the
    master/worker message machinery on the virtual clock.

    A batch ends at the moment the master accepts its last result; any
    still-undelivered messages and pending watchdog ticks are then dropped,
    so stragglers from one generation never leak into the next.
    """

    def __init__(
        self,
        problem: Problem,
        weights: WeightVector,
        fitness_id: str,
        config: SimConfig,
        master: MasterNode,
    ):
        self.problem = problem
        self.config = config
        self.master = master
        self.fitness_id = fitness_id
        self.clock = VirtualClock()
        self.latency_rng = random.Random(config.sim_seed)
        self.batch_stats: list[BatchStats] = []
        self._events_fired = 0
        self.workers: dict[str, _SimWorker] = {}
        for i in range(1, config.workers + 1):
            wid = worker_name(i)
            faults = [f for f in config.fault_plan if f.worker == wid]
            self.workers[wid] = _SimWorker(WorkerNode(wid, problem, weights), faults)
            master.register_worker(wid)

    # -- transport ----------------------------------------------------------

    def _send(self, envelope: Envelope) -> None:
        """Queue one master->worker message with a fresh latency draw."""
        worker_id, msg = envelope
        delay = self._latency(msg["type"])
        self.clock.schedule(self.clock.now_ms + delay, lambda: self._deliver(worker_id, msg))

    def _send_all(self, envelopes: Sequence[Envelope]) -> None:
        for envelope in envelopes:
            self._send(envelope)

    def _send_to_master(self, msg: dict) -> None:
        delay = self._latency(msg["type"])
        self.clock.schedule(self.clock.now_ms + delay, lambda: self._deliver_to_master(msg))

    def _latency(self, kind: str) -> int:
        if kind not in _LATENCY_KINDS:
            return 0
        lo, hi = self.config.latency_ms
        return self.latency_rng.randint(lo, hi)

    # -- worker-side events --------------------------------------------------

    def _deliver(self, worker_id: str, msg: dict) -> None:
        worker = self.workers[worker_id]
        kind = msg["type"]
        if kind == "JOB_ASSIGN":
            self._on_assign(worker, msg)
        elif kind == "SUSPEND":
            worker.suspended = True
        elif kind == "RESUME":
            pass  # informational; the completion event is already scheduled

    def _on_assign(self, worker: _SimWorker, msg: dict) -> None:
        worker.assignments_received += 1
        if worker.assignments_received in worker._stall_ordinals:
            worker.stalled = True
        if worker.stalled or worker.suspended:
            return
        completion = self.clock.now_ms + len(msg["genomes"]) * self.config.per_eval_cost_ms
        if worker._stall_at_ms is not None and completion >= worker._stall_at_ms:
            worker.stalled = True
            return
        self.clock.schedule(completion, lambda: self._on_complete(worker, msg))

    def _on_complete(self, worker: _SimWorker, assign: dict) -> None:
        if worker.stalled or worker.suspended:
            return
        try:
            result = worker.node.do_job(assign)
        except EvaluationError:
            # A crashed evaluation never answers; the deadline machinery
            # recovers the job.
            worker.stalled = True
            return
        self._send_to_master(result)

    # -- master-side events ----------------------------------------------------

    def _deliver_to_master(self, msg: dict) -> None:
        self._send_all(self.master.handle_message(msg, self.clock.now_ms))

    def _watchdog_tick(self, period_ms: int) -> None:
        if self.master.batch is None or self.master.batch_done():
            return
        self._send_all(self.master.on_watchdog_tick(self.clock.now_ms))
        if self.master.batch is not None and not self.master.batch_done():
            self.clock.schedule(
                self.clock.now_ms + period_ms, lambda: self._watchdog_tick(period_ms)
            )

    # -- provider contract ----------------------------------------------------

    def evaluate(
        self, genomes: Sequence[DecisionVector], generation: int
    ) -> list[Evaluation]:
        """Distribute one generation and block (in virtual time) until every
        slice is accepted; results come back aligned to the input order."""
        start = self.clock.now_ms
        self._send_all(
            self.master.begin_batch(
                genomes, generation, self.fitness_id, start, self.config.per_eval_cost_ms
            )
        )
        period = max(1, self.master.batch.job_timeout_ms // 4)
        self.clock.schedule(start + period, lambda: self._watchdog_tick(period))
        while not self.master.batch_done():
            if not self.clock.step():
                raise RuntimeError("event queue drained before the batch completed")
            self._events_fired += 1
            if self._events_fired > self.config.event_cap:
                raise LivelockError(f"exceeded {self.config.event_cap} simulated events")
        self.clock.clear()
        self.batch_stats.append(self.master.stats)
        return self.master.collect_batch()

    @property
    def total_sim_time_ms(self) -> int:
        return self.batch_stats[-1].completed_at_ms if self.batch_stats else 0


def one_worker_baseline_ms(
    generations: int, population_size: int, config: SimConfig
) -> int:
    """Simulated duration of the fault-free single-worker run, analytically.

    With one worker each generation is one job: an assignment draw, the
    slice's evaluation time, a return draw.  Replaying those draws against
    a fresh generator reproduces a real ``workers=1`` run exactly, which is
    what makes reported speedups equal 1.0 for single-worker runs.
    """
    rng = random.Random(config.sim_seed)
    lo, hi = config.latency_ms
    total = 0
    for _ in range(generations + 1):
        total += rng.randint(lo, hi)
        total += population_size * config.per_eval_cost_ms
        total += rng.randint(lo, hi)
    return total
