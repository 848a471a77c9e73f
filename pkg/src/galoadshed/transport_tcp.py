"""Socket transport: the same master and message schema on a wall clock.

One thread per worker, each holding a localhost TCP connection and speaking
newline-delimited JSON.  The master runs in the calling thread and owns all
scheduling state, exactly as under simulation; only the clock (monotonic
wall time) and the medium differ.  Wall-clock scheduling is inherently
nondeterministic, so this transport is excluded from determinism tests.
"""

from __future__ import annotations

import logging
import selectors
import socket
import threading
import time
from typing import Sequence

from .distribution import (
    BatchStats,
    Envelope,
    MasterNode,
    WorkerNode,
    decode_message,
    encode_message,
)
from .errors import EvaluationError, ProtocolError
from .ga import Evaluation
from .moo import DecisionVector, Problem, WeightVector
from .simulation import worker_name

logger = logging.getLogger(__name__)

_REGISTER_TIMEOUT_S = 10.0


def _worker_loop(
    worker_id: str,
    problem: Problem,
    weights: WeightVector,
    port: int,
    per_eval_cost_ms: int,
    stall_on_ordinal: int | None,
) -> None:
    """Connect, register, then answer assignments until the socket closes."""
    node = WorkerNode(worker_id, problem, weights)
    assignments = 0
    suspended = False
    try:
        with socket.create_connection(("127.0.0.1", port), timeout=_REGISTER_TIMEOUT_S) as conn:
            conn.sendall((encode_message(node.register_message()) + "\n").encode("utf-8"))
            reader = conn.makefile("r", encoding="utf-8")
            for line in reader:
                msg = decode_message(line)
                kind = msg["type"]
                if kind == "SUSPEND":
                    suspended = True
                elif kind == "JOB_ASSIGN":
                    assignments += 1
                    stalled = stall_on_ordinal is not None and assignments >= stall_on_ordinal
                    if suspended or stalled:
                        continue
                    if per_eval_cost_ms > 0:
                        time.sleep(per_eval_cost_ms * len(msg["genomes"]) / 1000.0)
                    try:
                        result = node.do_job(msg)
                    except EvaluationError:
                        continue  # never answer; the master's deadline recovers it
                    conn.sendall((encode_message(result) + "\n").encode("utf-8"))
                # RESUME is informational
    except (OSError, ProtocolError) as exc:
        logger.debug("worker %s loop ended: %s", worker_id, exc)


class TcpCluster:
    """Evaluation provider over real sockets.

    The job timeout should be set explicitly (via the master) when the
    per-evaluation cost is near zero, since real transport latency is not
    under the caller's control.
    """

    def __init__(
        self,
        problem: Problem,
        weights: WeightVector,
        fitness_id: str,
        workers: int,
        per_eval_cost_ms: int,
        master: MasterNode,
        stall_plan: dict[str, int] | None = None,
    ):
        self.master = master
        self.fitness_id = fitness_id
        self.per_eval_cost_ms = per_eval_cost_ms
        self.batch_stats: list[BatchStats] = []
        self._t0 = time.monotonic()
        self._listener = socket.create_server(("127.0.0.1", 0))
        port = self._listener.getsockname()[1]
        self._selector = selectors.DefaultSelector()
        self._connections: dict[str, socket.socket] = {}
        self._buffers: dict[socket.socket, bytes] = {}
        self._threads = []
        stall_plan = stall_plan or {}
        for i in range(1, workers + 1):
            wid = worker_name(i)
            thread = threading.Thread(
                target=_worker_loop,
                args=(wid, problem, weights, port, per_eval_cost_ms, stall_plan.get(wid)),
                daemon=True,
            )
            thread.start()
            self._threads.append(thread)
        deadline = time.monotonic() + _REGISTER_TIMEOUT_S
        while len(self._connections) < workers:
            self._listener.settimeout(max(0.1, deadline - time.monotonic()))
            conn, _ = self._listener.accept()
            conn.setblocking(True)
            line = self._read_line_blocking(conn, deadline)
            msg = decode_message(line)
            if msg["type"] != "REGISTER":
                raise ProtocolError(f"expected REGISTER, got {msg['type']!r}")
            wid = msg["worker_id"]
            self._connections[wid] = conn
            self._buffers[conn] = b""
            self.master.register_worker(wid)
            conn.setblocking(False)
            self._selector.register(conn, selectors.EVENT_READ, wid)

    def _now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def _read_line_blocking(self, conn: socket.socket, deadline: float) -> str:
        buf = b""
        while b"\n" not in buf:
            conn.settimeout(max(0.1, deadline - time.monotonic()))
            chunk = conn.recv(4096)
            if not chunk:
                raise ProtocolError("worker closed connection during registration")
            buf += chunk
        line, _, rest = buf.partition(b"\n")
        self._buffers[conn] = rest
        return line.decode("utf-8")

    def _send_all(self, envelopes: Sequence[Envelope]) -> None:
        for worker_id, msg in envelopes:
            conn = self._connections.get(worker_id)
            if conn is None:
                continue
            try:
                conn.sendall((encode_message(msg) + "\n").encode("utf-8"))
            except OSError:
                logger.debug("send to %s failed; deadline machinery will recover", worker_id)

    def evaluate(
        self, genomes: Sequence[DecisionVector], generation: int
    ) -> list[Evaluation]:
        now = self._now_ms()
        self._send_all(
            self.master.begin_batch(
                genomes, generation, self.fitness_id, now, self.per_eval_cost_ms
            )
        )
        tick_ms = max(1, self.master.batch.job_timeout_ms // 4)
        next_tick = now + tick_ms
        while not self.master.batch_done():
            timeout_s = max(0.0, (next_tick - self._now_ms()) / 1000.0)
            events = self._selector.select(timeout=timeout_s)
            for key, _ in events:
                conn = key.fileobj
                try:
                    chunk = conn.recv(65536)
                except OSError:
                    chunk = b""
                if not chunk:
                    self._selector.unregister(conn)
                    continue
                self._buffers[conn] += chunk
                while b"\n" in self._buffers[conn]:
                    line, _, rest = self._buffers[conn].partition(b"\n")
                    self._buffers[conn] = rest
                    msg = decode_message(line.decode("utf-8"))
                    self._send_all(self.master.handle_message(msg, self._now_ms()))
                if self.master.batch_done():
                    break
            if not self.master.batch_done() and self._now_ms() >= next_tick:
                self._send_all(self.master.on_watchdog_tick(self._now_ms()))
                next_tick = self._now_ms() + tick_ms
        self.batch_stats.append(self.master.stats)
        return self.master.collect_batch()

    @property
    def total_sim_time_ms(self) -> int:
        return self.batch_stats[-1].completed_at_ms if self.batch_stats else 0

    def close(self) -> None:
        for conn in self._connections.values():
            try:
                conn.close()
            except OSError:
                pass
        self._listener.close()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def __enter__(self) -> TcpCluster:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
