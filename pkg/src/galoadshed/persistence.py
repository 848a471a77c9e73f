"""Append-only JSON Lines storage for evaluation records and decision logs.

Two files per run: ``results.jsonl`` holds one accepted evaluation record
per line, ``decisions.jsonl`` one trigger/rule/decision triple per line.
Both assign gap-free ids from 1 and recover the next id when reopened, so
a crash between inserts loses at most the unflushed tail (nothing, under
the default flush-per-insert policy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import SchemaError, StorageError
from .reasoning import Decision, LogEntry, Trigger

RESULTS_FILENAME = "results.jsonl"
DECISIONS_FILENAME = "decisions.jsonl"

# Serialized field order is part of the on-disk format.
RESULT_FIELDS = (
    "record_id",
    "run_id",
    "generation",
    "job_id",
    "attempt",
    "worker_id",
    "genome",
    "objectives",
    "fitness",
    "feasible",
    "violation",
    "sim_time_ms",
)


@dataclass(frozen=True)
class ResultRecord:
    """One accepted genome evaluation, as durably stored."""

    record_id: int
    run_id: str
    generation: int
    job_id: str
    attempt: int
    worker_id: str
    genome: tuple[float, ...]
    objectives: tuple[float, ...]
    fitness: float
    feasible: bool
    violation: float
    sim_time_ms: int

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "run_id": self.run_id,
            "generation": self.generation,
            "job_id": self.job_id,
            "attempt": self.attempt,
            "worker_id": self.worker_id,
            "genome": list(self.genome),
            "objectives": list(self.objectives),
            "fitness": self.fitness,
            "feasible": self.feasible,
            "violation": self.violation,
            "sim_time_ms": self.sim_time_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ResultRecord:
        missing = [key for key in RESULT_FIELDS if key not in data]
        if missing:
            raise SchemaError(f"result record missing fields: {', '.join(missing)}")
        return cls(
            record_id=int(data["record_id"]),
            run_id=data["run_id"],
            generation=int(data["generation"]),
            job_id=data["job_id"],
            attempt=int(data["attempt"]),
            worker_id=data["worker_id"],
            genome=tuple(float(v) for v in data["genome"]),
            objectives=tuple(float(v) for v in data["objectives"]),
            fitness=float(data["fitness"]),
            feasible=bool(data["feasible"]),
            violation=float(data["violation"]),
            sim_time_ms=int(data["sim_time_ms"]),
        )


def _encode(data: dict) -> str:
    return json.dumps(data, ensure_ascii=False, separators=(",", ":"))


class _JsonlWriter:
    """Shared append-only line writer with reopen recovery."""

    def __init__(self, path: str | Path, fresh: bool, buffered: bool):
        self.path = Path(path)
        self.buffered = buffered
        mode = "w" if fresh else "a"
        try:
            self._fh = open(self.path, mode, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise StorageError(f"cannot open {self.path}: {exc}") from exc

    def write_line(self, data: dict) -> None:
        try:
            self._fh.write(_encode(data) + "\n")
            if not self.buffered:
                self._fh.flush()
        except (OSError, ValueError) as exc:
            raise StorageError(f"write to {self.path} failed: {exc}") from exc

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()


def _scan_last_id(path: Path, key: str) -> int:
    """Largest persisted id under ``key``, or 0 for a missing/empty file."""
    if not path.exists():
        return 0
    last = 0
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    last = int(json.loads(line)[key])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"corrupt line in {path}: {exc}") from exc
    except OSError as exc:
        raise StorageError(f"cannot scan {path}: {exc}") from exc
    return last


def _build_record(record_id: int, fields: dict) -> ResultRecord:
    """Validate an id-less record's field set before appending anything."""
    expected = set(RESULT_FIELDS) - {"record_id"}
    missing = expected - set(fields)
    if missing:
        raise SchemaError(f"record missing fields: {', '.join(sorted(missing))}")
    extra = set(fields) - expected
    if extra:
        raise SchemaError(f"record has unknown fields: {', '.join(sorted(extra))}")
    return ResultRecord(record_id=record_id, **fields)


class ResultStore:
    """Durable store of accepted evaluation records.

    ``fresh=True`` truncates; otherwise the store appends after the highest
    already-persisted record_id.
    """

    def __init__(self, path: str | Path, fresh: bool = False, buffered: bool = False):
        self.path = Path(path)
        self.next_record_id = 1 if fresh else _scan_last_id(self.path, "record_id") + 1
        self._writer = _JsonlWriter(self.path, fresh=fresh, buffered=buffered)

    def insert(self, **fields) -> int:
        """Assign the next record_id, append durably, return the id."""
        record = _build_record(self.next_record_id, fields)
        self._writer.write_line(record.to_dict())
        self.next_record_id += 1
        return record.record_id

    def close(self) -> None:
        self._writer.close()

    def __enter__(self) -> ResultStore:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_results(path: str | Path) -> list[ResultRecord]:
    """Load every record from a results file, in record_id order."""
    records = [ResultRecord.from_dict(data) for data in _read_lines(path)]
    records.sort(key=lambda r: r.record_id)
    return records


def query(
    records: list[ResultRecord],
    *,
    run_id: str | None = None,
    generation: int | None = None,
    job_id: str | None = None,
    feasible: bool | None = None,
) -> list[ResultRecord]:
    """Records matching every present filter, ordered by record_id."""
    out = []
    for record in records:
        if run_id is not None and record.run_id != run_id:
            continue
        if generation is not None and record.generation != generation:
            continue
        if job_id is not None and record.job_id != job_id:
            continue
        if feasible is not None and record.feasible != feasible:
            continue
        out.append(record)
    return sorted(out, key=lambda r: r.record_id)


class DecisionStore:
    """Durable decision log; implements the reasoning module's append contract."""

    def __init__(self, path: str | Path, fresh: bool = False, buffered: bool = False):
        self.path = Path(path)
        self.next_sequence_no = 1 if fresh else _scan_last_id(self.path, "sequence_no") + 1
        self._writer = _JsonlWriter(self.path, fresh=fresh, buffered=buffered)

    def append(
        self, sim_time_ms: int, trigger: Trigger, rule_id: str, decision: Decision
    ) -> LogEntry:
        entry = LogEntry(
            sequence_no=self.next_sequence_no,
            sim_time_ms=sim_time_ms,
            trigger=trigger,
            rule_id=rule_id,
            decision=decision,
        )
        self._writer.write_line(entry.to_dict())
        self.next_sequence_no += 1
        return entry

    def close(self) -> None:
        self._writer.close()

    def __enter__(self) -> DecisionStore:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_decisions(path: str | Path) -> list[LogEntry]:
    """Load every log entry from a decisions file, in sequence order."""
    entries = []
    for data in _read_lines(path):
        try:
            entries.append(LogEntry.from_dict(data))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"corrupt log entry in {path}: {exc}") from exc
    entries.sort(key=lambda e: e.sequence_no)
    return entries


class InMemoryResultStore:
    """List-backed stand-in for ResultStore, for tests and dry runs."""

    def __init__(self) -> None:
        self.records: list[ResultRecord] = []
        self.next_record_id = 1

    def insert(self, **fields) -> int:
        record = _build_record(self.next_record_id, fields)
        self.records.append(record)
        self.next_record_id += 1
        return record.record_id

    def close(self) -> None:
        pass


class InMemoryDecisionLog:
    """List-backed decision log satisfying the same append contract."""

    def __init__(self) -> None:
        self.entries: list[LogEntry] = []
        self.next_sequence_no = 1

    def append(
        self, sim_time_ms: int, trigger: Trigger, rule_id: str, decision: Decision
    ) -> LogEntry:
        entry = LogEntry(
            sequence_no=self.next_sequence_no,
            sim_time_ms=sim_time_ms,
            trigger=trigger,
            rule_id=rule_id,
            decision=decision,
        )
        self.entries.append(entry)
        self.next_sequence_no += 1
        return entry

    def close(self) -> None:
        pass


def _read_lines(path: str | Path) -> Iterator[dict]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def write_run_metadata(path: str | Path, metadata: dict) -> None:
    """Write the run.json descriptor (config, rules snapshot, revision)."""
    try:
        Path(path).write_text(
            json.dumps(metadata, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_run_metadata(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"corrupt run metadata in {path}: {exc}") from exc
