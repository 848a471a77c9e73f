"""Shared builders for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

from galoadshed.distribution import MasterNode
from galoadshed.persistence import InMemoryDecisionLog, InMemoryResultStore
from galoadshed.reasoning import FixedRules, default_rules


@dataclass
class MasterHarness:
    master: MasterNode
    results: InMemoryResultStore
    log: InMemoryDecisionLog
    rules: FixedRules


def make_master(run_id: str = "run-test", rules: FixedRules | None = None, **overrides) -> MasterHarness:
    """A MasterNode wired to in-memory stores, plus handles to all of them."""
    if rules is None:
        rules = default_rules()
    results = InMemoryResultStore()
    log = InMemoryDecisionLog()
    master = MasterNode(
        run_id=run_id,
        rules=rules,
        decision_log=log,
        result_store=results,
        **overrides,
    )
    return MasterHarness(master=master, results=results, log=log, rules=rules)
